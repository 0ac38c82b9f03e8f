#include "lsa/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lsa::png {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

const std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& img) {
    if (img.rank() != 3) throw std::invalid_argument("png: [h,w,c] image expected");
    const std::size_t h = img.shape[0], w = img.shape[1], c = img.shape[2];
    if ((c != 1 && c != 3) || h == 0 || w == 0) throw std::invalid_argument("png: unsupported shape");

    // Filter byte 0 (None) per scanline; zlib handles the compression.
    std::vector<std::uint8_t> raw;
    raw.reserve(h * (1 + w * c));
    for (std::size_t y = 0; y < h; ++y) {
        raw.push_back(0);
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double v = img.data[(y * w + x) * c + ch];
                v = std::min(1.0, std::max(0.0, v));
                raw.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
            }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                      // bit depth
    ihdr.push_back(c == 3 ? 2 : 0);         // color type
    ihdr.push_back(0);                      // compression
    ihdr.push_back(0);                      // filter
    ihdr.push_back(0);                      // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});
    return out;
}

void write_file(const std::string& path, const Tensor& img) {
    const auto bytes = encode(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor decode(const std::uint8_t* data, std::size_t size) {
    if (size < 8 || std::memcmp(data, kSignature, 8) != 0)
        throw std::invalid_argument("png: bad signature");

    std::size_t pos = 8;
    std::size_t w = 0, h = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    bool seen_ihdr = false;

    while (pos + 8 <= size) {
        const std::uint32_t len = get_u32(data + pos);
        if (pos + 12 + len > size) throw std::invalid_argument("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(data + pos + 4);
        const std::uint8_t* payload = data + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::invalid_argument("png: bad IHDR");
            w = get_u32(payload);
            h = get_u32(payload + 4);
            const int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8) throw std::invalid_argument("png: only 8-bit depth supported");
            if (interlace != 0) throw std::invalid_argument("png: interlaced images unsupported");
            if (color == 0) channels = 1;
            else if (color == 2) channels = 3;
            else if (color == 6) channels = 4;
            else throw std::invalid_argument("png: unsupported color type");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || idat.empty()) throw std::invalid_argument("png: missing IHDR/IDAT");

    const std::size_t stride = w * channels;
    std::vector<std::uint8_t> raw(h * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw std::invalid_argument("png: inflate failed");

    // Undo per-scanline filters.
    const std::size_t bpp = channels;
    std::vector<std::uint8_t> pix(h * stride);
    for (std::size_t y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = &raw[y * (stride + 1) + 1];
        std::uint8_t* dst = &pix[y * stride];
        const std::uint8_t* up = y ? &pix[(y - 1) * stride] : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= bpp ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= bpp) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::invalid_argument("png: unknown filter type");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    const std::size_t out_c = channels == 4 ? 3 : channels;
    Tensor img({h, w, out_c});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < out_c; ++ch)
                img.data[(y * w + x) * out_c + ch] =
                    static_cast<double>(pix[y * stride + x * channels + ch]) / 255.0;
    return img;
}

Tensor read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open for read: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes.data(), bytes.size());
}

}  // namespace lsa::png
