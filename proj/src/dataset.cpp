#include "lsa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "lsa/png_io.hpp"
#include "lsa/serialize.hpp"

namespace fs = std::filesystem;

namespace lsa {

namespace {

double smooth_mask(double d) { return 1.0 / (1.0 + std::exp(5.0 * (d - 1.0))); }

}  // namespace

FaceParams sample_face_params(Rng& rng, double spread) {
    auto draw = [&](double lo, double hi) {
        const double c = 0.5 * (lo + hi), h = 0.5 * spread * (hi - lo);
        return rng.uniform(c - h, c + h);
    };
    FaceParams p;
    p.bg_shade = draw(0.35, 0.9);
    p.skin_r = draw(0.55, 0.95);
    p.skin_g = draw(0.45, 0.8);
    p.skin_b = draw(0.35, 0.7);
    p.face_rx = draw(0.26, 0.38);
    p.face_ry = draw(0.3, 0.42);
    p.eye_size = draw(0.03, 0.065);
    p.eye_sep = draw(0.11, 0.2);
    p.mouth_curve = draw(-0.45, 0.45);
    p.hair_shade = draw(0.0, 0.8);
    return p;
}

Tensor render_face(const FaceParams& p, std::size_t size) {
    Tensor img({size, size, 3});
    const double cx = 0.5, cy = 0.54;
    for (std::size_t yi = 0; yi < size; ++yi) {
        for (std::size_t xi = 0; xi < size; ++xi) {
            const double u = (static_cast<double>(xi) + 0.5) / static_cast<double>(size);
            const double v = (static_cast<double>(yi) + 0.5) / static_cast<double>(size);

            double r = p.bg_shade, g = p.bg_shade, b = p.bg_shade;

            // face ellipse
            const double du = (u - cx) / p.face_rx, dv = (v - cy) / p.face_ry;
            const double face = smooth_mask(du * du + dv * dv);
            r += face * (p.skin_r - r);
            g += face * (p.skin_g - g);
            b += face * (p.skin_b - b);

            // eyes: two dark dots
            for (const double ex : {cx - p.eye_sep, cx + p.eye_sep}) {
                const double dx = u - ex, dy = v - 0.44;
                const double eye = std::exp(-(dx * dx + dy * dy) / (2.0 * p.eye_size * p.eye_size));
                r += eye * (0.08 - r);
                g += eye * (0.08 - g);
                b += eye * (0.1 - b);
            }

            // mouth: a tight curve, bending with mouth_curve
            const double mx = (u - cx) / 0.14;
            if (std::fabs(mx) < 2.0) {
                const double my = 0.68 + p.mouth_curve * 0.06 * (mx * mx - 1.0);
                const double mouth = std::exp(-((v - my) * (v - my)) / 0.002) * std::exp(-0.5 * mx * mx);
                r += mouth * face * (0.35 - r);
                g += mouth * face * (0.15 - g);
                b += mouth * face * (0.18 - b);
            }

            // hair: darken the top band above the forehead
            const double hair = p.hair_shade / (1.0 + std::exp(18.0 * (v - 0.30)));
            const double keep = 1.0 - hair * face;
            r *= keep;
            g *= keep;
            b *= keep;

            img.data[(yi * size + xi) * 3 + 0] = std::clamp(r, 0.0, 1.0);
            img.data[(yi * size + xi) * 3 + 1] = std::clamp(g, 0.0, 1.0);
            img.data[(yi * size + xi) * 3 + 2] = std::clamp(b, 0.0, 1.0);
        }
    }
    return img;
}

Generator make_desk_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x7072696fULL));
    Tensor prior({cfg.image_size, cfg.image_size, 3});
    const std::size_t n = 64;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor face = render_face(sample_face_params(rng), cfg.image_size);
        for (std::size_t k = 0; k < prior.size(); ++k) prior[k] += face[k] / static_cast<double>(n);
    }
    return Generator::random(cfg, seed, &prior);
}

LabeledDataset make_desk_dataset(const Generator& gen, std::size_t n_real, std::size_t n_fake,
                                 std::uint64_t seed) {
    LabeledDataset data;
    Rng rng(Rng::mix(seed, 0x64617461ULL));
    const std::size_t size = gen.image_shape()[0];
    for (std::size_t i = 0; i < n_real; ++i) {
        const FaceParams p = sample_face_params(rng);
        data.push(render_face(p, size), 1);
    }
    for (std::size_t i = 0; i < n_fake; ++i) {
        auto [w, eta] = gen.sample_initial(rng.next_u64());
        data.push(gen.synthesize(w, eta), 0);
    }
    return data;
}

void save_dataset(const std::string& dir, const LabeledDataset& data) {
    data.validate();
    fs::create_directories(fs::path(dir) / "real");
    fs::create_directories(fs::path(dir) / "fake");
    std::size_t n_real = 0, n_fake = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool real = data.labels[i] == 1;
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", real ? n_real++ : n_fake++);
        png::write_file(((fs::path(dir) / (real ? "real" : "fake")) / name).string(), data.images[i]);
    }
}

LabeledDataset load_dataset(const std::string& dir) {
    LabeledDataset data;
    for (const auto& [sub, label] : {std::pair<const char*, int>{"real", 1}, {"fake", 0}}) {
        const fs::path p = fs::path(dir) / sub;
        if (!fs::exists(p)) continue;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) data.push(png::read_file(f.string()), label);
    }
    if (data.size() == 0) throw std::invalid_argument("load_dataset: no PNG files under " + dir);
    return data;
}

AttributeProbe AttributeProbe::standard(std::size_t size, double bias) {
    AttributeProbe probe;
    probe.size_ = size;
    probe.bias_ = bias;
    probe.names_ = {"brightness", "red_tint", "blue_tint", "hair_dark", "center_contrast", "left_lit"};
    const std::size_t e = probe.names_.size();
    const std::size_t n = size * size * 3;
    probe.probe_ = Tensor({e, n});
    const double inv_px = 1.0 / static_cast<double>(size * size);

    for (std::size_t yi = 0; yi < size; ++yi) {
        for (std::size_t xi = 0; xi < size; ++xi) {
            const double u = (static_cast<double>(xi) + 0.5) / static_cast<double>(size);
            const double v = (static_cast<double>(yi) + 0.5) / static_cast<double>(size);
            const std::size_t base = (yi * size + xi) * 3;
            const double du = u - 0.5, dv = v - 0.54;
            const double center = std::exp(-(du * du + dv * dv) / 0.08);

            // brightness: mean intensity, centered so gray scores 0
            for (std::size_t c = 0; c < 3; ++c) probe.probe_.data[0 * n + base + c] = inv_px / 3.0;
            // red tint: R - (G+B)/2 over the center region
            probe.probe_.data[1 * n + base + 0] = center * inv_px;
            probe.probe_.data[1 * n + base + 1] = -0.5 * center * inv_px;
            probe.probe_.data[1 * n + base + 2] = -0.5 * center * inv_px;
            // blue tint
            probe.probe_.data[2 * n + base + 0] = -0.5 * inv_px;
            probe.probe_.data[2 * n + base + 1] = -0.5 * inv_px;
            probe.probe_.data[2 * n + base + 2] = inv_px;
            // hair darkness: bottom minus top intensity
            const double band = v < 0.33 ? -1.0 : (v > 0.6 ? 1.0 : 0.0);
            for (std::size_t c = 0; c < 3; ++c) probe.probe_.data[3 * n + base + c] = band * inv_px / 3.0;
            // center contrast: center minus periphery
            const double ring = center - 0.35;
            for (std::size_t c = 0; c < 3; ++c) probe.probe_.data[4 * n + base + c] = ring * inv_px / 3.0;
            // lighting side: left minus right
            const double side = u < 0.5 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < 3; ++c) probe.probe_.data[5 * n + base + c] = side * inv_px / 3.0;
        }
    }

    return probe;
}

Var AttributeProbe::embed_raw(Tape& tape, Var img) const {
    const auto& shp = tape.value(img).shape;
    if (shp != std::vector<std::size_t>{size_, size_, 3})
        throw std::invalid_argument("attribute probe: expected " + std::to_string(size_) + "x" +
                                    std::to_string(size_) + "x3 image, got " + shape_str(shp));
    Var flat = tape.reshape(img, {size_ * size_ * 3});
    Var scores = tape.matvec(tape.constant(probe_), flat);
    // append the constant bias coordinate via a fixed affine map
    const std::size_t e = dim();
    Tensor lift({e + 1, e});
    for (std::size_t i = 0; i < e; ++i) lift.at2(i, i) = 1.0;
    Tensor offset({e + 1});
    offset[e] = bias_;
    return tape.add(tape.matvec(tape.constant(lift), scores), tape.constant(offset));
}

Var AttributeProbe::embed_unit(Tape& tape, Var img) const {
    return tape.l2_normalize(embed_raw(tape, img));
}

Tensor AttributeProbe::embed_unit(const Tensor& img) const {
    Tape tape;
    return tape.value(embed_unit(tape, tape.constant(img)));
}

namespace {
// attribute target plus a zero bias coordinate, unit-normalized
Tensor unit(std::initializer_list<double> vals) {
    Tensor t({vals.size() + 1});
    std::size_t i = 0;
    double n2 = 0.0;
    for (double v : vals) {
        t[i++] = v;
        n2 += v * v;
    }
    if (n2 == 0.0) throw std::invalid_argument("prompt target must be nonzero");
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : t.data) v *= inv;
    return t;
}
}  // namespace

// Attribute targets stay within the renderer's own variation so that a prompt
// never forces the image off the real manifold outright (a cold blue or
// uniformly dark face would conflict with the realness objective no matter
// the weights).
PromptBook PromptBook::builtin(const AttributeProbe& probe) {
    if (probe.dim() != 6) throw std::invalid_argument("builtin prompts expect the 6-attribute probe");
    PromptBook book;
    book.targets_["bright_face"] = unit({1, 0, 0, 0, 0.3, 0});
    book.targets_["red_tint"] = unit({0.2, 1, 0, 0, 0, 0});
    book.targets_["dark_hair"] = unit({0, 0, 0, 1, 0, 0});
    book.targets_["bright_center"] = unit({0, 0, 0, 0, 1, 0});
    book.targets_["lit_from_left"] = unit({0.2, 0, 0, 0, 0, 1});
    book.targets_["bright_red"] = unit({0.7, 1, 0, 0, 0, 0});
    book.targets_["warm_glow"] = unit({0.5, 1, -0.3, 0, 0.3, 0});
    book.targets_["golden_hour"] = unit({0.4, 0.8, -0.4, 0, 0.2, 0.3});
    book.targets_["pale_contrast"] = unit({0.5, 0, 0, -0.5, 1, 0});
    book.targets_["shaded_brow"] = unit({0, 0.2, 0, 1, 0.3, 0});
    return book;
}

PromptBook PromptBook::load(const std::string& path, const AttributeProbe& probe) {
    const nlohmann::json j = load_json(path);
    PromptBook book;
    for (const auto& [key, value] : j.items()) {
        auto vals = value.get<std::vector<double>>();
        if (vals.size() != probe.dim())
            throw std::invalid_argument("prompt '" + key + "' has " + std::to_string(vals.size()) +
                                        " entries, probe has " + std::to_string(probe.dim()));
        vals.push_back(0.0);  // bias coordinate
        Tensor t = Tensor::from({vals.size()}, vals);
        double n2 = 0.0;
        for (double v : t.data) n2 += v * v;
        if (n2 == 0.0) throw std::invalid_argument("prompt '" + key + "' target is zero");
        t *= 1.0 / std::sqrt(n2);
        book.targets_[key] = std::move(t);
    }
    if (book.targets_.empty()) throw std::invalid_argument("prompt file is empty: " + path);
    return book;
}

void PromptBook::save(const std::string& path) const {
    nlohmann::json j;
    for (const auto& [key, t] : targets_) {
        std::vector<double> vals(t.data.begin(), t.data.end() - 1);  // drop the bias coordinate
        j[key] = vals;
    }
    save_json(path, j);
}

Tensor PromptBook::target(const std::string& key) const {
    auto it = targets_.find(key);
    if (it == targets_.end()) throw std::invalid_argument("unknown prompt key: " + key);
    return it->second;
}

std::vector<std::string> PromptBook::keys() const {
    std::vector<std::string> out;
    out.reserve(targets_.size());
    for (const auto& [key, t] : targets_) out.push_back(key);
    return out;
}

JointEmbedder attribute_embedder(const AttributeProbe& probe, const PromptBook& prompts) {
    JointEmbedder emb;
    auto probe_copy = std::make_shared<AttributeProbe>(probe);
    auto prompts_copy = std::make_shared<PromptBook>(prompts);
    emb.embed_image = [probe_copy](Tape& tape, Var img) { return probe_copy->embed_unit(tape, img); };
    emb.embed_text = [prompts_copy](const std::string& key) { return prompts_copy->target(key); };
    return emb;
}

}  // namespace lsa
