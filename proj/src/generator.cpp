#include "lsa/generator.hpp"

#include <cmath>
#include <stdexcept>

#include "lsa/serialize.hpp"

namespace lsa {

LayerGroupKind layer_group_from_string(const std::string& s) {
    if (s == "coarse") return LayerGroupKind::coarse;
    if (s == "middle") return LayerGroupKind::middle;
    if (s == "fine") return LayerGroupKind::fine;
    if (s == "all") return LayerGroupKind::all;
    throw std::invalid_argument("unknown layer group: " + s);
}

std::string to_string(LayerGroupKind kind) {
    switch (kind) {
        case LayerGroupKind::coarse: return "coarse";
        case LayerGroupKind::middle: return "middle";
        case LayerGroupKind::fine: return "fine";
        case LayerGroupKind::all: return "all";
    }
    throw std::invalid_argument("unknown layer group kind");
}

LayerRows layer_rows(LayerGroupKind kind, std::size_t layer_count) {
    if (layer_count < 1) throw std::invalid_argument("layer_rows: layer_count must be >= 1");
    if (kind == LayerGroupKind::all) return {1, layer_count};
    // first ceil(2L/9) rows are coarse, the next ceil(2L/9) middle, rest fine;
    // reproduces the 4/4/10 split at L=18.
    const std::size_t c = (2 * layer_count + 8) / 9;
    LayerRows out;
    switch (kind) {
        case LayerGroupKind::coarse:
            out = {1, std::min(c, layer_count)};
            break;
        case LayerGroupKind::middle:
            out = {c + 1, std::min(2 * c, layer_count)};
            break;
        case LayerGroupKind::fine:
            out = {2 * c + 1, layer_count};
            break;
        default:
            throw std::invalid_argument("layer_rows: unknown group kind");
    }
    if (out.lo > out.hi || out.hi > layer_count)
        throw std::invalid_argument("layer_rows: group '" + to_string(kind) + "' is empty for L=" +
                                    std::to_string(layer_count));
    return out;
}

LatentCode broadcast_to_wplus(const Tensor& w_m, std::size_t layer_count) {
    if (layer_count < 1) throw std::invalid_argument("broadcast_to_wplus: layer_count must be >= 1");
    const std::size_t d = w_m.size();
    LatentCode out;
    out.rows = Tensor({layer_count, d});
    for (std::size_t l = 0; l < layer_count; ++l)
        for (std::size_t j = 0; j < d; ++j) out.rows.data[l * d + j] = w_m.data[j];
    return out;
}

namespace {

struct LayerPlan {
    std::size_t stage = 0;
    bool upsample = false;
    std::size_t height = 4, width = 4;
    std::size_t c_in = 0, c_out = 0;
};

std::size_t stage_count_for(std::size_t image_size) {
    std::size_t stages = 1, res = 4;
    while (res < image_size) {
        res *= 2;
        ++stages;
    }
    if (res != image_size) throw std::invalid_argument("generator: image_size must be 4*2^k");
    return stages;
}

std::size_t stage_channels(std::size_t stage, std::size_t n_stages) {
    if (n_stages <= 1) return 16;
    // taper 16 -> 8 across stages
    return 16 - (8 * stage) / (n_stages - 1);
}

std::vector<LayerPlan> make_plan(const GeneratorConfig& cfg) {
    const std::size_t n_stages = stage_count_for(cfg.image_size);
    std::vector<LayerPlan> plan(cfg.layer_count);
    std::size_t prev_stage = 0;
    for (std::size_t l = 0; l < cfg.layer_count; ++l) {
        const std::size_t stage = std::min(n_stages - 1, (l * n_stages) / cfg.layer_count);
        plan[l].stage = stage;
        plan[l].upsample = l > 0 && stage > prev_stage;
        plan[l].height = plan[l].width = 4u << stage;
        plan[l].c_out = stage_channels(stage, n_stages);
        plan[l].c_in = l == 0 ? stage_channels(0, n_stages) : plan[l - 1].c_out;
        prev_stage = stage;
    }
    return plan;
}

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

}  // namespace

Generator::Generator(GeneratorConfig cfg, Weights w) : cfg_(cfg), w_(std::move(w)) { build_index(); }

void Generator::build_index() {
    const std::size_t h = cfg_.image_size, wd = cfg_.image_size;
    auto idx = std::make_shared<std::vector<std::size_t>>(h * wd * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wd; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                (*idx)[(y * wd + x) * 3 + c] = c * h * wd + y * wd + x;
    hwc_index_ = std::move(idx);
}

Generator Generator::random(const GeneratorConfig& cfg, std::uint64_t seed,
                            const Tensor* output_prior) {
    if (cfg.layer_count < 1 || cfg.style_dim < 1)
        throw std::invalid_argument("generator: layer_count and style_dim must be positive");
    const auto plan = make_plan(cfg);
    const std::size_t d = cfg.style_dim;
    Rng rng(Rng::mix(seed, 0x67656e));

    Weights w;
    w.map_w1 = randn(rng, {d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
    w.map_b1 = Tensor({d});
    w.map_w2 = randn(rng, {d, d}, 1.6 / std::sqrt(static_cast<double>(d)));
    w.map_b2 = Tensor({d});
    w.const_input = randn(rng, {plan[0].c_in, 16}, 1.0);
    w.layers.resize(cfg.layer_count);
    for (std::size_t l = 0; l < cfg.layer_count; ++l) {
        Layer& layer = w.layers[l];
        layer.style_w = randn(rng, {plan[l].c_in, d}, 0.4 / std::sqrt(static_cast<double>(d)));
        layer.style_b = Tensor({plan[l].c_in}, 1.0);
        layer.conv_w = randn(rng, {plan[l].c_out, plan[l].c_in},
                             1.7 / std::sqrt(static_cast<double>(plan[l].c_in)));
        layer.conv_b = Tensor({plan[l].c_out});
        layer.noise_scale = Tensor({plan[l].c_out}, 0.1);
        layer.height = plan[l].height;
        layer.width = plan[l].width;
        layer.upsample = plan[l].upsample;
    }
    const std::size_t c_last = plan.back().c_out;
    const std::size_t hw = cfg.image_size * cfg.image_size;
    w.rgb_w = randn(rng, {3, c_last}, 1.0 / std::sqrt(static_cast<double>(c_last)));
    w.rgb_b = Tensor({3, hw});
    w.rgb_gain = 2.0;
    if (output_prior) {
        if (output_prior->shape != std::vector<std::size_t>{cfg.image_size, cfg.image_size, 3})
            throw std::invalid_argument("generator: output prior shape " + shape_str(output_prior->shape));
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t c = 0; c < 3; ++c) {
                const double m = std::min(0.98, std::max(0.02, output_prior->data[p * 3 + c]));
                w.rgb_b.data[c * hw + p] = std::log(m / (1.0 - m)) / w.rgb_gain;
            }
    }
    return Generator(cfg, std::move(w));
}

std::vector<std::array<std::size_t, 2>> Generator::noise_shapes() const {
    std::vector<std::array<std::size_t, 2>> out;
    out.reserve(w_.layers.size());
    for (const auto& l : w_.layers) out.push_back({l.height, l.width});
    return out;
}

Tensor Generator::map_latent(const Tensor& z) const {
    Tape tape;
    return tape.value(map_latent(tape, tape.constant(z)));
}

Var Generator::map_latent(Tape& tape, Var z) const {
    if (tape.value(z).size() != cfg_.style_dim)
        throw std::invalid_argument("map_latent: z must have length " + std::to_string(cfg_.style_dim));
    if (!tape.value(z).all_finite()) throw std::invalid_argument("map_latent: non-finite input");
    Var h = tape.silu(tape.add(tape.matvec(tape.constant(w_.map_w1), z), tape.constant(w_.map_b1)));
    return tape.add(tape.matvec(tape.constant(w_.map_w2), h), tape.constant(w_.map_b2));
}

void Generator::validate_latent(const LatentCode& w) const {
    if (w.rows.rank() != 2 || w.rows.shape[0] != cfg_.layer_count || w.rows.shape[1] != cfg_.style_dim)
        throw std::invalid_argument("synthesize: latent shape " + shape_str(w.rows.shape) +
                                    ", expected [" + std::to_string(cfg_.layer_count) + "," +
                                    std::to_string(cfg_.style_dim) + "]");
    if (!w.rows.all_finite()) throw std::invalid_argument("synthesize: non-finite latent");
}

void Generator::validate_noise(const NoiseStack& noise) const {
    if (noise.tensors.size() != w_.layers.size())
        throw std::invalid_argument("synthesize: noise stack must have " +
                                    std::to_string(w_.layers.size()) + " tensors");
    for (std::size_t l = 0; l < w_.layers.size(); ++l) {
        const Tensor& n = noise.tensors[l];
        if (n.rank() != 2 || n.shape[0] != w_.layers[l].height || n.shape[1] != w_.layers[l].width)
            throw std::invalid_argument("synthesize: noise tensor " + std::to_string(l) +
                                        " has shape " + shape_str(n.shape));
        if (!n.all_finite()) throw std::invalid_argument("synthesize: non-finite noise");
    }
}

Tensor Generator::synthesize(const LatentCode& w, const NoiseStack& noise) const {
    Tape tape;
    Var wv = tape.constant(w.rows);
    std::vector<Var> nv;
    nv.reserve(noise.tensors.size());
    validate_latent(w);
    validate_noise(noise);
    for (const auto& n : noise.tensors) nv.push_back(tape.constant(n));
    return tape.value(synthesize(tape, wv, nv));
}

Var Generator::synthesize(Tape& tape, Var w, const std::vector<Var>& noise) const {
    {
        LatentCode probe{tape.value(w)};
        validate_latent(probe);
        NoiseStack nprobe;
        for (Var n : noise) nprobe.tensors.push_back(tape.value(n));
        validate_noise(nprobe);
    }
    Var x = tape.constant(w_.const_input);
    std::size_t h = 4, wd = 4;
    for (std::size_t l = 0; l < w_.layers.size(); ++l) {
        const Layer& layer = w_.layers[l];
        if (layer.upsample) {
            x = tape.upsample2x_nn(x, h, wd);
            h *= 2;
            wd *= 2;
        }
        Var style_row = tape.row(w, l);
        Var s = tape.add(tape.matvec(tape.constant(layer.style_w), style_row), tape.constant(layer.style_b));
        x = tape.mul_rows(x, s);
        x = tape.add_rows(tape.matmul(tape.constant(layer.conv_w), x), tape.constant(layer.conv_b));
        Var eta = tape.reshape(noise[l], {h * wd});
        x = tape.add_outer(x, tape.constant(layer.noise_scale), eta);
        x = tape.silu(x);
    }
    while (h < cfg_.image_size) {
        x = tape.upsample2x_nn(x, h, wd);
        h *= 2;
        wd *= 2;
    }
    Var rgb = tape.add(tape.matmul(tape.constant(w_.rgb_w), x), tape.constant(w_.rgb_b));
    Var pix = tape.sigmoid(tape.scale(rgb, w_.rgb_gain));
    return tape.gather(pix, hwc_index_, {cfg_.image_size, cfg_.image_size, 3});
}

std::pair<LatentCode, NoiseStack> Generator::sample_initial(std::uint64_t seed) const {
    Rng rng(Rng::mix(seed, 0x696e6974));
    Tensor z({cfg_.style_dim});
    for (double& v : z.data) v = rng.normal();
    LatentCode w = broadcast_to_wplus(map_latent(z), cfg_.layer_count);
    return {std::move(w), sample_noise(rng)};
}

NoiseStack Generator::sample_noise(Rng& rng) const {
    NoiseStack noise;
    noise.tensors.reserve(w_.layers.size());
    for (const auto& layer : w_.layers) {
        Tensor n({layer.height, layer.width});
        for (double& v : n.data) v = rng.normal();
        noise.tensors.push_back(std::move(n));
    }
    return noise;
}

void Generator::save(const std::string& path) const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = "generator";
    j["layer_count"] = cfg_.layer_count;
    j["style_dim"] = cfg_.style_dim;
    j["image_shape"] = {cfg_.image_size, cfg_.image_size, 3};
    nlohmann::json params;
    params["map_w1"] = tensor_to_json(w_.map_w1);
    params["map_b1"] = tensor_to_json(w_.map_b1);
    params["map_w2"] = tensor_to_json(w_.map_w2);
    params["map_b2"] = tensor_to_json(w_.map_b2);
    params["const_input"] = tensor_to_json(w_.const_input);
    params["rgb_w"] = tensor_to_json(w_.rgb_w);
    params["rgb_b"] = tensor_to_json(w_.rgb_b);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : w_.layers) {
        layers.push_back({{"style_w", tensor_to_json(l.style_w)},
                          {"style_b", tensor_to_json(l.style_b)},
                          {"conv_w", tensor_to_json(l.conv_w)},
                          {"conv_b", tensor_to_json(l.conv_b)},
                          {"noise_scale", tensor_to_json(l.noise_scale)},
                          {"height", l.height},
                          {"width", l.width},
                          {"upsample", l.upsample}});
    }
    j["params"] = std::move(params);
    j["layers"] = std::move(layers);
    j["rgb_gain"] = w_.rgb_gain;
    save_json(path, j);
}

Generator Generator::load(const std::string& path) {
    const nlohmann::json j = load_json(path);
    if (j.at("kind") != "generator") throw std::invalid_argument("not a generator checkpoint: " + path);
    if (j.at("format_version").get<int>() != 1)
        throw std::invalid_argument("unsupported generator checkpoint version");
    GeneratorConfig cfg;
    cfg.layer_count = j.at("layer_count").get<std::size_t>();
    cfg.style_dim = j.at("style_dim").get<std::size_t>();
    cfg.image_size = j.at("image_shape").at(0).get<std::size_t>();
    Weights w;
    const auto& params = j.at("params");
    w.map_w1 = tensor_from_json(params.at("map_w1"));
    w.map_b1 = tensor_from_json(params.at("map_b1"));
    w.map_w2 = tensor_from_json(params.at("map_w2"));
    w.map_b2 = tensor_from_json(params.at("map_b2"));
    w.const_input = tensor_from_json(params.at("const_input"));
    w.rgb_w = tensor_from_json(params.at("rgb_w"));
    w.rgb_b = tensor_from_json(params.at("rgb_b"));
    w.rgb_gain = j.at("rgb_gain").get<double>();
    for (const auto& lj : j.at("layers")) {
        Layer l;
        l.style_w = tensor_from_json(lj.at("style_w"));
        l.style_b = tensor_from_json(lj.at("style_b"));
        l.conv_w = tensor_from_json(lj.at("conv_w"));
        l.conv_b = tensor_from_json(lj.at("conv_b"));
        l.noise_scale = tensor_from_json(lj.at("noise_scale"));
        l.height = lj.at("height").get<std::size_t>();
        l.width = lj.at("width").get<std::size_t>();
        l.upsample = lj.at("upsample").get<bool>();
        w.layers.push_back(std::move(l));
    }
    return Generator(cfg, std::move(w));
}

}  // namespace lsa
