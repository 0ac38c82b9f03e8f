#include "lsa/forensics.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "lsa/optim.hpp"
#include "lsa/rng.hpp"
#include "lsa/serialize.hpp"

namespace lsa {

namespace {

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

std::shared_ptr<std::vector<std::size_t>> hwc_to_chw_index(std::size_t h, std::size_t w, std::size_t c) {
    auto idx = std::make_shared<std::vector<std::size_t>>(h * w * c);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) (*idx)[ch * h * w + y * w + x] = (y * w + x) * c + ch;
    return idx;
}

// 4x4 patches of a channels-major [3, 16*16] map laid out as [48, 16]
// (rows: within-patch pixel*channel, cols: patch index).
std::shared_ptr<std::vector<std::size_t>> patch_index_pooled16() {
    auto idx = std::make_shared<std::vector<std::size_t>>(48 * 16);
    for (std::size_t r = 0; r < 48; ++r) {
        const std::size_t c = r % 3, pix = r / 3, py = pix / 4, px = pix % 4;
        for (std::size_t col = 0; col < 16; ++col) {
            const std::size_t gy = (col / 4) * 4 + py, gx = (col % 4) * 4 + px;
            (*idx)[r * 16 + col] = c * 256 + gy * 16 + gx;
        }
    }
    return idx;
}

}  // namespace

bool LabeledDataset::has_both_classes() const {
    bool seen0 = false, seen1 = false;
    for (int l : labels) (l == 1 ? seen1 : seen0) = true;
    return seen0 && seen1;
}

void LabeledDataset::validate() const {
    if (images.size() != labels.size())
        throw std::invalid_argument("dataset: images/labels length mismatch");
    for (int l : labels)
        if (l != 0 && l != 1) throw std::invalid_argument("dataset: labels must be 0 or 1");
}

Classifier Classifier::make(const std::string& arch_id, std::uint64_t seed) {
    Classifier clf;
    clf.arch_id_ = arch_id;
    clf.mean_ = Tensor({3}, 0.5);
    clf.std_ = Tensor({3}, 0.5);
    Rng rng(Rng::mix(seed, 0x636c66));
    auto dense = [&](const std::string& name, std::size_t out, std::size_t in, bool zero = false) {
        clf.params_.push_back({name + "_w", zero ? Tensor({out, in}, 0.0)
                                                 : randn(rng, {out, in}, 1.0 / std::sqrt(static_cast<double>(in)))});
        clf.params_.push_back({name + "_b", Tensor({out}, 0.0)});
    };
    if (arch_id == "fc_small") {
        clf.input_shape_ = {32, 32, 3};
        dense("h0", 32, 32 * 32 * 3);
        dense("out", 1, 32, /*zero=*/true);
    } else if (arch_id == "fc_deep") {
        clf.input_shape_ = {32, 32, 3};
        dense("h0", 24, 3 * 16 * 16);
        dense("h1", 16, 24);
        dense("out", 1, 16, true);
    } else if (arch_id == "pool_fc") {
        clf.input_shape_ = {32, 32, 3};
        dense("h0", 24, 3 * 16 * 16);
        dense("out", 1, 24, true);
    } else if (arch_id == "conv_pool") {
        clf.input_shape_ = {32, 32, 3};
        dense("c0", 8, 3);
        dense("c1", 8, 8);
        dense("out", 1, 8 * 8 * 8, true);
    } else if (arch_id == "patch_fc") {
        clf.input_shape_ = {32, 32, 3};
        dense("p0", 6, 48);
        dense("out", 1, 6 * 16, true);
    } else if (arch_id == "gray_fc") {
        clf.input_shape_ = {32, 32, 3};
        dense("h0", 24, 16 * 16);
        dense("out", 1, 24, true);
    } else if (arch_id == "fc_small16") {
        clf.input_shape_ = {16, 16, 3};
        dense("h0", 32, 16 * 16 * 3);
        dense("out", 1, 32, true);
    } else if (arch_id == "fc_feat") {
        clf.input_shape_ = {16, 16, 3};
        dense("h0", 48, 16 * 16 * 3);
        dense("out", 1, 48, true);
    } else {
        throw std::invalid_argument("unknown classifier arch: " + arch_id);
    }
    return clf;
}

Classifier Classifier::linear(Tensor weights, double bias) {
    if (weights.rank() != 3) throw std::invalid_argument("linear classifier: [h,w,c] weights expected");
    Classifier clf;
    clf.arch_id_ = "linear";
    clf.input_shape_ = {weights.shape[0], weights.shape[1], weights.shape[2]};
    clf.mean_ = Tensor({weights.shape[2]}, 0.0);
    clf.std_ = Tensor({weights.shape[2]}, 1.0);
    clf.params_.push_back({"w", std::move(weights)});
    clf.params_.push_back({"b", Tensor::scalar(bias)});
    return clf;
}

Var Classifier::logit(Tape& tape, Var x, const std::vector<Var>* param_vars) const {
    if (param_vars && param_vars->size() != params_.size())
        throw std::invalid_argument("logit: bound parameter count mismatch");
    auto p = [&](std::size_t i) -> Var {
        return param_vars ? (*param_vars)[i] : tape.constant(params_[i].value);
    };
    const auto& shp = tape.value(x).shape;
    if (shp != std::vector<std::size_t>{input_shape_[0], input_shape_[1], input_shape_[2]})
        throw std::invalid_argument("classifier " + arch_id_ + ": input shape " + shape_str(shp));
    const std::size_t h = input_shape_[0], w = input_shape_[1], c = input_shape_[2];

    if (arch_id_ == "linear") {
        return tape.add(tape.dot(p(0), x), tape.reshape(p(1), {1}));
    }
    if (arch_id_ == "fc_small" || arch_id_ == "fc_small16" || arch_id_ == "fc_feat") {
        Var flat = tape.reshape(x, {h * w * c});
        Var hid = tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
        return tape.add(tape.matvec(p(2), hid), p(3));
    }
    if (arch_id_ == "fc_deep") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var flat = tape.reshape(tape.avgpool2x(chw, h, w), {c * (h / 2) * (w / 2)});
        Var h0 = tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
        Var h1 = tape.silu(tape.add(tape.matvec(p(2), h0), p(3)));
        return tape.add(tape.matvec(p(4), h1), p(5));
    }
    if (arch_id_ == "pool_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var pooled = tape.avgpool2x(chw, h, w);
        Var flat = tape.reshape(pooled, {c * (h / 2) * (w / 2)});
        Var hid = tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
        return tape.add(tape.matvec(p(2), hid), p(3));
    }
    if (arch_id_ == "conv_pool") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var pooled = tape.avgpool2x(tape.avgpool2x(chw, h, w), h / 2, w / 2);
        Var h0 = tape.silu(tape.add_rows(tape.matmul(p(0), pooled), p(1)));
        Var h1 = tape.silu(tape.add_rows(tape.matmul(p(2), h0), p(3)));
        Var flat = tape.reshape(h1, {8 * (h / 4) * (w / 4)});
        return tape.add(tape.matvec(p(4), flat), p(5));
    }
    if (arch_id_ == "patch_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var pooled = tape.avgpool2x(chw, h, w);
        Var patches = tape.gather(pooled, patch_index_pooled16(), {48, 16});
        Var h0 = tape.silu(tape.add_rows(tape.matmul(p(0), patches), p(1)));
        Var flat = tape.reshape(h0, {6 * 16});
        return tape.add(tape.matvec(p(2), flat), p(3));
    }
    if (arch_id_ == "gray_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Tensor avg({1, c}, 1.0 / static_cast<double>(c));
        Var gray = tape.matmul(tape.constant(avg), chw);
        Var pooled = tape.avgpool2x(gray, h, w);
        Var flat = tape.reshape(pooled, {(h / 2) * (w / 2)});
        Var hid = tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
        return tape.add(tape.matvec(p(2), hid), p(3));
    }
    throw std::invalid_argument("unknown classifier arch: " + arch_id_);
}

Var Classifier::predict_real_prob(Tape& tape, Var x) const { return tape.sigmoid(logit(tape, x)); }

double Classifier::predict_real_prob(const Tensor& img) const {
    if (img.shape != std::vector<std::size_t>{input_shape_[0], input_shape_[1], input_shape_[2]})
        throw std::invalid_argument("predict_real_prob: image shape " + shape_str(img.shape) +
                                    " does not match classifier input");
    Tape tape;
    return tape.scalar(predict_real_prob(tape, tape.constant(img)));
}

Var Classifier::features(Tape& tape, Var x) const {
    const std::size_t h = input_shape_[0], w = input_shape_[1], c = input_shape_[2];
    auto p = [&](std::size_t i) { return tape.constant(params_[i].value); };
    if (arch_id_ == "fc_small" || arch_id_ == "fc_small16" || arch_id_ == "fc_feat") {
        Var flat = tape.reshape(x, {h * w * c});
        return tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
    }
    if (arch_id_ == "fc_deep") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var flat = tape.reshape(tape.avgpool2x(chw, h, w), {c * (h / 2) * (w / 2)});
        Var h0 = tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
        return tape.silu(tape.add(tape.matvec(p(2), h0), p(3)));
    }
    if (arch_id_ == "pool_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var flat = tape.reshape(tape.avgpool2x(chw, h, w), {c * (h / 2) * (w / 2)});
        return tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
    }
    if (arch_id_ == "conv_pool") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var pooled = tape.avgpool2x(tape.avgpool2x(chw, h, w), h / 2, w / 2);
        Var h0 = tape.silu(tape.add_rows(tape.matmul(p(0), pooled), p(1)));
        Var h1 = tape.silu(tape.add_rows(tape.matmul(p(2), h0), p(3)));
        return tape.reshape(h1, {8 * (h / 4) * (w / 4)});
    }
    if (arch_id_ == "patch_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Var pooled = tape.avgpool2x(chw, h, w);
        Var patches = tape.gather(pooled, patch_index_pooled16(), {48, 16});
        Var h0 = tape.silu(tape.add_rows(tape.matmul(p(0), patches), p(1)));
        return tape.reshape(h0, {6 * 16});
    }
    if (arch_id_ == "gray_fc") {
        Var chw = tape.gather(x, hwc_to_chw_index(h, w, c), {c, h * w});
        Tensor avg({1, c}, 1.0 / static_cast<double>(c));
        Var gray = tape.matmul(tape.constant(avg), chw);
        Var flat = tape.reshape(tape.avgpool2x(gray, h, w), {(h / 2) * (w / 2)});
        return tape.silu(tape.add(tape.matvec(p(0), flat), p(1)));
    }
    throw std::invalid_argument("classifier " + arch_id_ + " has no feature layer");
}

std::size_t Classifier::feature_dim() const {
    if (arch_id_ == "fc_small" || arch_id_ == "fc_small16") return 32;
    if (arch_id_ == "fc_feat") return 48;
    if (arch_id_ == "fc_deep") return 16;
    if (arch_id_ == "pool_fc") return 24;
    if (arch_id_ == "conv_pool") return 8 * 8 * 8;
    if (false) return 0;
    if (arch_id_ == "patch_fc") return 96;
    if (arch_id_ == "gray_fc") return 24;
    throw std::invalid_argument("classifier " + arch_id_ + " has no feature layer");
}

Var preprocess(Tape& tape, Var img, const Classifier& clf) {
    const auto& shp = tape.value(img).shape;
    if (shp.size() != 3) throw std::invalid_argument("preprocess: [h,w,c] image expected");
    const auto target = clf.input_shape();
    if (shp[2] != target[2]) throw std::invalid_argument("preprocess: channel count mismatch");
    Var resized = (shp[0] == target[0] && shp[1] == target[1])
                      ? img
                      : tape.resize_bilinear(img, target[0], target[1]);
    return tape.normalize_channels(resized, clf.channel_mean(), clf.channel_std());
}

Tensor preprocess(const Tensor& img, const Classifier& clf) {
    Tape tape;
    return tape.value(preprocess(tape, tape.constant(img), clf));
}

double evaluate_accuracy(const Classifier& clf, const LabeledDataset& data, double threshold) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = clf.predict_real_prob(preprocess(data.images[i], clf));
        const bool predicted_real = p > threshold;
        if (predicted_real == (data.labels[i] == 1)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_classifier(const TrainConfig& cfg, const LabeledDataset& data,
                             const std::string& arch) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train_classifier: empty dataset");
    if (!data.has_both_classes())
        throw std::invalid_argument("train_classifier: dataset must contain both classes");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train_classifier: learning_rate must be > 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_classifier: batch_size must be >= 1");

    TrainResult result{Classifier::make(arch, cfg.seed), {}, {}};
    Classifier& clf = result.classifier;

    std::vector<Tensor> inputs;
    inputs.reserve(data.size());
    for (const auto& img : data.images) inputs.push_back(preprocess(img, clf));

    Adam opt(cfg.learning_rate);
    Rng rng(Rng::mix(cfg.seed, 0x747261696eULL));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_sum = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            std::vector<Var> pvars;
            pvars.reserve(clf.params().size());
            for (const auto& p : clf.params()) pvars.push_back(tape.variable(p.value));

            Var loss_sum = tape.constant(Tensor::scalar(0.0));
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                Var x = tape.constant(inputs[i]);
                Var p = tape.sigmoid(clf.logit(tape, x, &pvars));
                Var pc = tape.clamp(p, 1e-7, 1.0 - 1e-7);
                Var li;
                if (data.labels[i] == 1) {
                    li = tape.scale(tape.log(pc), -1.0);
                } else {
                    Var one_minus = tape.add_scalar(tape.scale(pc, -1.0), 1.0);
                    li = tape.scale(tape.log(one_minus), -1.0);
                }
                loss_sum = tape.add(loss_sum, li);
            }
            Var loss = tape.scale(loss_sum, 1.0 / static_cast<double>(stop - start));
            tape.backward(loss);

            std::vector<Tensor*> params;
            std::vector<const Tensor*> grads;
            for (std::size_t pi = 0; pi < clf.params().size(); ++pi) {
                params.push_back(&clf.params()[pi].value);
                grads.push_back(&tape.grad(pvars[pi]));
            }
            opt.step(params, grads);

            const double lv = tape.scalar(loss);
            result.batch_loss.push_back(lv);
            epoch_sum += lv;
            ++epoch_batches;
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
    }
    return result;
}

void Classifier::save(const std::string& path) const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = "classifier";
    j["arch_id"] = arch_id_;
    j["input_shape"] = input_shape_;
    j["mean"] = tensor_to_json(mean_);
    j["std"] = tensor_to_json(std_);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) params.push_back({{"name", p.name}, {"tensor", tensor_to_json(p.value)}});
    j["params"] = std::move(params);
    save_json(path, j);
}

Classifier Classifier::load(const std::string& path) {
    const nlohmann::json j = load_json(path);
    if (j.at("kind") != "classifier") throw std::invalid_argument("not a classifier checkpoint: " + path);
    if (j.at("format_version").get<int>() != 1)
        throw std::invalid_argument("unsupported classifier checkpoint version");
    Classifier clf;
    clf.arch_id_ = j.at("arch_id").get<std::string>();
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    clf.input_shape_ = {shape.at(0), shape.at(1), shape.at(2)};
    clf.mean_ = tensor_from_json(j.at("mean"));
    clf.std_ = tensor_from_json(j.at("std"));
    for (const auto& p : j.at("params"))
        clf.params_.push_back({p.at("name").get<std::string>(), tensor_from_json(p.at("tensor"))});
    return clf;
}

}  // namespace lsa
