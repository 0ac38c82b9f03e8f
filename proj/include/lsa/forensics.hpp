#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lsa/autodiff.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

// Real-vs-synthetic image set; label 1 = real, 0 = synthetic.
struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
    void push(Tensor img, int label) {
        images.push_back(std::move(img));
        labels.push_back(label);
    }
    bool has_both_classes() const;
    void validate() const;  // equal lengths, labels in {0,1}
};

struct TrainConfig {
    double learning_rate = 2e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 4;
    std::uint64_t seed = 0;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Differentiable forensic classifier: image -> probability of "real".
// Deterministic in evaluation mode; immutable once trained. predict_real_prob
// consumes an image already at input_shape (use preprocess to get there);
// normalization constants are stored per checkpoint, not applied implicitly.
class Classifier {
  public:
    Classifier() = default;  // inert until assigned from make/linear/load

    // Known arch_ids: fc_small, fc_deep, pool_fc, conv_pool, patch_fc, gray_fc, fc_small16.
    // The final logit layer is zero-initialized, so a fresh classifier outputs
    // exactly 0.5 everywhere.
    static Classifier make(const std::string& arch_id, std::uint64_t seed);
    // Hand-built single-layer model: logit = <weights, image> + bias, identity
    // normalization. Used as a closed-form oracle in tests.
    static Classifier linear(Tensor weights, double bias);
    static Classifier load(const std::string& path);
    void save(const std::string& path) const;

    const std::string& arch_id() const { return arch_id_; }
    std::array<std::size_t, 3> input_shape() const { return input_shape_; }
    const Tensor& channel_mean() const { return mean_; }
    const Tensor& channel_std() const { return std_; }

    // Logit over a normalized image at input_shape. When param_vars is given
    // (training), parameters are read from those graph nodes in params() order
    // instead of being baked in as constants.
    Var logit(Tape& tape, Var x, const std::vector<Var>* param_vars = nullptr) const;
    Var predict_real_prob(Tape& tape, Var x) const;
    double predict_real_prob(const Tensor& img) const;

    // Penultimate activations, for feature-extractor duty.
    Var features(Tape& tape, Var x) const;
    std::size_t feature_dim() const;

    std::vector<NamedTensor>& params() { return params_; }
    const std::vector<NamedTensor>& params() const { return params_; }

  private:
    std::string arch_id_;
    std::array<std::size_t, 3> input_shape_{};
    Tensor mean_, std_;  // per-channel normalization stored with the checkpoint
    std::vector<NamedTensor> params_;
};

// Differentiable resize to clf.input_shape plus per-channel affine
// normalization with the classifier's stored constants.
Var preprocess(Tape& tape, Var img, const Classifier& clf);
Tensor preprocess(const Tensor& img, const Classifier& clf);

struct TrainResult {
    Classifier classifier;
    std::vector<double> batch_loss;
    std::vector<double> epoch_loss;
};

// Adam + binary cross-entropy on (preprocessed) images. Shuffling is driven by
// cfg.seed; single-threaded and deterministic.
TrainResult train_classifier(const TrainConfig& cfg, const LabeledDataset& data,
                             const std::string& arch);

double evaluate_accuracy(const Classifier& clf, const LabeledDataset& data, double threshold = 0.5);

}  // namespace lsa
