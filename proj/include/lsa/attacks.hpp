#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsa/forensics.hpp"
#include "lsa/generator.hpp"
#include "lsa/losses.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

struct AttackConfig {
    LayerGroupKind group = LayerGroupKind::all;
    bool optimize_noise = false;
    double learning_rate = 0.01;
    std::size_t max_iters = 200;
    Hyperparams hyper{.lambda1 = 0.01, .lambda2 = 0.005, .lambda_id = 0.0};
    std::uint64_t seed = 0;
    bool stop_on_success = true;  // single-classifier attacks only; pools run to max_iters
    double success_threshold = 0.5;

    void validate() const;
};

struct LossTraceEntry {
    double total = 0.0;
    std::vector<std::pair<std::string, double>> terms;  // unweighted term values
};

struct AttackResult {
    LatentCode final_latent;
    NoiseStack final_noise;
    Tensor image;  // == synthesize(gen, final_latent, final_noise), exactly
    std::vector<LossTraceEntry> loss_trace;  // one entry per parameter update
    std::map<std::string, bool> success_per_classifier;
    std::size_t iterations_used = 0;
    double wall_clock_seconds = 0.0;
};

// Attack artifact serialization: <stem>.png + <stem>.json sidecar. Pixel-space
// baselines set store_float_image so metrics can bypass the 8-bit preview
// (latent attacks instead re-synthesize exactly from the stored latents).
void save_attack_result(const std::string& dir, const std::string& stem, const AttackResult& result,
                        const std::string& method, std::uint64_t seed,
                        bool store_float_image = false);
AttackResult load_attack_result(const std::string& dir, const std::string& stem);

struct MetaConfig {
    double inner_lr = 0.01;
    std::vector<const Classifier*> pool;  // K >= 2
    std::size_t combos_per_iter = 1;
};

// Reference-image or text guidance, shared by the multi-classifier attacks.
struct Guidance {
    static Guidance image(const Tensor& ref, const FeatureExtractor& phi);
    static Guidance text(const std::string& prompt, const JointEmbedder& emb,
                         const FeatureExtractor* id_embedder = nullptr);

    bool is_text() const { return embedder != nullptr; }

    std::optional<Tensor> reference;
    const FeatureExtractor* phi = nullptr;
    std::string prompt;
    const JointEmbedder* embedder = nullptr;
    const FeatureExtractor* id_embedder = nullptr;  // used when hyper.lambda_id > 0
};

// Gradient flow is restricted to the latent rows of cfg.group (and to noise
// when cfg.optimize_noise); rows outside the group stay bit-identical to the
// sampled broadcast latent.
AttackResult attack_image_guided(const Generator& gen, const Classifier& clf, const Tensor& ref,
                                 const AttackConfig& cfg, const FeatureExtractor& phi);

AttackResult attack_text_guided(const Generator& gen, const Classifier& clf, const std::string& text,
                                const AttackConfig& cfg, const JointEmbedder& emb,
                                const FeatureExtractor* id_embedder = nullptr);

// Samples n latents and keeps the one whose synthesized image is closest to
// the text in embedding space.
std::pair<LatentCode, NoiseStack> init_best_latent(const Generator& gen, const std::string& text,
                                                   const JointEmbedder& emb, std::size_t n = 50,
                                                   std::uint64_t seed = 0);

// Pixel-space baselines toward the "real" label, inf-norm bounded.
Tensor fgsm(const Tensor& img, const Classifier& clf, double eps = 0.06);
Tensor pgd(const Tensor& img, const Classifier& clf, double eps = 0.06, double step = 0.01,
           std::size_t iters = 50);

// Adversarial term = mean BCE over the pool; always runs max_iters when the
// pool has more than one member.
AttackResult attack_ensemble(const Generator& gen, const std::vector<const Classifier*>& pool,
                             const Guidance& guidance, const AttackConfig& cfg);

// Per iteration: sample a meta-train subset (K-1) and a disjoint meta-test
// singleton, take a provisional step on the train loss, evaluate the test
// model at the stepped latent, and descend the summed gradients (first-order).
AttackResult attack_meta(const Generator& gen, const MetaConfig& meta, const Guidance& guidance,
                         const AttackConfig& cfg);

// Three-stage baseline: invert the reference (fixed budget), splice the group
// rows into the sampled latent, then adversarially optimize the mixed latent.
AttackResult attack_image_naive(const Generator& gen, const Classifier& clf, const Tensor& ref,
                                LayerGroupKind group, const AttackConfig& cfg,
                                const FeatureExtractor& phi, std::size_t inversion_iters = 500);

}  // namespace lsa
