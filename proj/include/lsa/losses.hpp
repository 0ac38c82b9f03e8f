#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsa/autodiff.hpp"
#include "lsa/forensics.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

// Frozen differentiable feature map over raw [0,1] images.
struct FeatureExtractor {
    std::string layer_tag;
    std::function<Var(Tape&, Var)> embed;

    Tensor embed_value(const Tensor& img) const {
        Tape tape;
        return tape.value(embed(tape, tape.constant(img)));
    }
};

// Joint image/text embedding space; both sides produce unit-norm vectors.
struct JointEmbedder {
    std::function<Var(Tape&, Var)> embed_image;
    std::function<Tensor(const std::string&)> embed_text;

    Tensor embed_image_value(const Tensor& img) const {
        Tape tape;
        return tape.value(embed_image(tape, tape.constant(img)));
    }
};

struct Hyperparams {
    double lambda1 = 0.0;     // latent-regularizer weight
    double lambda2 = 0.005;   // adversarial BCE weight
    double lambda_id = 0.0;   // identity-preservation weight
};

// ||phi(a) - phi(b)||^2
Var perceptual_loss(Tape& tape, Var a, Var b, const FeatureExtractor& phi);
// same, against precomputed target features (constant in the graph)
Var perceptual_loss_to(Tape& tape, Var img, const Tensor& target_features, const FeatureExtractor& phi);
double perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& phi);

// squared Frobenius distance between two latent matrices
Var latent_reg(Tape& tape, Var w, Var w_anchor);
double latent_reg(const Tensor& w, const Tensor& w_anchor);

// probability of "real" with preprocessing in the gradient path
Var real_prob(Tape& tape, const Classifier& clf, Var img);
// -log(p) with p clamped to [1e-7, 1-1e-7]
Var bce_real_from_prob(Tape& tape, Var p);
Var adversarial_bce(Tape& tape, const Classifier& clf, Var img);
double adversarial_bce(const Classifier& clf, const Tensor& img);

// 1 - cos(embed_image(img), embed_text(text)); throws on empty text
Var clip_distance(Tape& tape, Var img, const std::string& text, const JointEmbedder& emb);
Var clip_distance_to(Tape& tape, Var img, const Tensor& text_embedding, const JointEmbedder& emb);
double clip_distance(const Tensor& img, const std::string& text, const JointEmbedder& emb);

// 1 - cos of unit-normalized embeddings; NumericError on a zero-norm embedding
Var identity_loss(Tape& tape, Var a, Var b, const FeatureExtractor& id_emb);
Var identity_loss_to(Tape& tape, Var img, const Tensor& target_unit_embedding,
                     const FeatureExtractor& id_emb);
double identity_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& id_emb);

// Weighted sum of lazily built scalar terms; zero-weight terms are skipped
// entirely (zero value, zero gradient).
struct WeightedTerm {
    std::string name;
    double weight = 1.0;
    std::function<Var(Tape&)> build;
};
Var composite_objective(Tape& tape, const std::vector<WeightedTerm>& terms);

// Penultimate activations of a frozen classifier, with preprocessing baked in.
FeatureExtractor penultimate_features(const Classifier& clf, std::string layer_tag = "");

// Wraps an extractor so its features have unit RMS norm over the given
// reference images; keeps loss magnitudes comparable across feature networks.
FeatureExtractor with_unit_rms(FeatureExtractor phi, const std::vector<Tensor>& reference_images);

// Average-pooled grayscale pixels; cheap stand-in identity embedding.
FeatureExtractor pooled_gray_features(std::size_t pool_steps = 2);

}  // namespace lsa
