#include "lsa/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "lsa/errors.hpp"

namespace lsa {

Var perceptual_loss(Tape& tape, Var a, Var b, const FeatureExtractor& phi) {
    if (!tape.value(a).same_shape(tape.value(b)))
        throw std::invalid_argument("perceptual_loss: image shape mismatch");
    Var fa = phi.embed(tape, a);
    Var fb = phi.embed(tape, b);
    return tape.sum_sq(tape.sub(fa, fb));
}

Var perceptual_loss_to(Tape& tape, Var img, const Tensor& target_features, const FeatureExtractor& phi) {
    Var f = phi.embed(tape, img);
    if (tape.value(f).size() != target_features.size())
        throw std::invalid_argument("perceptual_loss_to: feature size mismatch");
    return tape.sum_sq(tape.sub(f, tape.constant(target_features)));
}

double perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& phi) {
    Tape tape;
    return tape.scalar(perceptual_loss(tape, tape.constant(a), tape.constant(b), phi));
}

Var latent_reg(Tape& tape, Var w, Var w_anchor) {
    if (!tape.value(w).same_shape(tape.value(w_anchor)))
        throw std::invalid_argument("latent_reg: shape mismatch");
    return tape.sum_sq(tape.sub(w, w_anchor));
}

double latent_reg(const Tensor& w, const Tensor& w_anchor) {
    Tape tape;
    return tape.scalar(latent_reg(tape, tape.constant(w), tape.constant(w_anchor)));
}

Var real_prob(Tape& tape, const Classifier& clf, Var img) {
    return clf.predict_real_prob(tape, preprocess(tape, img, clf));
}

Var bce_real_from_prob(Tape& tape, Var p) {
    return tape.scale(tape.log(tape.clamp(p, 1e-7, 1.0 - 1e-7)), -1.0);
}

Var adversarial_bce(Tape& tape, const Classifier& clf, Var img) {
    return bce_real_from_prob(tape, real_prob(tape, clf, img));
}

double adversarial_bce(const Classifier& clf, const Tensor& img) {
    Tape tape;
    return tape.scalar(adversarial_bce(tape, clf, tape.constant(img)));
}

Var clip_distance(Tape& tape, Var img, const std::string& text, const JointEmbedder& emb) {
    if (text.empty()) throw std::invalid_argument("clip_distance: empty text");
    return clip_distance_to(tape, img, emb.embed_text(text), emb);
}

Var clip_distance_to(Tape& tape, Var img, const Tensor& text_embedding, const JointEmbedder& emb) {
    Var fi = emb.embed_image(tape, img);
    Var cos = tape.dot(fi, tape.constant(text_embedding));
    return tape.add_scalar(tape.scale(cos, -1.0), 1.0);
}

double clip_distance(const Tensor& img, const std::string& text, const JointEmbedder& emb) {
    Tape tape;
    return tape.scalar(clip_distance(tape, tape.constant(img), text, emb));
}

Var identity_loss(Tape& tape, Var a, Var b, const FeatureExtractor& id_emb) {
    Var ea = tape.l2_normalize(id_emb.embed(tape, a));
    Var eb = tape.l2_normalize(id_emb.embed(tape, b));
    return tape.add_scalar(tape.scale(tape.dot(ea, eb), -1.0), 1.0);
}

Var identity_loss_to(Tape& tape, Var img, const Tensor& target_unit_embedding,
                     const FeatureExtractor& id_emb) {
    Var e = tape.l2_normalize(id_emb.embed(tape, img));
    Var cos = tape.dot(e, tape.constant(target_unit_embedding));
    return tape.add_scalar(tape.scale(cos, -1.0), 1.0);
}

double identity_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& id_emb) {
    Tape tape;
    return tape.scalar(identity_loss(tape, tape.constant(a), tape.constant(b), id_emb));
}

Var composite_objective(Tape& tape, const std::vector<WeightedTerm>& terms) {
    for (const auto& t : terms)
        if (t.weight < 0.0) throw std::invalid_argument("composite_objective: negative weight on " + t.name);
    Var total = tape.constant(Tensor::scalar(0.0));
    for (const auto& t : terms) {
        if (t.weight == 0.0) continue;
        Var v = t.build(tape);
        total = tape.add(total, tape.scale(v, t.weight));
    }
    return total;
}

FeatureExtractor penultimate_features(const Classifier& clf, std::string layer_tag) {
    FeatureExtractor out;
    out.layer_tag = layer_tag.empty() ? clf.arch_id() + ".penultimate" : std::move(layer_tag);
    auto owned = std::make_shared<Classifier>(clf);  // extractor outlives the caller's handle
    out.embed = [owned](Tape& tape, Var img) {
        return owned->features(tape, preprocess(tape, img, *owned));
    };
    return out;
}

FeatureExtractor with_unit_rms(FeatureExtractor phi, const std::vector<Tensor>& reference_images) {
    if (reference_images.empty()) throw std::invalid_argument("with_unit_rms: empty reference set");
    double sq = 0.0;
    for (const auto& img : reference_images) {
        const Tensor f = phi.embed_value(img);
        for (double v : f.data) sq += v * v;
    }
    const double rms = std::sqrt(sq / static_cast<double>(reference_images.size()));
    if (rms == 0.0) throw NumericError("with_unit_rms: features vanish on the reference set");
    FeatureExtractor out;
    out.layer_tag = phi.layer_tag + "/unit-rms";
    const double scale = 1.0 / rms;
    auto inner = std::make_shared<FeatureExtractor>(std::move(phi));
    out.embed = [inner, scale](Tape& tape, Var img) {
        return tape.scale(inner->embed(tape, img), scale);
    };
    return out;
}

FeatureExtractor pooled_gray_features(std::size_t pool_steps) {
    FeatureExtractor out;
    out.layer_tag = "pooled_gray/" + std::to_string(pool_steps);
    out.embed = [pool_steps](Tape& tape, Var img) {
        const auto& shp = tape.value(img).shape;
        if (shp.size() != 3) throw std::invalid_argument("pooled_gray: [h,w,c] image expected");
        std::size_t h = shp[0], w = shp[1];
        const std::size_t c = shp[2];
        auto idx = std::make_shared<std::vector<std::size_t>>(c * h * w);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < h * w; ++p) (*idx)[ch * h * w + p] = p * c + ch;
        Var chw = tape.gather(img, idx, {c, h * w});
        Tensor avg({1, c}, 1.0 / static_cast<double>(c));
        Var gray = tape.matmul(tape.constant(avg), chw);  // [1, h*w]
        for (std::size_t s = 0; s < pool_steps && h % 2 == 0 && w % 2 == 0; ++s) {
            gray = tape.avgpool2x(gray, h, w);
            h /= 2;
            w /= 2;
        }
        return tape.reshape(gray, {h * w});
    };
    return out;
}

}  // namespace lsa
