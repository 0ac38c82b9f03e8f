#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lsa/dataset.hpp"
#include "lsa/errors.hpp"
#include "lsa/forensics.hpp"
#include "lsa/losses.hpp"
#include "lsa/rng.hpp"

using namespace lsa;

namespace {

FeatureExtractor identity_features() {
    FeatureExtractor fe;
    fe.layer_tag = "identity";
    fe.embed = [](Tape& tape, Var img) {
        return tape.reshape(img, {tape.value(img).size()});
    };
    return fe;
}

// embeds images by normalizing their flattened pixels; lets tests inject
// exact embedding geometry through crafted "images"
JointEmbedder stub_embedder(double raw_scale = 1.0) {
    JointEmbedder emb;
    emb.embed_image = [raw_scale](Tape& tape, Var img) {
        Var flat = tape.reshape(img, {tape.value(img).size()});
        return tape.l2_normalize(tape.scale(flat, raw_scale));
    };
    emb.embed_text = [](const std::string& key) {
        if (key == "e0") return Tensor::from({4}, {1, 0, 0, 0});
        if (key == "e1") return Tensor::from({4}, {0, 1, 0, 0});
        if (key == "neg_e0") return Tensor::from({4}, {-1, 0, 0, 0});
        throw std::invalid_argument("unknown key: " + key);
    };
    return emb;
}

Tensor img4(std::initializer_list<double> vals) { return Tensor::from({1, 1, 4}, vals); }

Tensor random_image(std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({32, 32, 3});
    for (double& v : t.data) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("perceptual_loss: zero at equality, exact symmetry, analytic case") {
    const FeatureExtractor fe = identity_features();
    Tensor a = Tensor::from({2, 2, 1}, {0.1, 0.2, 0.3, 0.4});
    Tensor b = a;
    CHECK(perceptual_loss(a, b, fe) == 0.0);

    b.data[2] += 1.0;
    CHECK(perceptual_loss(a, b, fe) == doctest::Approx(1.0));
    CHECK(perceptual_loss(a, b, fe) == perceptual_loss(b, a, fe));

    Tensor c({3, 3, 1}, 0.0);
    Tape tape;
    CHECK_THROWS_AS(perceptual_loss(tape, tape.constant(a), tape.constant(c), fe),
                    std::invalid_argument);
}

TEST_CASE("latent_reg: analytic values and degree-2 homogeneity") {
    Tensor w({8, 64}, 0.0);
    Tensor ws = w;
    CHECK(latent_reg(w, ws) == 0.0);

    w.data[100] = 1.0;
    CHECK(latent_reg(w, ws) == doctest::Approx(1.0));

    w.data[100] = 2.0;
    CHECK(latent_reg(w, ws) == doctest::Approx(4.0));

    Tensor wrong({8, 63}, 0.0);
    Tape tape;
    CHECK_THROWS_AS(latent_reg(tape, tape.constant(w), tape.constant(wrong)), std::invalid_argument);
}

TEST_CASE("adversarial_bce: saturation analytics with probability clamping") {
    // p ~= 1: zero weights, strong positive bias
    Classifier real_clf = Classifier::linear(Tensor({2, 2, 3}, 0.0), 40.0);
    Tensor img({2, 2, 3}, 0.5);
    CHECK(adversarial_bce(real_clf, img) == doctest::Approx(0.0).epsilon(1e-4));

    // p = 0.5
    Classifier coin = Classifier::linear(Tensor({2, 2, 3}, 0.0), 0.0);
    CHECK(adversarial_bce(coin, img) == doctest::Approx(0.6931).epsilon(2e-4));

    // p clamped at 1e-7 -> -ln(1e-7)
    Classifier fake_clf = Classifier::linear(Tensor({2, 2, 3}, 0.0), -40.0);
    CHECK(adversarial_bce(fake_clf, img) == doctest::Approx(16.1181).epsilon(1e-3));
}

TEST_CASE("clip_distance: equal, orthogonal, antipodal embeddings") {
    const JointEmbedder emb = stub_embedder();
    CHECK(clip_distance(img4({2, 0, 0, 0}), "e0", emb) == doctest::Approx(0.0));
    CHECK(clip_distance(img4({0, 3, 0, 0}), "e0", emb) == doctest::Approx(1.0));
    CHECK(clip_distance(img4({-5, 0, 0, 0}), "e0", emb) == doctest::Approx(2.0));

    Tape tape;
    CHECK_THROWS_AS(clip_distance(tape, tape.constant(img4({1, 0, 0, 0})), "", emb),
                    std::invalid_argument);
}

TEST_CASE("clip_distance is invariant to positive rescaling of raw embeddings") {
    const JointEmbedder emb1 = stub_embedder(1.0);
    const JointEmbedder emb37 = stub_embedder(3.7);
    const Tensor img = img4({0.3, -0.2, 0.9, 0.1});
    CHECK(clip_distance(img, "e0", emb1) ==
          doctest::Approx(clip_distance(img, "e0", emb37)).epsilon(1e-12));
    CHECK(clip_distance(img, "e1", emb1) ==
          doctest::Approx(clip_distance(img, "e1", emb37)).epsilon(1e-12));
}

TEST_CASE("identity_loss: endpoints, degeneracy, and shift ordering") {
    const FeatureExtractor fe = identity_features();
    const Tensor a = img4({0.5, 0.1, 0.2, 0.8});
    CHECK(identity_loss(a, a, fe) == doctest::Approx(0.0));

    // antipodal embeddings
    Tensor neg = a;
    for (double& v : neg.data) v = -v;
    CHECK(identity_loss(a, neg, fe) == doctest::Approx(2.0));

    Tensor zero({1, 1, 4}, 0.0);
    CHECK_THROWS_AS(identity_loss(a, zero, fe), NumericError);

    // a 1-pixel shift stays closer than an independent render, on average
    const FeatureExtractor id_emb = pooled_gray_features(2);
    Rng rng(13);
    double shifted_sum = 0.0, indep_sum = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        const Tensor x = render_face(sample_face_params(rng), 32);
        const Tensor y = render_face(sample_face_params(rng), 32);
        Tensor x_shift({32, 32, 3});
        for (std::size_t yy = 0; yy < 32; ++yy)
            for (std::size_t xx = 0; xx < 32; ++xx)
                for (std::size_t c = 0; c < 3; ++c)
                    x_shift.data[(yy * 32 + xx) * 3 + c] =
                        x.data[(yy * 32 + (xx + 1) % 32) * 3 + c];
        shifted_sum += identity_loss(x, x_shift, id_emb);
        indep_sum += identity_loss(x, y, id_emb);
    }
    CHECK(shifted_sum / 100.0 < indep_sum / 100.0);
}

TEST_CASE("composite_objective: linearity and zero-weight behavior") {
    Tape tape;
    Var x = tape.variable(Tensor::from({3}, {1.0, 2.0, 3.0}));

    Var term_a = tape.sum_sq(x);
    Var term_b = tape.sum(x);
    std::vector<WeightedTerm> single{{"a", 1.0, [term_a](Tape&) { return term_a; }}};
    CHECK(tape.scalar(composite_objective(tape, single)) == tape.scalar(term_a));

    std::vector<WeightedTerm> both{{"a", 0.25, [term_a](Tape&) { return term_a; }},
                                   {"b", 2.0, [term_b](Tape&) { return term_b; }}};
    const double expect = 0.25 * tape.scalar(term_a) + 2.0 * tape.scalar(term_b);
    CHECK(tape.scalar(composite_objective(tape, both)) == doctest::Approx(expect).epsilon(1e-12));

    // all-zero weights: zero value, zero gradient
    Tape t2;
    Var y = t2.variable(Tensor::from({3}, {1.0, 2.0, 3.0}));
    std::vector<WeightedTerm> zeros{{"a", 0.0, [&](Tape& t) { return t.sum_sq(y); }}};
    Var total = composite_objective(t2, zeros);
    CHECK(t2.scalar(total) == 0.0);
    t2.backward(total);
    CHECK(t2.grad(y).size() == 0);  // never touched by the backward sweep

    std::vector<WeightedTerm> negative{{"a", -1.0, [&](Tape& t) { return t.sum(y); }}};
    CHECK_THROWS_AS(composite_objective(t2, negative), std::invalid_argument);
}

TEST_CASE("loss gradients through desk models match finite differences") {
    Generator gen = make_desk_generator(GeneratorConfig{}, 1);
    LabeledDataset train = make_desk_dataset(gen, 80, 80, 7);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 11;
    Classifier clf = train_classifier(cfg, train, "fc_small").classifier;
    Classifier phi_net = train_classifier(cfg, train, "fc_feat").classifier;
    const FeatureExtractor phi = with_unit_rms(penultimate_features(phi_net), train.images);
    const FeatureExtractor id_emb = pooled_gray_features(2);
    const AttributeProbe probe = AttributeProbe::standard(32);
    const JointEmbedder emb = attribute_embedder(probe, PromptBook::builtin(probe));

    const Tensor img = random_image(3);
    Rng face_rng(5);
    const Tensor other = render_face(sample_face_params(face_rng), 32);
    const auto coords = gradcheck::probe_coords(img.size(), 14);

    auto check_image_loss = [&](auto build, const char* what) {
        Tape tape;
        Var xv = tape.variable(img);
        Var loss = build(tape, xv);
        tape.backward(loss);
        const Tensor grad = tape.grad(xv);
        auto fval = [&](const Tensor& probe_img) {
            Tape t;
            Var x = t.constant(probe_img);
            return t.scalar(build(t, x));
        };
        INFO(what);
        CHECK(gradcheck::max_rel_err(fval, img, grad, coords) < 1e-4);
    };

    check_image_loss([&](Tape& t, Var x) { return perceptual_loss(t, x, t.constant(other), phi); },
                     "perceptual");
    check_image_loss([&](Tape& t, Var x) { return adversarial_bce(t, clf, x); }, "adversarial_bce");
    check_image_loss([&](Tape& t, Var x) { return clip_distance(t, x, "red_tint", emb); },
                     "clip_distance");
    check_image_loss([&](Tape& t, Var x) { return identity_loss(t, x, t.constant(other), id_emb); },
                     "identity");

    // latent_reg wrt its latent argument
    Rng rng(17);
    Tensor w({8, 64});
    for (double& v : w.data) v = rng.normal();
    Tensor ws({8, 64}, 0.1);
    Tape tape;
    Var wv = tape.variable(w);
    Var reg = latent_reg(tape, wv, tape.constant(ws));
    tape.backward(reg);
    auto freg = [&](const Tensor& probe_w) {
        Tape t;
        return t.scalar(latent_reg(t, t.constant(probe_w), t.constant(ws)));
    };
    CHECK(gradcheck::max_rel_err(freg, w, tape.grad(wv), gradcheck::probe_coords(w.size(), 16)) < 1e-4);
}

TEST_CASE("attribute probe embeddings are unit norm; prompt book resolves keys") {
    const AttributeProbe probe = AttributeProbe::standard(32);
    const PromptBook prompts = PromptBook::builtin(probe);
    const JointEmbedder emb = attribute_embedder(probe, prompts);

    const Tensor face = render_face(FaceParams{}, 32);
    const Tensor e = emb.embed_image_value(face);
    double n2 = 0.0;
    for (double v : e.data) n2 += v * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-6));

    for (const auto& key : prompts.keys()) {
        const Tensor t = emb.embed_text(key);
        double tn = 0.0;
        for (double v : t.data) tn += v * v;
        CHECK(std::sqrt(tn) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK_THROWS_AS(emb.embed_text("no_such_prompt"), std::invalid_argument);

    // semantic sanity: a redder face scores higher on the red_tint axis
    FaceParams red;
    red.skin_r = 0.95;
    red.skin_g = 0.4;
    red.skin_b = 0.35;
    FaceParams pale;
    pale.skin_r = 0.6;
    pale.skin_g = 0.62;
    pale.skin_b = 0.6;
    const Tensor red_e = probe.embed_unit(render_face(red, 32));
    const Tensor pale_e = probe.embed_unit(render_face(pale, 32));
    CHECK(red_e[1] > pale_e[1]);
}
