#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "lsa/dataset.hpp"
#include "lsa/forensics.hpp"
#include "lsa/rng.hpp"

using namespace lsa;

namespace {

// the desk fixtures used across cases; built once
struct Fixture {
    Generator gen = make_desk_generator(GeneratorConfig{}, 1);
    LabeledDataset train = make_desk_dataset(gen, 240, 240, 7);
    LabeledDataset holdout = make_desk_dataset(gen, 100, 100, 8);
};
Fixture& fixture() {
    static Fixture f;
    return f;
}

Tensor random_image(std::vector<std::size_t> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("linear classifier matches the hand-computed sigmoid logit") {
    // 2x2 single-channel weights, hand-computed oracle
    Tensor w = Tensor::from({2, 2, 1}, {0.5, -1.0, 2.0, 0.25});
    const double bias = -0.3;
    Classifier clf = Classifier::linear(w, bias);

    Tensor img = Tensor::from({2, 2, 1}, {0.1, 0.9, 0.4, 0.7});
    const double logit = 0.5 * 0.1 - 1.0 * 0.9 + 2.0 * 0.4 + 0.25 * 0.7 + bias;
    const double expect = 1.0 / (1.0 + std::exp(-logit));
    CHECK(clf.predict_real_prob(img) == doctest::Approx(expect).epsilon(1e-12));

    // evaluation-mode determinism
    CHECK(clf.predict_real_prob(img) == clf.predict_real_prob(img));

    // codomain
    CHECK(clf.predict_real_prob(img) > 0.0);
    CHECK(clf.predict_real_prob(img) < 1.0);

    Tensor wrong({3, 3, 1}, 0.0);
    CHECK_THROWS_AS(clf.predict_real_prob(wrong), std::invalid_argument);
}

TEST_CASE("fresh classifiers output exactly 0.5 and score ~chance on balanced data") {
    for (const char* arch : {"fc_small", "fc_deep", "pool_fc", "conv_pool", "patch_fc", "gray_fc"}) {
        Classifier clf = Classifier::make(arch, 3);
        const Tensor img = preprocess(random_image({32, 32, 3}, 5), clf);
        CHECK(clf.predict_real_prob(img) == 0.5);
    }

    // balanced 1000-sample set -> accuracy inside [0.4, 0.6]
    Fixture& f = fixture();
    LabeledDataset big = make_desk_dataset(f.gen, 500, 500, 77);
    Classifier fresh = Classifier::make("fc_small", 9);
    const double acc = evaluate_accuracy(fresh, big);
    CHECK(acc >= 0.4);
    CHECK(acc <= 0.6);
}

TEST_CASE("preprocess: identity, normalization, and area-average analytics") {
    // already at input shape with identity normalization -> unchanged
    Tensor w({2, 2, 1}, 0.0);
    Classifier linear = Classifier::linear(w, 0.0);
    Tensor img = Tensor::from({2, 2, 1}, {0.2, 0.4, 0.6, 0.8});
    const Tensor same = preprocess(img, linear);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(same[i] == img[i]);

    // constant 0.5 image, mean 0.5 / std 0.5 -> all zeros
    Classifier clf = Classifier::make("fc_small", 1);
    Tensor half({32, 32, 3}, 0.5);
    const Tensor normed = preprocess(half, clf);
    for (double v : normed.data) CHECK(v == doctest::Approx(0.0));

    // 2x downscale of a checkerboard -> every output pixel 0.5 (identity norm)
    Tensor board({4, 4, 1});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) board.data[y * 4 + x] = ((x + y) % 2) ? 1.0 : 0.0;
    const Tensor down = preprocess(board, linear);
    for (double v : down.data) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("training: zoo reaches holdout accuracy >= 0.90 with a smooth loss trace") {
    Fixture& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 11;
    for (const char* arch : {"fc_small", "fc_deep", "pool_fc", "gray_fc", "fc_small16", "fc_feat"}) {
        const TrainResult r = train_classifier(cfg, f.train, arch);
        const double acc = evaluate_accuracy(r.classifier, f.holdout);
        INFO(arch, " holdout accuracy ", acc);
        CHECK(acc >= 0.90);

        // epoch-smoothed loss is non-increasing up to a small tolerance
        REQUIRE(r.epoch_loss.size() == cfg.epochs);
        for (std::size_t e = 1; e < r.epoch_loss.size(); ++e)
            CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1] + 0.02);
        CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    }
}

TEST_CASE("training rejects bad inputs") {
    Fixture& f = fixture();
    TrainConfig cfg;

    LabeledDataset empty;
    CHECK_THROWS_AS(train_classifier(cfg, empty, "fc_small"), std::invalid_argument);

    LabeledDataset single;
    for (std::size_t i = 0; i < 8; ++i) single.push(f.train.images[i], 1);
    CHECK_THROWS_AS(train_classifier(cfg, single, "fc_small"), std::invalid_argument);

    CHECK_THROWS_AS(train_classifier(cfg, f.train, "no_such_arch"), std::invalid_argument);

    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train_classifier(bad, f.train, "fc_small"), std::invalid_argument);
}

TEST_CASE("training is deterministic given the seed") {
    Fixture& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;
    LabeledDataset small = make_desk_dataset(f.gen, 60, 60, 3);
    const TrainResult a = train_classifier(cfg, small, "fc_small");
    const TrainResult b = train_classifier(cfg, small, "fc_small");
    REQUIRE(a.batch_loss.size() == b.batch_loss.size());
    for (std::size_t i = 0; i < a.batch_loss.size(); ++i) CHECK(a.batch_loss[i] == b.batch_loss[i]);
    for (std::size_t i = 0; i < a.classifier.params().size(); ++i) {
        const Tensor& pa = a.classifier.params()[i].value;
        const Tensor& pb = b.classifier.params()[i].value;
        for (std::size_t j = 0; j < pa.size(); ++j) CHECK(pa[j] == pb[j]);
    }
}

TEST_CASE("evaluate_accuracy: constant classifiers and permutation invariance") {
    // p ~ 1 classifier: zero weights, large positive bias
    Classifier always_real = Classifier::linear(Tensor({4, 4, 3}, 0.0), 30.0);
    Classifier always_fake = Classifier::linear(Tensor({4, 4, 3}, 0.0), -30.0);

    LabeledDataset all_real, all_fake, balanced;
    for (int i = 0; i < 10; ++i) {
        Tensor img = random_image({4, 4, 3}, 100 + i);
        all_real.push(img, 1);
        all_fake.push(img, 0);
        balanced.push(img, i % 2);
    }
    CHECK(evaluate_accuracy(always_real, all_real) == 1.0);
    CHECK(evaluate_accuracy(always_real, all_fake) == 0.0);
    CHECK(evaluate_accuracy(always_real, balanced) == 0.5);
    CHECK(evaluate_accuracy(always_fake, all_real) == 0.0);

    // permutation invariance
    Rng rng(9);
    LabeledDataset shuffled = balanced;
    std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled.images[i] = balanced.images[order[i]];
        shuffled.labels[i] = balanced.labels[order[i]];
    }
    CHECK(evaluate_accuracy(always_real, shuffled) == evaluate_accuracy(always_real, balanced));

    LabeledDataset empty;
    CHECK_THROWS_AS(evaluate_accuracy(always_real, empty), std::invalid_argument);
}

TEST_CASE("classifier input gradients match finite differences") {
    Fixture& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 2;
    LabeledDataset small = make_desk_dataset(f.gen, 60, 60, 4);
    const Tensor img = f.train.images[0];

    for (const char* arch : {"fc_small", "fc_deep", "pool_fc", "conv_pool", "patch_fc", "gray_fc"}) {
        Classifier clf = train_classifier(cfg, small, arch).classifier;
        Tape tape;
        Var xv = tape.variable(img);
        Var p = clf.predict_real_prob(tape, preprocess(tape, xv, clf));
        tape.backward(p);
        const Tensor grad = tape.grad(xv);

        auto fval = [&](const Tensor& probe) {
            Tape t;
            Var x = t.constant(probe);
            return t.scalar(clf.predict_real_prob(t, preprocess(t, x, clf)));
        };
        INFO(arch);
        CHECK(gradcheck::max_rel_err(fval, img, grad, gradcheck::probe_coords(img.size(), 16)) < 1e-4);
    }
}

TEST_CASE("classifier checkpoints roundtrip exactly") {
    Fixture& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 21;
    LabeledDataset small = make_desk_dataset(f.gen, 40, 40, 5);
    Classifier clf = train_classifier(cfg, small, "pool_fc").classifier;

    const auto path = (std::filesystem::temp_directory_path() / "lsa_clf_ckpt.json").string();
    clf.save(path);
    Classifier back = Classifier::load(path);
    std::filesystem::remove(path);

    CHECK(back.arch_id() == clf.arch_id());
    CHECK(back.input_shape() == clf.input_shape());
    const Tensor img = preprocess(f.train.images[3], clf);
    CHECK(back.predict_real_prob(img) == clf.predict_real_prob(img));
}

TEST_CASE("dataset: renderer determinism and PNG directory roundtrip") {
    Rng rng(3);
    const FaceParams p = sample_face_params(rng);
    const Tensor a = render_face(p, 32);
    const Tensor b = render_face(p, 32);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(a.min_value() >= 0.0);
    CHECK(a.max_value() <= 1.0);

    Fixture& f = fixture();
    LabeledDataset small = make_desk_dataset(f.gen, 6, 4, 1);
    small.validate();
    CHECK(small.size() == 10);
    CHECK(small.has_both_classes());

    const auto dir = (std::filesystem::temp_directory_path() / "lsa_ds_roundtrip").string();
    std::filesystem::remove_all(dir);
    save_dataset(dir, small);
    const LabeledDataset back = load_dataset(dir);
    std::filesystem::remove_all(dir);
    REQUIRE(back.size() == small.size());
    std::size_t real_count = 0;
    for (int l : back.labels) real_count += l;
    CHECK(real_count == 6);
}
