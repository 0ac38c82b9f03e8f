#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lsa/dataset.hpp"
#include "lsa/errors.hpp"
#include "lsa/eval.hpp"
#include "lsa/linalg.hpp"
#include "lsa/rng.hpp"

using namespace lsa;

namespace {

AttackResult result_with(std::map<std::string, bool> flags, double seconds) {
    AttackResult r;
    r.success_per_classifier = std::move(flags);
    r.wall_clock_seconds = seconds;
    return r;
}

std::vector<Tensor> gaussian_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor f({d});
        for (double& v : f.data) v = rng.normal();
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace

TEST_CASE("symmetric_eigen recovers a known spectrum") {
    // A = Q diag(4, 1, 0.25) Q^T for a hand-built rotation
    Tensor a = Tensor::from({3, 3},
                            {3.0, 1.0, 0.0,
                             1.0, 2.0, 0.5,
                             0.0, 0.5, 1.0});
    const SymmetricEigen eig = symmetric_eigen(a);
    // reconstruct and compare
    Tensor recon({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 3; ++k)
                acc += eig.vectors.at2(i, k) * eig.values[k] * eig.vectors.at2(j, k);
            recon.at2(i, j) = acc;
        }
    for (std::size_t i = 0; i < 9; ++i) CHECK(recon[i] == doctest::Approx(a[i]).epsilon(1e-10));

    // sqrtm of a PSD matrix squares back
    const Tensor root = sqrtm_psd(a);
    const Tensor sq = matmul_plain(root, root);
    for (std::size_t i = 0; i < 9; ++i) CHECK(sq[i] == doctest::Approx(a[i]).epsilon(1e-9));
}

TEST_CASE("attack_success_rate: fractions and order invariance") {
    std::vector<AttackResult> results;
    for (int i = 0; i < 8; ++i) results.push_back(result_with({{"m", i < 4}}, 1.0));
    CHECK(attack_success_rate(results, "m") == 0.5);

    std::vector<AttackResult> reordered{results.rbegin(), results.rend()};
    CHECK(attack_success_rate(reordered, "m") == 0.5);

    for (auto& r : results) r.success_per_classifier["m"] = true;
    CHECK(attack_success_rate(results, "m") == 1.0);

    CHECK_THROWS_AS(attack_success_rate({}, "m"), std::invalid_argument);
    CHECK_THROWS_AS(attack_success_rate(results, "missing"), std::invalid_argument);
}

TEST_CASE("fid: identical sets, exact mean shift, symmetry") {
    const auto base = gaussian_features(64, 6, 3);

    CHECK(std::fabs(fid_from_features(base, base)) <= 1e-6);

    // shifted copy: equal sample covariance, mean distance exactly d
    const double d = 1.7;
    std::vector<Tensor> shifted = base;
    for (auto& f : shifted) f[0] += d;
    CHECK(fid_from_features(base, shifted) == doctest::Approx(d * d).epsilon(1e-3));

    const auto other = gaussian_features(48, 6, 4);
    const double ab = fid_from_features(base, other);
    const double ba = fid_from_features(other, base);
    CHECK(std::fabs(ab - ba) <= 1e-8);
    CHECK(ab >= -1e-9);

    // degenerate covariance without shrinkage
    const auto tiny = gaussian_features(4, 6, 5);
    CHECK_THROWS_AS(fid_from_features(tiny, tiny, 0.0), NumericError);
    CHECK_THROWS_AS(fid_from_features({}, base), std::invalid_argument);
}

TEST_CASE("fid over images goes through the feature extractor") {
    const AttributeProbe probe = AttributeProbe::standard(32);
    FeatureExtractor fe;
    fe.layer_tag = "probe_raw";
    fe.embed = [&probe](Tape& tape, Var img) { return probe.embed_raw(tape, img); };

    Rng rng(6);
    std::vector<Tensor> set_a, set_b;
    for (int i = 0; i < 24; ++i) {
        set_a.push_back(render_face(sample_face_params(rng), 32));
        set_b.push_back(render_face(sample_face_params(rng), 32));
    }
    const double same = fid(set_a, set_a, fe);
    const double cross = fid(set_a, set_b, fe);
    CHECK(std::fabs(same) <= 1e-6);
    CHECK(cross > same);
}

TEST_CASE("timing_comparison: identical lists give speedup 1") {
    std::vector<AttackResult> a;
    for (double t : {1.0, 2.0, 3.0, 4.0}) a.push_back(result_with({}, t));
    const TimingSummary s = timing_comparison(a, a);
    CHECK(s.speedup == doctest::Approx(1.0));
    CHECK(s.mean_a == doctest::Approx(2.5));
    CHECK(s.median_a == doctest::Approx(2.5));

    std::vector<AttackResult> b;
    for (double t : {0.5, 0.5}) b.push_back(result_with({}, t));
    CHECK(timing_comparison(a, b).speedup == doctest::Approx(5.0));
    CHECK_THROWS_AS(timing_comparison({}, a), std::invalid_argument);
}

TEST_CASE("leave_one_out_transfer: structure, bounds, and held-out isolation") {
    Generator gen = make_desk_generator(GeneratorConfig{}, 1);
    LabeledDataset train = make_desk_dataset(gen, 120, 120, 7);
    TrainConfig tc;
    tc.epochs = 10;
    tc.seed = 11;
    Classifier a = train_classifier(tc, train, "fc_small").classifier;
    Classifier b = train_classifier(tc, train, "pool_fc").classifier;
    Classifier phi_net = train_classifier(tc, train, "fc_feat").classifier;
    const FeatureExtractor phi = with_unit_rms(penultimate_features(phi_net), train.images);

    std::vector<const Classifier*> attacked_pools;  // ids seen by the runner
    std::vector<std::string> seen;
    MethodRunner runner;
    runner.name = "ensemble";
    runner.run = [&](const std::vector<const Classifier*>& attack_pool, std::uint64_t seed) {
        for (const Classifier* c : attack_pool) seen.push_back(c->arch_id());
        AttackConfig cfg;
        cfg.seed = seed;
        cfg.max_iters = 25;
        Rng rng(seed);
        const Guidance guidance = Guidance::image(render_face(sample_face_params(rng), 32), phi);
        return attack_ensemble(gen, attack_pool, guidance, cfg);
    };

    const TransferTable table = leave_one_out_transfer({&a, &b}, {runner}, 3);
    REQUIRE(table.rows.count("ensemble") == 1);
    const auto& row = table.rows.at("ensemble");
    REQUIRE(row.size() == 2);
    for (const auto& [clf, asr] : row) {
        CHECK(asr >= 0.0);
        CHECK(asr <= 100.0);
        CHECK(std::isfinite(asr));
    }
    // the held-out model never appears in the attack pool
    for (const auto& id : seen) CHECK((id == "fc_small" || id == "pool_fc"));
    std::size_t fc_count = 0;
    for (const auto& id : seen) fc_count += id == "fc_small";
    CHECK(fc_count == 3);  // only while pool_fc was held out

    CHECK_THROWS_AS(leave_one_out_transfer({&a}, {runner}, 2), std::invalid_argument);
}

TEST_CASE("csv emitters are deterministic and complete") {
    CampaignReport report;
    report.per_classifier_asr = {{"fc_small", 1.0}, {"pool_fc", 0.97}};
    report.fid_value = 26.44;
    const std::string csv = to_csv(report);
    CHECK(csv == "metric,key,value\nasr,fc_small,1.000000\nasr,pool_fc,0.970000\nfid,,26.440000\n");

    TransferTable table;
    table.rows["ensemble"] = {{"a", 11.0}, {"b", 32.0}};
    table.rows["meta"] = {{"a", 12.0}, {"b", 37.0}};
    const std::string tcsv = to_csv(table);
    CHECK(tcsv == "method,a,b\nensemble,11.000000,32.000000\nmeta,12.000000,37.000000\n");
    CHECK(to_csv(table) == tcsv);
}
