#include "lsa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lsa/errors.hpp"
#include "lsa/linalg.hpp"
#include "lsa/parallel.hpp"

namespace lsa {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

double attack_success_rate(const std::vector<AttackResult>& results, const std::string& clf_id) {
    if (results.empty()) throw std::invalid_argument("attack_success_rate: empty result list");
    std::size_t hits = 0;
    for (const auto& r : results) {
        auto it = r.success_per_classifier.find(clf_id);
        if (it == r.success_per_classifier.end())
            throw std::invalid_argument("attack_success_rate: result missing flag for " + clf_id);
        if (it->second) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

namespace {

struct Moments {
    Tensor mean;  // [d]
    Tensor cov;   // [d, d], unbiased
};

Moments feature_moments(const std::vector<Tensor>& features) {
    const std::size_t n = features.size();
    const std::size_t d = features[0].size();
    Moments m{Tensor({d}), Tensor({d, d})};
    for (const auto& f : features) {
        if (f.size() != d) throw std::invalid_argument("fid: inconsistent feature dimensions");
        for (std::size_t i = 0; i < d; ++i) m.mean[i] += f[i];
    }
    m.mean *= 1.0 / static_cast<double>(n);
    for (const auto& f : features)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = f[i] - m.mean[i];
            for (std::size_t j = 0; j < d; ++j) m.cov.data[i * d + j] += di * (f[j] - m.mean[j]);
        }
    m.cov *= 1.0 / static_cast<double>(n - 1);
    return m;
}

}  // namespace

double fid_from_features(const std::vector<Tensor>& features_a, const std::vector<Tensor>& features_b,
                         double shrinkage) {
    if (features_a.size() < 2 || features_b.size() < 2)
        throw std::invalid_argument("fid: each feature set needs at least 2 samples");
    const std::size_t d = features_a[0].size();
    if (shrinkage == 0.0 && (features_a.size() <= d || features_b.size() <= d))
        throw NumericError("fid: covariance is rank-deficient; enable shrinkage");

    Moments a = feature_moments(features_a);
    Moments b = feature_moments(features_b);
    for (std::size_t i = 0; i < d; ++i) {
        a.cov.at2(i, i) += shrinkage;
        b.cov.at2(i, i) += shrinkage;
    }

    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }

    // Tr((Sa Sb)^(1/2)) via the symmetric product Sa^(1/2) Sb Sa^(1/2)
    const Tensor sqrt_a = sqrtm_psd(a.cov);
    const Tensor sym = matmul_plain(matmul_plain(sqrt_a, b.cov), sqrt_a);
    const SymmetricEigen eig = symmetric_eigen(sym);
    double cross = 0.0;
    for (double lam : eig.values) cross += std::sqrt(std::max(0.0, lam));

    double trace_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace_term += a.cov.at2(i, i) + b.cov.at2(i, i);
    return mean_term + trace_term - 2.0 * cross;
}

double fid(const std::vector<Tensor>& images_a, const std::vector<Tensor>& images_b,
           const FeatureExtractor& phi, double shrinkage) {
    std::vector<Tensor> fa, fb;
    fa.reserve(images_a.size());
    fb.reserve(images_b.size());
    for (const auto& img : images_a) fa.push_back(phi.embed_value(img));
    for (const auto& img : images_b) fb.push_back(phi.embed_value(img));
    return fid_from_features(fa, fb, shrinkage);
}

namespace {
double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

TimingSummary timing_comparison(const std::vector<AttackResult>& runs_a,
                                const std::vector<AttackResult>& runs_b) {
    if (runs_a.empty() || runs_b.empty())
        throw std::invalid_argument("timing_comparison: empty run list");
    std::vector<double> ta, tb;
    for (const auto& r : runs_a) ta.push_back(r.wall_clock_seconds);
    for (const auto& r : runs_b) tb.push_back(r.wall_clock_seconds);
    TimingSummary out;
    for (double v : ta) out.mean_a += v;
    for (double v : tb) out.mean_b += v;
    out.mean_a /= static_cast<double>(ta.size());
    out.mean_b /= static_cast<double>(tb.size());
    out.median_a = median_of(ta);
    out.median_b = median_of(tb);
    out.speedup = out.mean_b > 0.0 ? out.mean_a / out.mean_b : 0.0;
    return out;
}

TransferTable leave_one_out_transfer(const std::vector<const Classifier*>& pool,
                                     const std::vector<MethodRunner>& methods, std::size_t n_seeds,
                                     double success_threshold, std::size_t jobs) {
    if (pool.size() < 2) throw std::invalid_argument("leave_one_out_transfer: pool must have >= 2 classifiers");
    if (methods.empty()) throw std::invalid_argument("leave_one_out_transfer: no methods given");
    if (n_seeds < 1) throw std::invalid_argument("leave_one_out_transfer: n_seeds must be >= 1");

    TransferTable table;
    for (std::size_t held = 0; held < pool.size(); ++held) {
        const Classifier* black_box = pool[held];
        std::vector<const Classifier*> attack_pool;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (i != held) attack_pool.push_back(pool[i]);

        for (const auto& method : methods) {
            std::vector<int> fooled(n_seeds, 0);
            parallel_for(n_seeds, jobs, [&](std::size_t s) {
                const AttackResult result = method.run(attack_pool, s);
                const double p = black_box->predict_real_prob(preprocess(result.image, *black_box));
                fooled[s] = p > success_threshold ? 1 : 0;
            });
            std::size_t hits = 0;
            for (int f : fooled) hits += f;
            table.rows[method.name][black_box->arch_id()] =
                100.0 * static_cast<double>(hits) / static_cast<double>(n_seeds);
        }
    }
    return table;
}

std::string to_csv(const CampaignReport& report) {
    std::string out = "metric,key,value\n";
    for (const auto& [id, asr] : report.per_classifier_asr) out += "asr," + id + "," + fmt(asr) + "\n";
    if (report.fid_value >= 0.0) out += "fid,," + fmt(report.fid_value) + "\n";
    return out;
}

std::string to_csv(const TransferTable& table) {
    std::vector<std::string> cols;
    for (const auto& [method, row] : table.rows)
        for (const auto& [clf, asr] : row)
            if (std::find(cols.begin(), cols.end(), clf) == cols.end()) cols.push_back(clf);
    std::sort(cols.begin(), cols.end());

    std::string out = "method";
    for (const auto& c : cols) out += "," + c;
    out += "\n";
    for (const auto& [method, row] : table.rows) {
        out += method;
        for (const auto& c : cols) {
            auto it = row.find(c);
            out += ",";
            out += it == row.end() ? "" : fmt(it->second);
        }
        out += "\n";
    }
    return out;
}

}  // namespace lsa
