#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lsa/attacks.hpp"
#include "lsa/forensics.hpp"
#include "lsa/losses.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

// Fraction of results whose stored flag for clf_id is true.
double attack_success_rate(const std::vector<AttackResult>& results, const std::string& clf_id);

// Frechet distance between Gaussian fits of two feature sets.
// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), shrinkage delta*I applied
// to both covariances.
double fid_from_features(const std::vector<Tensor>& features_a, const std::vector<Tensor>& features_b,
                         double shrinkage = 1e-6);
double fid(const std::vector<Tensor>& images_a, const std::vector<Tensor>& images_b,
           const FeatureExtractor& phi, double shrinkage = 1e-6);

struct TimingSummary {
    double mean_a = 0.0, median_a = 0.0;
    double mean_b = 0.0, median_b = 0.0;
    double speedup = 0.0;  // mean_a / mean_b
};
TimingSummary timing_comparison(const std::vector<AttackResult>& runs_a,
                                const std::vector<AttackResult>& runs_b);

// rows: method -> held-out classifier id -> ASR percentage in [0,100]
struct TransferTable {
    std::map<std::string, std::map<std::string, double>> rows;
};

// An attack method run against a reduced pool; the held-out classifier never
// enters the pool, so no gradients from it reach the attack.
struct MethodRunner {
    std::string name;
    std::function<AttackResult(const std::vector<const Classifier*>& attack_pool, std::uint64_t seed)> run;
};

TransferTable leave_one_out_transfer(const std::vector<const Classifier*>& pool,
                                     const std::vector<MethodRunner>& methods, std::size_t n_seeds,
                                     double success_threshold = 0.5, std::size_t jobs = 1);

struct CampaignReport {
    std::map<std::string, double> per_classifier_asr;  // fractions in [0,1]
    double fid_value = -1.0;                           // -1 when not computed
    TimingSummary timings;
    std::string config_echo;
};

std::string to_csv(const CampaignReport& report);
std::string to_csv(const TransferTable& table);

}  // namespace lsa
