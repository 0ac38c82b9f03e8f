#pragma once

#include <string>

#include "lsa/config.hpp"
#include "lsa/dataset.hpp"
#include "lsa/eval.hpp"

namespace lsa {

// Everything the attack and evaluation commands need, trained once per config
// hash and reloadable from the checkpoints directory.
struct ZooBundle {
    Generator gen{make_desk_generator(GeneratorConfig{}, 1)};
    std::vector<Classifier> zoo;
    Classifier phi_net;
    FeatureExtractor phi;       // unit-RMS penultimate features of phi_net
    AttributeProbe probe = AttributeProbe::standard();
    PromptBook prompts = PromptBook::builtin(AttributeProbe::standard());
    JointEmbedder emb;
    FeatureExtractor id_emb = pooled_gray_features(2);
    LabeledDataset train, holdout;
};

// Trains (or reloads) the generator, zoo, and feature network under
// paths.checkpoints; writes metrics.csv with hold-out accuracies.
ZooBundle cmd_train_zoo(const ExperimentConfig& cfg, const RunPaths& paths, bool quiet = false);

// Runs the configured attack for every seed; writes one PNG + JSON sidecar
// pair per run plus a manifest. Returns the results directory. Skips work
// already recorded in the manifest for this config hash.
std::string cmd_attack(const ExperimentConfig& cfg, const RunPaths& paths, bool quiet = false);

// Aggregates a results directory: per-classifier ASR, Frechet distance of the
// re-synthesized float images against a fresh renderer set, timing summary, a
// campaign CSV, and a contact-sheet PNG.
CampaignReport cmd_evaluate(const std::string& results_dir, const std::string& checkpoints_dir,
                            const std::string& reports_dir, bool quiet = false);

// Desk-scale analogs of the headline experiments; prints desk results next to
// the full-scale reference numbers. table_id: table1 | table2 | table4.
int cmd_reproduce(const std::string& table_id, const std::string& out_root, std::size_t seeds,
                  std::size_t jobs);

// 4xN grid of the first results for quick visual inspection.
Tensor contact_sheet(const std::vector<Tensor>& images, std::size_t columns = 4);

}  // namespace lsa
