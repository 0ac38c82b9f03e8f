#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsa/attacks.hpp"
#include "lsa/forensics.hpp"
#include "lsa/generator.hpp"

namespace lsa {

// Declarative experiment description. Parsing is strict: unknown keys and
// missing referenced files are config errors that name the offending field.
struct ExperimentConfig {
    // generator: fresh (seeded) or loaded from a checkpoint
    GeneratorConfig generator_cfg;
    std::uint64_t generator_seed = 1;
    std::string generator_checkpoint;  // empty = build from seed

    // dataset
    std::size_t n_real = 240, n_fake = 240;
    std::uint64_t dataset_seed = 7;
    std::size_t holdout_real = 100, holdout_fake = 100;
    std::uint64_t holdout_seed = 8;
    std::string dataset_dir;  // optional: class-labeled PNG folders

    // zoo
    std::vector<std::string> zoo_archs{"fc_small", "fc_deep", "pool_fc", "gray_fc", "fc_small16"};
    std::string phi_arch = "fc_feat";
    TrainConfig train;

    // attack
    std::string method = "image_guided";
    std::string target = "all";  // classifier arch_id or "all"
    AttackConfig attack;
    MetaConfig meta_params;      // inner_lr / combos_per_iter (pool filled at run time)
    double pixel_eps = 0.06;
    double pixel_step = 0.01;
    std::size_t pixel_iters = 50;
    std::size_t inversion_iters = 500;

    // guidance
    std::optional<std::uint64_t> reference_seed;  // render a reference face
    std::string reference_image;                  // or read one from a PNG
    std::string text_key;
    std::string prompt_file;  // empty = builtin prompt book

    // run control
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
    std::string out_root;  // empty = $LSA_OUT_ROOT or "outputs"

    nlohmann::json canonical;  // validated, normalized echo
    std::string hash;          // content hash of the canonical form

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_json(const nlohmann::json& j, const std::string& source);
};

std::string config_hash(const nlohmann::json& canonical);

struct RunPaths {
    std::string root, checkpoints, results, reports;
};
// outputs/<hash12>/{checkpoints,results,reports}; creates the directories.
RunPaths run_paths(const ExperimentConfig& cfg, const std::string& out_root_override = "");

// Run manifest: config hash, code version, artifact list. A command whose
// manifest exists with a matching hash and intact artifacts is a no-op.
struct RunManifest {
    std::string config_hash;
    std::string code_version;
    std::string command;
    std::vector<std::string> artifacts;  // paths relative to the run root
    nlohmann::json config_echo;
};
void save_manifest(const std::string& dir, const RunManifest& manifest);
std::optional<RunManifest> load_manifest(const std::string& dir, const std::string& command);
bool manifest_satisfied(const std::string& run_root, const RunManifest& manifest);

inline constexpr const char* kCodeVersion = "lsa 0.1.0";
inline constexpr const char* kOutRootEnv = "LSA_OUT_ROOT";

}  // namespace lsa
