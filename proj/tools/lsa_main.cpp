#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "lsa/cli.hpp"
#include "lsa/config.hpp"
#include "lsa/errors.hpp"

namespace {

lsa::ExperimentConfig load_config(const std::string& path, const std::string& seeds_override,
                                  std::size_t jobs_override, const std::string& method_override) {
    lsa::ExperimentConfig cfg = lsa::ExperimentConfig::load(path);
    if (!seeds_override.empty()) {
        // "start:count" or a single count
        nlohmann::json j = cfg.canonical;
        const auto colon = seeds_override.find(':');
        const std::uint64_t start = colon == std::string::npos ? 0 : std::stoull(seeds_override.substr(0, colon));
        const std::size_t count = std::stoull(colon == std::string::npos ? seeds_override
                                                                         : seeds_override.substr(colon + 1));
        j["seeds"] = {{"start", start}, {"count", count}};
        cfg = lsa::ExperimentConfig::from_json(j, path);
    }
    if (!method_override.empty()) {
        nlohmann::json j = cfg.canonical;
        if (!j.contains("attack")) j["attack"] = nlohmann::json::object();
        j["attack"]["method"] = method_override;
        cfg = lsa::ExperimentConfig::from_json(j, path);
    }
    if (jobs_override) cfg.jobs = jobs_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space adversarial attacks against forensic classifiers"};
    app.require_subcommand(1);

    std::string config_path, out_root, seeds_override, method_override;
    std::size_t jobs = 0;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_root, "output root (default $LSA_OUT_ROOT or ./outputs)");
        cmd->add_option("--jobs", jobs, "parallel workers for independent runs");
    };

    CLI::App* train = app.add_subcommand("train-zoo", "train the generator-vs-renderer classifier zoo");
    add_common(train, true);

    CLI::App* attack = app.add_subcommand("attack", "run an attack campaign from a config");
    add_common(attack, true);
    attack->add_option("--seeds", seeds_override, "override seeds as count or start:count");
    attack->add_option("--method", method_override, "override attack.method");

    CLI::App* evaluate = app.add_subcommand("evaluate", "aggregate a results directory into reports");
    std::string results_dir, zoo_dir, reports_dir;
    evaluate->add_option("--results", results_dir, "results directory")->required();
    evaluate->add_option("--zoo", zoo_dir, "checkpoints directory")->required();
    evaluate->add_option("--reports", reports_dir, "reports output directory");

    CLI::App* reproduce =
        app.add_subcommand("reproduce", "desk-scale analogs of the headline experiments");
    std::string table_id;
    std::size_t rep_seeds = 0;
    reproduce->add_option("table", table_id, "table1 | table2 | table4")->required();
    add_common(reproduce, false);
    reproduce->add_option("--seeds", rep_seeds, "seeds per cell");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            const auto cfg = load_config(config_path, "", jobs, "");
            const auto paths = lsa::run_paths(cfg, out_root);
            lsa::cmd_train_zoo(cfg, paths);
            std::printf("checkpoints: %s\n", paths.checkpoints.c_str());
            return 0;
        }
        if (attack->parsed()) {
            const auto cfg = load_config(config_path, seeds_override, jobs, method_override);
            const auto paths = lsa::run_paths(cfg, out_root);
            const std::string results = lsa::cmd_attack(cfg, paths);
            std::printf("results: %s\n", results.c_str());
            return 0;
        }
        if (evaluate->parsed()) {
            if (reports_dir.empty())
                reports_dir = (std::filesystem::path(results_dir).parent_path() / "reports").string();
            lsa::cmd_evaluate(results_dir, zoo_dir, reports_dir);
            std::printf("reports: %s\n", reports_dir.c_str());
            return 0;
        }
        if (reproduce->parsed()) {
            const std::size_t n = rep_seeds ? rep_seeds : (table_id == "table4" ? 100 : 30);
            return lsa::cmd_reproduce(table_id, out_root, n, jobs ? jobs : 2);
        }
    } catch (const lsa::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
