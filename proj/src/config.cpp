#include "lsa/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "lsa/errors.hpp"
#include "lsa/serialize.hpp"

namespace fs = std::filesystem;

namespace lsa {

namespace {

// strict field access with path-aware errors
class Section {
  public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <class T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(path_ + "." + key, "missing required field");
        return get<T>(key);
    }

    template <class T>
    T optional(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return get<T>(key);
    }

    const nlohmann::json& sub(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError(path_ + "." + key, "unknown field");
    }

    const std::string& path() const { return path_; }

  private:
    template <class T>
    T get(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path_ + "." + key, std::string("bad value: ") + e.what());
        }
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require_file(const std::string& path, const std::string& field) {
    if (!fs::exists(path)) throw ConfigError(field, "referenced path does not exist: " + path);
}

const std::set<std::string> kMethods{"image_guided", "text_guided", "ensemble", "meta",
                                     "naive",        "fgsm",        "pgd"};

}  // namespace

std::string config_hash(const nlohmann::json& canonical) {
    const std::string dump = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", std::string("parse failure in ") + path + ": " + e.what());
    }
    return from_json(j, path);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& source) {
    ExperimentConfig cfg;
    Section top(j, "config");

    if (top.has("generator")) {
        Section g(top.sub("generator"), "generator");
        if (g.has("checkpoint")) {
            cfg.generator_checkpoint = g.require<std::string>("checkpoint");
            require_file(cfg.generator_checkpoint, "generator.checkpoint");
        } else {
            cfg.generator_seed = g.optional<std::uint64_t>("seed", 1);
            cfg.generator_cfg.layer_count = g.optional<std::size_t>("layers", 8);
            cfg.generator_cfg.style_dim = g.optional<std::size_t>("style_dim", 64);
            cfg.generator_cfg.image_size = g.optional<std::size_t>("image_size", 32);
        }
        g.finish();
    }

    if (top.has("dataset")) {
        Section d(top.sub("dataset"), "dataset");
        if (d.has("dir")) {
            cfg.dataset_dir = d.require<std::string>("dir");
            require_file(cfg.dataset_dir, "dataset.dir");
        }
        cfg.n_real = d.optional<std::size_t>("n_real", cfg.n_real);
        cfg.n_fake = d.optional<std::size_t>("n_fake", cfg.n_fake);
        cfg.dataset_seed = d.optional<std::uint64_t>("seed", cfg.dataset_seed);
        cfg.holdout_real = d.optional<std::size_t>("holdout_real", cfg.holdout_real);
        cfg.holdout_fake = d.optional<std::size_t>("holdout_fake", cfg.holdout_fake);
        cfg.holdout_seed = d.optional<std::uint64_t>("holdout_seed", cfg.holdout_seed);
        d.finish();
    }

    if (top.has("zoo")) {
        Section z(top.sub("zoo"), "zoo");
        cfg.zoo_archs = z.optional<std::vector<std::string>>("archs", cfg.zoo_archs);
        cfg.phi_arch = z.optional<std::string>("phi_arch", cfg.phi_arch);
        if (z.has("train")) {
            Section t(z.sub("train"), "zoo.train");
            cfg.train.learning_rate = t.optional<double>("learning_rate", 2e-4);
            cfg.train.batch_size = t.optional<std::size_t>("batch_size", 64);
            cfg.train.epochs = t.optional<std::size_t>("epochs", 20);
            cfg.train.seed = t.optional<std::uint64_t>("seed", 11);
            t.finish();
        } else {
            cfg.train.epochs = 20;
            cfg.train.seed = 11;
        }
        z.finish();
        if (cfg.zoo_archs.empty()) throw ConfigError("zoo.archs", "zoo must list at least one architecture");
        for (const auto& a : cfg.zoo_archs)
            if (a == cfg.phi_arch)
                throw ConfigError("zoo.phi_arch", "feature network must stay out of the attacked zoo");
    } else {
        cfg.train.epochs = 20;
        cfg.train.seed = 11;
    }

    if (top.has("attack")) {
        Section a(top.sub("attack"), "attack");
        cfg.method = a.optional<std::string>("method", cfg.method);
        if (!kMethods.count(cfg.method)) throw ConfigError("attack.method", "unknown method '" + cfg.method + "'");
        cfg.target = a.optional<std::string>("target", cfg.target);
        if (a.has("group")) {
            const std::string g = a.require<std::string>("group");
            try {
                cfg.attack.group = layer_group_from_string(g);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("attack.group", e.what());
            }
        }
        cfg.attack.optimize_noise = a.optional<bool>("optimize_noise", cfg.attack.optimize_noise);
        cfg.attack.learning_rate = a.optional<double>("learning_rate", cfg.attack.learning_rate);
        cfg.attack.max_iters = a.optional<std::size_t>("max_iters", cfg.attack.max_iters);
        cfg.attack.hyper.lambda1 = a.optional<double>("lambda1", cfg.attack.hyper.lambda1);
        cfg.attack.hyper.lambda2 = a.optional<double>("lambda2", cfg.attack.hyper.lambda2);
        cfg.attack.hyper.lambda_id = a.optional<double>("lambda_id", cfg.attack.hyper.lambda_id);
        cfg.attack.stop_on_success = a.optional<bool>("stop_on_success", cfg.attack.stop_on_success);
        cfg.attack.success_threshold = a.optional<double>("success_threshold", cfg.attack.success_threshold);
        if (a.has("meta")) {
            Section m(a.sub("meta"), "attack.meta");
            cfg.meta_params.inner_lr = m.optional<double>("inner_lr", 0.01);
            cfg.meta_params.combos_per_iter = m.optional<std::size_t>("combos_per_iter", 1);
            m.finish();
        }
        cfg.pixel_eps = a.optional<double>("eps", cfg.pixel_eps);
        cfg.pixel_step = a.optional<double>("step", cfg.pixel_step);
        cfg.pixel_iters = a.optional<std::size_t>("iters", cfg.pixel_iters);
        cfg.inversion_iters = a.optional<std::size_t>("inversion_iters", cfg.inversion_iters);
        a.finish();
        try {
            cfg.attack.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("attack", e.what());
        }
        if (cfg.method == "meta" && cfg.meta_params.combos_per_iter < 1)
            throw ConfigError("attack.meta.combos_per_iter", "must be >= 1");
    }

    if (top.has("guidance")) {
        Section g(top.sub("guidance"), "guidance");
        if (g.has("reference_seed")) cfg.reference_seed = g.require<std::uint64_t>("reference_seed");
        if (g.has("reference_image")) {
            cfg.reference_image = g.require<std::string>("reference_image");
            require_file(cfg.reference_image, "guidance.reference_image");
        }
        if (g.has("text")) cfg.text_key = g.require<std::string>("text");
        if (g.has("prompts")) {
            cfg.prompt_file = g.require<std::string>("prompts");
            require_file(cfg.prompt_file, "guidance.prompts");
        }
        g.finish();
    }

    if (top.has("seeds")) {
        const nlohmann::json s = top.sub("seeds");
        if (s.is_array()) {
            cfg.seeds = s.get<std::vector<std::uint64_t>>();
        } else if (s.is_object()) {
            Section ss(s, "seeds");
            const std::uint64_t start = ss.optional<std::uint64_t>("start", 0);
            const std::size_t count = ss.require<std::size_t>("count");
            ss.finish();
            for (std::size_t i = 0; i < count; ++i) cfg.seeds.push_back(start + i);
        } else {
            throw ConfigError("seeds", "expected an array or {start, count}");
        }
    } else {
        for (std::uint64_t i = 0; i < 10; ++i) cfg.seeds.push_back(i);
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds", "seed list must be non-empty");

    cfg.jobs = top.optional<std::size_t>("jobs", 1);
    cfg.out_root = top.optional<std::string>("out_root", "");
    top.optional<std::string>("_reproduce", "");  // run-directory separator for canned configs
    top.finish();

    if (cfg.method == "meta" && cfg.zoo_archs.size() < 2)
        throw ConfigError("attack.method", "meta needs a zoo of K >= 2 classifiers");

    // method-specific guidance requirements
    const bool needs_image = cfg.method == "image_guided" || cfg.method == "naive";
    const bool needs_text = cfg.method == "text_guided";
    if (needs_image && !cfg.reference_seed && cfg.reference_image.empty())
        throw ConfigError("guidance", cfg.method + " needs reference_seed or reference_image");
    if (needs_text && cfg.text_key.empty())
        throw ConfigError("guidance.text", "text_guided needs a prompt key");
    if ((cfg.method == "ensemble" || cfg.method == "meta") && cfg.text_key.empty() &&
        !cfg.reference_seed && cfg.reference_image.empty())
        throw ConfigError("guidance", cfg.method + " needs image or text guidance");

    cfg.canonical = j;
    cfg.canonical["_source"] = nullptr;  // keep the hash independent of the file path
    cfg.canonical.erase("_source");
    cfg.hash = config_hash(cfg.canonical);
    (void)source;
    return cfg;
}

RunPaths run_paths(const ExperimentConfig& cfg, const std::string& out_root_override) {
    std::string root = out_root_override;
    if (root.empty()) root = cfg.out_root;
    if (root.empty()) {
        const char* env = std::getenv(kOutRootEnv);
        root = env && *env ? env : "outputs";
    }
    RunPaths paths;
    paths.root = (fs::path(root) / cfg.hash.substr(0, 12)).string();
    paths.checkpoints = (fs::path(paths.root) / "checkpoints").string();
    paths.results = (fs::path(paths.root) / "results").string();
    paths.reports = (fs::path(paths.root) / "reports").string();
    for (const auto& p : {paths.root, paths.checkpoints, paths.results, paths.reports})
        fs::create_directories(p);
    return paths;
}

void save_manifest(const std::string& dir, const RunManifest& manifest) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config_hash"] = manifest.config_hash;
    j["code_version"] = manifest.code_version;
    j["command"] = manifest.command;
    j["artifacts"] = manifest.artifacts;
    j["config"] = manifest.config_echo;
    save_json((fs::path(dir) / ("manifest_" + manifest.command + ".json")).string(), j);
}

std::optional<RunManifest> load_manifest(const std::string& dir, const std::string& command) {
    const fs::path path = fs::path(dir) / ("manifest_" + command + ".json");
    if (!fs::exists(path)) return std::nullopt;
    const nlohmann::json j = load_json(path.string());
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.config_echo = j.at("config");
    return m;
}

bool manifest_satisfied(const std::string& run_root, const RunManifest& manifest) {
    for (const auto& rel : manifest.artifacts)
        if (!fs::exists(fs::path(run_root) / rel)) return false;
    return true;
}

}  // namespace lsa
