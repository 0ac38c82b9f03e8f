#include "lsa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include "lsa/errors.hpp"
#include "lsa/parallel.hpp"
#include "lsa/png_io.hpp"
#include "lsa/serialize.hpp"

namespace fs = std::filesystem;

namespace lsa {

namespace {

void say(bool quiet, const std::string& line) {
    if (!quiet) std::fputs((line + "\n").c_str(), stdout);
}

std::string two(double v, int prec = 2) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

struct DatasetPair {
    LabeledDataset train, holdout;
};

DatasetPair build_datasets(const ExperimentConfig& cfg, const Generator& gen) {
    DatasetPair out;
    if (!cfg.dataset_dir.empty()) {
        LabeledDataset all = load_dataset(cfg.dataset_dir);
        const std::size_t cut = all.size() - std::max<std::size_t>(1, all.size() / 5);
        for (std::size_t i = 0; i < all.size(); ++i)
            (i < cut ? out.train : out.holdout).push(all.images[i], all.labels[i]);
    } else {
        out.train = make_desk_dataset(gen, cfg.n_real, cfg.n_fake, cfg.dataset_seed);
        out.holdout = make_desk_dataset(gen, cfg.holdout_real, cfg.holdout_fake, cfg.holdout_seed);
    }
    return out;
}

Tensor reference_image_for(const ExperimentConfig& cfg, const ZooBundle& bundle, std::uint64_t seed) {
    if (!cfg.reference_image.empty()) return png::read_file(cfg.reference_image);
    // per-seed reference faces from the central parameter region
    Rng rng(Rng::mix(cfg.reference_seed.value_or(0), seed));
    return render_face(sample_face_params(rng, 0.6), bundle.gen.image_shape()[0]);
}

std::string prompt_for(const ExperimentConfig& cfg, const ZooBundle& bundle, std::uint64_t seed) {
    if (cfg.text_key != "cycle") return cfg.text_key;
    const auto keys = bundle.prompts.keys();
    return keys[seed % keys.size()];
}

}  // namespace

Tensor contact_sheet(const std::vector<Tensor>& images, std::size_t columns) {
    if (images.empty()) throw std::invalid_argument("contact_sheet: no images");
    const std::size_t h = images[0].shape[0], w = images[0].shape[1], c = images[0].shape[2];
    const std::size_t rows = (images.size() + columns - 1) / columns;
    const std::size_t pad = 2;
    Tensor sheet({rows * (h + pad) + pad, columns * (w + pad) + pad, c}, 1.0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::size_t r = i / columns, col = i % columns;
        const std::size_t y0 = pad + r * (h + pad), x0 = pad + col * (w + pad);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t ch = 0; ch < c; ++ch)
                    sheet.data[((y0 + y) * sheet.shape[1] + (x0 + x)) * c + ch] =
                        images[i].data[(y * w + x) * c + ch];
    }
    return sheet;
}

ZooBundle cmd_train_zoo(const ExperimentConfig& cfg, const RunPaths& paths, bool quiet) {
    ZooBundle bundle;
    bundle.probe = AttributeProbe::standard(cfg.generator_cfg.image_size);
    bundle.prompts = cfg.prompt_file.empty() ? PromptBook::builtin(bundle.probe)
                                             : PromptBook::load(cfg.prompt_file, bundle.probe);
    bundle.emb = attribute_embedder(bundle.probe, bundle.prompts);

    const fs::path ck(paths.checkpoints);
    const auto manifest = load_manifest(paths.root, "train-zoo");
    const bool cached = manifest && manifest->config_hash == cfg.hash &&
                        manifest_satisfied(paths.root, *manifest);

    if (!cfg.generator_checkpoint.empty()) {
        bundle.gen = Generator::load(cfg.generator_checkpoint);
    } else if (cached) {
        bundle.gen = Generator::load((ck / "generator.json").string());
    } else {
        bundle.gen = make_desk_generator(cfg.generator_cfg, cfg.generator_seed);
    }

    const DatasetPair data = build_datasets(cfg, bundle.gen);
    bundle.train = data.train;
    bundle.holdout = data.holdout;

    if (cached) {
        say(quiet, "train-zoo: outputs up to date for config " + cfg.hash.substr(0, 12) + ", skipping");
        for (const auto& arch : cfg.zoo_archs)
            bundle.zoo.push_back(Classifier::load((ck / ("clf_" + arch + ".json")).string()));
        bundle.phi_net = Classifier::load((ck / ("clf_" + cfg.phi_arch + ".json")).string());
    } else {
        std::string metrics = "classifier,holdout_accuracy\n";
        std::vector<std::string> artifacts{"checkpoints/generator.json", "checkpoints/metrics.csv"};
        bundle.gen.save((ck / "generator.json").string());
        auto train_one = [&](const std::string& arch) {
            const TrainResult r = train_classifier(cfg.train, bundle.train, arch);
            const double acc = evaluate_accuracy(r.classifier, bundle.holdout);
            say(quiet, "trained " + arch + ", holdout accuracy " + two(acc, 3));
            metrics += arch + "," + two(acc, 6) + "\n";
            r.classifier.save((ck / ("clf_" + arch + ".json")).string());
            artifacts.push_back("checkpoints/clf_" + arch + ".json");
            return r.classifier;
        };
        for (const auto& arch : cfg.zoo_archs) bundle.zoo.push_back(train_one(arch));
        bundle.phi_net = train_one(cfg.phi_arch);
        write_text((ck / "metrics.csv").string(), metrics);
        bundle.prompts.save((ck / "prompts.json").string());
        artifacts.push_back("checkpoints/prompts.json");
        save_manifest(paths.root, {cfg.hash, kCodeVersion, "train-zoo", artifacts, cfg.canonical});
    }

    bundle.phi = with_unit_rms(penultimate_features(bundle.phi_net), bundle.train.images);
    return bundle;
}

namespace {

struct RunSpec {
    std::string stem;
    const Classifier* target = nullptr;  // single-classifier methods
    std::uint64_t seed = 0;
};

AttackResult run_single(const ExperimentConfig& cfg, const ZooBundle& bundle, const RunSpec& spec) {
    AttackConfig acfg = cfg.attack;
    acfg.seed = spec.seed;

    if (cfg.method == "image_guided") {
        return attack_image_guided(bundle.gen, *spec.target, reference_image_for(cfg, bundle, spec.seed),
                                   acfg, bundle.phi);
    }
    if (cfg.method == "text_guided") {
        return attack_text_guided(bundle.gen, *spec.target, prompt_for(cfg, bundle, spec.seed), acfg,
                                  bundle.emb, &bundle.id_emb);
    }
    if (cfg.method == "naive") {
        return attack_image_naive(bundle.gen, *spec.target, reference_image_for(cfg, bundle, spec.seed),
                                  acfg.group, acfg, bundle.phi, cfg.inversion_iters);
    }
    if (cfg.method == "ensemble" || cfg.method == "meta") {
        std::vector<const Classifier*> pool;
        for (const auto& c : bundle.zoo) pool.push_back(&c);
        const Guidance guidance =
            cfg.text_key.empty()
                ? Guidance::image(reference_image_for(cfg, bundle, spec.seed), bundle.phi)
                : Guidance::text(prompt_for(cfg, bundle, spec.seed), bundle.emb, &bundle.id_emb);
        if (cfg.method == "ensemble") return attack_ensemble(bundle.gen, pool, guidance, acfg);
        MetaConfig meta = cfg.meta_params;
        meta.pool = pool;
        return attack_meta(bundle.gen, meta, guidance, acfg);
    }
    if (cfg.method == "fgsm" || cfg.method == "pgd") {
        // pixel-space baseline on a sampled generator image
        const auto t0 = std::chrono::steady_clock::now();
        auto [w0, eta0] = bundle.gen.sample_initial(spec.seed);
        const Tensor base = bundle.gen.synthesize(w0, eta0);
        const Tensor adv = cfg.method == "fgsm"
                               ? fgsm(base, *spec.target, cfg.pixel_eps)
                               : pgd(base, *spec.target, cfg.pixel_eps, cfg.pixel_step, cfg.pixel_iters);
        AttackResult r;
        r.final_latent = std::move(w0);
        r.final_noise = std::move(eta0);
        r.image = adv;
        r.iterations_used = cfg.method == "fgsm" ? 1 : cfg.pixel_iters;
        const double p = spec.target->predict_real_prob(preprocess(adv, *spec.target));
        r.success_per_classifier[spec.target->arch_id()] = p > cfg.attack.success_threshold;
        r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }
    throw ConfigError("attack.method", "unknown method '" + cfg.method + "'");
}

}  // namespace

std::string cmd_attack(const ExperimentConfig& cfg, const RunPaths& paths, bool quiet) {
    const auto manifest = load_manifest(paths.root, "attack");
    if (manifest && manifest->config_hash == cfg.hash && manifest_satisfied(paths.root, *manifest)) {
        say(quiet, "attack: outputs up to date for config " + cfg.hash.substr(0, 12) + ", skipping");
        return paths.results;
    }

    const ZooBundle bundle = cmd_train_zoo(cfg, paths, quiet);

    // expand (target, seed) runs
    std::vector<RunSpec> specs;
    const bool pooled = cfg.method == "ensemble" || cfg.method == "meta";
    std::vector<const Classifier*> targets;
    if (pooled) {
        targets.push_back(nullptr);
    } else if (cfg.target == "all") {
        for (const auto& c : bundle.zoo) targets.push_back(&c);
    } else {
        const Classifier* pick = nullptr;
        for (const auto& c : bundle.zoo)
            if (c.arch_id() == cfg.target) pick = &c;
        if (!pick) throw ConfigError("attack.target", "classifier '" + cfg.target + "' is not in the zoo");
        targets.push_back(pick);
    }
    for (const Classifier* t : targets)
        for (std::uint64_t seed : cfg.seeds) {
            char stem[128];
            std::snprintf(stem, sizeof(stem), "%s_%s_seed%04llu", cfg.method.c_str(),
                          t ? t->arch_id().c_str() : "pool", static_cast<unsigned long long>(seed));
            specs.push_back({stem, t, seed});
        }

    const bool pixel = cfg.method == "fgsm" || cfg.method == "pgd";
    std::mutex io_mutex;
    parallel_for(specs.size(), cfg.jobs, [&](std::size_t i) {
        const AttackResult r = run_single(cfg, bundle, specs[i]);
        std::lock_guard<std::mutex> lock(io_mutex);  // single writer per run directory
        save_attack_result(paths.results, specs[i].stem, r, cfg.method, specs[i].seed, pixel);
    });

    std::vector<std::string> artifacts;
    for (const auto& s : specs) {
        artifacts.push_back("results/" + s.stem + ".png");
        artifacts.push_back("results/" + s.stem + ".json");
    }
    save_manifest(paths.root, {cfg.hash, kCodeVersion, "attack", artifacts, cfg.canonical});
    say(quiet, "attack: wrote " + std::to_string(specs.size()) + " runs to " + paths.results);
    return paths.results;
}

CampaignReport cmd_evaluate(const std::string& results_dir, const std::string& checkpoints_dir,
                            const std::string& reports_dir, bool quiet) {
    if (!fs::exists(results_dir)) throw std::invalid_argument("evaluate: no results at " + results_dir);

    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(results_dir))
        if (e.path().extension() == ".json") stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw std::invalid_argument("evaluate: results directory is empty");

    const Generator gen = Generator::load((fs::path(checkpoints_dir) / "generator.json").string());

    std::vector<AttackResult> results;
    std::vector<Tensor> float_images;
    for (const auto& stem : stems) {
        AttackResult r = load_attack_result(results_dir, stem);
        // latent attacks: recover the exact float image from the latents
        const nlohmann::json sidecar = load_json((fs::path(results_dir) / (stem + ".json")).string());
        if (!sidecar.contains("image_float"))
            r.image = gen.synthesize(r.final_latent, r.final_noise);
        float_images.push_back(r.image);
        results.push_back(std::move(r));
    }

    CampaignReport report;
    std::map<std::string, std::vector<AttackResult>> by_classifier;
    for (const auto& r : results)
        for (const auto& [id, flag] : r.success_per_classifier) by_classifier[id].push_back(r);
    for (const auto& [id, subset] : by_classifier)
        report.per_classifier_asr[id] = attack_success_rate(subset, id);

    // Frechet distance against a fresh renderer set through the stored
    // feature network; the attack manifest's config echo pins the seeds.
    std::uint64_t real_seed = 0xf1d0;
    std::string phi_arch = "fc_feat";
    std::size_t image_size = gen.image_shape()[0];
    nlohmann::json config_echo;
    if (const auto manifest = load_manifest(fs::path(results_dir).parent_path().string(), "attack")) {
        config_echo = manifest->config_echo;
        report.config_echo = manifest->config_hash;
        if (config_echo.contains("dataset") && config_echo["dataset"].contains("holdout_seed"))
            real_seed = Rng::mix(config_echo["dataset"]["holdout_seed"].get<std::uint64_t>(), 0xf1d);
        if (config_echo.contains("zoo") && config_echo["zoo"].contains("phi_arch"))
            phi_arch = config_echo["zoo"]["phi_arch"].get<std::string>();
    }
    const fs::path phi_path = fs::path(checkpoints_dir) / ("clf_" + phi_arch + ".json");
    if (fs::exists(phi_path)) {
        const Classifier phi_net = Classifier::load(phi_path.string());
        const FeatureExtractor phi_raw = penultimate_features(phi_net);
        Rng rng(real_seed);
        std::vector<Tensor> real_set;
        const std::size_t n_real = std::max<std::size_t>(64, float_images.size());
        for (std::size_t i = 0; i < n_real; ++i)
            real_set.push_back(render_face(sample_face_params(rng), image_size));
        report.fid_value = fid(float_images, real_set, phi_raw);
    }

    report.timings = timing_comparison(results, results);

    fs::create_directories(reports_dir);
    std::string csv = to_csv(report);
    csv += "timing,mean_seconds," + two(report.timings.mean_a, 6) + "\n";
    csv += "timing,median_seconds," + two(report.timings.median_a, 6) + "\n";
    write_text((fs::path(reports_dir) / "campaign.csv").string(), csv);

    const std::size_t sheet_n = std::min<std::size_t>(16, float_images.size());
    png::write_file((fs::path(reports_dir) / "contact_sheet.png").string(),
                    contact_sheet({float_images.begin(), float_images.begin() + sheet_n}));

    say(quiet, "evaluate: " + std::to_string(results.size()) + " runs, reports in " + reports_dir);
    return report;
}

namespace {

// Full-scale reference results from the original experiments on pretrained
// face models (a pretrained face generator, ImageNet-style detectors). Desk-scale
// numbers are not expected to match these; they are printed for orientation.
struct ReferenceRow {
    const char* method;
    double asr[5];  // ResNet-18, ResNet-50, VGG-19, DenseNet-121, ext. detector
    double fid;
};
constexpr ReferenceRow kReferenceTable1[] = {
    {"pgd", {98, 100, 100, 95, 86}, 49.54},
    {"fgsm", {100, 100, 100, 100, 95}, 38.24},
    {"latent (image)", {100, 100, 100, 100, 89}, 28.31},
    {"noise+latent (image)", {100, 100, 100, 100, 100}, 26.44},
    {"latent (text)", {100, 100, 100, 100, 91}, 34.73},
    {"noise+latent (text)", {100, 100, 100, 100, 100}, 31.92},
};
constexpr double kReferenceCleanAcc[5] = {94, 97, 96, 96, 81};
constexpr const char* kReferenceModels[5] = {"ResNet-18", "ResNet-50", "VGG-19", "DenseNet-121",
                                             "ext-detector"};
// naive 105 s vs proposed 23 s, both 100% ASR
constexpr double kReferenceNaiveSeconds = 105.0, kReferenceProposedSeconds = 23.0;
// leave-one-out ASR: ResNet-18, ResNet-50, DenseNet-121, EfficientNet, Xception
constexpr double kReferenceEnsemble[5] = {11.0, 32.0, 54.0, 46.0, 11.0};
constexpr double kReferenceMeta[5] = {12.0, 37.0, 64.0, 55.0, 14.0};

nlohmann::json reproduce_base_config(std::size_t seeds, std::size_t jobs) {
    nlohmann::json j;
    j["generator"] = {{"seed", 1}};
    j["dataset"] = {{"n_real", 240}, {"n_fake", 240}, {"seed", 7},
                    {"holdout_real", 100}, {"holdout_fake", 100}, {"holdout_seed", 8}};
    j["zoo"] = {{"archs", {"fc_small", "fc_deep", "pool_fc", "gray_fc", "fc_small16"}},
                {"phi_arch", "fc_feat"},
                {"train", {{"epochs", 20}, {"seed", 11}}}};
    j["seeds"] = {{"start", 0}, {"count", seeds}};
    j["jobs"] = jobs;
    return j;
}

void print_reference_table1() {
    std::printf("\nfull-scale reference (pretrained face models):\n");
    std::printf("  %-22s", "clean accuracy");
    for (int i = 0; i < 5; ++i) std::printf(" %s=%g%%", kReferenceModels[i], kReferenceCleanAcc[i]);
    std::printf("\n");
    for (const auto& row : kReferenceTable1) {
        std::printf("  %-22s", row.method);
        for (int i = 0; i < 5; ++i) std::printf(" %g%%", row.asr[i]);
        std::printf("  fid=%g\n", row.fid);
    }
}

}  // namespace

int cmd_reproduce(const std::string& table_id, const std::string& out_root, std::size_t seeds,
                  std::size_t jobs) {
    if (table_id != "table1" && table_id != "table2" && table_id != "table4") {
        std::fprintf(stderr, "usage: reproduce {table1|table2|table4}\n");
        return 2;
    }

    nlohmann::json base = reproduce_base_config(seeds, jobs);
    base["_reproduce"] = table_id;  // separates the run directories per table
    if (table_id == "table1" || table_id == "table2") {
        base["attack"] = {{"method", "image_guided"}, {"optimize_noise", true}};
        base["guidance"] = {{"reference_seed", 1000}};
    }
    if (table_id == "table4") {
        base["attack"] = {{"method", "ensemble"}, {"max_iters", 100}, {"optimize_noise", true},
                          {"learning_rate", 0.01}, {"stop_on_success", false},
                          {"lambda1", 0.001}, {"lambda2", 0.02}};
        base["guidance"] = {{"text", "cycle"}};
    }
    ExperimentConfig cfg = ExperimentConfig::from_json(base, "reproduce:" + table_id);
    if (!out_root.empty()) cfg.out_root = out_root;
    const RunPaths paths = run_paths(cfg, out_root);
    const ZooBundle bundle = cmd_train_zoo(cfg, paths, false);

    if (table_id == "table2") {
        // paired naive-inversion vs direct image-guided attack timings
        std::vector<AttackResult> naive_runs(cfg.seeds.size()), proposed_runs(cfg.seeds.size());
        const Classifier& target = bundle.zoo.front();
        parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
            AttackConfig acfg = cfg.attack;
            acfg.seed = cfg.seeds[i];
            acfg.optimize_noise = true;
            Rng rng(Rng::mix(0x5ef, cfg.seeds[i]));
            const Tensor ref = render_face(sample_face_params(rng, 0.6), 32);
            naive_runs[i] = attack_image_naive(bundle.gen, target, ref, LayerGroupKind::all, acfg,
                                               bundle.phi, cfg.inversion_iters);
            proposed_runs[i] = attack_image_guided(bundle.gen, target, ref, acfg, bundle.phi);
        });
        const TimingSummary t = timing_comparison(naive_runs, proposed_runs);
        const double naive_asr = attack_success_rate(naive_runs, target.arch_id());
        const double prop_asr = attack_success_rate(proposed_runs, target.arch_id());
        std::size_t proposed_faster = 0;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            proposed_faster += proposed_runs[i].wall_clock_seconds < naive_runs[i].wall_clock_seconds;

        std::printf("desk-scale (this run, %zu paired seeds, target %s):\n", cfg.seeds.size(),
                    target.arch_id().c_str());
        std::printf("  naive     mean %ss  median %ss  ASR %s%%\n", two(t.mean_a, 3).c_str(),
                    two(t.median_a, 3).c_str(), two(100 * naive_asr, 1).c_str());
        std::printf("  proposed  mean %ss  median %ss  ASR %s%%\n", two(t.mean_b, 3).c_str(),
                    two(t.median_b, 3).c_str(), two(100 * prop_asr, 1).c_str());
        std::printf("  speedup x%s, proposed faster in %zu/%zu pairs\n", two(t.speedup, 2).c_str(),
                    proposed_faster, cfg.seeds.size());
        std::printf("full-scale reference: naive %gs vs proposed %gs (~x%.1f), both 100%% ASR\n",
                    kReferenceNaiveSeconds, kReferenceProposedSeconds,
                    kReferenceNaiveSeconds / kReferenceProposedSeconds);

        std::string csv = "method,mean_seconds,median_seconds,asr\n";
        csv += "naive," + two(t.mean_a, 6) + "," + two(t.median_a, 6) + "," + two(naive_asr, 6) + "\n";
        csv += "proposed," + two(t.mean_b, 6) + "," + two(t.median_b, 6) + "," + two(prop_asr, 6) + "\n";
        write_text((fs::path(paths.reports) / "table2.csv").string(), csv);
        return 0;
    }

    if (table_id == "table4") {
        std::vector<const Classifier*> pool;
        for (const auto& c : bundle.zoo) pool.push_back(&c);
        const auto keys = bundle.prompts.keys();

        auto shared_cfg = [&](std::uint64_t seed) {
            AttackConfig acfg = cfg.attack;
            acfg.seed = seed;
            return acfg;
        };
        MethodRunner ens{"ensemble",
                         [&](const std::vector<const Classifier*>& ap, std::uint64_t s) {
                             const Guidance g = Guidance::text(keys[s % keys.size()], bundle.emb);
                             return attack_ensemble(bundle.gen, ap, g, shared_cfg(s));
                         }};
        MethodRunner met{"meta", [&](const std::vector<const Classifier*>& ap, std::uint64_t s) {
                             const Guidance g = Guidance::text(keys[s % keys.size()], bundle.emb);
                             MetaConfig meta = cfg.meta_params;
                             meta.pool = ap;
                             return attack_meta(bundle.gen, meta, g, shared_cfg(s));
                         }};
        const TransferTable table =
            leave_one_out_transfer(pool, {ens, met}, cfg.seeds.size(), cfg.attack.success_threshold, jobs);

        std::printf("desk-scale leave-one-out ASR%% (%zu seeds per held-out model):\n%s",
                    cfg.seeds.size(), to_csv(table).c_str());
        std::size_t meta_wins = 0;
        for (const auto& [clf, easr] : table.rows.at("ensemble"))
            meta_wins += table.rows.at("meta").at(clf) >= easr;
        std::printf("meta >= ensemble on %zu/%zu held-out classifiers\n", meta_wins,
                    table.rows.at("ensemble").size());
        std::printf("full-scale reference:  ensemble ");
        for (double v : kReferenceEnsemble) std::printf("%g ", v);
        std::printf(" vs meta ");
        for (double v : kReferenceMeta) std::printf("%g ", v);
        std::printf(" (models: ResNet-18, ResNet-50, DenseNet-121, EfficientNet, Xception)\n");

        write_text((fs::path(paths.reports) / "table4.csv").string(), to_csv(table));
        return 0;
    }

    // table1: pixel baselines + the four latent attack variants
    struct DeskMethod {
        std::string label;
        nlohmann::json overrides;
    };
    const std::vector<DeskMethod> methods = {
        {"pgd", {{"method", "pgd"}}},
        {"fgsm", {{"method", "fgsm"}}},
        {"latent (image)", {{"method", "image_guided"}, {"optimize_noise", false}}},
        {"noise+latent (image)", {{"method", "image_guided"}, {"optimize_noise", true}}},
        {"latent (text)",
         {{"method", "text_guided"}, {"optimize_noise", false}, {"stop_on_success", false},
          {"lambda1", 0.001}, {"lambda2", 0.02}}},
        {"noise+latent (text)",
         {{"method", "text_guided"}, {"optimize_noise", true}, {"stop_on_success", false},
          {"lambda1", 0.001}, {"lambda2", 0.02}}},
    };

    std::string csv = "method";
    for (const auto& c : bundle.zoo) csv += "," + c.arch_id();
    csv += ",fid\n";
    std::printf("desk-scale ASR%% / FID (%zu seeds per classifier):\n", cfg.seeds.size());
    std::printf("  clean accuracy:");
    for (const auto& c : bundle.zoo)
        std::printf(" %s=%s%%", c.arch_id().c_str(), two(100 * evaluate_accuracy(c, bundle.holdout), 1).c_str());
    std::printf("\n");

    Rng fid_rng(Rng::mix(cfg.holdout_seed, 0xf1d));
    std::vector<Tensor> real_set;
    for (std::size_t i = 0; i < 100; ++i) real_set.push_back(render_face(sample_face_params(fid_rng), 32));
    const FeatureExtractor phi_raw = penultimate_features(bundle.phi_net);

    for (const auto& method : methods) {
        nlohmann::json mj = base;
        mj["attack"] = method.overrides;
        mj["guidance"] = method.overrides.at("method") == "text_guided"
                             ? nlohmann::json{{"text", "cycle"}}
                             : nlohmann::json{{"reference_seed", 1000}};
        const ExperimentConfig mcfg = ExperimentConfig::from_json(mj, "reproduce:table1");

        std::vector<Tensor> images;
        std::string row = method.label;
        std::printf("  %-22s", method.label.c_str());
        for (const auto& clf : bundle.zoo) {
            std::vector<AttackResult> runs(cfg.seeds.size());
            parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
                RunSpec spec{"", &clf, cfg.seeds[i]};
                runs[i] = run_single(mcfg, bundle, spec);
            });
            const double asr = attack_success_rate(runs, clf.arch_id());
            row += "," + two(100 * asr, 2);
            std::printf(" %s%%", two(100 * asr, 1).c_str());
            for (auto& r : runs) images.push_back(std::move(r.image));
        }
        const double fid_value = fid(images, real_set, phi_raw);
        row += "," + two(fid_value, 4) + "\n";
        csv += row;
        std::printf("  fid=%s\n", two(fid_value, 2).c_str());
    }
    print_reference_table1();
    write_text((fs::path(paths.reports) / "table1.csv").string(), csv);
    return 0;
}

}  // namespace lsa
