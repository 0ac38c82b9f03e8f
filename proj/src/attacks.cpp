#include "lsa/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "lsa/optim.hpp"
#include "lsa/png_io.hpp"
#include "lsa/rng.hpp"
#include "lsa/serialize.hpp"

namespace lsa {

void AttackConfig::validate() const {
    if (max_iters < 1) throw std::invalid_argument("attack: max_iters must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("attack: learning_rate must be > 0");
    if (hyper.lambda1 < 0.0 || hyper.lambda2 < 0.0 || hyper.lambda_id < 0.0)
        throw std::invalid_argument("attack: loss weights must be >= 0");
    if (success_threshold < 0.0 || success_threshold > 1.0)
        throw std::invalid_argument("attack: success_threshold must be in [0,1]");
}

Guidance Guidance::image(const Tensor& ref, const FeatureExtractor& phi) {
    Guidance g;
    g.reference = ref;
    g.phi = &phi;
    return g;
}

Guidance Guidance::text(const std::string& prompt, const JointEmbedder& emb,
                        const FeatureExtractor* id_embedder) {
    if (prompt.empty()) throw std::invalid_argument("attack: empty text prompt");
    Guidance g;
    g.prompt = prompt;
    g.embedder = &emb;
    g.id_embedder = id_embedder;
    return g;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> pool_ids(const std::vector<const Classifier*>& pool) {
    std::vector<std::string> ids;
    ids.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        std::string id = pool[i]->arch_id();
        std::size_t dup = 0;
        for (std::size_t j = 0; j < i; ++j)
            if (pool[j]->arch_id() == id) ++dup;
        if (dup) id += "#" + std::to_string(dup);
        ids.push_back(std::move(id));
    }
    return ids;
}

void mask_rows_outside(Tensor& grad, const LayerRows& rows) {
    if (grad.size() == 0 || grad.rank() != 2) return;
    const std::size_t cols = grad.shape[1];
    for (std::size_t r = 0; r < grad.shape[0]; ++r)
        if (!rows.contains(r + 1))
            for (std::size_t c = 0; c < cols; ++c) grad.data[r * cols + c] = 0.0;
}

struct PreparedGuidance {
    Tensor ref_features;   // image mode
    Tensor text_embedding; // text mode
    Tensor id_target;      // unit id-embedding of the initial image
    bool has_id = false;
};

PreparedGuidance prepare_guidance(const Guidance& guidance, const AttackConfig& cfg,
                                  const Tensor& initial_image) {
    PreparedGuidance out;
    if (guidance.is_text()) {
        out.text_embedding = guidance.embedder->embed_text(guidance.prompt);
        if (cfg.hyper.lambda_id > 0.0) {
            if (!guidance.id_embedder)
                throw std::invalid_argument("attack: lambda_id > 0 requires an identity embedder");
            Tape tape;
            out.id_target =
                tape.value(tape.l2_normalize(guidance.id_embedder->embed(tape, tape.constant(initial_image))));
            out.has_id = true;
        }
    } else {
        if (!guidance.reference || !guidance.phi)
            throw std::invalid_argument("attack: image guidance needs a reference and a feature extractor");
        out.ref_features = guidance.phi->embed_value(*guidance.reference);
    }
    return out;
}

// Builds the iteration graph at (w, noise), returning the composite objective
// plus the per-term breakdown and the pool probabilities.
struct IterationGraph {
    Var total;
    std::vector<std::pair<std::string, double>> term_values;
    std::vector<double> probs;
};

IterationGraph build_objective(Tape& tape, const Generator& gen, Var wv, const std::vector<Var>& etav,
                               const std::vector<const Classifier*>& pool, const Guidance& guidance,
                               const PreparedGuidance& prep, const AttackConfig& cfg,
                               const Tensor& anchor_rows) {
    IterationGraph out;
    Var img = gen.synthesize(tape, wv, etav);

    std::vector<Var> prob_vars;
    prob_vars.reserve(pool.size());
    for (const Classifier* clf : pool) {
        Var p = real_prob(tape, *clf, img);
        prob_vars.push_back(p);
        out.probs.push_back(tape.scalar(p));
    }

    Var guide = guidance.is_text()
                    ? clip_distance_to(tape, img, prep.text_embedding, *guidance.embedder)
                    : perceptual_loss_to(tape, img, prep.ref_features, *guidance.phi);
    Var reg = tape.sum_sq(tape.sub(wv, tape.constant(anchor_rows)));
    Var bce = bce_real_from_prob(tape, prob_vars[0]);
    for (std::size_t i = 1; i < prob_vars.size(); ++i)
        bce = tape.add(bce, bce_real_from_prob(tape, prob_vars[i]));
    bce = tape.scale(bce, 1.0 / static_cast<double>(prob_vars.size()));

    std::vector<WeightedTerm> terms;
    const char* guide_name = guidance.is_text() ? "clip" : "perceptual";
    terms.push_back({guide_name, 1.0, [guide](Tape&) { return guide; }});
    terms.push_back({"latent_reg", cfg.hyper.lambda1, [reg](Tape&) { return reg; }});
    terms.push_back({"adv_bce", cfg.hyper.lambda2, [bce](Tape&) { return bce; }});
    out.term_values = {{guide_name, tape.scalar(guide)},
                       {"latent_reg", tape.scalar(reg)},
                       {"adv_bce", tape.scalar(bce)}};
    if (prep.has_id && cfg.hyper.lambda_id > 0.0) {
        Var idt = identity_loss_to(tape, img, prep.id_target, *guidance.id_embedder);
        terms.push_back({"identity", cfg.hyper.lambda_id, [idt](Tape&) { return idt; }});
        out.term_values.push_back({"identity", tape.scalar(idt)});
    }
    out.total = composite_objective(tape, terms);
    return out;
}

AttackResult finish_result(const Generator& gen, LatentCode latent, NoiseStack noise,
                           const std::vector<const Classifier*>& pool,
                           const std::vector<std::string>& ids, const AttackConfig& cfg,
                           std::vector<LossTraceEntry> trace, std::size_t iterations,
                           Clock::time_point t0) {
    AttackResult result;
    result.image = gen.synthesize(latent, noise);
    result.final_latent = std::move(latent);
    result.final_noise = std::move(noise);
    result.loss_trace = std::move(trace);
    result.iterations_used = iterations;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double p = pool[i]->predict_real_prob(preprocess(result.image, *pool[i]));
        result.success_per_classifier[ids[i]] = p > cfg.success_threshold;
    }
    result.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return result;
}

AttackResult run_latent_attack(const Generator& gen, const std::vector<const Classifier*>& pool,
                               const Guidance& guidance, const AttackConfig& cfg,
                               const MetaConfig* meta) {
    cfg.validate();
    if (pool.empty()) throw std::invalid_argument("attack: classifier pool is empty");
    const auto t0 = Clock::now();

    LatentCode start;
    NoiseStack noise0;
    if (guidance.is_text()) {
        std::tie(start, noise0) = init_best_latent(gen, guidance.prompt, *guidance.embedder, 50, cfg.seed);
    } else {
        std::tie(start, noise0) = gen.sample_initial(cfg.seed);
    }
    const PreparedGuidance prep = prepare_guidance(guidance, cfg, gen.synthesize(start, noise0));
    const LayerRows rows = layer_rows(cfg.group, gen.layer_count());
    const std::vector<std::string> ids = pool_ids(pool);
    const bool stop_enabled = cfg.stop_on_success && pool.size() == 1 && meta == nullptr;

    Tensor w = start.rows;
    std::vector<Tensor> noise = noise0.tensors;
    Adam opt_w(cfg.learning_rate);
    Adam opt_noise(cfg.learning_rate);
    Rng combo_rng(Rng::mix(cfg.seed, 0x6d657461ULL));
    std::vector<LossTraceEntry> trace;
    std::size_t iterations = 0;

    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        if (meta == nullptr) {
            Tape tape;
            Var wv = tape.variable(w);
            std::vector<Var> etav;
            etav.reserve(noise.size());
            for (auto& n : noise)
                etav.push_back(cfg.optimize_noise ? tape.variable(n) : tape.constant(n));

            IterationGraph graph = build_objective(tape, gen, wv, etav, pool, guidance, prep, cfg, start.rows);
            if (stop_enabled && graph.probs[0] > cfg.success_threshold) break;

            tape.backward(graph.total);
            Tensor gw = tape.grad(wv);
            if (gw.size() == 0) gw = Tensor(w.shape, 0.0);
            mask_rows_outside(gw, rows);
            opt_w.step({&w}, {&gw});
            if (cfg.optimize_noise) {
                std::vector<Tensor*> nps;
                std::vector<const Tensor*> ngs;
                for (std::size_t l = 0; l < noise.size(); ++l) {
                    nps.push_back(&noise[l]);
                    ngs.push_back(&tape.grad(etav[l]));
                }
                opt_noise.step(nps, ngs);
            }
            trace.push_back({tape.scalar(graph.total), graph.term_values});
        } else {
            // meta iteration: averaged first-order train+test gradients
            const std::size_t k = pool.size();
            Tensor g_total(w.shape, 0.0);
            std::vector<Tensor> g_noise_total;
            if (cfg.optimize_noise)
                for (const auto& n : noise) g_noise_total.emplace_back(n.shape, 0.0);
            double combo_loss = 0.0;
            std::vector<std::pair<std::string, double>> term_values;

            for (std::size_t combo = 0; combo < meta->combos_per_iter; ++combo) {
                const std::size_t test_idx = combo_rng.uniform_index(k);
                std::vector<const Classifier*> train_pool;
                for (std::size_t i = 0; i < k; ++i)
                    if (i != test_idx) train_pool.push_back(pool[i]);

                // train loss at w
                Tape tape;
                Var wv = tape.variable(w);
                std::vector<Var> etav;
                for (auto& n : noise)
                    etav.push_back(cfg.optimize_noise ? tape.variable(n) : tape.constant(n));
                IterationGraph train_graph =
                    build_objective(tape, gen, wv, etav, train_pool, guidance, prep, cfg, start.rows);
                tape.backward(train_graph.total);
                Tensor g_train = tape.grad(wv);
                if (g_train.size() == 0) g_train = Tensor(w.shape, 0.0);
                mask_rows_outside(g_train, rows);

                // provisional step, masked like the real update
                Tensor w_step = w;
                for (std::size_t i = 0; i < w_step.size(); ++i) w_step[i] -= meta->inner_lr * g_train[i];
                std::vector<Tensor> noise_step = noise;
                if (cfg.optimize_noise) {
                    for (std::size_t l = 0; l < noise.size(); ++l) {
                        const Tensor& gn = tape.grad(etav[l]);
                        if (gn.size())
                            for (std::size_t i = 0; i < noise_step[l].size(); ++i)
                                noise_step[l][i] -= meta->inner_lr * gn[i];
                    }
                }

                // test loss at the stepped point, adversarial term only
                Tape test_tape;
                Var wv2 = test_tape.variable(w_step);
                std::vector<Var> etav2;
                for (auto& n : noise_step)
                    etav2.push_back(cfg.optimize_noise ? test_tape.variable(n) : test_tape.constant(n));
                Var test_img = gen.synthesize(test_tape, wv2, etav2);
                Var test_bce = bce_real_from_prob(test_tape, real_prob(test_tape, *pool[test_idx], test_img));
                Var test_loss = test_tape.scale(test_bce, cfg.hyper.lambda2);
                test_tape.backward(test_loss);
                Tensor g_test = test_tape.grad(wv2);
                if (g_test.size() == 0) g_test = Tensor(w.shape, 0.0);
                mask_rows_outside(g_test, rows);

                for (std::size_t i = 0; i < g_total.size(); ++i) g_total[i] += g_train[i] + g_test[i];
                if (cfg.optimize_noise) {
                    for (std::size_t l = 0; l < noise.size(); ++l) {
                        const Tensor& gn1 = tape.grad(etav[l]);
                        const Tensor& gn2 = test_tape.grad(etav2[l]);
                        for (std::size_t i = 0; i < g_noise_total[l].size(); ++i) {
                            if (gn1.size()) g_noise_total[l][i] += gn1[i];
                            if (gn2.size()) g_noise_total[l][i] += gn2[i];
                        }
                    }
                }
                combo_loss += tape.scalar(train_graph.total) + test_tape.scalar(test_loss);
                if (combo == 0) {
                    term_values = train_graph.term_values;
                    term_values.push_back({"meta_test_bce", test_tape.scalar(test_bce)});
                }
            }

            const double inv = 1.0 / static_cast<double>(meta->combos_per_iter);
            g_total *= inv;
            opt_w.step({&w}, {&g_total});
            if (cfg.optimize_noise) {
                std::vector<Tensor*> nps;
                std::vector<const Tensor*> ngs;
                for (std::size_t l = 0; l < noise.size(); ++l) {
                    g_noise_total[l] *= inv;
                    nps.push_back(&noise[l]);
                    ngs.push_back(&g_noise_total[l]);
                }
                opt_noise.step(nps, ngs);
            }
            trace.push_back({combo_loss * inv, term_values});
        }
        ++iterations;
    }

    LatentCode final_latent{std::move(w)};
    NoiseStack final_noise{std::move(noise)};
    return finish_result(gen, std::move(final_latent), std::move(final_noise), pool, ids, cfg,
                         std::move(trace), iterations, t0);
}

}  // namespace

AttackResult attack_image_guided(const Generator& gen, const Classifier& clf, const Tensor& ref,
                                 const AttackConfig& cfg, const FeatureExtractor& phi) {
    const Guidance guidance = Guidance::image(ref, phi);
    return run_latent_attack(gen, {&clf}, guidance, cfg, nullptr);
}

AttackResult attack_text_guided(const Generator& gen, const Classifier& clf, const std::string& text,
                                const AttackConfig& cfg, const JointEmbedder& emb,
                                const FeatureExtractor* id_embedder) {
    const Guidance guidance = Guidance::text(text, emb, id_embedder);
    return run_latent_attack(gen, {&clf}, guidance, cfg, nullptr);
}

std::pair<LatentCode, NoiseStack> init_best_latent(const Generator& gen, const std::string& text,
                                                   const JointEmbedder& emb, std::size_t n,
                                                   std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("init_best_latent: n must be >= 1");
    if (text.empty()) throw std::invalid_argument("init_best_latent: empty text");
    const Tensor target = emb.embed_text(text);
    double best = 0.0;
    std::pair<LatentCode, NoiseStack> pick;
    bool have = false;
    for (std::size_t i = 0; i < n; ++i) {
        auto cand = gen.sample_initial(Rng::mix(seed, 0xbe57 + i));
        Tape tape;
        const Tensor img = gen.synthesize(cand.first, cand.second);
        const double d =
            tape.scalar(clip_distance_to(tape, tape.constant(img), target, emb));
        if (!have || d < best) {
            best = d;
            pick = std::move(cand);
            have = true;
        }
    }
    return pick;
}

namespace {

Tensor signed_bce_gradient(const Tensor& img, const Classifier& clf) {
    Tape tape;
    Var xv = tape.variable(img);
    Var loss = adversarial_bce(tape, clf, xv);
    tape.backward(loss);
    Tensor g = tape.grad(xv);
    if (g.size() == 0) g = Tensor(img.shape, 0.0);
    return g;
}

}  // namespace

Tensor pgd(const Tensor& img, const Classifier& clf, double eps, double step, std::size_t iters) {
    if (eps <= 0.0) throw std::invalid_argument("pgd: eps must be > 0");
    if (step > eps) throw std::invalid_argument("pgd: step must be <= eps");
    if (img.min_value() < 0.0 || img.max_value() > 1.0)
        throw std::invalid_argument("pgd: image must lie in [0,1]");
    Tensor x = img;
    for (std::size_t it = 0; it < iters; ++it) {
        const Tensor g = signed_bce_gradient(x, clf);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
            double v = x[i] - step * s;
            v = std::max(v, std::max(0.0, img[i] - eps));
            v = std::min(v, std::min(1.0, img[i] + eps));
            x[i] = v;
        }
    }
    return x;
}

Tensor fgsm(const Tensor& img, const Classifier& clf, double eps) { return pgd(img, clf, eps, eps, 1); }

AttackResult attack_ensemble(const Generator& gen, const std::vector<const Classifier*>& pool,
                             const Guidance& guidance, const AttackConfig& cfg) {
    if (pool.empty()) throw std::invalid_argument("attack_ensemble: classifier pool is empty");
    return run_latent_attack(gen, pool, guidance, cfg, nullptr);
}

AttackResult attack_meta(const Generator& gen, const MetaConfig& meta, const Guidance& guidance,
                         const AttackConfig& cfg) {
    if (meta.pool.size() < 2) throw std::invalid_argument("attack_meta: pool must have K >= 2 classifiers");
    if (meta.combos_per_iter < 1) throw std::invalid_argument("attack_meta: combos_per_iter must be >= 1");
    if (meta.inner_lr < 0.0) throw std::invalid_argument("attack_meta: inner_lr must be >= 0");
    return run_latent_attack(gen, meta.pool, guidance, cfg, &meta);
}

AttackResult attack_image_naive(const Generator& gen, const Classifier& clf, const Tensor& ref,
                                LayerGroupKind group, const AttackConfig& cfg,
                                const FeatureExtractor& phi, std::size_t inversion_iters) {
    cfg.validate();
    const auto t0 = Clock::now();
    const Tensor ref_features = phi.embed_value(ref);
    const std::size_t npix = ref.size();

    // stage 1: optimization-based inversion of the reference
    auto [w_inv_code, eta_inv] = gen.sample_initial(Rng::mix(cfg.seed, 0x1e76));
    Tensor w_inv = w_inv_code.rows;
    {
        Adam opt(cfg.learning_rate);
        for (std::size_t it = 0; it < inversion_iters; ++it) {
            Tape tape;
            Var wv = tape.variable(w_inv);
            std::vector<Var> etav;
            for (const auto& n : eta_inv.tensors) etav.push_back(tape.constant(n));
            Var img = gen.synthesize(tape, wv, etav);
            Var perc = perceptual_loss_to(tape, img, ref_features, phi);
            Var pixel = tape.scale(tape.sum_sq(tape.sub(img, tape.constant(ref))),
                                   1.0 / static_cast<double>(npix));
            Var loss = tape.add(perc, pixel);
            tape.backward(loss);
            Tensor g = tape.grad(wv);
            if (g.size() == 0) break;
            opt.step({&w_inv}, {&g});
        }
    }

    // stage 2: splice the group rows into a fresh sampled latent
    auto [start, noise0] = gen.sample_initial(cfg.seed);
    const LayerRows rows = layer_rows(group, gen.layer_count());
    Tensor mixed = start.rows;
    const std::size_t d = gen.style_dim();
    for (std::size_t r = 0; r < gen.layer_count(); ++r)
        if (rows.contains(r + 1))
            for (std::size_t c = 0; c < d; ++c) mixed.data[r * d + c] = w_inv.data[r * d + c];

    // stage 3: adversarial optimization of the mixed latent (group rows only)
    Tensor w = mixed;
    Adam opt(cfg.learning_rate);
    std::vector<LossTraceEntry> trace;
    std::size_t iterations = 0;
    const bool stop_enabled = cfg.stop_on_success;
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        Tape tape;
        Var wv = tape.variable(w);
        std::vector<Var> etav;
        for (const auto& n : noise0.tensors) etav.push_back(tape.constant(n));
        Var img = gen.synthesize(tape, wv, etav);
        Var p = real_prob(tape, clf, img);
        if (stop_enabled && tape.scalar(p) > cfg.success_threshold) break;
        Var reg = tape.sum_sq(tape.sub(wv, tape.constant(mixed)));
        Var bce = bce_real_from_prob(tape, p);
        Var loss = tape.add(tape.scale(reg, cfg.hyper.lambda1), tape.scale(bce, cfg.hyper.lambda2));
        tape.backward(loss);
        Tensor g = tape.grad(wv);
        if (g.size() == 0) g = Tensor(w.shape, 0.0);
        mask_rows_outside(g, rows);
        opt.step({&w}, {&g});
        trace.push_back({tape.scalar(loss), {{"latent_reg", tape.scalar(reg)}, {"adv_bce", tape.scalar(bce)}}});
        ++iterations;
    }

    // non-group rows must still equal the sampled broadcast latent
    for (std::size_t r = 0; r < gen.layer_count(); ++r)
        if (!rows.contains(r + 1))
            for (std::size_t c = 0; c < d; ++c) w.data[r * d + c] = start.rows.data[r * d + c];

    return finish_result(gen, LatentCode{std::move(w)}, std::move(noise0), {&clf}, pool_ids({&clf}),
                         cfg, std::move(trace), iterations, t0);
}

void save_attack_result(const std::string& dir, const std::string& stem, const AttackResult& result,
                        const std::string& method, std::uint64_t seed, bool store_float_image) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string png_name = stem + ".png";
    png::write_file((fs::path(dir) / png_name).string(), result.image);

    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = "attack_result";
    j["method"] = method;
    j["seed"] = seed;
    j["iterations_used"] = result.iterations_used;
    j["wall_clock_seconds"] = result.wall_clock_seconds;
    j["success"] = result.success_per_classifier;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : result.loss_trace) {
        nlohmann::json terms;
        for (const auto& [name, value] : e.terms) terms[name] = value;
        trace.push_back({{"total", e.total}, {"terms", std::move(terms)}});
    }
    j["loss_trace"] = std::move(trace);
    if (store_float_image) j["image_float"] = tensor_to_json(result.image);
    j["final_latent"] = tensor_to_json(result.final_latent.rows);
    nlohmann::json noise = nlohmann::json::array();
    for (const auto& n : result.final_noise.tensors) noise.push_back(tensor_to_json(n));
    j["final_noise"] = std::move(noise);
    j["image_png"] = png_name;
    save_json((fs::path(dir) / (stem + ".json")).string(), j);
}

AttackResult load_attack_result(const std::string& dir, const std::string& stem) {
    namespace fs = std::filesystem;
    const nlohmann::json j = load_json((fs::path(dir) / (stem + ".json")).string());
    if (j.at("kind") != "attack_result")
        throw std::invalid_argument("not an attack result: " + stem);
    AttackResult result;
    result.iterations_used = j.at("iterations_used").get<std::size_t>();
    result.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    result.success_per_classifier = j.at("success").get<std::map<std::string, bool>>();
    for (const auto& e : j.at("loss_trace")) {
        LossTraceEntry entry;
        entry.total = e.at("total").get<double>();
        for (const auto& [name, value] : e.at("terms").items())
            entry.terms.emplace_back(name, value.get<double>());
        result.loss_trace.push_back(std::move(entry));
    }
    result.final_latent.rows = tensor_from_json(j.at("final_latent"));
    for (const auto& n : j.at("final_noise")) result.final_noise.tensors.push_back(tensor_from_json(n));
    if (j.contains("image_float")) {
        result.image = tensor_from_json(j.at("image_float"));
    } else {
        // 8-bit preview; re-synthesize from the latents when exact pixels matter
        result.image = png::read_file((fs::path(dir) / j.at("image_png").get<std::string>()).string());
    }
    return result;
}

}  // namespace lsa
