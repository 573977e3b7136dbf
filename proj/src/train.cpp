#include "scl/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "scl/error.hpp"

namespace scl {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_fixed(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string fmt_general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void check_known_keys(const json& j, std::initializer_list<const char*> allowed,
                      const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            throw ParseError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void assign_if(const json& j, const char* key, T& target, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        target = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError("config: bad value for '" + std::string(key) + "' in " + where + ": " +
                         e.what());
    }
}

}  // namespace

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> order = {Variant::SsclSpec, Variant::Sscl, Variant::SclSpec,
                                               Variant::Scl,      Variant::SclLow, Variant::Supervised};
    return order;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::SsclSpec: return "sscl-spec";
        case Variant::Sscl: return "sscl";
        case Variant::SclSpec: return "scl-spec";
        case Variant::Scl: return "scl";
        case Variant::SclLow: return "scl-low";
        case Variant::Supervised: return "supervised";
    }
    throw UnknownLabel("variant_name: invalid variant value");
}

Variant variant_from_string(const std::string& name) {
    for (Variant v : all_variants())
        if (variant_name(v) == name) return v;
    throw UnknownLabel("unknown variant '" + name + "'");
}

bool variant_weighted_loss(Variant v) { return v == Variant::SsclSpec || v == Variant::Sscl; }
bool variant_spectral_mask(Variant v) { return v == Variant::SsclSpec || v == Variant::SclSpec; }
bool variant_lower_only(Variant v) { return v == Variant::SclLow; }
bool variant_supervised(Variant v) { return v == Variant::Supervised; }

ExperimentConfig default_config() { return ExperimentConfig{}; }

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["grid"]["rows"] = cfg.grid.rows;
    j["grid"]["cols"] = cfg.grid.cols;
    json holes = json::array();
    for (const auto& h : cfg.grid.holes)
        holes.push_back({{"row", h.row}, {"col", h.col}, {"height", h.height}, {"width", h.width}});
    j["grid"]["holes"] = std::move(holes);

    j["data"]["train"] = cfg.n_train;
    j["data"]["val"] = cfg.n_val;
    j["data"]["test"] = cfg.n_test;
    j["data"]["splits"] = cfg.num_splits;

    j["encoder"]["layers"] = cfg.encoder.layers;
    j["encoder"]["channels"] = cfg.encoder.channels;
    j["encoder"]["l1_order"] = cfg.encoder.l1_order;
    j["encoder"]["l2_order"] = cfg.encoder.l2_order;
    j["encoder"]["embed_dim"] = cfg.encoder.embed_dim;

    j["augment"]["budget_fraction"] = cfg.augment.budget_fraction;
    j["augment"]["sign_grad"] = cfg.augment.objective.sign_grad;
    j["augment"]["sign_curl"] = cfg.augment.objective.sign_curl;
    j["augment"]["sign_harm"] = cfg.augment.objective.sign_harm;
    j["augment"]["alpha_curl"] = cfg.augment.objective.alpha_curl;
    j["augment"]["alpha_harm"] = cfg.augment.objective.alpha_harm;
    j["augment"]["pgd_step"] = cfg.augment.pgd_step;
    j["augment"]["pgd_iterations"] = cfg.augment.pgd_iterations;

    j["loss"]["temperature"] = cfg.temperature;
    j["loss"]["gamma_harm"] = cfg.gammas.harm;
    j["loss"]["gamma_grad"] = cfg.gammas.grad;
    j["loss"]["gamma_curl"] = cfg.gammas.curl;
    j["loss"]["include_positive"] = cfg.include_positive;

    j["optimizer"]["learning_rate"] = cfg.learning_rate;
    j["optimizer"]["weight_decay"] = cfg.weight_decay;
    j["optimizer"]["epochs"] = cfg.epochs;
    j["optimizer"]["batch_size"] = cfg.batch_size;
    j["optimizer"]["eval_every"] = cfg.eval_every;

    j["svm"]["c_grid"] = cfg.svm_c_grid;
    j["svm"]["epochs"] = cfg.svm_epochs;
    j["svm"]["cv_folds"] = cfg.cv_folds;

    j["master_seed"] = cfg.master_seed;
    return j.dump(2);
}

void validate_config(const ExperimentConfig& cfg) {
    auto in_unit_band = [](double v) { return v >= 1e-5 && v <= 1.0; };
    if (!in_unit_band(cfg.learning_rate))
        throw ParseError("config: learning_rate must lie in [1e-5, 1]");
    if (!in_unit_band(cfg.weight_decay))
        throw ParseError("config: weight_decay must lie in [1e-5, 1]");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw ParseError("config: epochs and batch_size must be positive");
    if (cfg.eval_every <= 0) throw ParseError("config: eval_every must be positive");
    if (cfg.temperature <= 0) throw ParseError("config: temperature must be positive");
    if (cfg.num_splits <= 0) throw ParseError("config: splits must be positive");
}

ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config JSON: ") + e.what());
    }
    ExperimentConfig cfg = base;
    check_known_keys(j, {"grid", "data", "encoder", "augment", "loss", "optimizer", "svm",
                         "master_seed"},
                     "top level");

    if (j.contains("grid")) {
        const json& g = j["grid"];
        check_known_keys(g, {"rows", "cols", "holes"}, "grid");
        assign_if(g, "rows", cfg.grid.rows, "grid");
        assign_if(g, "cols", cfg.grid.cols, "grid");
        if (g.contains("holes")) {
            cfg.grid.holes.clear();
            for (const auto& jh : g.at("holes")) {
                check_known_keys(jh, {"row", "col", "height", "width"}, "grid.holes");
                HoleRect h;
                assign_if(jh, "row", h.row, "grid.holes");
                assign_if(jh, "col", h.col, "grid.holes");
                assign_if(jh, "height", h.height, "grid.holes");
                assign_if(jh, "width", h.width, "grid.holes");
                cfg.grid.holes.push_back(h);
            }
        }
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        check_known_keys(d, {"train", "val", "test", "splits"}, "data");
        assign_if(d, "train", cfg.n_train, "data");
        assign_if(d, "val", cfg.n_val, "data");
        assign_if(d, "test", cfg.n_test, "data");
        assign_if(d, "splits", cfg.num_splits, "data");
    }
    if (j.contains("encoder")) {
        const json& e = j["encoder"];
        check_known_keys(e, {"layers", "channels", "l1_order", "l2_order", "embed_dim"}, "encoder");
        assign_if(e, "layers", cfg.encoder.layers, "encoder");
        assign_if(e, "channels", cfg.encoder.channels, "encoder");
        assign_if(e, "l1_order", cfg.encoder.l1_order, "encoder");
        assign_if(e, "l2_order", cfg.encoder.l2_order, "encoder");
        assign_if(e, "embed_dim", cfg.encoder.embed_dim, "encoder");
    }
    if (j.contains("augment")) {
        const json& a = j["augment"];
        check_known_keys(a, {"budget_fraction", "sign_grad", "sign_curl", "sign_harm", "alpha_curl",
                             "alpha_harm", "pgd_step", "pgd_iterations"},
                         "augment");
        assign_if(a, "budget_fraction", cfg.augment.budget_fraction, "augment");
        assign_if(a, "sign_grad", cfg.augment.objective.sign_grad, "augment");
        assign_if(a, "sign_curl", cfg.augment.objective.sign_curl, "augment");
        assign_if(a, "sign_harm", cfg.augment.objective.sign_harm, "augment");
        assign_if(a, "alpha_curl", cfg.augment.objective.alpha_curl, "augment");
        assign_if(a, "alpha_harm", cfg.augment.objective.alpha_harm, "augment");
        assign_if(a, "pgd_step", cfg.augment.pgd_step, "augment");
        assign_if(a, "pgd_iterations", cfg.augment.pgd_iterations, "augment");
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        check_known_keys(l, {"temperature", "gamma_harm", "gamma_grad", "gamma_curl",
                             "include_positive"},
                         "loss");
        assign_if(l, "temperature", cfg.temperature, "loss");
        assign_if(l, "gamma_harm", cfg.gammas.harm, "loss");
        assign_if(l, "gamma_grad", cfg.gammas.grad, "loss");
        assign_if(l, "gamma_curl", cfg.gammas.curl, "loss");
        assign_if(l, "include_positive", cfg.include_positive, "loss");
    }
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        check_known_keys(o, {"learning_rate", "weight_decay", "epochs", "batch_size", "eval_every"},
                         "optimizer");
        assign_if(o, "learning_rate", cfg.learning_rate, "optimizer");
        assign_if(o, "weight_decay", cfg.weight_decay, "optimizer");
        assign_if(o, "epochs", cfg.epochs, "optimizer");
        assign_if(o, "batch_size", cfg.batch_size, "optimizer");
        assign_if(o, "eval_every", cfg.eval_every, "optimizer");
    }
    if (j.contains("svm")) {
        const json& s = j["svm"];
        check_known_keys(s, {"c_grid", "epochs", "cv_folds"}, "svm");
        assign_if(s, "c_grid", cfg.svm_c_grid, "svm");
        assign_if(s, "epochs", cfg.svm_epochs, "svm");
        assign_if(s, "cv_folds", cfg.cv_folds, "svm");
    }
    assign_if(j, "master_seed", cfg.master_seed, "top level");
    validate_config(cfg);
    return cfg;
}

std::string config_digest(const ExperimentConfig& cfg) {
    const std::string dump = config_to_json(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int worker_count() {
    if (const char* env = std::getenv("SCL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

MapContext build_map_context(const TriangularGridSpec& spec) {
    MapContext ctx;
    ctx.map = build_two_hole_map(spec);
    ctx.laps = hodge_laplacians(incidence_matrices(ctx.map.complex));
    ctx.basis = hodge_basis(ctx.laps);
    return ctx;
}

Rng split_rng(const ExperimentConfig& cfg, int split_id) {
    return Rng(cfg.master_seed).derive("split-" + std::to_string(split_id));
}

SplitData make_split(const MapContext& ctx, const ExperimentConfig& cfg, int split_id) {
    SplitData data;
    data.split_id = split_id;
    Rng data_rng = split_rng(cfg, split_id).derive("data");
    data.flows = generate_dataset(ctx.map, cfg.n_train, cfg.n_val, cfg.n_test, data_rng);
    data.raw.reserve(data.flows.size());
    for (const auto& f : data.flows) data.raw.push_back(f.flow);
    data.train_idx = indices_of_split(data.flows, Split::Train);
    data.val_idx = indices_of_split(data.flows, Split::Val);
    data.test_idx = indices_of_split(data.flows, Split::Test);
    return data;
}

Vec uniform_mask_probabilities(int num_edges, double budget) {
    if (num_edges <= 0) throw DimensionMismatch("uniform_mask_probabilities: no edges");
    if (!(budget > 0.0) || budget > static_cast<double>(num_edges))
        throw IndexOutOfRange("uniform_mask_probabilities: budget outside (0, num_edges]");
    return Vec::Constant(num_edges, budget / static_cast<double>(num_edges));
}

std::vector<Vec> spectral_mask_table(const MapContext& ctx, const std::vector<EdgeFlow>& raw,
                                     const std::vector<int>& pool, const AugmentSettings& settings,
                                     double budget) {
    std::vector<Vec> table;
    table.reserve(pool.size());
    for (int idx : pool) {
        if (idx < 0 || idx >= static_cast<int>(raw.size()))
            throw IndexOutOfRange("spectral_mask_table: pool index " + std::to_string(idx));
        OptimizeResult res =
            optimize_probabilities(raw[static_cast<std::size_t>(idx)], ctx.basis, settings.objective,
                                   budget, settings.pgd_step, settings.pgd_iterations);
        table.push_back(std::move(res.probs.p));
    }
    return table;
}

namespace {

std::vector<Vec> embed_flows(const ScnnParameters& params, const MapContext& ctx,
                             const std::vector<EdgeFlow>& raw, const std::vector<int>& idx) {
    std::vector<Vec> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(scnn_encode(params, ctx.laps.l1_low, ctx.laps.l1_up,
                                                raw[static_cast<std::size_t>(i)]));
    return out;
}

std::vector<int> labels_of(const std::vector<LabeledFlow>& flows, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(flows[static_cast<std::size_t>(i)].label);
    return out;
}

// Best validation accuracy over the penalty grid for an SVM fitted on the
// training embeddings; used both for checkpoint selection and final
// evaluation. Models are returned so evaluation can reuse the winner.
struct PenaltySelection {
    double best_c = 0.0;
    double best_val_accuracy = -1.0;
    LinearSvmModel best_model;
};

PenaltySelection select_penalty(const std::vector<Vec>& train_z, const std::vector<int>& train_y,
                                const std::vector<Vec>& val_z, const std::vector<int>& val_y,
                                const std::vector<double>& c_grid, int svm_epochs, Rng& rng) {
    if (c_grid.empty()) throw InsufficientData("select_penalty: empty penalty grid");
    std::vector<double> grid = c_grid;
    std::sort(grid.begin(), grid.end());
    PenaltySelection sel;
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        Rng fit_rng = rng.derive("c-" + std::to_string(ci));
        LinearSvmModel model = fit_linear_svm(train_z, train_y, grid[ci], fit_rng, svm_epochs);
        const double acc = svm_accuracy(model, val_z, val_y);
        // Ascending grid plus strict improvement = ties go to the smaller C.
        if (acc > sel.best_val_accuracy) {
            sel.best_val_accuracy = acc;
            sel.best_c = grid[ci];
            sel.best_model = std::move(model);
        }
    }
    return sel;
}

int argmax_label(const Vec& logits) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
}

double supervised_accuracy(const ScnnParameters& params, const MapContext& ctx,
                           const SplitData& data, const std::vector<int>& idx) {
    if (idx.empty()) throw InsufficientData("supervised_accuracy: no samples");
    int correct = 0;
    for (int i : idx) {
        const Vec logits =
            scnn_encode(params, ctx.laps.l1_low, ctx.laps.l1_up, data.raw[static_cast<std::size_t>(i)]);
        if (argmax_label(logits) == data.flows[static_cast<std::size_t>(i)].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<std::vector<int>> make_batches(std::vector<int> order, int batch_size) {
    if (batch_size < 2) throw BatchTooSmall("batch size must be at least 2");
    std::vector<std::vector<int>> batches;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    // A trailing singleton cannot form positive/negative structure; fold it
    // into the previous batch.
    if (batches.size() >= 2 && batches.back().size() < 2) {
        auto tail = std::move(batches.back());
        batches.pop_back();
        batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
    return batches;
}

ScnnShape encoder_shape(const ExperimentConfig& cfg, Variant variant) {
    ScnnShape shape;
    shape.channels.assign(static_cast<std::size_t>(cfg.encoder.layers), cfg.encoder.channels);
    shape.l1_order = cfg.encoder.l1_order;
    shape.l2_order = variant_lower_only(variant) ? 0 : cfg.encoder.l2_order;
    shape.embed_dim = variant_supervised(variant) ? 2 : cfg.encoder.embed_dim;
    return shape;
}

}  // namespace

TrainResult train_contrastive(const ExperimentConfig& cfg, Variant variant, const MapContext& ctx,
                              const SplitData& data, const std::vector<Vec>& pool_mask_probs,
                              const Mat* spectral_scores) {
    if (variant_supervised(variant))
        throw std::invalid_argument("train_contrastive: use train_supervised for the baseline");
    validate_config(cfg);
    const std::vector<int>& pool = data.train_idx;
    if (pool.size() < 2) throw InsufficientData("train_contrastive: training pool too small");
    if (pool_mask_probs.size() != 1 && pool_mask_probs.size() != pool.size())
        throw DimensionMismatch("train_contrastive: need one shared or one per-anchor mask vector");
    if (variant_weighted_loss(variant) && spectral_scores == nullptr)
        throw std::invalid_argument("train_contrastive: reweighted variant needs spectral scores");

    const auto t0 = Clock::now();
    Rng root = split_rng(cfg, data.split_id).derive(variant_name(variant));
    Rng init_rng = root.derive("init");
    Rng shuffle_rng = root.derive("shuffle");
    Rng mask_rng = root.derive("mask");
    Rng select_rng = root.derive("val-select");

    ScnnParameters params = init_parameters(encoder_shape(cfg, variant), ctx.num_edges(), init_rng);

    std::vector<int> pool_position(data.flows.size(), -1);
    for (std::size_t i = 0; i < pool.size(); ++i)
        pool_position[static_cast<std::size_t>(pool[i])] = static_cast<int>(i);

    const std::vector<int> train_y = labels_of(data.flows, data.train_idx);
    const std::vector<int> val_y = labels_of(data.flows, data.val_idx);

    TrainLog log;
    log.config_digest = config_digest(cfg);
    ScnnParameters best_params = params;
    double best_val = -1.0;

    std::vector<int> order = pool;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int pair_count = 0;
        for (const auto& anchor_ids : make_batches(order, cfg.batch_size)) {
            std::vector<const Vec*> probs;
            probs.reserve(anchor_ids.size());
            if (pool_mask_probs.size() == 1) {
                probs.push_back(&pool_mask_probs[0]);
            } else {
                for (int idx : anchor_ids)
                    probs.push_back(&pool_mask_probs[static_cast<std::size_t>(
                        pool_position[static_cast<std::size_t>(idx)])]);
            }
            ContrastiveBatch batch = build_batch(anchor_ids, data.raw, probs, params,
                                                 ctx.laps.l1_low, ctx.laps.l1_up, mask_rng, true);
            LossResult loss =
                variant_weighted_loss(variant)
                    ? weighted_infonce_loss(batch, cfg.temperature,
                                            spectral_weights_for_batch(batch, *spectral_scores),
                                            cfg.include_positive)
                    : infonce_loss(batch, cfg.temperature, cfg.include_positive);

            ScnnGradients grad = zeros_like(params);
            const double scale = 1.0 / static_cast<double>(loss.num_pairs);
            for (int v = 0; v < batch.num_views(); ++v)
                scnn_backward(params, ctx.laps.l1_low, ctx.laps.l1_up, batch.tapes[static_cast<std::size_t>(v)],
                              loss.dz[static_cast<std::size_t>(v)] * scale, grad);
            sgd_update(params, grad, cfg.learning_rate, cfg.weight_decay);

            loss_sum += loss.loss;
            pair_count += loss.num_pairs;
        }
        log.epoch_loss.push_back(loss_sum / static_cast<double>(pair_count));
        if (!std::isfinite(log.epoch_loss.back()))
            throw NonFiniteLoss("train_contrastive: non-finite epoch loss");

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const std::vector<Vec> train_z = embed_flows(params, ctx, data.raw, data.train_idx);
            const std::vector<Vec> val_z = embed_flows(params, ctx, data.raw, data.val_idx);
            Rng epoch_rng = select_rng.derive("epoch-" + std::to_string(epoch));
            const PenaltySelection sel =
                select_penalty(train_z, train_y, val_z, val_y, cfg.svm_c_grid, cfg.svm_epochs,
                               epoch_rng);
            log.val_history.emplace_back(epoch, sel.best_val_accuracy);
            // >= so that among equal scores the latest checkpoint wins.
            if (sel.best_val_accuracy >= best_val) {
                best_val = sel.best_val_accuracy;
                best_params = params;
                log.best_epoch = epoch;
            }
        }
    }
    log.best_val_accuracy = best_val;
    log.wall_seconds = seconds_since(t0);
    return {std::move(best_params), std::move(log)};
}

TrainResult train_supervised(const ExperimentConfig& cfg, const MapContext& ctx,
                             const SplitData& data) {
    validate_config(cfg);
    const std::vector<int>& pool = data.train_idx;
    if (pool.size() < 2) throw InsufficientData("train_supervised: training pool too small");

    const auto t0 = Clock::now();
    Rng root = split_rng(cfg, data.split_id).derive(variant_name(Variant::Supervised));
    Rng init_rng = root.derive("init");
    Rng shuffle_rng = root.derive("shuffle");

    ScnnParameters params = init_parameters(encoder_shape(cfg, Variant::Supervised), ctx.num_edges(), init_rng);

    TrainLog log;
    log.config_digest = config_digest(cfg);
    ScnnParameters best_params = params;
    double best_val = -1.0;

    std::vector<int> order = pool;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (const auto& batch_ids : make_batches(order, cfg.batch_size)) {
            ScnnGradients grad = zeros_like(params);
            const double scale = 1.0 / static_cast<double>(batch_ids.size());
            for (int idx : batch_ids) {
                ForwardTape tape = scnn_forward(params, ctx.laps.l1_low, ctx.laps.l1_up,
                                                data.raw[static_cast<std::size_t>(idx)]);
                const int y = data.flows[static_cast<std::size_t>(idx)].label;
                // Two-class softmax cross-entropy on the head logits.
                const double peak = tape.z.maxCoeff();
                Vec p = (tape.z.array() - peak).exp();
                p /= p.sum();
                loss_sum += -std::log(std::max(p(y), 1e-300));
                Vec dz = p;
                dz(y) -= 1.0;
                scnn_backward(params, ctx.laps.l1_low, ctx.laps.l1_up, tape, dz * scale, grad);
            }
            sgd_update(params, grad, cfg.learning_rate, cfg.weight_decay);
        }
        log.epoch_loss.push_back(loss_sum / static_cast<double>(pool.size()));
        if (!std::isfinite(log.epoch_loss.back()))
            throw NonFiniteLoss("train_supervised: non-finite epoch loss");

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const double acc = supervised_accuracy(params, ctx, data, data.val_idx);
            log.val_history.emplace_back(epoch, acc);
            if (acc >= best_val) {
                best_val = acc;
                best_params = params;
                log.best_epoch = epoch;
            }
        }
    }
    log.best_val_accuracy = best_val;
    log.wall_seconds = seconds_since(t0);
    return {std::move(best_params), std::move(log)};
}

double evaluate_variant(const ExperimentConfig& cfg, Variant variant, const MapContext& ctx,
                        const SplitData& data, const ScnnParameters& params) {
    if (variant_supervised(variant)) return supervised_accuracy(params, ctx, data, data.test_idx);

    const std::vector<Vec> train_z = embed_flows(params, ctx, data.raw, data.train_idx);
    const std::vector<Vec> val_z = embed_flows(params, ctx, data.raw, data.val_idx);
    const std::vector<Vec> test_z = embed_flows(params, ctx, data.raw, data.test_idx);
    const std::vector<int> train_y = labels_of(data.flows, data.train_idx);
    const std::vector<int> val_y = labels_of(data.flows, data.val_idx);
    const std::vector<int> test_y = labels_of(data.flows, data.test_idx);

    Rng rng = split_rng(cfg, data.split_id).derive(variant_name(variant)).derive("final-eval");
    const PenaltySelection sel =
        select_penalty(train_z, train_y, val_z, val_y, cfg.svm_c_grid, cfg.svm_epochs, rng);
    return svm_accuracy(sel.best_model, test_z, test_y);
}

VariantMatrixResult run_variant_matrix(const ExperimentConfig& cfg,
                                       const std::vector<Variant>& variants,
                                       const std::function<void(const std::string&)>& progress) {
    if (variants.empty()) throw InsufficientData("run_variant_matrix: no variants");
    if (cfg.num_splits < 1) throw InsufficientData("run_variant_matrix: need at least one split");

    const auto t0 = Clock::now();
    const MapContext ctx = build_map_context(cfg.grid);
    const double budget = cfg.augment.budget_fraction * ctx.num_edges();

    const bool need_spectral =
        std::any_of(variants.begin(), variants.end(),
                    [](Variant v) { return variant_spectral_mask(v); });
    const bool need_scores = std::any_of(variants.begin(), variants.end(),
                                         [](Variant v) { return variant_weighted_loss(v); });

    struct SplitShared {
        std::once_flag once;
        SplitData data;
        std::vector<Vec> uniform_probs;   // single shared entry
        std::vector<Vec> spectral_probs;  // aligned with the training pool
        Mat scores;
    };
    std::vector<SplitShared> shared(static_cast<std::size_t>(cfg.num_splits));

    auto ensure_split = [&](int s) -> SplitShared& {
        SplitShared& sh = shared[static_cast<std::size_t>(s)];
        std::call_once(sh.once, [&] {
            sh.data = make_split(ctx, cfg, s);
            sh.uniform_probs = {uniform_mask_probabilities(ctx.num_edges(), budget)};
            if (need_spectral)
                sh.spectral_probs =
                    spectral_mask_table(ctx, sh.data.raw, sh.data.train_idx, cfg.augment, budget);
            if (need_scores)
                sh.scores = pairwise_spectral_scores(sh.data.raw, ctx.basis, cfg.gammas);
        });
        return sh;
    };

    const int num_jobs = static_cast<int>(variants.size()) * cfg.num_splits;
    Mat accuracy = Mat::Zero(static_cast<Eigen::Index>(variants.size()), cfg.num_splits);

    std::mutex progress_mutex;
    auto report = [&](const std::string& line) {
        if (!progress) return;
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(line);
    };

    auto run_job = [&](int job) {
        const int vi = job / cfg.num_splits;
        const int s = job % cfg.num_splits;
        const Variant v = variants[static_cast<std::size_t>(vi)];
        SplitShared& sh = ensure_split(s);

        TrainResult tr;
        if (variant_supervised(v)) {
            tr = train_supervised(cfg, ctx, sh.data);
        } else {
            const std::vector<Vec>& probs =
                variant_spectral_mask(v) ? sh.spectral_probs : sh.uniform_probs;
            const Mat* scores = variant_weighted_loss(v) ? &sh.scores : nullptr;
            tr = train_contrastive(cfg, v, ctx, sh.data, probs, scores);
        }
        const double acc = evaluate_variant(cfg, v, ctx, sh.data, tr.params);
        accuracy(vi, s) = acc;
        report(variant_name(v) + " split " + std::to_string(s) + ": test accuracy " +
               fmt_fixed(acc, 4) + " (best val " + fmt_fixed(tr.log.best_val_accuracy, 4) +
               " at epoch " + std::to_string(tr.log.best_epoch) + ", " +
               fmt_fixed(tr.log.wall_seconds, 1) + "s)");
    };

    const int workers = std::max(1, std::min(worker_count(), num_jobs));
    if (workers == 1) {
        for (int job = 0; job < num_jobs; ++job) run_job(job);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        auto body = [&] {
            for (;;) {
                const int job = next.fetch_add(1);
                if (job >= num_jobs) return;
                try {
                    run_job(job);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) threads.emplace_back(body);
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    VariantMatrixResult out;
    out.variants = variants;
    out.accuracy = std::move(accuracy);

    std::string per_split = "variant,dataset,split_id,accuracy\n";
    std::string summary = "variant,mean,stderr\n";
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        std::vector<double> accs;
        for (int s = 0; s < cfg.num_splits; ++s) {
            const double a = out.accuracy(static_cast<Eigen::Index>(vi), s);
            accs.push_back(a);
            per_split += variant_name(variants[vi]) + ",trajectory," + std::to_string(s) + "," +
                         fmt_fixed(a) + "\n";
        }
        EvaluationReport rep = aggregate_report(variant_name(variants[vi]), accs);
        summary += rep.variant + "," + fmt_fixed(rep.mean) + "," + fmt_fixed(rep.stderr_mean) + "\n";
        out.reports.push_back(std::move(rep));
    }
    out.per_split_csv = std::move(per_split);
    out.summary_csv = std::move(summary);
    out.wall_seconds = seconds_since(t0);
    return out;
}

GridSearchResult grid_search(const ExperimentConfig& cfg, Variant variant,
                             const std::vector<double>& lr_grid, const std::vector<double>& wd_grid,
                             const std::function<void(const std::string&)>& progress) {
    if (lr_grid.empty() || wd_grid.empty())
        throw InsufficientData("grid_search: empty learning-rate or weight-decay grid");

    std::vector<double> lrs = lr_grid;
    std::vector<double> wds = wd_grid;
    std::sort(lrs.begin(), lrs.end());
    std::sort(wds.begin(), wds.end());

    const MapContext ctx = build_map_context(cfg.grid);
    const SplitData data = make_split(ctx, cfg, 0);
    const double budget = cfg.augment.budget_fraction * ctx.num_edges();

    std::vector<Vec> probs;
    Mat scores;
    if (!variant_supervised(variant)) {
        probs = variant_spectral_mask(variant)
                    ? spectral_mask_table(ctx, data.raw, data.train_idx, cfg.augment, budget)
                    : std::vector<Vec>{uniform_mask_probabilities(ctx.num_edges(), budget)};
        if (variant_weighted_loss(variant))
            scores = pairwise_spectral_scores(data.raw, ctx.basis, cfg.gammas);
    }

    GridSearchResult out;
    out.csv = "learning_rate,weight_decay,val_accuracy\n";
    double best_acc = -1.0;
    for (double lr : lrs) {
        for (double wd : wds) {
            ExperimentConfig cell_cfg = cfg;
            cell_cfg.learning_rate = lr;
            cell_cfg.weight_decay = wd;
            TrainResult tr =
                variant_supervised(variant)
                    ? train_supervised(cell_cfg, ctx, data)
                    : train_contrastive(cell_cfg, variant, ctx, data, probs,
                                        variant_weighted_loss(variant) ? &scores : nullptr);
            GridSearchCell cell{lr, wd, tr.log.best_val_accuracy};
            out.cells.push_back(cell);
            out.csv += fmt_general(lr) + "," + fmt_general(wd) + "," +
                       fmt_fixed(cell.val_accuracy) + "\n";
            if (progress)
                progress("lr " + fmt_general(lr) + " wd " + fmt_general(wd) + ": val accuracy " +
                         fmt_fixed(cell.val_accuracy, 4));
            // Strict improvement keeps the smallest (lr, wd) on ties.
            if (cell.val_accuracy > best_acc) {
                best_acc = cell.val_accuracy;
                out.best_learning_rate = lr;
                out.best_weight_decay = wd;
            }
        }
    }
    return out;
}

namespace {

constexpr int kGapBins = 32;
const char* const kComponentNames[3] = {"gradient", "curl", "harmonic"};
const char* const kSchemeNames[2] = {"uniform", "optimized"};

// samples[scheme][component] -> per-draw anchor-to-view embedding distances.
using GapSamples = std::array<std::array<std::vector<double>, 3>, 2>;

std::string gap_histogram_csv(const GapSamples& samples, const std::array<double, 3>& hi) {
    std::string csv = "scheme,component,bin_low,bin_high,count\n";
    for (int c = 0; c < 3; ++c) {
        const double width = hi[static_cast<std::size_t>(c)] / kGapBins;
        for (int scheme = 0; scheme < 2; ++scheme) {
            std::array<long, kGapBins> counts{};
            for (double v : samples[static_cast<std::size_t>(scheme)][static_cast<std::size_t>(c)]) {
                const int b = std::min(kGapBins - 1, static_cast<int>(v / width));
                ++counts[static_cast<std::size_t>(b)];
            }
            for (int b = 0; b < kGapBins; ++b)
                csv += std::string(kSchemeNames[scheme]) + "," + kComponentNames[c] + "," +
                       fmt_fixed(b * width, 4) + "," + fmt_fixed((b + 1) * width, 4) + "," +
                       std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
        }
    }
    return csv;
}

std::string gap_study_svg(const GapSamples& samples, const std::array<double, 3>& hi, int draws) {
    const double panel_w = 280.0, panel_h = 200.0, margin = 50.0, gap = 30.0;
    const double total_w = margin * 2 + panel_w * 3 + gap * 2;
    const double total_h = 330.0;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_fixed(total_w, 0) +
           "\" height=\"" + fmt_fixed(total_h, 0) + "\" viewBox=\"0 0 " + fmt_fixed(total_w, 0) +
           " " + fmt_fixed(total_h, 0) + "\">\n";
    svg += "<rect width=\"" + fmt_fixed(total_w, 0) + "\" height=\"" + fmt_fixed(total_h, 0) +
           "\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt_fixed(total_w / 2, 0) +
           "\" y=\"26\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
           "Anchor-to-view embedding distance by component (" +
           std::to_string(draws) + " draws)</text>\n";
    static const char* fills[2] = {"#7294c7", "#c77272"};
    for (int c = 0; c < 3; ++c) {
        const double x0 = margin + c * (panel_w + gap);
        const double y0 = 60.0, base = y0 + panel_h;
        long peak = 1;
        std::array<std::array<long, kGapBins>, 2> counts{};
        const double width = hi[static_cast<std::size_t>(c)] / kGapBins;
        for (int scheme = 0; scheme < 2; ++scheme) {
            for (double v : samples[static_cast<std::size_t>(scheme)][static_cast<std::size_t>(c)]) {
                const int b = std::min(kGapBins - 1, static_cast<int>(v / width));
                ++counts[static_cast<std::size_t>(scheme)][static_cast<std::size_t>(b)];
            }
            for (long n : counts[static_cast<std::size_t>(scheme)]) peak = std::max(peak, n);
        }
        const double bar_w = panel_w / kGapBins;
        for (int scheme = 0; scheme < 2; ++scheme)
            for (int b = 0; b < kGapBins; ++b) {
                const double bh = panel_h *
                                  static_cast<double>(counts[static_cast<std::size_t>(scheme)]
                                                            [static_cast<std::size_t>(b)]) /
                                  static_cast<double>(peak);
                if (bh <= 0.0) continue;
                svg += "<rect x=\"" + fmt_fixed(x0 + b * bar_w, 1) + "\" y=\"" +
                       fmt_fixed(base - bh, 1) + "\" width=\"" + fmt_fixed(bar_w, 1) +
                       "\" height=\"" + fmt_fixed(bh, 1) + "\" fill=\"" + fills[scheme] +
                       "\" fill-opacity=\"0.6\"/>\n";
            }
        svg += "<line x1=\"" + fmt_fixed(x0, 1) + "\" y1=\"" + fmt_fixed(base, 1) + "\" x2=\"" +
               fmt_fixed(x0 + panel_w, 1) + "\" y2=\"" + fmt_fixed(base, 1) +
               "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + fmt_fixed(x0 + panel_w / 2, 1) + "\" y=\"" + fmt_fixed(base + 24.0, 1) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
               kComponentNames[c] + "</text>\n";
        svg += "<text x=\"" + fmt_fixed(x0 + panel_w / 2, 1) + "\" y=\"" + fmt_fixed(base + 42.0, 1) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">0 to " +
               fmt_fixed(hi[static_cast<std::size_t>(c)], 3) + "</text>\n";
    }
    svg += "<rect x=\"" + fmt_fixed(margin, 0) +
           "\" y=\"36\" width=\"14\" height=\"14\" fill=\"#7294c7\" fill-opacity=\"0.6\"/>"
           "<text x=\"" + fmt_fixed(margin + 20, 0) +
           "\" y=\"48\" font-family=\"sans-serif\" font-size=\"13\">uniform</text>\n";
    svg += "<rect x=\"" + fmt_fixed(margin + 110, 0) +
           "\" y=\"36\" width=\"14\" height=\"14\" fill=\"#c77272\" fill-opacity=\"0.6\"/>"
           "<text x=\"" + fmt_fixed(margin + 130, 0) +
           "\" y=\"48\" font-family=\"sans-serif\" font-size=\"13\">optimized</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace

GapStudyResult run_gap_study(const ExperimentConfig& cfg, const MapContext& ctx,
                             const SplitData& data, int draws) {
    if (draws < 1) throw InsufficientData("run_gap_study: need at least one draw");
    const std::vector<int>& pool = data.train_idx;
    if (pool.empty()) throw InsufficientData("run_gap_study: empty training pool");

    const double budget = cfg.augment.budget_fraction * ctx.num_edges();
    const Vec uniform = uniform_mask_probabilities(ctx.num_edges(), budget);
    const std::vector<Vec> spectral =
        spectral_mask_table(ctx, data.raw, pool, cfg.augment, budget);

    std::vector<HodgeEmbedding> anchor_emb;
    anchor_emb.reserve(pool.size());
    for (int idx : pool)
        anchor_emb.push_back(hodge_project(data.raw[static_cast<std::size_t>(idx)], ctx.basis));

    Rng rng = split_rng(cfg, data.split_id).derive("gap-study");

    GapStudyResult out;
    out.draws = draws;
    GapSamples samples;
    for (auto& scheme : samples)
        for (auto& comp : scheme) comp.reserve(static_cast<std::size_t>(draws));
    for (int d = 0; d < draws; ++d) {
        const std::size_t pos = static_cast<std::size_t>(d) % pool.size();
        const EdgeFlow& x = data.raw[static_cast<std::size_t>(pool[pos])];
        for (int scheme = 0; scheme < 2; ++scheme) {
            const Vec& p = scheme == 0 ? uniform : spectral[pos];
            const EdgeFlow masked = mask_flow(x, p, rng);
            const HodgeEmbedding e = hodge_project(masked, ctx.basis);
            auto& dst = samples[static_cast<std::size_t>(scheme)];
            dst[0].push_back((anchor_emb[pos].grad - e.grad).norm());
            dst[1].push_back((anchor_emb[pos].curl - e.curl).norm());
            dst[2].push_back((anchor_emb[pos].harm - e.harm).norm());
        }
    }
    std::array<double, 3> hi{};
    for (int c = 0; c < 3; ++c) {
        double sum_u = 0.0, sum_s = 0.0, peak = 0.0;
        for (double v : samples[0][static_cast<std::size_t>(c)]) {
            sum_u += v;
            peak = std::max(peak, v);
        }
        for (double v : samples[1][static_cast<std::size_t>(c)]) {
            sum_s += v;
            peak = std::max(peak, v);
        }
        out.uniform_mean[static_cast<std::size_t>(c)] = sum_u / draws;
        out.spectral_mean[static_cast<std::size_t>(c)] = sum_s / draws;
        hi[static_cast<std::size_t>(c)] = peak > 0.0 ? peak : 1.0;
    }

    out.csv = gap_histogram_csv(samples, hi);
    out.svg = gap_study_svg(samples, hi, draws);
    return out;
}

BudgetSweepResult run_budget_sweep(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                                   const std::vector<Variant>& variants, int splits,
                                   const std::function<void(const std::string&)>& progress) {
    if (fractions.empty()) throw InsufficientData("run_budget_sweep: no budgets");
    if (splits < 1) throw InsufficientData("run_budget_sweep: need at least one split");

    BudgetSweepResult out;
    out.csv = "budget_fraction,variant,mean_accuracy,stderr\n";
    for (double f : fractions) {
        ExperimentConfig sweep_cfg = cfg;
        sweep_cfg.augment.budget_fraction = f;
        sweep_cfg.num_splits = splits;
        if (progress) progress("budget fraction " + fmt_general(f));
        VariantMatrixResult res = run_variant_matrix(sweep_cfg, variants, progress);
        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            BudgetSweepRow row;
            row.budget_fraction = f;
            row.variant = variants[vi];
            row.mean_accuracy = res.reports[vi].mean;
            row.stderr_mean = res.reports[vi].stderr_mean;
            out.rows.push_back(row);
            out.csv += fmt_general(f) + "," + variant_name(variants[vi]) + "," +
                       fmt_fixed(row.mean_accuracy) + "," + fmt_fixed(row.stderr_mean) + "\n";
        }
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open file for writing: " + path);
    f << content;
    if (!f) throw ParseError("failed writing file: " + path);
}

}  // namespace scl
