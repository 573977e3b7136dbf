#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "scl/augment.hpp"
#include "scl/contrastive.hpp"
#include "scl/dataset.hpp"
#include "scl/hodge.hpp"
#include "scl/scnn.hpp"
#include "scl/svm.hpp"

namespace scl {

// The trained model matrix. Contrastive variants differ along two axes
// (reweighted vs plain loss, spectrally optimized vs uniform masking),
// plus a lower-Laplacian-only encoder ablation and a supervised baseline.
enum class Variant { SsclSpec, Sscl, SclSpec, Scl, SclLow, Supervised };

const std::vector<Variant>& all_variants();
std::string variant_name(Variant v);
Variant variant_from_string(const std::string& name);

bool variant_weighted_loss(Variant v);
bool variant_spectral_mask(Variant v);
bool variant_lower_only(Variant v);
bool variant_supervised(Variant v);

struct EncoderSpec {
    int layers = 2;
    int channels = 32;
    int l1_order = 1;
    int l2_order = 1;
    int embed_dim = 16;
};

struct AugmentSettings {
    // L1 budget as a fraction of the edge count. Strong masking is what makes
    // the task hard enough to separate the encoders: around 0.3 the two views
    // still share most of the path and every variant saturates, while at 0.7
    // view matching has to rely on triangle-level structure, which the
    // lower-only ablation cannot see.
    double budget_fraction = 0.7;
    SpectralGapObjective objective;
    double pgd_step = 0.05;
    int pgd_iterations = 150;
};

struct ExperimentConfig {
    TriangularGridSpec grid{8, 8, {{3, 2, 1, 1}, {3, 5, 1, 1}}};
    int n_train = 200;
    int n_val = 100;
    int n_test = 100;
    int num_splits = 16;

    EncoderSpec encoder;
    AugmentSettings augment;

    double temperature = 0.5;
    SpectralGammas gammas;
    bool include_positive = false;

    double learning_rate = 0.2;
    double weight_decay = 1e-5;
    int epochs = 200;
    int batch_size = 100;
    int eval_every = 20;

    std::vector<double> svm_c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    int svm_epochs = 100;
    int cv_folds = 10;

    std::uint64_t master_seed = 20240901;
};

ExperimentConfig default_config();
// Throws ParseError when a field is outside its allowed range (learning
// rate and weight decay live in [1e-5, 1]; counts must be positive).
void validate_config(const ExperimentConfig& cfg);
std::string config_to_json(const ExperimentConfig& cfg);
// Applies the keys present in text on top of base; unknown keys are errors.
ExperimentConfig config_from_json(const std::string& text,
                                  const ExperimentConfig& base = ExperimentConfig{});
std::string config_digest(const ExperimentConfig& cfg);

// Number of parallel workers: the SCL_WORKERS environment variable when set
// (positive), otherwise the hardware concurrency.
int worker_count();

// Shared per-map state: the complex with its Laplacians and spectral basis,
// built once and reused by every split and variant.
struct MapContext {
    TrajectoryMap map;
    HodgeLaplacians laps;
    HodgeBasis basis;

    int num_edges() const { return map.complex.num_edges(); }
};
MapContext build_map_context(const TriangularGridSpec& spec);

struct SplitData {
    int split_id = 0;
    std::vector<LabeledFlow> flows;
    std::vector<EdgeFlow> raw;  // flows[i].flow, for batch building
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    std::vector<int> test_idx;
};
SplitData make_split(const MapContext& ctx, const ExperimentConfig& cfg, int split_id);

// Root of a split's random streams; every consumer derives its own
// substream, so variants never perturb each other's draws.
Rng split_rng(const ExperimentConfig& cfg, int split_id);

// Mask probability table aligned with pool; uniform fills the budget evenly,
// the spectral table optimizes each anchor's probabilities.
Vec uniform_mask_probabilities(int num_edges, double budget);
std::vector<Vec> spectral_mask_table(const MapContext& ctx, const std::vector<EdgeFlow>& raw,
                                     const std::vector<int>& pool, const AugmentSettings& settings,
                                     double budget);

struct TrainLog {
    std::vector<double> epoch_loss;                  // mean per-pair (or per-sample) loss
    std::vector<std::pair<int, double>> val_history;  // (epoch, validation accuracy)
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
    double wall_seconds = 0.0;
    std::string config_digest;
};

struct TrainResult {
    ScnnParameters params;
    TrainLog log;
};

// Self-supervised training of one contrastive variant on the split's
// training pool. pool_mask_probs must align with data.train_idx; pass the
// spectral score matrix for reweighted variants, nullptr otherwise.
TrainResult train_contrastive(const ExperimentConfig& cfg, Variant variant, const MapContext& ctx,
                              const SplitData& data, const std::vector<Vec>& pool_mask_probs,
                              const Mat* spectral_scores);

// Supervised baseline: same encoder, two-logit head, cross-entropy.
TrainResult train_supervised(const ExperimentConfig& cfg, const MapContext& ctx,
                             const SplitData& data);

// Test accuracy of a trained model on its split. Contrastive variants get a
// linear SVM fitted on frozen train embeddings with the penalty chosen on
// validation; the supervised baseline predicts with its own head.
double evaluate_variant(const ExperimentConfig& cfg, Variant variant, const MapContext& ctx,
                        const SplitData& data, const ScnnParameters& params);

struct VariantMatrixResult {
    std::vector<Variant> variants;
    std::vector<EvaluationReport> reports;  // aligned with variants
    Mat accuracy;                           // variants x splits
    std::string per_split_csv;              // variant,dataset,split_id,accuracy
    std::string summary_csv;                // variant,mean,stderr
    double wall_seconds = 0.0;
};

// Trains and evaluates every (variant, split) cell. Deterministic for a
// fixed config regardless of worker count; progress lines go to the
// optional callback.
VariantMatrixResult run_variant_matrix(const ExperimentConfig& cfg,
                                       const std::vector<Variant>& variants,
                                       const std::function<void(const std::string&)>& progress = {});

struct GridSearchCell {
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    double val_accuracy = 0.0;
};
struct GridSearchResult {
    std::vector<GridSearchCell> cells;
    double best_learning_rate = 0.0;
    double best_weight_decay = 0.0;
    std::string csv;  // learning_rate,weight_decay,val_accuracy
};

// Trains the variant on split 0 for each (lr, wd) cell and ranks cells by
// the best validation accuracy reached; ties prefer the smaller lr, then
// the smaller wd.
GridSearchResult grid_search(const ExperimentConfig& cfg, Variant variant,
                             const std::vector<double>& lr_grid,
                             const std::vector<double>& wd_grid,
                             const std::function<void(const std::string&)>& progress = {});

struct GapStudyResult {
    int draws = 0;
    // Mean distance between the anchor embedding and the masked-view
    // embedding per component, order: gradient, curl, harmonic.
    std::array<double, 3> uniform_mean{};
    std::array<double, 3> spectral_mean{};
    std::string csv;  // histogram rows: scheme,component,bin_low,bin_high,count
    std::string svg;  // overlaid per-component distance histograms
};

// Monte Carlo comparison of uniform vs spectrally optimized masking at the
// same budget, over the split's training flows.
GapStudyResult run_gap_study(const ExperimentConfig& cfg, const MapContext& ctx,
                             const SplitData& data, int draws);

struct BudgetSweepRow {
    double budget_fraction = 0.0;
    Variant variant = Variant::Scl;
    double mean_accuracy = 0.0;
    double stderr_mean = 0.0;
};
struct BudgetSweepResult {
    std::vector<BudgetSweepRow> rows;
    std::string csv;  // budget_fraction,variant,mean_accuracy,stderr
};

// Re-runs the given variants across masking budgets on the first
// `splits` splits.
BudgetSweepResult run_budget_sweep(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                                   const std::vector<Variant>& variants, int splits,
                                   const std::function<void(const std::string&)>& progress = {});

void write_text_file(const std::string& path, const std::string& content);

}  // namespace scl
