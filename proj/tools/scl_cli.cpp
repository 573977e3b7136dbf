// Command-line front end for the simplicial contrastive learning library:
// dataset generation, augmentation optimization, training, grid search,
// evaluation, the full variant matrix report and the masking gap figure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scl/error.hpp"
#include "scl/train.hpp"

namespace {

using scl::ExperimentConfig;
using scl::MapContext;
using scl::SplitData;
using scl::Variant;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw scl::ParseError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<int> splits;
    std::optional<double> learning_rate;
    std::optional<double> weight_decay;
    std::optional<double> budget_fraction;
    std::optional<double> temperature;
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file; omitted keys keep defaults")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "Master seed override");
    cmd->add_option("--epochs", opts.epochs, "Training epochs override");
    cmd->add_option("--splits", opts.splits, "Number of splits override");
    cmd->add_option("--lr", opts.learning_rate, "Learning rate override");
    cmd->add_option("--wd", opts.weight_decay, "Weight decay override");
    cmd->add_option("--budget-fraction", opts.budget_fraction,
                    "Masking budget as a fraction of the edge count");
    cmd->add_option("--temperature", opts.temperature, "Contrastive temperature override");
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty())
        cfg = scl::config_from_json(read_text_file(opts.config_path), cfg);
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (opts.epochs) cfg.epochs = *opts.epochs;
    if (opts.splits) cfg.num_splits = *opts.splits;
    if (opts.learning_rate) cfg.learning_rate = *opts.learning_rate;
    if (opts.weight_decay) cfg.weight_decay = *opts.weight_decay;
    if (opts.budget_fraction) cfg.augment.budget_fraction = *opts.budget_fraction;
    if (opts.temperature) cfg.temperature = *opts.temperature;
    return cfg;
}

void print_progress(const std::string& line) { std::cerr << line << "\n"; }

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
    if (names.empty()) return scl::all_variants();
    std::vector<Variant> out;
    for (const auto& n : names) out.push_back(scl::variant_from_string(n));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised contrastive learning on simplicial complexes"};
    app.require_subcommand(1);

    CommonOptions opts;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a trajectory dataset (JSONL)");
    add_common_options(gen, opts);
    std::string gen_out = "dataset.jsonl";
    int gen_split = 0;
    gen->add_option("--out", gen_out, "Output JSONL path");
    gen->add_option("--split-id", gen_split, "Split whose seed to use");

    // optimize-aug
    auto* aug = app.add_subcommand("optimize-aug",
                                   "Optimize per-flow mask probabilities for a dataset");
    add_common_options(aug, opts);
    std::string aug_dataset;
    std::string aug_out = "probabilities.jsonl";
    aug->add_option("--dataset", aug_dataset, "Dataset JSONL (defaults to generated split data)");
    aug->add_option("--out", aug_out, "Output JSONL cache path");
    int aug_split = 0;
    aug->add_option("--split-id", aug_split, "Split whose seed to use when generating data");

    // train
    auto* train = app.add_subcommand("train", "Train one variant on one split");
    add_common_options(train, opts);
    std::string train_variant = "sscl-spec";
    int train_split = 0;
    std::string train_ckpt = "encoder.json";
    std::string train_log_path;
    train->add_option("--variant", train_variant,
                      "sscl-spec|sscl|scl-spec|scl|scl-low|supervised");
    train->add_option("--split-id", train_split, "Split to train on");
    train->add_option("--out-checkpoint", train_ckpt, "Checkpoint JSON path");
    train->add_option("--out-log", train_log_path, "Training log JSON path");

    // grid-search
    auto* grid = app.add_subcommand("grid-search", "Search learning rate and weight decay");
    add_common_options(grid, opts);
    std::string grid_variant = "scl";
    std::vector<double> lr_grid{1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> wd_grid{1e-5, 1e-4, 1e-3};
    std::string grid_out = "grid_search.csv";
    grid->add_option("--variant", grid_variant, "Variant to tune");
    grid->add_option("--lr-grid", lr_grid, "Learning rates to try")->delimiter(',');
    grid->add_option("--wd-grid", wd_grid, "Weight decays to try")->delimiter(',');
    grid->add_option("--out", grid_out, "Result CSV path");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split");
    add_common_options(eval, opts);
    std::string eval_variant = "sscl-spec";
    std::string eval_ckpt;
    int eval_split = 0;
    eval->add_option("--variant", eval_variant, "Variant the checkpoint belongs to");
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint JSON path")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--split-id", eval_split, "Split to evaluate on");

    // report
    auto* report = app.add_subcommand("report", "Train and evaluate the full variant matrix");
    add_common_options(report, opts);
    std::string report_dir = "results";
    std::vector<std::string> report_variants;
    report->add_option("--out-dir", report_dir, "Directory for CSV outputs");
    report->add_option("--variants", report_variants, "Subset of variants")->delimiter(',');

    // fig-gap
    auto* fig = app.add_subcommand("fig-gap", "Masking gap study (CSV + SVG)");
    add_common_options(fig, opts);
    int fig_draws = 10000;
    int fig_split = 0;
    std::string fig_csv = "gap_study.csv";
    std::string fig_svg = "gap_study.svg";
    fig->add_option("--draws", fig_draws, "Monte Carlo draws");
    fig->add_option("--split-id", fig_split, "Split whose data to use");
    fig->add_option("--out-csv", fig_csv, "CSV output path");
    fig->add_option("--out-svg", fig_svg, "SVG output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const MapContext ctx = scl::build_map_context(cfg.grid);
            const SplitData data = scl::make_split(ctx, cfg, gen_split);
            scl::save_dataset(gen_out, ctx.map.complex, data.flows);
            std::cout << "wrote " << data.flows.size() << " flows on "
                      << ctx.map.complex.num_edges() << " edges to " << gen_out << "\n";
        } else if (aug->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const MapContext ctx = scl::build_map_context(cfg.grid);
            std::vector<scl::EdgeFlow> raw;
            std::vector<int> pool;
            if (!aug_dataset.empty()) {
                scl::LoadedDataset ds = scl::load_external_flows(aug_dataset);
                if (scl::complex_to_json(ds.complex) != scl::complex_to_json(ctx.map.complex))
                    throw scl::DimensionMismatch(
                        "dataset complex does not match the configured grid");
                for (const auto& f : ds.flows) raw.push_back(f.flow);
                for (std::size_t i = 0; i < ds.flows.size(); ++i)
                    if (ds.flows[i].split == scl::Split::Train) pool.push_back(static_cast<int>(i));
            } else {
                const SplitData data = scl::make_split(ctx, cfg, aug_split);
                raw = data.raw;
                pool = data.train_idx;
            }
            const double budget = cfg.augment.budget_fraction * ctx.map.complex.num_edges();
            std::vector<scl::CachedProbabilities> records;
            for (int idx : pool) {
                scl::OptimizeResult res = scl::optimize_probabilities(
                    raw[static_cast<std::size_t>(idx)], ctx.basis, cfg.augment.objective, budget,
                    cfg.augment.pgd_step, cfg.augment.pgd_iterations);
                records.push_back({idx, std::move(res.probs.p), res.objective, budget});
            }
            scl::save_probabilities(aug_out, records);
            std::cout << "wrote " << records.size() << " probability vectors to " << aug_out
                      << "\n";
        } else if (train->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const Variant v = scl::variant_from_string(train_variant);
            const MapContext ctx = scl::build_map_context(cfg.grid);
            const SplitData data = scl::make_split(ctx, cfg, train_split);

            scl::TrainResult tr;
            if (scl::variant_supervised(v)) {
                tr = scl::train_supervised(cfg, ctx, data);
            } else {
                const double budget = cfg.augment.budget_fraction * ctx.map.complex.num_edges();
                const std::vector<scl::Vec> probs =
                    scl::variant_spectral_mask(v)
                        ? scl::spectral_mask_table(ctx, data.raw, data.train_idx, cfg.augment,
                                                   budget)
                        : std::vector<scl::Vec>{
                              scl::uniform_mask_probabilities(ctx.map.complex.num_edges(), budget)};
                scl::Mat scores;
                if (scl::variant_weighted_loss(v))
                    scores = scl::pairwise_spectral_scores(data.raw, ctx.basis, cfg.gammas);
                tr = scl::train_contrastive(cfg, v, ctx, data, probs,
                                            scl::variant_weighted_loss(v) ? &scores : nullptr);
            }
            scl::save_checkpoint(train_ckpt, tr.params);
            const double acc = scl::evaluate_variant(cfg, v, ctx, data, tr.params);
            nlohmann::json out;
            out["variant"] = train_variant;
            out["split_id"] = train_split;
            out["best_epoch"] = tr.log.best_epoch;
            out["best_val_accuracy"] = tr.log.best_val_accuracy;
            out["test_accuracy"] = acc;
            out["wall_seconds"] = tr.log.wall_seconds;
            out["checkpoint"] = train_ckpt;
            out["config_digest"] = tr.log.config_digest;
            if (!train_log_path.empty()) {
                nlohmann::json log = out;
                log["epoch_loss"] = tr.log.epoch_loss;
                nlohmann::json hist = nlohmann::json::array();
                for (const auto& [epoch, vacc] : tr.log.val_history)
                    hist.push_back({{"epoch", epoch}, {"val_accuracy", vacc}});
                log["val_history"] = std::move(hist);
                scl::write_text_file(train_log_path, log.dump(2) + "\n");
            }
            std::cout << out.dump(2) << "\n";
        } else if (grid->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const Variant v = scl::variant_from_string(grid_variant);
            scl::GridSearchResult res =
                scl::grid_search(cfg, v, lr_grid, wd_grid, print_progress);
            scl::write_text_file(grid_out, res.csv);
            nlohmann::json out;
            out["best_learning_rate"] = res.best_learning_rate;
            out["best_weight_decay"] = res.best_weight_decay;
            out["csv"] = grid_out;
            std::cout << out.dump(2) << "\n";
        } else if (eval->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const Variant v = scl::variant_from_string(eval_variant);
            const MapContext ctx = scl::build_map_context(cfg.grid);
            const SplitData data = scl::make_split(ctx, cfg, eval_split);
            const scl::ScnnParameters params = scl::load_checkpoint(eval_ckpt);
            const double acc = scl::evaluate_variant(cfg, v, ctx, data, params);
            nlohmann::json out;
            out["variant"] = eval_variant;
            out["split_id"] = eval_split;
            out["test_accuracy"] = acc;
            std::cout << out.dump(2) << "\n";
        } else if (report->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const std::vector<Variant> variants = parse_variants(report_variants);
            std::filesystem::create_directories(report_dir);
            scl::VariantMatrixResult res = scl::run_variant_matrix(cfg, variants, print_progress);
            scl::write_text_file(report_dir + "/results_by_split.csv", res.per_split_csv);
            scl::write_text_file(report_dir + "/summary.csv", res.summary_csv);
            std::cout << res.summary_csv;
            std::cerr << "total wall time " << res.wall_seconds << "s\n";
        } else if (fig->parsed()) {
            const ExperimentConfig cfg = resolve_config(opts);
            const MapContext ctx = scl::build_map_context(cfg.grid);
            const SplitData data = scl::make_split(ctx, cfg, fig_split);
            scl::GapStudyResult res = scl::run_gap_study(cfg, ctx, data, fig_draws);
            scl::write_text_file(fig_csv, res.csv);
            scl::write_text_file(fig_svg, res.svg);
            nlohmann::json summary;
            summary["draws"] = res.draws;
            const char* comp[3] = {"gradient", "curl", "harmonic"};
            for (int c = 0; c < 3; ++c) {
                summary["mean_distance"]["uniform"][comp[c]] =
                    res.uniform_mean[static_cast<std::size_t>(c)];
                summary["mean_distance"]["optimized"][comp[c]] =
                    res.spectral_mean[static_cast<std::size_t>(c)];
            }
            summary["csv"] = fig_csv;
            summary["svg"] = fig_svg;
            std::cout << summary.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        err["type"] = typeid(e).name();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
