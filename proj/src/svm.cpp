#include "scl/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scl/error.hpp"

namespace scl {

namespace {

void check_inputs(const std::vector<Vec>& embeddings, const std::vector<int>& labels) {
    if (embeddings.size() != labels.size())
        throw DimensionMismatch("svm: " + std::to_string(embeddings.size()) + " embeddings vs " +
                                std::to_string(labels.size()) + " labels");
    if (embeddings.size() < 2) throw InsufficientData("svm: need at least two samples");
    for (std::size_t i = 1; i < embeddings.size(); ++i)
        if (embeddings[i].size() != embeddings[0].size())
            throw DimensionMismatch("svm: embedding sizes differ");
    bool has0 = false;
    bool has1 = false;
    for (int l : labels) {
        if (l == 0)
            has0 = true;
        else if (l == 1)
            has1 = true;
        else
            throw UnknownLabel("svm: label " + std::to_string(l));
    }
    if (!has0 || !has1) throw SingleClassInput("svm: training data contains a single class");
}

}  // namespace

LinearSvmModel fit_linear_svm(const std::vector<Vec>& embeddings, const std::vector<int>& labels,
                              double penalty_c, Rng& rng, int epochs) {
    check_inputs(embeddings, labels);
    if (!(penalty_c > 0.0)) throw IndexOutOfRange("svm: penalty must be positive");
    if (epochs < 1) throw IndexOutOfRange("svm: epochs must be at least 1");

    const auto n = static_cast<double>(embeddings.size());
    const double lambda = 1.0 / (penalty_c * n);
    const auto dim = embeddings[0].size();

    Vec w = Vec::Zero(dim);
    double b = 0.0;
    Vec w_sum = Vec::Zero(dim);
    double b_sum = 0.0;

    std::vector<int> order(embeddings.size());
    std::iota(order.begin(), order.end(), 0);

    long t = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (int i : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
            const Vec& z = embeddings[static_cast<std::size_t>(i)];
            const bool margin_violated = y * (w.dot(z) + b) < 1.0;
            w *= 1.0 - 1.0 / static_cast<double>(t);  // (1 - eta * lambda)
            if (margin_violated) {
                w += (eta * y) * z;
                // The bias is unregularized; its own 1/t schedule keeps the
                // solution scale-covariant in (z, C).
                b += y / static_cast<double>(t);
            }
            w_sum += w;
            b_sum += b;
        }
    }
    LinearSvmModel model;
    model.weight = w_sum / static_cast<double>(t);
    model.bias = b_sum / static_cast<double>(t);
    model.penalty_c = penalty_c;
    return model;
}

int svm_predict(const LinearSvmModel& model, const Vec& z) {
    if (z.size() != model.weight.size())
        throw DimensionMismatch("svm_predict: embedding has " + std::to_string(z.size()) +
                                " entries, model " + std::to_string(model.weight.size()));
    return model.weight.dot(z) + model.bias >= 0.0 ? 1 : 0;
}

double svm_accuracy(const LinearSvmModel& model, const std::vector<Vec>& embeddings,
                    const std::vector<int>& labels) {
    if (embeddings.size() != labels.size())
        throw DimensionMismatch("svm_accuracy: sample count mismatch");
    if (embeddings.empty()) throw InsufficientData("svm_accuracy: no samples");
    int correct = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        if (svm_predict(model, embeddings[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(embeddings.size());
}

double svm_objective(const LinearSvmModel& model, const std::vector<Vec>& embeddings,
                     const std::vector<int>& labels) {
    if (embeddings.size() != labels.size())
        throw DimensionMismatch("svm_objective: sample count mismatch");
    if (embeddings.empty()) throw InsufficientData("svm_objective: no samples");
    const auto n = static_cast<double>(embeddings.size());
    double hinge = 0.0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const double y = labels[i] == 1 ? 1.0 : -1.0;
        hinge += std::max(0.0, 1.0 - y * (model.weight.dot(embeddings[i]) + model.bias));
    }
    return hinge / n + model.weight.squaredNorm() / (2.0 * model.penalty_c * n);
}

double cross_validate_penalty(const std::vector<Vec>& embeddings, const std::vector<int>& labels,
                              const std::vector<double>& c_grid, int folds, Rng& rng, int epochs) {
    check_inputs(embeddings, labels);
    if (c_grid.empty()) throw InsufficientData("cross_validate_penalty: empty penalty grid");
    if (folds < 2) throw IndexOutOfRange("cross_validate_penalty: need at least 2 folds");
    if (static_cast<int>(embeddings.size()) < folds)
        throw InsufficientData("cross_validate_penalty: fewer samples than folds");

    std::vector<double> grid = c_grid;
    std::sort(grid.begin(), grid.end());

    // One shared fold assignment: shuffled indices dealt round-robin.
    std::vector<int> order(embeddings.size());
    std::iota(order.begin(), order.end(), 0);
    Rng fold_rng = rng.derive("folds");
    fold_rng.shuffle(order);
    std::vector<int> fold_of(embeddings.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        fold_of[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));

    double best_c = grid.front();
    double best_acc = -1.0;
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        double acc_sum = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<Vec> train_z, hold_z;
            std::vector<int> train_y, hold_y;
            for (std::size_t i = 0; i < embeddings.size(); ++i) {
                if (fold_of[i] == f) {
                    hold_z.push_back(embeddings[i]);
                    hold_y.push_back(labels[i]);
                } else {
                    train_z.push_back(embeddings[i]);
                    train_y.push_back(labels[i]);
                }
            }
            Rng fit_rng = rng.derive("cv-" + std::to_string(ci) + "-" + std::to_string(f));
            LinearSvmModel model = fit_linear_svm(train_z, train_y, grid[ci], fit_rng, epochs);
            acc_sum += svm_accuracy(model, hold_z, hold_y);
        }
        const double acc = acc_sum / folds;
        // Strictly-better wins; on a tie the earlier (smaller) C stays.
        if (acc > best_acc + 1e-12) {
            best_acc = acc;
            best_c = grid[ci];
        }
    }
    return best_c;
}

EvaluationReport aggregate_report(const std::string& variant,
                                  const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw InsufficientData("aggregate_report: no accuracies");
    EvaluationReport rep;
    rep.variant = variant;
    rep.accuracies = accuracies;
    const auto k = static_cast<double>(accuracies.size());
    rep.mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / k;
    if (accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : accuracies) ss += (a - rep.mean) * (a - rep.mean);
        rep.stderr_mean = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    return rep;
}

}  // namespace scl
