#pragma once

#include <string>
#include <vector>

#include "scl/rng.hpp"
#include "scl/simplicial.hpp"

namespace scl {

// Binary linear classifier trained on frozen embeddings; labels are 0/1,
// internally mapped to -1/+1. penalty_c is the inverse-regularization
// constant: the trained objective is mean hinge loss + ||w||^2 / (2 C n).
struct LinearSvmModel {
    Vec weight;
    double bias = 0.0;
    double penalty_c = 1.0;
};

// Pegasos-style averaged subgradient descent. Deterministic given the rng.
LinearSvmModel fit_linear_svm(const std::vector<Vec>& embeddings, const std::vector<int>& labels,
                              double penalty_c, Rng& rng, int epochs = 100);

int svm_predict(const LinearSvmModel& model, const Vec& z);

double svm_accuracy(const LinearSvmModel& model, const std::vector<Vec>& embeddings,
                    const std::vector<int>& labels);

// Regularized objective the solver minimizes, for verifying training
// progress.
double svm_objective(const LinearSvmModel& model, const std::vector<Vec>& embeddings,
                     const std::vector<int>& labels);

// K-fold cross validation over the penalty grid; returns the winning C,
// with ties broken toward the smaller value. Folds are deterministic
// round-robin assignments of a shuffled index list.
double cross_validate_penalty(const std::vector<Vec>& embeddings, const std::vector<int>& labels,
                              const std::vector<double>& c_grid, int folds, Rng& rng,
                              int epochs = 100);

struct EvaluationReport {
    std::string variant;
    std::vector<double> accuracies;  // one per split
    double mean = 0.0;
    double stderr_mean = 0.0;        // sample standard deviation / sqrt(k)
};

EvaluationReport aggregate_report(const std::string& variant, const std::vector<double>& accuracies);

}  // namespace scl
