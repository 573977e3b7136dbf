#pragma once

#include <string>
#include <vector>

#include "scl/hodge.hpp"
#include "scl/rng.hpp"
#include "scl/simplicial.hpp"

namespace scl {

// Per-edge drop probabilities for masking augmentation; entry i is the
// probability that edge i's flow value is zeroed. The budget caps the L1
// norm of p.
struct MaskProbabilities {
    Vec p;
    double budget = 0.0;
};

// Signed, weighted combination of the three expected subspace gaps that the
// probability optimizer minimizes. Defaults reward large gradient-subspace
// perturbation while penalizing curl and harmonic perturbation. On mesh-like
// complexes most edges carry more curl than gradient energy, so an equal curl
// weight pushes every drop probability to zero and the views collapse onto
// the anchor; alpha_curl = 0.5 keeps curl suppressed relative to the uniform
// scheme while leaving the gradient subspace free to absorb the budget.
struct SpectralGapObjective {
    double sign_grad = -1.0;
    double sign_curl = 1.0;
    double sign_harm = 1.0;
    double alpha_curl = 0.5;
    double alpha_harm = 1.0;

    double coef_grad() const { return sign_grad; }
    double coef_curl() const { return sign_curl * alpha_curl; }
    double coef_harm() const { return sign_harm * alpha_harm; }
};

// Independently zeroes each entry of x with its drop probability.
EdgeFlow mask_flow(const EdgeFlow& x, const MaskProbabilities& probs, Rng& rng);
EdgeFlow mask_flow(const EdgeFlow& x, const Vec& drop_prob, Rng& rng);

// E ||U_S^T x - U_S^T (x o m)||^2 over the Bernoulli mask m with keep
// probabilities q (entry i survives with probability q_i). Closed form:
//   || U_S^T (x o (1-q)) ||^2 + sum_i ||U_S row i||^2 x_i^2 q_i (1 - q_i).
double expected_gap(const EdgeFlow& x, const Mat& u_s, const Vec& keep_prob);

struct ObjectiveValue {
    double value = 0.0;
    Vec grad;
};

// Value and exact gradient of the signed gap combination as a function of
// the drop probabilities p (the expected gaps are evaluated at q = 1 - p).
ObjectiveValue objective_and_gradient(const EdgeFlow& x, const HodgeBasis& basis, const Vec& p,
                                      const SpectralGapObjective& obj);

// Euclidean projection onto { p : 0 <= p_i <= 1, sum_i p_i <= budget }.
MaskProbabilities project_feasible(const Vec& v, double budget);

struct OptimizeResult {
    MaskProbabilities probs;
    double objective = 0.0;
    int iterations = 0;
};

// Projected gradient descent from the uniform feasible start; returns the
// best iterate seen. Throws NonFiniteObjective if the objective or its
// gradient stops being finite.
OptimizeResult optimize_probabilities(const EdgeFlow& x, const HodgeBasis& basis,
                                      const SpectralGapObjective& obj, double budget,
                                      double step = 0.05, int iterations = 200);

// JSONL cache of per-flow optimized probabilities, one record per line:
// {"budget": ..., "index": i, "objective": ..., "p": [...]}.
struct CachedProbabilities {
    int index = 0;
    Vec p;
    double objective = 0.0;
    double budget = 0.0;
};

void save_probabilities(const std::string& path, const std::vector<CachedProbabilities>& records);
std::vector<CachedProbabilities> load_probabilities(const std::string& path);

}  // namespace scl
