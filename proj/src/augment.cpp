#include "scl/augment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "scl/error.hpp"

namespace scl {

namespace {

void check_probabilities(const Vec& p, const char* what) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double v = p(i);
        if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
            throw IndexOutOfRange(std::string(what) + ": probability " + std::to_string(v) +
                                  " at entry " + std::to_string(i) + " outside [0, 1]");
    }
}

}  // namespace

EdgeFlow mask_flow(const EdgeFlow& x, const Vec& drop_prob, Rng& rng) {
    if (x.size() != drop_prob.size())
        throw DimensionMismatch("mask_flow: flow has " + std::to_string(x.size()) +
                                " entries, probabilities " + std::to_string(drop_prob.size()));
    check_probabilities(drop_prob, "mask_flow");
    EdgeFlow out = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        // Drawing uniform() >= p keeps the edge; exact at p = 0 and p = 1.
        if (rng.uniform() < drop_prob(i)) out(i) = 0.0;
    }
    return out;
}

EdgeFlow mask_flow(const EdgeFlow& x, const MaskProbabilities& probs, Rng& rng) {
    return mask_flow(x, probs.p, rng);
}

double expected_gap(const EdgeFlow& x, const Mat& u_s, const Vec& keep_prob) {
    if (u_s.rows() != x.size())
        throw DimensionMismatch("expected_gap: basis has " + std::to_string(u_s.rows()) +
                                " rows, flow " + std::to_string(x.size()) + " entries");
    if (keep_prob.size() != x.size())
        throw DimensionMismatch("expected_gap: keep probabilities have " +
                                std::to_string(keep_prob.size()) + " entries, flow " +
                                std::to_string(x.size()));
    check_probabilities(keep_prob, "expected_gap");
    if (u_s.cols() == 0) return 0.0;

    const Vec dropped = x.cwiseProduct(Vec::Ones(x.size()) - keep_prob);
    double gap = (u_s.transpose() * dropped).squaredNorm();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double g_ii = u_s.row(i).squaredNorm();
        gap += g_ii * x(i) * x(i) * keep_prob(i) * (1.0 - keep_prob(i));
    }
    return gap;
}

ObjectiveValue objective_and_gradient(const EdgeFlow& x, const HodgeBasis& basis, const Vec& p,
                                      const SpectralGapObjective& obj) {
    const Eigen::Index n = x.size();
    if (basis.num_edges() != n)
        throw DimensionMismatch("objective_and_gradient: basis has " +
                                std::to_string(basis.num_edges()) + " edges, flow " +
                                std::to_string(n));
    if (p.size() != n)
        throw DimensionMismatch("objective_and_gradient: probabilities have " +
                                std::to_string(p.size()) + " entries, flow " + std::to_string(n));
    check_probabilities(p, "objective_and_gradient");
    if (obj.coef_grad() == 0.0 && obj.coef_curl() == 0.0 && obj.coef_harm() == 0.0)
        throw NonFiniteObjective("objective_and_gradient: all component coefficients are zero");

    ObjectiveValue out;
    out.grad = Vec::Zero(n);
    const Vec xp = x.cwiseProduct(p);

    auto add_component = [&](const Mat& u_s, double coef) {
        if (coef == 0.0 || u_s.cols() == 0) return;
        // In terms of drop probabilities the expected gap is
        //   || U_S^T (x o p) ||^2 + sum_i ||U_S row i||^2 x_i^2 p_i (1 - p_i),
        // with gradient 2 x_i [U_S U_S^T (x o p)]_i + ||row i||^2 x_i^2 (1 - 2 p_i).
        const Vec coeffs = u_s.transpose() * xp;
        const Vec proj = u_s * coeffs;
        double gap = coeffs.squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double g_ii = u_s.row(i).squaredNorm();
            gap += g_ii * x(i) * x(i) * p(i) * (1.0 - p(i));
            out.grad(i) += coef * (2.0 * x(i) * proj(i) + g_ii * x(i) * x(i) * (1.0 - 2.0 * p(i)));
        }
        out.value += coef * gap;
    };

    add_component(basis.u_grad, obj.coef_grad());
    add_component(basis.u_curl, obj.coef_curl());
    add_component(basis.u_harm, obj.coef_harm());

    if (!std::isfinite(out.value) || !out.grad.allFinite())
        throw NonFiniteObjective("objective_and_gradient: non-finite value or gradient");
    return out;
}

MaskProbabilities project_feasible(const Vec& v, double budget) {
    if (!(budget > 0.0)) throw IndexOutOfRange("project_feasible: budget must be positive");
    if (!v.allFinite()) throw NonFiniteObjective("project_feasible: non-finite input");

    auto clamp_shifted = [&](double lambda) {
        return (v.array() - lambda).cwiseMax(0.0).cwiseMin(1.0).matrix().eval();
    };

    Vec p = clamp_shifted(0.0);
    if (p.sum() <= budget) return {std::move(p), budget};

    // The box-clamped L1 mass is non-increasing in the shift lambda, zero
    // once lambda reaches max(v); bisect to the budget.
    double lo = 0.0;
    double hi = v.maxCoeff();
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (clamp_shifted(mid).sum() > budget)
            lo = mid;
        else
            hi = mid;
    }
    return {clamp_shifted(hi), budget};
}

OptimizeResult optimize_probabilities(const EdgeFlow& x, const HodgeBasis& basis,
                                      const SpectralGapObjective& obj, double budget, double step,
                                      int iterations) {
    const Eigen::Index n = x.size();
    if (n == 0) throw DimensionMismatch("optimize_probabilities: empty flow");
    if (!(budget > 0.0) || budget > static_cast<double>(n))
        throw IndexOutOfRange("optimize_probabilities: budget must lie in (0, num_edges]");
    if (!(step > 0.0)) throw IndexOutOfRange("optimize_probabilities: step must be positive");
    if (iterations < 0) throw IndexOutOfRange("optimize_probabilities: negative iteration count");

    Vec p = Vec::Constant(n, std::min(budget / static_cast<double>(n), 0.5));

    OptimizeResult best;
    best.objective = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
        const ObjectiveValue ov = objective_and_gradient(x, basis, p, obj);
        if (ov.value < best.objective) {
            best.objective = ov.value;
            best.probs = {p, budget};
            best.iterations = it;
        }
        if (it == iterations) break;
        p = project_feasible(p - step * ov.grad, budget).p;
    }
    return best;
}

void save_probabilities(const std::string& path, const std::vector<CachedProbabilities>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open probabilities cache for writing: " + path);
    for (const auto& rec : records) {
        nlohmann::json j;
        j["index"] = rec.index;
        j["p"] = std::vector<double>(rec.p.data(), rec.p.data() + rec.p.size());
        j["objective"] = rec.objective;
        j["budget"] = rec.budget;
        out << j.dump() << '\n';
    }
}

std::vector<CachedProbabilities> load_probabilities(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open probabilities cache: " + path);
    std::vector<CachedProbabilities> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            CachedProbabilities rec;
            rec.index = j.at("index").get<int>();
            auto pv = j.at("p").get<std::vector<double>>();
            rec.p = Eigen::Map<const Vec>(pv.data(), static_cast<Eigen::Index>(pv.size()));
            rec.objective = j.at("objective").get<double>();
            rec.budget = j.at("budget").get<double>();
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("probabilities cache line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace scl
