#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <vector>

#include "scl/dataset.hpp"
#include "scl/rng.hpp"
#include "scl/simplicial.hpp"

namespace scl::testing {

// Rank over the rationals by Gaussian elimination, exact for the integer
// incidence matrices. Independent of any floating-point eigensolver.
inline int rational_rank(const Mat& m) {
    using Rational = boost::multiprecision::cpp_rational;
    const int rows = static_cast<int>(m.rows());
    const int cols = static_cast<int>(m.cols());
    std::vector<std::vector<Rational>> a(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        a[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(cols));
        for (int j = 0; j < cols; ++j) {
            const long long v = static_cast<long long>(m(i, j));
            a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = Rational(v);
        }
    }
    int rank = 0;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = -1;
        for (int row = rank; row < rows; ++row) {
            if (a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] != 0) {
                pivot = row;
                break;
            }
        }
        if (pivot < 0) continue;
        std::swap(a[static_cast<std::size_t>(rank)], a[static_cast<std::size_t>(pivot)]);
        const Rational lead = a[static_cast<std::size_t>(rank)][static_cast<std::size_t>(col)];
        for (int row = rank + 1; row < rows; ++row) {
            const Rational factor = a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] / lead;
            if (factor == 0) continue;
            for (int j = col; j < cols; ++j)
                a[static_cast<std::size_t>(row)][static_cast<std::size_t>(j)] -=
                    factor * a[static_cast<std::size_t>(rank)][static_cast<std::size_t>(j)];
        }
        ++rank;
    }
    return rank;
}

inline Mat dense(const SpMat& m) { return Mat(m); }

// The smallest complex with every Hodge subspace nonzero: a filled triangle
// sharing the edge (1, 2) with a hollow square, so there is one curl
// dimension and one harmonic dimension.
inline SimplicialComplex2 triangle_with_hollow_square() {
    return build_complex(5,
                         {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 4}, {3, 4}},
                         {{0, 1, 2}});
}

inline SimplicialComplex2 filled_triangle() {
    return build_complex(3, {{0, 1}, {0, 2}, {1, 2}}, {{0, 1, 2}});
}

inline SimplicialComplex2 hollow_cycle() {
    return build_complex(3, {{0, 1}, {0, 2}, {1, 2}}, {});
}

// Random holed grid: rows, cols in [2, 5]; with interior room, sometimes a
// one-cell hole. Exercises varying gradient/curl/harmonic dimensions.
inline SimplicialComplex2 random_grid_complex(Rng& rng) {
    const int rows = 2 + static_cast<int>(rng.uniform_index(4));
    const int cols = 2 + static_cast<int>(rng.uniform_index(4));
    TriangularGridSpec spec{rows, cols, {}};
    if (rows >= 3 && cols >= 3 && rng.bernoulli(0.6)) {
        const int hr = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(rows - 2)));
        const int hc = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cols - 2)));
        spec.holes.push_back({hr, hc, 1, 1});
    }
    return build_two_hole_map(spec).complex;
}

inline EdgeFlow random_flow(int n, Rng& rng) {
    EdgeFlow x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.normal();
    return x;
}

// Central finite differences of a scalar function of a vector.
inline Vec central_differences(const std::function<double(const Vec&)>& f, const Vec& at,
                               double step) {
    Vec g(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        Vec hi = at;
        Vec lo = at;
        hi(i) += step;
        lo(i) -= step;
        g(i) = (f(hi) - f(lo)) / (2.0 * step);
    }
    return g;
}

// Largest relative error between analytic and finite-difference gradients,
// ignoring coordinates where both are below floor.
inline double max_relative_error(const Vec& analytic, const Vec& numeric, double floor_abs = 1e-8) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(analytic(i)), std::abs(numeric(i)));
        if (denom < floor_abs) continue;
        worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
    }
    return worst;
}

}  // namespace scl::testing
