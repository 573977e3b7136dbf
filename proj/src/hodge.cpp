#include "scl/hodge.hpp"

#include <cmath>

#include "scl/error.hpp"

namespace scl {

namespace {

// Columns of r.eigenvectors whose eigenvalue is above (keep_nonzero) or
// below-or-equal (keep_nonzero == false) the null threshold.
std::pair<Mat, Vec> select_columns(const EigResult& r, double zero_tol, bool keep_nonzero) {
    const int n = static_cast<int>(r.eigenvalues.size());
    const double lam_max = n > 0 ? std::abs(r.eigenvalues(n - 1)) : 0.0;
    const double thr = zero_tol * std::max(1.0, lam_max);

    std::vector<int> cols;
    for (int i = 0; i < n; ++i) {
        const bool nonzero = r.eigenvalues(i) > thr;
        if (nonzero == keep_nonzero) cols.push_back(i);
    }
    Mat u(r.eigenvectors.rows(), static_cast<int>(cols.size()));
    Vec lam(static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        u.col(static_cast<int>(k)) = r.eigenvectors.col(cols[k]);
        lam(static_cast<int>(k)) = r.eigenvalues(cols[k]);
    }
    return {std::move(u), std::move(lam)};
}

}  // namespace

HodgeBasis hodge_basis(const HodgeLaplacians& lap, double zero_tol, const JacobiOptions& eig_opts) {
    const Mat low = Mat(lap.l1_low);
    const Mat up = Mat(lap.l1_up);
    const Mat full = Mat(lap.l1);

    HodgeBasis basis;
    {
        auto [u, lam] = select_columns(eig_sym(low, eig_opts), zero_tol, true);
        basis.u_grad = std::move(u);
        basis.eigvals_grad = std::move(lam);
    }
    {
        auto [u, lam] = select_columns(eig_sym(up, eig_opts), zero_tol, true);
        basis.u_curl = std::move(u);
        basis.eigvals_curl = std::move(lam);
    }
    {
        auto [u, lam] = select_columns(eig_sym(full, eig_opts), zero_tol, false);
        basis.u_harm = std::move(u);
    }

    const int n1 = static_cast<int>(low.rows());
    if (basis.dim_grad() + basis.dim_curl() + basis.dim_harm() != n1)
        throw DimensionMismatch("hodge_basis: subspace dimensions " +
                                std::to_string(basis.dim_grad()) + "+" +
                                std::to_string(basis.dim_curl()) + "+" +
                                std::to_string(basis.dim_harm()) + " do not sum to " +
                                std::to_string(n1));
    return basis;
}

HodgeEmbedding hodge_project(const EdgeFlow& x, const HodgeBasis& basis) {
    if (x.size() != basis.num_edges())
        throw DimensionMismatch("hodge_project: flow has " + std::to_string(x.size()) +
                                " entries, basis expects " + std::to_string(basis.num_edges()));
    HodgeEmbedding e;
    e.grad = basis.u_grad.transpose() * x;
    e.curl = basis.u_curl.transpose() * x;
    e.harm = basis.u_harm.transpose() * x;
    return e;
}

HodgeComponents hodge_decompose(const EdgeFlow& x, const HodgeBasis& basis) {
    HodgeEmbedding e = hodge_project(x, basis);
    HodgeComponents c;
    c.grad = basis.u_grad * e.grad;
    c.curl = basis.u_curl * e.curl;
    c.harm = basis.u_harm * e.harm;
    return c;
}

}  // namespace scl
