#pragma once

#include "scl/eig.hpp"
#include "scl/simplicial.hpp"

namespace scl {

// Orthonormal bases of the three orthogonal subspaces an edge flow splits
// into: gradient flows (image of B1^T), curl flows (image of B2) and
// harmonic flows (kernel of the edge Laplacian). Gradient vectors come from
// the nonzero-eigenvalue part of the lower Laplacian, curl vectors from the
// upper one, harmonic vectors from the nullspace of their sum, so each
// block is an eigenbasis of the corresponding operator.
struct HodgeBasis {
    Mat u_grad;  // num_edges x dim_grad
    Mat u_curl;  // num_edges x dim_curl
    Mat u_harm;  // num_edges x dim_harm
    Vec eigvals_grad;  // ascending, positive
    Vec eigvals_curl;  // ascending, positive

    int num_edges() const { return static_cast<int>(u_grad.rows()); }
    int dim_grad() const { return static_cast<int>(u_grad.cols()); }
    int dim_curl() const { return static_cast<int>(u_curl.cols()); }
    int dim_harm() const { return static_cast<int>(u_harm.cols()); }
};

// Coefficients of a flow in the three subspace bases.
struct HodgeEmbedding {
    Vec grad;
    Vec curl;
    Vec harm;
};

// zero_tol separates null from nonzero eigenvalues, relative to the largest
// eigenvalue magnitude (absolute when that is below one).
HodgeBasis hodge_basis(const HodgeLaplacians& lap, double zero_tol = 1e-8,
                       const JacobiOptions& eig_opts = {});

HodgeEmbedding hodge_project(const EdgeFlow& x, const HodgeBasis& basis);

// The three flow components themselves; they sum to x.
struct HodgeComponents {
    EdgeFlow grad;
    EdgeFlow curl;
    EdgeFlow harm;
};
HodgeComponents hodge_decompose(const EdgeFlow& x, const HodgeBasis& basis);

}  // namespace scl
