#pragma once

#include "scl/simplicial.hpp"

namespace scl {

struct EigResult {
    Vec eigenvalues;   // ascending
    Mat eigenvectors;  // orthonormal columns, aligned with eigenvalues
};

struct JacobiOptions {
    // Off-diagonal entries below off_threshold * max|M_ij| count as zero.
    double off_threshold = 1e-12;
    int max_sweeps = 100;
};

// Cyclic Jacobi eigensolver for symmetric matrices. Throws NoConvergence if
// the off-diagonal mass has not dropped below the threshold after
// max_sweeps full sweeps, and DimensionMismatch for non-square or visibly
// asymmetric input.
EigResult eig_sym(const Mat& m, const JacobiOptions& opts = {});

// max_ij |M U - U diag(lambda)|, the residual bounded by the acceptance
// tolerance of the solver.
double eig_residual(const Mat& m, const EigResult& r);

}  // namespace scl
