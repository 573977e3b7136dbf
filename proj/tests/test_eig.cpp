#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "scl/eig.hpp"
#include "scl/error.hpp"
#include "scl/simplicial.hpp"

#include "helpers.hpp"

using namespace scl;
using namespace scl::testing;

namespace {

Mat random_symmetric(int n, Rng& rng) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    return 0.5 * (a + a.transpose());
}

double orthonormality_defect(const Mat& u) {
    return (u.transpose() * u - Mat::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("identity matrix") {
    EigResult r = eig_sym(Mat::Identity(3, 3));
    CHECK((r.eigenvalues - Vec::Ones(3)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(orthonormality_defect(r.eigenvectors) <= 1e-12);
    CHECK(eig_residual(Mat::Identity(3, 3), r) <= 1e-12);
}

TEST_CASE("diagonal matrix sorts eigenvalues ascending") {
    Vec d(3);
    d << 3.0, 1.0, 2.0;
    EigResult r = eig_sym(Mat(d.asDiagonal()));
    CHECK(r.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.eigenvalues(1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.eigenvalues(2) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("2x2 matrix matches the quadratic formula") {
    Mat m(2, 2);
    m << 2.0, 1.0,
         1.0, 3.0;
    // Eigenvalues (5 +- sqrt(5)) / 2.
    EigResult r = eig_sym(m);
    const double s = std::sqrt(5.0);
    CHECK(r.eigenvalues(0) == doctest::Approx((5.0 - s) / 2.0).epsilon(1e-12));
    CHECK(r.eigenvalues(1) == doctest::Approx((5.0 + s) / 2.0).epsilon(1e-12));
}

TEST_CASE("filled triangle edge Laplacian is three times the identity") {
    HodgeLaplacians lap = hodge_laplacians(incidence_matrices(filled_triangle()));
    EigResult r = eig_sym(dense(lap.l1));
    CHECK((r.eigenvalues - 3.0 * Vec::Ones(3)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("residual and orthonormality stay below 1e-8 up to size 200") {
    Rng rng(41);
    for (int n : {3, 10, 50, 120, 200}) {
        Mat m = random_symmetric(n, rng);
        EigResult r = eig_sym(m);
        CAPTURE(n);
        CHECK(eig_residual(m, r) <= 1e-8);
        CHECK(orthonormality_defect(r.eigenvectors) <= 1e-8);
        for (int i = 1; i < n; ++i) CHECK(r.eigenvalues(i) >= r.eigenvalues(i - 1));
    }
}

TEST_CASE("eigenvalues agree with an independent solver") {
    Rng rng(42);
    for (int n : {5, 20, 60}) {
        Mat m = random_symmetric(n, rng);
        EigResult r = eig_sym(m);
        Eigen::SelfAdjointEigenSolver<Mat> ref(m);
        CAPTURE(n);
        CHECK((r.eigenvalues - ref.eigenvalues()).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("rejects non-square and asymmetric input") {
    CHECK_THROWS_AS(eig_sym(Mat::Zero(2, 3)), DimensionMismatch);
    Mat m(2, 2);
    m << 0.0, 1.0,
         0.0, 0.0;
    CHECK_THROWS_AS(eig_sym(m), DimensionMismatch);
}

TEST_CASE("refuses to report convergence it did not reach") {
    Rng rng(43);
    Mat m = random_symmetric(12, rng);
    JacobiOptions opts;
    opts.max_sweeps = 0;
    CHECK_THROWS_AS(eig_sym(m, opts), NoConvergence);
}
