#include "scl/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scl/error.hpp"

namespace scl {

EigResult eig_sym(const Mat& m, const JacobiOptions& opts) {
    if (m.rows() != m.cols())
        throw DimensionMismatch("eig_sym: matrix is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
    const int n = static_cast<int>(m.rows());
    if (n == 0) return {Vec(0), Mat(0, 0)};

    const double scale = m.cwiseAbs().maxCoeff();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale))
        throw DimensionMismatch("eig_sym: input is not symmetric");

    Mat a = 0.5 * (m + m.transpose());
    Mat u = Mat::Identity(n, n);
    Vec lam(n);

    if (scale > 0.0) {
        const double thresh = opts.off_threshold * scale;
        bool converged = false;
        for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
            converged = true;
            for (int p = 0; p < n - 1; ++p) {
                for (int q = p + 1; q < n; ++q) {
                    const double apq = a(p, q);
                    if (std::abs(apq) <= thresh) continue;
                    converged = false;

                    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                    double t;
                    if (std::abs(theta) > 1e153) {
                        t = 0.5 / theta;  // theta^2 would overflow
                    } else {
                        t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                        if (theta < 0.0) t = -t;
                    }
                    const double c = 1.0 / std::sqrt(t * t + 1.0);
                    const double s = t * c;
                    const double tau = s / (1.0 + c);

                    a(p, p) -= t * apq;
                    a(q, q) += t * apq;
                    a(p, q) = a(q, p) = 0.0;
                    for (int r = 0; r < n; ++r) {
                        if (r == p || r == q) continue;
                        const double arp = a(r, p);
                        const double arq = a(r, q);
                        a(r, p) = arp - s * (arq + tau * arp);
                        a(p, r) = a(r, p);
                        a(r, q) = arq + s * (arp - tau * arq);
                        a(q, r) = a(r, q);
                    }
                    for (int r = 0; r < n; ++r) {
                        const double urp = u(r, p);
                        const double urq = u(r, q);
                        u(r, p) = urp - s * (urq + tau * urp);
                        u(r, q) = urq + s * (urp - tau * urq);
                    }
                }
            }
        }
        if (!converged)
            throw NoConvergence("eig_sym: off-diagonal mass above threshold after " +
                                std::to_string(opts.max_sweeps) + " sweeps");
    }
    lam = a.diagonal();

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return lam(i) < lam(j); });

    EigResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (int k = 0; k < n; ++k) {
        out.eigenvalues(k) = lam(order[k]);
        out.eigenvectors.col(k) = u.col(order[k]);
    }
    return out;
}

double eig_residual(const Mat& m, const EigResult& r) {
    if (r.eigenvectors.rows() == 0) return 0.0;
    Mat d = m * r.eigenvectors - r.eigenvectors * r.eigenvalues.asDiagonal();
    return d.cwiseAbs().maxCoeff();
}

}  // namespace scl
