#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "helpers.hpp"
#include "scl/contrastive.hpp"
#include "scl/error.hpp"
#include "scl/hodge.hpp"
#include "scl/rng.hpp"
#include "scl/scnn.hpp"
#include "scl/simplicial.hpp"

using namespace scl;
using scl::testing::hollow_cycle;
using scl::testing::max_relative_error;
using scl::testing::random_flow;
using scl::testing::triangle_with_hollow_square;

namespace {

ContrastiveBatch batch_from_z(const std::vector<Vec>& z) {
    ContrastiveBatch b;
    const int views = static_cast<int>(z.size());
    b.anchor_index.resize(static_cast<std::size_t>(views / 2));
    for (int i = 0; i < views / 2; ++i) b.anchor_index[static_cast<std::size_t>(i)] = i;
    b.views.assign(static_cast<std::size_t>(views), EdgeFlow::Zero(1));
    b.z = z;
    return b;
}

std::vector<Vec> random_z(int num_anchors, int dim, Rng& rng) {
    std::vector<Vec> z;
    for (int i = 0; i < 2 * num_anchors; ++i) z.push_back(random_flow(dim, rng));
    return z;
}

// Direct textbook evaluation without the log-sum-exp shift, used as an
// independent reference for the production loss.
double reference_loss(const std::vector<Vec>& z, double tau, bool include_positive,
                      const std::vector<std::vector<double>>* weights, int* pairs_out = nullptr) {
    const int v = static_cast<int>(z.size());
    auto cos = [&](int i, int j) {
        return z[static_cast<std::size_t>(i)].dot(z[static_cast<std::size_t>(j)]) /
               (z[static_cast<std::size_t>(i)].norm() * z[static_cast<std::size_t>(j)].norm());
    };
    double loss = 0.0;
    int pairs = 0;
    for (int a = 0; a < v; ++a) {
        const int b = a ^ 1;
        double denom = 0.0;
        int k = 0;
        for (int m = 0; m < v; ++m) {
            if (m / 2 == a / 2) continue;
            const double w = weights ? (*weights)[static_cast<std::size_t>(a)]
                                               [static_cast<std::size_t>(k)]
                                     : 1.0;
            ++k;
            denom += w * std::exp(cos(a, m) / tau);
        }
        if (include_positive) denom += std::exp(cos(a, b) / tau);
        loss += -cos(a, b) / tau + std::log(denom);
        ++pairs;
    }
    if (pairs_out) *pairs_out = pairs;
    return loss;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    Vec a(2), b(2), c(2);
    a << 1.0, 0.0;
    b << 3.0, 0.0;
    c << 0.0, 2.0;
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine_similarity(a, -b) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(std::abs(cosine_similarity(a, c)) < 1e-15);
    CHECK_THROWS_AS(cosine_similarity(a, Vec::Ones(3)), DimensionMismatch);
    CHECK_THROWS_AS(cosine_similarity(a, Vec::Zero(2)), DegenerateVector);
}

TEST_CASE("loss on a hand-crafted two-anchor batch") {
    Vec plus(2), minus(2);
    plus << 1.0, 0.0;
    minus << -1.0, 0.0;
    const ContrastiveBatch batch = batch_from_z({plus, plus, minus, minus});

    const LossResult res = infonce_loss(batch, 1.0);
    // Each of the four ordered pairs contributes -1 + log(2 e^{-1}).
    CHECK(res.num_pairs == 4);
    CHECK(res.loss == doctest::Approx(4.0 * (std::log(2.0) - 2.0)).epsilon(1e-12));
}

TEST_CASE("loss agrees with a direct reference implementation") {
    Rng rng(101);
    for (const bool include_positive : {false, true}) {
        const std::vector<Vec> z = random_z(4, 5, rng);
        const ContrastiveBatch batch = batch_from_z(z);
        const double tau = 0.4;

        int pairs = 0;
        const double want = reference_loss(z, tau, include_positive, nullptr, &pairs);
        const LossResult got = infonce_loss(batch, tau, include_positive);
        CHECK(got.num_pairs == pairs);
        CHECK(got.loss == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("weighted loss agrees with the reference and with uniform-weight identity") {
    Rng rng(102);
    const int anchors = 3;
    const std::vector<Vec> z = random_z(anchors, 4, rng);
    const ContrastiveBatch batch = batch_from_z(z);
    const double tau = 0.7;
    const int num_neg = 2 * (anchors - 1);

    std::vector<std::vector<double>> weights(z.size());
    for (auto& w : weights) {
        w.resize(static_cast<std::size_t>(num_neg));
        for (double& wi : w) wi = 0.1 + rng.uniform();
    }
    const LossResult got = weighted_infonce_loss(batch, tau, weights);
    const double want = reference_loss(z, tau, false, &weights);
    CHECK(got.loss == doctest::Approx(want).epsilon(1e-10));

    // Uniform weights 1/M shift each pair's loss by exactly -log M and leave
    // the gradient untouched.
    std::vector<std::vector<double>> uniform(
        z.size(), std::vector<double>(static_cast<std::size_t>(num_neg), 1.0 / num_neg));
    const LossResult plain = infonce_loss(batch, tau);
    const LossResult shifted = weighted_infonce_loss(batch, tau, uniform);
    CHECK(shifted.loss ==
          doctest::Approx(plain.loss - plain.num_pairs * std::log(double(num_neg))).epsilon(1e-10));
    REQUIRE(shifted.dz.size() == plain.dz.size());
    for (std::size_t i = 0; i < plain.dz.size(); ++i)
        CHECK((shifted.dz[i] - plain.dz[i]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("raising a negative's weight raises the loss") {
    Rng rng(103);
    const std::vector<Vec> z = random_z(2, 3, rng);
    const ContrastiveBatch batch = batch_from_z(z);
    std::vector<std::vector<double>> weights(4, std::vector<double>{1.0, 1.0});
    const double before = weighted_infonce_loss(batch, 0.5, weights).loss;
    weights[0][0] = 3.0;
    const double after = weighted_infonce_loss(batch, 0.5, weights).loss;
    CHECK(after > before);
}

TEST_CASE("loss gradients match central finite differences") {
    Rng rng(104);
    const int anchors = 3;
    const int dim = 4;
    std::vector<Vec> z = random_z(anchors, dim, rng);
    const double tau = 0.6;
    const int num_neg = 2 * (anchors - 1);

    std::vector<std::vector<double>> weights(z.size());
    for (auto& w : weights) {
        w.resize(static_cast<std::size_t>(num_neg));
        for (double& wi : w) wi = 0.2 + rng.uniform();
    }

    struct Case {
        bool weighted;
        bool include_positive;
    };
    for (const Case c : {Case{false, false}, Case{false, true}, Case{true, false}}) {
        auto eval = [&](const std::vector<Vec>& zz) {
            const ContrastiveBatch b = batch_from_z(zz);
            return c.weighted ? weighted_infonce_loss(b, tau, weights, c.include_positive).loss
                              : infonce_loss(b, tau, c.include_positive).loss;
        };
        const ContrastiveBatch batch = batch_from_z(z);
        const LossResult res = c.weighted
                                   ? weighted_infonce_loss(batch, tau, weights, c.include_positive)
                                   : infonce_loss(batch, tau, c.include_positive);

        Vec analytic(static_cast<Eigen::Index>(z.size()) * dim);
        Vec numeric(analytic.size());
        Eigen::Index at = 0;
        const double h = 1e-6;
        for (std::size_t i = 0; i < z.size(); ++i) {
            for (int d = 0; d < dim; ++d, ++at) {
                analytic(at) = res.dz[i](d);
                std::vector<Vec> zp = z;
                std::vector<Vec> zm = z;
                zp[i](d) += h;
                zm[i](d) -= h;
                numeric(at) = (eval(zp) - eval(zm)) / (2.0 * h);
            }
        }
        CHECK(max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("loss is invariant under a common rotation of the representations") {
    Rng rng(105);
    const int dim = 5;
    const std::vector<Vec> z = random_z(3, dim, rng);

    Mat g(dim, dim);
    for (int i = 0; i < dim; ++i) g.row(i) = random_flow(dim, rng).transpose();
    const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();

    std::vector<Vec> rotated;
    for (const Vec& zi : z) rotated.push_back(q * zi);

    const double a = infonce_loss(batch_from_z(z), 0.5).loss;
    const double b = infonce_loss(batch_from_z(rotated), 0.5).loss;
    CHECK(a == doctest::Approx(b).epsilon(1e-10));
}

TEST_CASE("gradient descent on the representations lowers the loss") {
    Rng rng(106);
    std::vector<Vec> z = random_z(3, 4, rng);
    const double tau = 0.5;
    const double initial = infonce_loss(batch_from_z(z), tau).loss;
    double last = initial;
    for (int it = 0; it < 10; ++it) {
        const LossResult res = infonce_loss(batch_from_z(z), tau);
        last = res.loss;
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 1e-2 * res.dz[i];
    }
    CHECK(infonce_loss(batch_from_z(z), tau).loss < initial);
    CHECK(last <= initial);
}

TEST_CASE("loss input validation") {
    Rng rng(107);
    const std::vector<Vec> z = random_z(2, 3, rng);

    // Fewer than two anchors cannot form a batch with negatives.
    ContrastiveBatch one = batch_from_z({z[0], z[1]});
    CHECK_THROWS_AS(infonce_loss(one, 0.5), BatchTooSmall);

    const ContrastiveBatch batch = batch_from_z(z);
    CHECK_THROWS_AS(infonce_loss(batch, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(infonce_loss(batch, -1.0), std::invalid_argument);

    std::vector<Vec> degenerate = z;
    degenerate[2] = Vec::Zero(3);
    CHECK_THROWS_AS(infonce_loss(batch_from_z(degenerate), 0.5), DegenerateVector);

    std::vector<Vec> ragged = z;
    ragged[1] = Vec::Ones(4);
    CHECK_THROWS_AS(infonce_loss(batch_from_z(ragged), 0.5), DimensionMismatch);

    std::vector<std::vector<double>> short_outer(3, std::vector<double>{1.0, 1.0});
    CHECK_THROWS_AS(weighted_infonce_loss(batch, 0.5, short_outer), WeightDimensionMismatch);
    std::vector<std::vector<double>> short_inner(4, std::vector<double>{1.0});
    CHECK_THROWS_AS(weighted_infonce_loss(batch, 0.5, short_inner), WeightDimensionMismatch);
    std::vector<std::vector<double>> negative(4, std::vector<double>{1.0, -0.5});
    CHECK_THROWS_AS(weighted_infonce_loss(batch, 0.5, negative), WeightDimensionMismatch);

    std::vector<std::vector<double>> starved(4, std::vector<double>{1.0, 1.0});
    starved[0] = {0.0, 0.0};
    CHECK_THROWS_AS(weighted_infonce_loss(batch, 0.5, starved), AllZeroScores);
}

TEST_CASE("spectral similarity of a flow with itself and with its negation") {
    const SimplicialComplex2 sc = triangle_with_hollow_square();
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(sc)));
    REQUIRE(basis.dim_grad() >= 1);
    REQUIRE(basis.dim_curl() >= 1);
    REQUIRE(basis.dim_harm() >= 1);

    const EdgeFlow x = basis.u_grad.col(0) + basis.u_curl.col(0) + basis.u_harm.col(0);
    const SpectralGammas gammas;
    const double self = spectral_similarity(x, x, basis, gammas);
    CHECK(self >= 0.0);
    CHECK(self < 1e-10);
    CHECK(spectral_similarity(x, -x, basis, gammas) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("components with zero weight do not influence the spectral score") {
    const SimplicialComplex2 sc = triangle_with_hollow_square();
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(sc)));

    const EdgeFlow a = basis.u_grad.col(0) + basis.u_harm.col(0);
    const EdgeFlow b1 = basis.u_grad.col(1) + basis.u_harm.col(0);
    const EdgeFlow b2 = basis.u_grad.col(2) - 2.0 * basis.u_grad.col(1) + basis.u_harm.col(0);

    SpectralGammas no_grad;
    no_grad.grad = 0.0;
    const double s1 = spectral_similarity(a, b1, basis, no_grad);
    const double s2 = spectral_similarity(a, b2, basis, no_grad);
    CHECK(std::abs(s1 - s2) < 1e-12);
}

TEST_CASE("a missing subspace scores the neutral distance one") {
    const SimplicialComplex2 sc = hollow_cycle();
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(sc)));
    REQUIRE(basis.dim_curl() == 0);

    EdgeFlow a(3), b(3);
    a << 1.0, 0.0, 0.0;
    b << 0.0, 1.0, 0.0;
    SpectralGammas curl_only;
    curl_only.harm = 0.0;
    curl_only.grad = 0.0;
    CHECK(spectral_similarity(a, b, basis, curl_only) == 1.0);
}

TEST_CASE("weight normalization") {
    const auto quarter = normalize_weights({1.0, 1.0, 1.0, 1.0});
    for (double w : quarter) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));

    const auto skewed = normalize_weights({1.0, 3.0});
    CHECK(skewed[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(skewed[1] == doctest::Approx(0.75).epsilon(1e-15));

    Rng rng(108);
    std::vector<double> scores(7);
    for (double& s : scores) s = rng.uniform();
    const auto w = normalize_weights(scores);
    double total = 0.0;
    for (double wi : w) total += wi;
    CHECK(std::abs(total - 1.0) < 1e-12);

    CHECK_THROWS_AS(normalize_weights({0.0, 0.0}), AllZeroScores);
    CHECK_THROWS_AS(normalize_weights({1.0, -0.1}), std::invalid_argument);
}

TEST_CASE("pairwise spectral scores are symmetric with zero diagonal") {
    const SimplicialComplex2 sc = triangle_with_hollow_square();
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(sc)));
    Rng rng(109);
    std::vector<EdgeFlow> flows;
    for (int i = 0; i < 5; ++i) flows.push_back(random_flow(sc.num_edges(), rng));

    const SpectralGammas gammas;
    const Mat s = pairwise_spectral_scores(flows, basis, gammas);
    REQUIRE(s.rows() == 5);
    REQUIRE(s.cols() == 5);
    CHECK(s == s.transpose().eval());
    CHECK(s.diagonal().isZero(0.0));
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j)
            CHECK(s(i, j) ==
                  doctest::Approx(spectral_similarity(flows[i], flows[j], basis, gammas))
                      .epsilon(1e-12));
}

TEST_CASE("batch weights read the right score entries and normalize per view") {
    Rng rng(110);
    const int num_flows = 5;
    Mat scores = Mat::Zero(num_flows, num_flows);
    for (int i = 0; i < num_flows; ++i)
        for (int j = i + 1; j < num_flows; ++j) {
            scores(i, j) = 0.1 + rng.uniform();
            scores(j, i) = scores(i, j);
        }

    std::vector<Vec> z = random_z(3, 3, rng);
    ContrastiveBatch batch = batch_from_z(z);
    batch.anchor_index = {0, 2, 4};

    const auto weights = spectral_weights_for_batch(batch, scores);
    REQUIRE(weights.size() == 6);
    for (const auto& w : weights) {
        REQUIRE(w.size() == 4);
        double total = 0.0;
        for (double wi : w) total += wi;
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
    // View 0 belongs to dataset flow 0; its negatives are the two views of
    // flow 2 followed by the two views of flow 4.
    const double denom = 2.0 * scores(0, 2) + 2.0 * scores(0, 4);
    CHECK(weights[0][0] == doctest::Approx(scores(0, 2) / denom).epsilon(1e-12));
    CHECK(weights[0][1] == doctest::Approx(scores(0, 2) / denom).epsilon(1e-12));
    CHECK(weights[0][2] == doctest::Approx(scores(0, 4) / denom).epsilon(1e-12));
    CHECK(weights[0][3] == doctest::Approx(scores(0, 4) / denom).epsilon(1e-12));

    batch.anchor_index = {0, 2, 9};
    CHECK_THROWS_AS(spectral_weights_for_batch(batch, scores), IndexOutOfRange);
    CHECK_THROWS_AS(spectral_weights_for_batch(batch, Mat::Zero(2, 3)), DimensionMismatch);
}

namespace {

struct EncoderSetup {
    SimplicialComplex2 sc;
    HodgeLaplacians lap;
    ScnnParameters params;
    std::vector<EdgeFlow> flows;
};

EncoderSetup encoder_setup(Rng& rng) {
    EncoderSetup s;
    s.sc = triangle_with_hollow_square();
    s.lap = hodge_laplacians(incidence_matrices(s.sc));
    ScnnShape shape;
    shape.channels = {4};
    shape.embed_dim = 3;
    s.params = init_parameters(shape, s.sc.num_edges(), rng);
    for (int i = 0; i < 4; ++i) s.flows.push_back(random_flow(s.sc.num_edges(), rng));
    return s;
}

}  // namespace

TEST_CASE("building a batch encodes two views per anchor") {
    Rng rng(111);
    EncoderSetup s = encoder_setup(rng);
    const Vec p = Vec::Constant(s.sc.num_edges(), 0.3);

    Rng draws(7);
    const ContrastiveBatch batch =
        build_batch({0, 1, 2}, s.flows, {&p}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false);
    CHECK(batch.num_anchors() == 3);
    CHECK(batch.num_views() == 6);
    CHECK(batch.z.size() == 6);
    CHECK(batch.tapes.empty());
    CHECK(batch.anchor_index == std::vector<int>{0, 1, 2});
    for (const Vec& z : batch.z) CHECK(z.size() == 3);
    for (int v = 0; v < 6; ++v) {
        CHECK(batch.partner(v) == (v ^ 1));
        CHECK(batch.anchor_of(v) == v / 2);
    }

    // Masking only ever zeroes entries, so views agree with their anchor on
    // their support.
    for (int v = 0; v < 6; ++v) {
        const EdgeFlow& anchor = s.flows[static_cast<std::size_t>(batch.anchor_index[v / 2])];
        for (Eigen::Index e = 0; e < anchor.size(); ++e)
            if (batch.views[v](e) != 0.0) CHECK(batch.views[v](e) == anchor(e));
    }

    Rng again(7);
    const ContrastiveBatch repeat =
        build_batch({0, 1, 2}, s.flows, {&p}, s.params, s.lap.l1_low, s.lap.l1_up, again, false);
    for (int v = 0; v < 6; ++v) {
        CHECK(batch.views[v] == repeat.views[v]);
        CHECK(batch.z[v] == repeat.z[v]);
    }

    Rng tape_rng(7);
    const ContrastiveBatch taped =
        build_batch({0, 1, 2}, s.flows, {&p}, s.params, s.lap.l1_low, s.lap.l1_up, tape_rng, true);
    REQUIRE(taped.tapes.size() == 6);
    for (int v = 0; v < 6; ++v) CHECK(taped.tapes[v].z == taped.z[v]);

    const LossResult res = infonce_loss(batch, 0.5);
    CHECK(res.num_pairs == 6);
    CHECK(std::isfinite(res.loss));
}

TEST_CASE("per-anchor mask probabilities are accepted and validated") {
    Rng rng(112);
    EncoderSetup s = encoder_setup(rng);
    const Vec p0 = Vec::Constant(s.sc.num_edges(), 0.1);
    const Vec p1 = Vec::Constant(s.sc.num_edges(), 0.6);

    Rng draws(8);
    const ContrastiveBatch batch = build_batch({0, 1}, s.flows, {&p0, &p1}, s.params, s.lap.l1_low,
                                               s.lap.l1_up, draws, false);
    CHECK(batch.num_views() == 4);

    CHECK_THROWS_AS(build_batch({0, 1}, s.flows, {&p0, &p1, &p0}, s.params, s.lap.l1_low,
                                s.lap.l1_up, draws, false),
                    DimensionMismatch);
    CHECK_THROWS_AS(
        build_batch({0}, s.flows, {&p0}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false),
        BatchTooSmall);
    CHECK_THROWS_AS(
        build_batch({0, 9}, s.flows, {&p0}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false),
        IndexOutOfRange);
    CHECK_THROWS_AS(
        build_batch({0, -1}, s.flows, {&p0}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false),
        IndexOutOfRange);
}

TEST_CASE("aggressive masking never produces an all-zero view") {
    Rng rng(113);
    EncoderSetup s = encoder_setup(rng);
    s.flows[1] = EdgeFlow::Zero(s.sc.num_edges());
    s.flows[1](2) = 5.0;
    const Vec p = Vec::Constant(s.sc.num_edges(), 0.999);

    Rng draws(9);
    for (int round = 0; round < 20; ++round) {
        const ContrastiveBatch batch =
            build_batch({0, 1}, s.flows, {&p}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false);
        for (int v = 0; v < batch.num_views(); ++v) {
            const EdgeFlow& view = batch.views[static_cast<std::size_t>(v)];
            CHECK((view.array() != 0.0).any());
            const EdgeFlow& anchor = s.flows[static_cast<std::size_t>(batch.anchor_index[v / 2])];
            for (Eigen::Index e = 0; e < view.size(); ++e)
                if (view(e) != 0.0) CHECK(view(e) == anchor(e));
        }
    }
}

TEST_CASE("a zero anchor flow is rejected") {
    Rng rng(114);
    EncoderSetup s = encoder_setup(rng);
    s.flows[3] = EdgeFlow::Zero(s.sc.num_edges());
    const Vec p = Vec::Constant(s.sc.num_edges(), 0.5);
    Rng draws(10);
    CHECK_THROWS_AS(
        build_batch({0, 3}, s.flows, {&p}, s.params, s.lap.l1_low, s.lap.l1_up, draws, false),
        DegenerateVector);
}
