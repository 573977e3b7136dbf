#include "scl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "scl/error.hpp"

namespace scl {

namespace {

constexpr double kNormFloor = 1e-12;

struct SimCache {
    std::vector<double> norms;
    std::vector<Vec> unit;
    Mat s;  // pairwise cosine similarities between views
};

SimCache build_sim_cache(const ContrastiveBatch& batch) {
    const int v = batch.num_views();
    if (batch.num_anchors() < 2) throw BatchTooSmall("contrastive loss needs at least 2 anchors");
    if (v != 2 * batch.num_anchors() || static_cast<int>(batch.z.size()) != v)
        throw DimensionMismatch("contrastive batch: expected two encoded views per anchor");

    SimCache cache;
    cache.norms.resize(v);
    cache.unit.resize(v);
    const auto dim = batch.z[0].size();
    Mat units(dim, v);
    for (int i = 0; i < v; ++i) {
        if (batch.z[i].size() != dim)
            throw DimensionMismatch("contrastive batch: representation sizes differ");
        const double n = batch.z[i].norm();
        if (n <= kNormFloor)
            throw DegenerateVector("contrastive batch: view " + std::to_string(i) +
                                   " has (near-)zero representation");
        cache.norms[i] = n;
        cache.unit[i] = batch.z[i] / n;
        units.col(i) = cache.unit[i];
    }
    cache.s = units.transpose() * units;
    return cache;
}

// The weighted and plain losses share this core; weights == nullptr means
// unit weight on every denominator term.
LossResult nce_core(const ContrastiveBatch& batch, double tau,
                    const std::vector<std::vector<double>>* weights, bool include_positive) {
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive loss: temperature must be positive");
    const SimCache cache = build_sim_cache(batch);
    const int v = batch.num_views();
    const int num_neg = 2 * (batch.num_anchors() - 1);
    if (num_neg == 0) throw EmptyNegatives("contrastive loss: no negatives available");

    if (weights) {
        if (static_cast<int>(weights->size()) != v)
            throw WeightDimensionMismatch("weighted loss: need one weight list per view");
        for (const auto& w : *weights) {
            if (static_cast<int>(w.size()) != num_neg)
                throw WeightDimensionMismatch("weighted loss: weight list length " +
                                              std::to_string(w.size()) + ", expected " +
                                              std::to_string(num_neg));
            for (double wi : w)
                if (!(wi >= 0.0))
                    throw WeightDimensionMismatch("weighted loss: negative or non-finite weight");
        }
    }

    LossResult out;
    out.dz.assign(v, Vec::Zero(batch.z[0].size()));

    auto add_cosine_grad = [&](int a, int b, double c) {
        out.dz[a] += (c / cache.norms[a]) * (cache.unit[b] - cache.s(a, b) * cache.unit[a]);
        out.dz[b] += (c / cache.norms[b]) * (cache.unit[a] - cache.s(a, b) * cache.unit[b]);
    };

    std::vector<int> neg;
    std::vector<double> logw;
    neg.reserve(num_neg + 1);
    logw.reserve(num_neg + 1);

    for (int a = 0; a < v; ++a) {
        const int b = batch.partner(a);
        const int own = batch.anchor_of(a);

        neg.clear();
        logw.clear();
        int k = 0;
        for (int m = 0; m < v; ++m) {
            if (batch.anchor_of(m) == own) continue;
            const double w = weights ? (*weights)[a][k] : 1.0;
            ++k;
            if (w == 0.0) continue;
            neg.push_back(m);
            logw.push_back(std::log(w) + cache.s(a, m) / tau);
        }
        if (include_positive) {
            neg.push_back(b);
            logw.push_back(cache.s(a, b) / tau);
        }
        if (neg.empty()) throw AllZeroScores("contrastive loss: denominator for view " +
                                             std::to_string(a) + " has no mass");

        const double peak = *std::max_element(logw.begin(), logw.end());
        double total = 0.0;
        for (double lw : logw) total += std::exp(lw - peak);
        const double lse = peak + std::log(total);

        out.loss += -cache.s(a, b) / tau + lse;
        out.num_pairs += 1;

        add_cosine_grad(a, b, -1.0 / tau);
        for (std::size_t i = 0; i < neg.size(); ++i) {
            const double sigma = std::exp(logw[i] - lse);
            add_cosine_grad(a, neg[i], sigma / tau);
        }
    }

    if (!std::isfinite(out.loss)) throw NonFiniteLoss("contrastive loss: non-finite value");
    for (const Vec& g : out.dz)
        if (!g.allFinite()) throw NonFiniteLoss("contrastive loss: non-finite gradient");
    return out;
}

}  // namespace

double cosine_similarity(const Vec& u, const Vec& v) {
    if (u.size() != v.size())
        throw DimensionMismatch("cosine_similarity: sizes " + std::to_string(u.size()) + " vs " +
                                std::to_string(v.size()));
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu <= kNormFloor || nv <= kNormFloor)
        throw DegenerateVector("cosine_similarity: (near-)zero vector");
    return u.dot(v) / (nu * nv);
}

LossResult infonce_loss(const ContrastiveBatch& batch, double tau, bool include_positive) {
    return nce_core(batch, tau, nullptr, include_positive);
}

LossResult weighted_infonce_loss(const ContrastiveBatch& batch, double tau,
                                 const std::vector<std::vector<double>>& weights,
                                 bool include_positive) {
    return nce_core(batch, tau, &weights, include_positive);
}

namespace {

// A flow with no component in a subspace carries no angle there; score the
// pair with the neutral distance. Clamped at zero so aligned embeddings
// cannot yield a tiny negative distance through roundoff.
double cosine_distance(const Vec& u, const Vec& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu <= kNormFloor || nv <= kNormFloor) return 1.0;
    return std::max(0.0, 1.0 - u.dot(v) / (nu * nv));
}

}  // namespace

double spectral_similarity(const EdgeFlow& a, const EdgeFlow& b, const HodgeBasis& basis,
                           const SpectralGammas& gammas) {
    const HodgeEmbedding ea = hodge_project(a, basis);
    const HodgeEmbedding eb = hodge_project(b, basis);
    return gammas.harm * cosine_distance(ea.harm, eb.harm) +
           gammas.grad * cosine_distance(ea.grad, eb.grad) +
           gammas.curl * cosine_distance(ea.curl, eb.curl);
}

std::vector<double> normalize_weights(const std::vector<double>& scores) {
    double total = 0.0;
    for (double s : scores) {
        if (!(s >= 0.0)) throw std::invalid_argument("normalize_weights: negative score");
        total += s;
    }
    if (total <= kNormFloor)
        throw AllZeroScores("normalize_weights: total score mass " + std::to_string(total));
    std::vector<double> w(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) w[i] = scores[i] / total;
    return w;
}

Mat pairwise_spectral_scores(const std::vector<EdgeFlow>& flows, const HodgeBasis& basis,
                             const SpectralGammas& gammas) {
    const int n = static_cast<int>(flows.size());
    std::vector<HodgeEmbedding> emb(flows.size());
    for (int i = 0; i < n; ++i) emb[i] = hodge_project(flows[i], basis);

    Mat scores = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double s = gammas.harm * cosine_distance(emb[i].harm, emb[j].harm) +
                             gammas.grad * cosine_distance(emb[i].grad, emb[j].grad) +
                             gammas.curl * cosine_distance(emb[i].curl, emb[j].curl);
            scores(i, j) = s;
            scores(j, i) = s;
        }
    }
    return scores;
}

std::vector<std::vector<double>> spectral_weights_for_batch(const ContrastiveBatch& batch,
                                                            const Mat& scores) {
    if (scores.rows() != scores.cols())
        throw DimensionMismatch("spectral_weights_for_batch: score matrix must be square");
    const int v = batch.num_views();
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(v));
    std::vector<double> raw;
    for (int a = 0; a < v; ++a) {
        const int own = batch.anchor_of(a);
        const int di = batch.anchor_index[own];
        if (di < 0 || di >= scores.rows())
            throw IndexOutOfRange("spectral_weights_for_batch: dataset index " + std::to_string(di));
        raw.clear();
        for (int m = 0; m < v; ++m) {
            if (batch.anchor_of(m) == own) continue;
            const int dm = batch.anchor_index[batch.anchor_of(m)];
            if (dm < 0 || dm >= scores.rows())
                throw IndexOutOfRange("spectral_weights_for_batch: dataset index " +
                                      std::to_string(dm));
            raw.push_back(scores(di, dm));
        }
        weights[static_cast<std::size_t>(a)] = normalize_weights(raw);
    }
    return weights;
}

ContrastiveBatch build_batch(const std::vector<int>& anchor_indices,
                             const std::vector<EdgeFlow>& flows,
                             const std::vector<const Vec*>& mask_probs,
                             const ScnnParameters& encoder, const SpMat& l_low, const SpMat& l_up,
                             Rng& rng, bool keep_tapes) {
    const std::size_t b = anchor_indices.size();
    if (b < 2) throw BatchTooSmall("build_batch: need at least 2 anchors, got " + std::to_string(b));
    if (mask_probs.size() != 1 && mask_probs.size() != b)
        throw DimensionMismatch("build_batch: need one shared or one per-anchor probability vector");

    ContrastiveBatch batch;
    batch.anchor_index = anchor_indices;
    batch.views.reserve(2 * b);
    batch.z.reserve(2 * b);
    if (keep_tapes) batch.tapes.reserve(2 * b);

    for (std::size_t i = 0; i < b; ++i) {
        const int ai = anchor_indices[i];
        if (ai < 0 || ai >= static_cast<int>(flows.size()))
            throw IndexOutOfRange("build_batch: anchor index " + std::to_string(ai));
        const Vec& p = mask_probs.size() == 1 ? *mask_probs[0] : *mask_probs[i];
        const EdgeFlow& anchor = flows[static_cast<std::size_t>(ai)];
        for (int rep = 0; rep < 2; ++rep) {
            EdgeFlow view = mask_flow(anchor, p, rng);
            for (int attempt = 0; attempt < 32 && !(view.array() != 0.0).any(); ++attempt)
                view = mask_flow(anchor, p, rng);
            if (!(view.array() != 0.0).any()) {
                std::vector<Eigen::Index> support;
                for (Eigen::Index e = 0; e < anchor.size(); ++e)
                    if (anchor(e) != 0.0) support.push_back(e);
                if (support.empty())
                    throw DegenerateVector("build_batch: anchor " + std::to_string(ai) +
                                           " is the zero flow");
                const Eigen::Index keep = support[rng.uniform_index(support.size())];
                view(keep) = anchor(keep);
            }
            ForwardTape tape = scnn_forward(encoder, l_low, l_up, view);
            batch.views.push_back(std::move(view));
            batch.z.push_back(tape.z);
            if (keep_tapes) batch.tapes.push_back(std::move(tape));
        }
    }
    return batch;
}

}  // namespace scl
