#pragma once

#include <vector>

#include "scl/augment.hpp"
#include "scl/hodge.hpp"
#include "scl/rng.hpp"
#include "scl/scnn.hpp"
#include "scl/simplicial.hpp"

namespace scl {

// A batch of B anchors, each augmented into two masked views. Views are
// stored interleaved: views 2i and 2i+1 belong to anchor slot i. Each view
// is an anchor of one ordered positive pair; its negatives are every view
// of every other anchor in the batch (2(B-1) of them).
struct ContrastiveBatch {
    std::vector<int> anchor_index;        // dataset index per anchor slot
    std::vector<EdgeFlow> views;          // 2B masked flows
    std::vector<Vec> z;                   // 2B representations
    std::vector<ForwardTape> tapes;       // 2B, empty when not training

    int num_anchors() const { return static_cast<int>(anchor_index.size()); }
    int num_views() const { return static_cast<int>(views.size()); }
    int partner(int view) const { return view ^ 1; }
    int anchor_of(int view) const { return view / 2; }
};

double cosine_similarity(const Vec& u, const Vec& v);

struct LossResult {
    double loss = 0.0;            // summed over ordered pairs
    int num_pairs = 0;
    std::vector<Vec> dz;          // gradient of the summed loss per view
};

// InfoNCE over all ordered positive pairs:
//   sum_(a,b) [ -s(a,b)/tau + log sum_m exp(s(a,m)/tau) ],
// where m ranges over a's negatives, plus the positive itself when
// include_positive is set. Gradients flow through every similarity.
LossResult infonce_loss(const ContrastiveBatch& batch, double tau, bool include_positive = false);

// Same loss but with fixed per-negative weights inside the log-sum. With
// uniform weights 1/M it differs from the unweighted loss by exactly
// -log(M) per pair. weights[a] must align with a's negative list, i.e.
// all views of other anchors in view order.
LossResult weighted_infonce_loss(const ContrastiveBatch& batch, double tau,
                                 const std::vector<std::vector<double>>& weights,
                                 bool include_positive = false);

struct SpectralGammas {
    double harm = 1.0;
    double grad = 1.0;
    double curl = 1.0;
};

// Sum of the cosine distances between the two flows' Hodge embeddings,
// weighted per component. A component with (near-)zero embedding on either
// side contributes the neutral distance 1.
double spectral_similarity(const EdgeFlow& a, const EdgeFlow& b, const HodgeBasis& basis,
                           const SpectralGammas& gammas);

// Scores normalized to sum to one. Throws AllZeroScores when the total
// mass is numerically zero.
std::vector<double> normalize_weights(const std::vector<double>& scores);

// Pairwise spectral scores between raw flows, with embeddings computed
// once per flow. Symmetric, zero diagonal.
Mat pairwise_spectral_scores(const std::vector<EdgeFlow>& flows, const HodgeBasis& basis,
                             const SpectralGammas& gammas);

// Per-view normalized negative weights for a batch, read out of a
// precomputed score matrix indexed by dataset index.
std::vector<std::vector<double>> spectral_weights_for_batch(const ContrastiveBatch& batch,
                                                            const Mat& scores);

// Masks each anchor flow twice and encodes all views. mask_probs is either
// one shared vector or one per anchor. keep_tapes retains forward tapes for
// training. Throws BatchTooSmall for fewer than two anchors.
//
// A draw that happens to drop every nonzero entry is not a view of the
// anchor in any meaningful sense, and its representation breaks the cosine
// similarity. Such draws are rejected and resampled; if the budget is so
// aggressive that a bounded number of retries all come up empty, one
// surviving entry is kept by force so every view stays nonzero.
ContrastiveBatch build_batch(const std::vector<int>& anchor_indices,
                             const std::vector<EdgeFlow>& flows,
                             const std::vector<const Vec*>& mask_probs,
                             const ScnnParameters& encoder, const SpMat& l_low, const SpMat& l_up,
                             Rng& rng, bool keep_tapes);

}  // namespace scl
