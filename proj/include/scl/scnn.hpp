#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scl/rng.hpp"
#include "scl/simplicial.hpp"

namespace scl {

enum class Activation { Tanh, Identity };

// One convolutional layer on edge features. The filter is
//   Y = X W_eps + sum_k (L_low^{k+1} X) W_low[k] + sum_k (L_up^{k+1} X) W_up[k],
// so the zeroth powers of both Laplacians share the single mixing matrix
// W_eps. All mixing matrices are F_in x F_out.
struct LayerParameters {
    Mat w_eps;
    std::vector<Mat> w_low;
    std::vector<Mat> w_up;

    int in_channels() const { return static_cast<int>(w_eps.rows()); }
    int out_channels() const { return static_cast<int>(w_eps.cols()); }
};

// Fully connected readout over the flattened edge features of the last
// layer. Keeping the edge dimension (rather than pooling it away) is what
// lets the head read spatial patterns such as harmonic circulation.
struct DenseHead {
    Mat weight;  // (num_edges * F_last) x embed_dim
    Vec bias;    // embed_dim
};

struct ScnnParameters {
    std::vector<LayerParameters> layers;
    DenseHead head;
    Activation activation = Activation::Tanh;

    std::size_t parameter_count() const;
};

struct ScnnShape {
    std::vector<int> channels;  // output channels per layer; input has 1
    int l1_order = 1;           // number of lower-Laplacian powers per layer
    int l2_order = 1;           // number of upper-Laplacian powers per layer
    int embed_dim = 16;
};

// Everything the backward pass needs, recorded during a forward pass.
// post[t] stores layer t's output after the activation; with tanh the
// derivative is recovered as 1 - post^2 without keeping pre-activations.
struct ForwardTape {
    std::vector<Mat> inputs;                   // X_{t-1} per layer
    std::vector<std::vector<Mat>> low_powers;  // L_low^{k+1} X_{t-1}
    std::vector<std::vector<Mat>> up_powers;   // L_up^{k+1} X_{t-1}
    std::vector<Mat> post;                     // X_t; post.back() is h
    Vec z;                                     // head output
};

// Applies one layer's filter bank without the nonlinearity.
Mat filter_apply(const SpMat& l_low, const SpMat& l_up, const Mat& x, const LayerParameters& layer);

// Full forward pass: layers with activation, then the dense head applied
// to the column-major flattening of the last layer's edge features.
// Throws NonFiniteActivation if any intermediate stops being finite.
ForwardTape scnn_forward(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                         const EdgeFlow& x);

// Forward without keeping the tape.
Vec scnn_encode(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                const EdgeFlow& x);

// Gradients share the parameter layout.
using ScnnGradients = ScnnParameters;

ScnnGradients zeros_like(const ScnnParameters& params);

// Backpropagates dloss_dz through the tape, adding into grad (callers zero
// or accumulate across a batch as they see fit). Throws TapeMismatch when
// the tape does not match the parameter shapes.
void scnn_backward(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                   const ForwardTape& tape, const Vec& dloss_dz, ScnnGradients& grad);

// num_edges fixes the head's input width (num_edges * last channel count).
ScnnParameters init_parameters(const ScnnShape& shape, int num_edges, Rng& rng,
                               Activation activation = Activation::Tanh);

// Copy with the upper-Laplacian mixing matrices removed, for the
// lower-only ablation. The result has strictly fewer parameters whenever
// the input had any upper-Laplacian terms.
ScnnParameters make_lower_only(const ScnnParameters& params);

// In-place SGD step: theta -= lr * (grad + weight_decay * theta).
void sgd_update(ScnnParameters& params, const ScnnGradients& grad, double lr, double weight_decay);

// Parameters flattened to a single vector (block order: per layer w_eps,
// w_low, w_up, then head weight and bias; column-major within each block).
Vec flatten_parameters(const ScnnParameters& params);
void set_parameters(ScnnParameters& params, const Vec& flat);

// Checkpoint round trip (versioned JSON).
std::string checkpoint_to_json(const ScnnParameters& params);
ScnnParameters checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const ScnnParameters& params);
ScnnParameters load_checkpoint(const std::string& path);

}  // namespace scl
