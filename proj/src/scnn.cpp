#include "scl/scnn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "scl/error.hpp"

namespace scl {

namespace {

std::vector<const Mat*> matrix_blocks(const ScnnParameters& p) {
    std::vector<const Mat*> blocks;
    for (const auto& layer : p.layers) {
        blocks.push_back(&layer.w_eps);
        for (const auto& w : layer.w_low) blocks.push_back(&w);
        for (const auto& w : layer.w_up) blocks.push_back(&w);
    }
    blocks.push_back(&p.head.weight);
    return blocks;
}

std::vector<Mat*> matrix_blocks(ScnnParameters& p) {
    std::vector<Mat*> blocks;
    for (auto& layer : p.layers) {
        blocks.push_back(&layer.w_eps);
        for (auto& w : layer.w_low) blocks.push_back(&w);
        for (auto& w : layer.w_up) blocks.push_back(&w);
    }
    blocks.push_back(&p.head.weight);
    return blocks;
}

void check_same_layout(const ScnnParameters& a, const ScnnParameters& b, const char* what) {
    auto ba = matrix_blocks(a);
    auto bb = matrix_blocks(b);
    bool ok = ba.size() == bb.size() && a.head.bias.size() == b.head.bias.size();
    for (std::size_t i = 0; ok && i < ba.size(); ++i)
        ok = ba[i]->rows() == bb[i]->rows() && ba[i]->cols() == bb[i]->cols();
    if (!ok) throw DimensionMismatch(std::string(what) + ": parameter layouts differ");
}

void fill_uniform(Mat& m, Rng& rng, double bound) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-bound, bound);
}

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
    auto rows = j.get<std::vector<std::vector<double>>>();
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != c)
            throw ParseError("checkpoint: ragged matrix rows");
        for (Eigen::Index jx = 0; jx < c; ++jx) m(i, jx) = rows[i][jx];
    }
    return m;
}

}  // namespace

std::size_t ScnnParameters::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(head.bias.size());
    for (const Mat* m : matrix_blocks(*this)) n += static_cast<std::size_t>(m->size());
    return n;
}

Mat filter_apply(const SpMat& l_low, const SpMat& l_up, const Mat& x, const LayerParameters& layer) {
    if (l_low.rows() != l_low.cols() || l_up.rows() != l_up.cols() || l_low.rows() != l_up.rows())
        throw DimensionMismatch("filter_apply: Laplacians must be square and equally sized");
    if (x.rows() != l_low.rows())
        throw DimensionMismatch("filter_apply: feature rows " + std::to_string(x.rows()) +
                                " vs Laplacian size " + std::to_string(l_low.rows()));
    if (x.cols() != layer.in_channels())
        throw DimensionMismatch("filter_apply: feature channels " + std::to_string(x.cols()) +
                                " vs layer input channels " + std::to_string(layer.in_channels()));

    Mat y = x * layer.w_eps;
    Mat power = x;
    for (const Mat& w : layer.w_low) {
        power = l_low * power;
        y.noalias() += power * w;
    }
    power = x;
    for (const Mat& w : layer.w_up) {
        power = l_up * power;
        y.noalias() += power * w;
    }
    return y;
}

ForwardTape scnn_forward(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                         const EdgeFlow& x) {
    if (params.layers.empty()) throw DimensionMismatch("scnn_forward: no layers");
    if (l_low.rows() != l_low.cols() || l_up.rows() != l_up.cols() || l_low.rows() != l_up.rows())
        throw DimensionMismatch("scnn_forward: Laplacians must be square and equally sized");
    if (x.size() != l_low.rows())
        throw DimensionMismatch("scnn_forward: flow has " + std::to_string(x.size()) +
                                " entries, Laplacians are " + std::to_string(l_low.rows()) + "^2");

    ForwardTape tape;
    tape.inputs.reserve(params.layers.size());
    tape.low_powers.reserve(params.layers.size());
    tape.up_powers.reserve(params.layers.size());
    tape.post.reserve(params.layers.size());

    Mat cur = x;
    for (const auto& layer : params.layers) {
        if (cur.cols() != layer.in_channels())
            throw DimensionMismatch("scnn_forward: layer expects " +
                                    std::to_string(layer.in_channels()) + " channels, got " +
                                    std::to_string(cur.cols()));
        tape.inputs.push_back(cur);

        Mat s = cur * layer.w_eps;
        std::vector<Mat> lows;
        lows.reserve(layer.w_low.size());
        Mat power = cur;
        for (const Mat& w : layer.w_low) {
            power = l_low * power;
            s.noalias() += power * w;
            lows.push_back(power);
        }
        std::vector<Mat> ups;
        ups.reserve(layer.w_up.size());
        power = cur;
        for (const Mat& w : layer.w_up) {
            power = l_up * power;
            s.noalias() += power * w;
            ups.push_back(power);
        }
        tape.low_powers.push_back(std::move(lows));
        tape.up_powers.push_back(std::move(ups));

        if (params.activation == Activation::Tanh)
            cur = s.array().tanh();
        else
            cur = std::move(s);
        if (!cur.allFinite()) throw NonFiniteActivation("scnn_forward: non-finite layer output");
        tape.post.push_back(cur);
    }

    if (params.head.weight.rows() != cur.size())
        throw DimensionMismatch("scnn_forward: head expects " +
                                std::to_string(params.head.weight.rows()) +
                                " flattened features, got " + std::to_string(cur.size()));
    const Eigen::Map<const Vec> h(cur.data(), cur.size());
    tape.z = params.head.weight.transpose() * h + params.head.bias;
    if (!tape.z.allFinite()) throw NonFiniteActivation("scnn_forward: non-finite representation");
    return tape;
}

Vec scnn_encode(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                const EdgeFlow& x) {
    return scnn_forward(params, l_low, l_up, x).z;
}

ScnnGradients zeros_like(const ScnnParameters& params) {
    ScnnGradients g = params;
    for (Mat* m : matrix_blocks(g)) m->setZero();
    g.head.bias.setZero();
    return g;
}

void scnn_backward(const ScnnParameters& params, const SpMat& l_low, const SpMat& l_up,
                   const ForwardTape& tape, const Vec& dloss_dz, ScnnGradients& grad) {
    const std::size_t depth = params.layers.size();
    if (tape.inputs.size() != depth || tape.post.size() != depth ||
        tape.low_powers.size() != depth || tape.up_powers.size() != depth)
        throw TapeMismatch("scnn_backward: tape depth does not match parameters");
    for (std::size_t t = 0; t < depth; ++t) {
        if (tape.inputs[t].cols() != params.layers[t].in_channels() ||
            tape.post[t].cols() != params.layers[t].out_channels() ||
            tape.low_powers[t].size() != params.layers[t].w_low.size() ||
            tape.up_powers[t].size() != params.layers[t].w_up.size())
            throw TapeMismatch("scnn_backward: tape shapes do not match layer " + std::to_string(t));
    }
    check_same_layout(params, grad, "scnn_backward");
    if (dloss_dz.size() != params.head.bias.size())
        throw DimensionMismatch("scnn_backward: dloss_dz has " + std::to_string(dloss_dz.size()) +
                                " entries, head emits " + std::to_string(params.head.bias.size()));
    if (params.head.weight.rows() != tape.post.back().size())
        throw TapeMismatch("scnn_backward: tape features do not match the head width");

    grad.head.bias += dloss_dz;
    const Mat& last = tape.post.back();
    const Eigen::Map<const Vec> h(last.data(), last.size());
    grad.head.weight.noalias() += h * dloss_dz.transpose();

    const auto n = tape.inputs[0].rows();
    const Vec dh = params.head.weight * dloss_dz;
    Mat dx = Eigen::Map<const Mat>(dh.data(), n, dh.size() / n);

    for (std::size_t ti = depth; ti-- > 0;) {
        const auto& layer = params.layers[ti];
        Mat ds;
        if (params.activation == Activation::Tanh)
            ds = (dx.array() * (1.0 - tape.post[ti].array().square())).matrix();
        else
            ds = std::move(dx);

        grad.layers[ti].w_eps.noalias() += tape.inputs[ti].transpose() * ds;
        for (std::size_t k = 0; k < layer.w_low.size(); ++k)
            grad.layers[ti].w_low[k].noalias() += tape.low_powers[ti][k].transpose() * ds;
        for (std::size_t k = 0; k < layer.w_up.size(); ++k)
            grad.layers[ti].w_up[k].noalias() += tape.up_powers[ti][k].transpose() * ds;

        if (ti > 0) {
            Mat dprev = ds * layer.w_eps.transpose();
            Mat power = ds;
            for (const Mat& w : layer.w_low) {
                power = l_low * power;  // L is symmetric, so L^k acts the same on gradients
                dprev.noalias() += power * w.transpose();
            }
            power = ds;
            for (const Mat& w : layer.w_up) {
                power = l_up * power;
                dprev.noalias() += power * w.transpose();
            }
            dx = std::move(dprev);
        }
    }
}

ScnnParameters init_parameters(const ScnnShape& shape, int num_edges, Rng& rng,
                               Activation activation) {
    if (shape.channels.empty()) throw DimensionMismatch("init_parameters: no layers requested");
    for (int c : shape.channels)
        if (c <= 0) throw DimensionMismatch("init_parameters: non-positive channel count");
    if (shape.l1_order < 0 || shape.l2_order < 0)
        throw DimensionMismatch("init_parameters: negative filter order");
    if (shape.embed_dim <= 0) throw DimensionMismatch("init_parameters: non-positive embed_dim");
    if (num_edges <= 0) throw DimensionMismatch("init_parameters: non-positive edge count");

    ScnnParameters p;
    p.activation = activation;
    int fin = 1;
    for (int fout : shape.channels) {
        // Uniform fan-in/fan-out scaling; each input channel feeds through
        // 1 + l1_order + l2_order mixing matrices.
        const double bound =
            std::sqrt(6.0 / (static_cast<double>(fin) * (1 + shape.l1_order + shape.l2_order) + fout));
        LayerParameters layer;
        layer.w_eps.resize(fin, fout);
        fill_uniform(layer.w_eps, rng, bound);
        layer.w_low.resize(static_cast<std::size_t>(shape.l1_order));
        for (auto& w : layer.w_low) {
            w.resize(fin, fout);
            fill_uniform(w, rng, bound);
        }
        layer.w_up.resize(static_cast<std::size_t>(shape.l2_order));
        for (auto& w : layer.w_up) {
            w.resize(fin, fout);
            fill_uniform(w, rng, bound);
        }
        p.layers.push_back(std::move(layer));
        fin = fout;
    }
    const Eigen::Index head_in = static_cast<Eigen::Index>(num_edges) * fin;
    const double head_bound = std::sqrt(6.0 / (static_cast<double>(head_in) + shape.embed_dim));
    p.head.weight.resize(head_in, shape.embed_dim);
    fill_uniform(p.head.weight, rng, head_bound);
    p.head.bias = Vec::Zero(shape.embed_dim);
    return p;
}

ScnnParameters make_lower_only(const ScnnParameters& params) {
    ScnnParameters p = params;
    for (auto& layer : p.layers) layer.w_up.clear();
    return p;
}

void sgd_update(ScnnParameters& params, const ScnnGradients& grad, double lr, double weight_decay) {
    check_same_layout(params, grad, "sgd_update");
    auto pb = matrix_blocks(params);
    auto gb = matrix_blocks(grad);
    for (std::size_t i = 0; i < pb.size(); ++i)
        *pb[i] -= lr * (*gb[i] + weight_decay * *pb[i]);
    params.head.bias -= lr * (grad.head.bias + weight_decay * params.head.bias);
}

Vec flatten_parameters(const ScnnParameters& params) {
    Vec flat(static_cast<Eigen::Index>(params.parameter_count()));
    Eigen::Index at = 0;
    for (const Mat* m : matrix_blocks(params)) {
        flat.segment(at, m->size()) = Eigen::Map<const Vec>(m->data(), m->size());
        at += m->size();
    }
    flat.segment(at, params.head.bias.size()) = params.head.bias;
    return flat;
}

void set_parameters(ScnnParameters& params, const Vec& flat) {
    if (flat.size() != static_cast<Eigen::Index>(params.parameter_count()))
        throw DimensionMismatch("set_parameters: flat vector has " + std::to_string(flat.size()) +
                                " entries, parameters need " +
                                std::to_string(params.parameter_count()));
    Eigen::Index at = 0;
    for (Mat* m : matrix_blocks(params)) {
        Eigen::Map<Vec>(m->data(), m->size()) = flat.segment(at, m->size());
        at += m->size();
    }
    params.head.bias = flat.segment(at, params.head.bias.size());
}

std::string checkpoint_to_json(const ScnnParameters& params) {
    nlohmann::json j;
    j["format"] = "scnn-checkpoint";
    j["version"] = 1;
    j["activation"] = params.activation == Activation::Tanh ? "tanh" : "identity";
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : params.layers) {
        nlohmann::json jl;
        jl["w_eps"] = mat_to_json(layer.w_eps);
        nlohmann::json lows = nlohmann::json::array();
        for (const auto& w : layer.w_low) lows.push_back(mat_to_json(w));
        jl["w_low"] = std::move(lows);
        nlohmann::json ups = nlohmann::json::array();
        for (const auto& w : layer.w_up) ups.push_back(mat_to_json(w));
        jl["w_up"] = std::move(ups);
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    j["head"]["weight"] = mat_to_json(params.head.weight);
    j["head"]["bias"] = std::vector<double>(params.head.bias.data(),
                                            params.head.bias.data() + params.head.bias.size());
    return j.dump();
}

ScnnParameters checkpoint_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "scnn-checkpoint")
            throw ParseError("checkpoint: unexpected format tag");
        if (j.at("version").get<int>() != 1)
            throw ParseError("checkpoint: unsupported version");
        ScnnParameters p;
        const std::string act = j.at("activation").get<std::string>();
        if (act == "tanh")
            p.activation = Activation::Tanh;
        else if (act == "identity")
            p.activation = Activation::Identity;
        else
            throw ParseError("checkpoint: unknown activation '" + act + "'");
        for (const auto& jl : j.at("layers")) {
            LayerParameters layer;
            layer.w_eps = mat_from_json(jl.at("w_eps"));
            for (const auto& jw : jl.at("w_low")) layer.w_low.push_back(mat_from_json(jw));
            for (const auto& jw : jl.at("w_up")) layer.w_up.push_back(mat_from_json(jw));
            p.layers.push_back(std::move(layer));
        }
        p.head.weight = mat_from_json(j.at("head").at("weight"));
        auto bias = j.at("head").at("bias").get<std::vector<double>>();
        p.head.bias = Eigen::Map<const Vec>(bias.data(), static_cast<Eigen::Index>(bias.size()));
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint fields: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const ScnnParameters& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
    out << checkpoint_to_json(params) << '\n';
}

ScnnParameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace scl
