#pragma once

// Discriminative Attribute Network.
//
//   a_r = sigmoid(Ma^T v_r + ba)         shared attribute layer, both streams
//   a_c = sigmoid(Ma^T v_c + ba)
//   h_v = sigmoid(Md^T [a_r[v], a_c[v]] + bd)   per attribute, shared Md, bd
//   d_hat[v] = MD^T h_v + bD                      shared MD, bD, no squashing
//
// Trained with mean squared error against the binary symmetric difference of
// the two concepts' attribute vectors. Gradients are derived by hand below.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dan/dataset.hpp"
#include "dan/numeric.hpp"
#include "dan/params.hpp"
#include "dan/rng.hpp"

namespace dan {

struct DanDims {
    std::size_t input_dim = 0;
    std::size_t n_attributes = 0;
    std::size_t hidden = 60;

    friend bool operator==(const DanDims&, const DanDims&) = default;
};

struct DanOptions {
    bool attr_sigmoid = true;
    bool bias = true;

    friend bool operator==(const DanOptions&, const DanOptions&) = default;
};

template <class T = double>
struct DanParams {
    DanDims dims;
    DanOptions options;
    Matrix<T> attr_weights;   // D x |V|
    Matrix<T> attr_bias;      // 1 x |V|
    Matrix<T> pair_weights;   // 2 x h, row 0 sees the referent unit, row 1 the context unit
    Matrix<T> pair_bias;      // 1 x h
    Matrix<T> out_weights;    // h x 1
    Matrix<T> out_bias;       // 1 x 1
    /// Per-unit readout polarity, not a trained weight: a set entry means the
    /// unit fires for concepts that lack the attribute. Empty = all direct.
    std::vector<std::uint8_t> inverted_units;

    auto blocks() {
        return std::array{NamedBlock<Matrix<T>>{"attr_weights", &attr_weights},
                          NamedBlock<Matrix<T>>{"attr_bias", &attr_bias},
                          NamedBlock<Matrix<T>>{"pair_weights", &pair_weights},
                          NamedBlock<Matrix<T>>{"pair_bias", &pair_bias},
                          NamedBlock<Matrix<T>>{"out_weights", &out_weights},
                          NamedBlock<Matrix<T>>{"out_bias", &out_bias}};
    }
    auto blocks() const {
        return std::array{NamedBlock<const Matrix<T>>{"attr_weights", &attr_weights},
                          NamedBlock<const Matrix<T>>{"attr_bias", &attr_bias},
                          NamedBlock<const Matrix<T>>{"pair_weights", &pair_weights},
                          NamedBlock<const Matrix<T>>{"pair_bias", &pair_bias},
                          NamedBlock<const Matrix<T>>{"out_weights", &out_weights},
                          NamedBlock<const Matrix<T>>{"out_bias", &out_bias}};
    }

    static DanParams zeros(const DanDims& d, DanOptions opt = {}) {
        return DanParams{d,
                         opt,
                         Matrix<T>(d.input_dim, d.n_attributes),
                         Matrix<T>(1, d.n_attributes),
                         Matrix<T>(2, d.hidden),
                         Matrix<T>(1, d.hidden),
                         Matrix<T>(d.hidden, 1),
                         Matrix<T>(1, 1),
                         {}};
    }

    bool is_inverted(std::size_t v) const { return !inverted_units.empty() && inverted_units[v] != 0; }
};

/// Closed form of the DAN parameter count, kept next to the shapes it mirrors.
constexpr std::size_t dan_parameter_count(const DanDims& d) {
    return d.input_dim * d.n_attributes + d.n_attributes + 2 * d.hidden + d.hidden + d.hidden + 1;
}

template <class T = double>
DanParams<T> init_dan(const DanDims& dims, Rng& rng, DanOptions options = {}) {
    if (dims.input_dim == 0 || dims.n_attributes == 0 || dims.hidden == 0) {
        throw ParameterError("init_dan: all dimensions must be positive");
    }
    auto p = DanParams<T>::zeros(dims, options);
    p.attr_weights = gaussian_matrix<T>(dims.input_dim, dims.n_attributes, dims.input_dim, rng);
    p.pair_weights = gaussian_matrix<T>(2, dims.hidden, 2, rng);
    p.out_weights = gaussian_matrix<T>(dims.hidden, 1, dims.hidden, rng);
    return p;
}

template <class T = double>
struct DanActivations {
    std::vector<T> pre_r, pre_c;  // attribute-layer pre-activations
    std::vector<T> a_r, a_c;
    Matrix<T> hidden;             // |V| x h
    std::vector<T> d_hat;
};

namespace detail {

template <class T>
void attribute_layer(const DanParams<T>& p, std::span<const T> v, std::vector<T>& pre, std::vector<T>& act) {
    pre.assign(p.dims.n_attributes, T{0});
    affine_transposed<T>(p.attr_weights, v, p.options.bias ? p.attr_bias.values() : std::span<const T>{}, pre);
    act = pre;
    if (p.options.attr_sigmoid)
        for (auto& x : act) x = sigmoid(x);
}

template <class T>
void check_input(const DanParams<T>& p, std::span<const T> v) {
    if (v.size() != p.dims.input_dim) {
        throw ShapeError("DAN input has dimension " + std::to_string(v.size()) + ", model expects " +
                         std::to_string(p.dims.input_dim));
    }
}

}  // namespace detail

template <class T>
std::vector<T> attribute_activations(const DanParams<T>& p, std::span<const T> v) {
    detail::check_input(p, v);
    std::vector<T> pre, act;
    detail::attribute_layer(p, v, pre, act);
    return act;
}

template <class T>
DanActivations<T> forward(const DanParams<T>& p, std::span<const T> v_r, std::span<const T> v_c) {
    detail::check_input(p, v_r);
    detail::check_input(p, v_c);
    const std::size_t nv = p.dims.n_attributes;
    const std::size_t h = p.dims.hidden;
    DanActivations<T> act;
    detail::attribute_layer(p, v_r, act.pre_r, act.a_r);
    detail::attribute_layer(p, v_c, act.pre_c, act.a_c);

    act.hidden = Matrix<T>(nv, h);
    act.d_hat.assign(nv, T{0});
    const T* w0 = p.pair_weights.row(0).data();
    const T* w1 = p.pair_weights.row(1).data();
    const T* bd = p.pair_bias.data();
    const T* wo = p.out_weights.data();
    const bool bias = p.options.bias;
    for (std::size_t v = 0; v < nv; ++v) {
        T* hv = act.hidden.row(v).data();
        T out = bias ? p.out_bias[0] : T{0};
        for (std::size_t k = 0; k < h; ++k) {
            const T z = w0[k] * act.a_r[v] + w1[k] * act.a_c[v] + (bias ? bd[k] : T{0});
            hv[k] = sigmoid(z);
            out += wo[k] * hv[k];
        }
        act.d_hat[v] = out;
    }
    return act;
}

template <class T>
T loss(std::span<const T> d_hat, std::span<const std::uint8_t> gold) {
    if (d_hat.size() != gold.size()) {
        throw ShapeError("loss: prediction length " + std::to_string(d_hat.size()) + " vs gold length " +
                         std::to_string(gold.size()));
    }
    std::vector<T> g(gold.begin(), gold.end());
    return mse<T>(d_hat, g);
}

/// Row-aligned mini-batch: row b of each matrix is one (referent, context, gold) example.
template <class T = double>
struct PairBatch {
    Matrix<T> referents;  // B x D
    Matrix<T> contexts;   // B x D
    Matrix<T> gold;       // B x |V|, entries in {0, 1}

    std::size_t size() const noexcept { return referents.rows(); }
};

/// Mean batch loss and its gradient with respect to every parameter block.
/// Accumulation order is fixed: batch index outer, attribute index inner.
template <class T>
Gradient<DanParams<T>> backward(const DanParams<T>& p, const PairBatch<T>& batch) {
    if (batch.size() == 0) throw ParameterError("backward: empty batch");
    const std::size_t nv = p.dims.n_attributes;
    const std::size_t h = p.dims.hidden;
    const std::size_t d = p.dims.input_dim;
    if (batch.referents.cols() != d || batch.contexts.cols() != d || batch.gold.cols() != nv ||
        batch.contexts.rows() != batch.size() || batch.gold.rows() != batch.size()) {
        throw ShapeError("backward: batch shapes " + batch.referents.shape() + ", " + batch.contexts.shape() +
                         ", " + batch.gold.shape() + " do not fit model dims");
    }

    Gradient<DanParams<T>> out{zeros_like(p), 0.0};
    auto& g = out.grad;
    const T scale = T{2} / static_cast<T>(nv * batch.size());
    const T* w0 = p.pair_weights.row(0).data();
    const T* w1 = p.pair_weights.row(1).data();
    const T* wo = p.out_weights.data();
    std::vector<T> delta_r(nv), delta_c(nv);

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto v_r = batch.referents.row(b);
        const auto v_c = batch.contexts.row(b);
        const auto gold = batch.gold.row(b);
        const auto act = forward<T>(p, v_r, v_c);

        double example_loss = 0.0;
        for (std::size_t v = 0; v < nv; ++v) {
            const T err = act.d_hat[v] - gold[v];
            example_loss += static_cast<double>(err) * static_cast<double>(err);
            const T e = scale * err;  // dL/d d_hat[v]
            g.out_bias[0] += e;
            const T* hv = act.hidden.row(v).data();
            T da_r{0}, da_c{0};
            for (std::size_t k = 0; k < h; ++k) {
                g.out_weights[k] += e * hv[k];
                const T dz = e * wo[k] * hv[k] * (T{1} - hv[k]);
                g.pair_weights(0, k) += dz * act.a_r[v];
                g.pair_weights(1, k) += dz * act.a_c[v];
                g.pair_bias[k] += dz;
                da_r += dz * w0[k];
                da_c += dz * w1[k];
            }
            if (p.options.attr_sigmoid) {
                da_r *= act.a_r[v] * (T{1} - act.a_r[v]);
                da_c *= act.a_c[v] * (T{1} - act.a_c[v]);
            }
            delta_r[v] = da_r;
            delta_c[v] = da_c;
            g.attr_bias[v] += da_r + da_c;
        }
        out.loss += example_loss / static_cast<double>(nv);

        for (std::size_t i = 0; i < d; ++i) {
            T* gr = g.attr_weights.row(i).data();
            const T xr = v_r[i];
            const T xc = v_c[i];
            for (std::size_t v = 0; v < nv; ++v) gr[v] += xr * delta_r[v] + xc * delta_c[v];
        }
    }
    out.loss /= static_cast<double>(batch.size());
    if (!p.options.bias) {
        g.attr_bias.fill(0);
        g.pair_bias.fill(0);
        g.out_bias.fill(0);
    }
    return out;
}

/// Mean batch loss without gradients.
template <class T>
double batch_loss(const DanParams<T>& p, const PairBatch<T>& batch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto act = forward<T>(p, batch.referents.row(b), batch.contexts.row(b));
        total += static_cast<double>(mse<T>(act.d_hat, batch.gold.row(b)));
    }
    return batch.size() ? total / static_cast<double>(batch.size()) : 0.0;
}

/// Attributes whose predicted discriminativeness reaches the threshold (inclusive).
template <class T>
AttrSet threshold_set(std::span<const T> scores, double threshold) {
    AttrSet out;
    for (std::size_t v = 0; v < scores.size(); ++v)
        if (static_cast<double>(scores[v]) >= threshold) out.push_back(static_cast<std::uint32_t>(v));
    return out;
}

template <class T>
AttrSet predict_discriminative(const DanParams<T>& p, std::span<const T> v_r, std::span<const T> v_c,
                               double threshold = 0.5) {
    return threshold_set<T>(forward(p, v_r, v_c).d_hat, threshold);
}

/// Attribute-layer activations with inverted units read as 1 - a.
template <class T>
std::vector<T> oriented_activations(const DanParams<T>& p, std::span<const T> v) {
    auto act = attribute_activations(p, v);
    for (std::size_t i = 0; i < act.size(); ++i)
        if (p.is_inverted(i)) act[i] = T{1} - act[i];
    return act;
}

/// Attribute-layer readout: bit v is set iff the (oriented) activation
/// reaches the threshold. No training happens here.
template <class T>
AttributeVector predict_attributes(const DanParams<T>& p, std::span<const T> v, double threshold = 0.5) {
    const auto act = oriented_activations(p, v);
    AttributeVector out(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) out[i] = static_cast<double>(act[i]) >= threshold ? 1 : 0;
    return out;
}

/// The pair objective only sees XOR-like targets, which are unchanged when a
/// unit and the shared pair layer both swap "has" for "lacks". Attributes are
/// sparse, so a unit that fires for more than half of the given (unlabeled)
/// inputs is taken to encode absence and marked inverted.
template <class T, class Range>
std::vector<std::uint8_t> orient_attribute_units(const DanParams<T>& p, const Range& inputs) {
    const std::size_t nv = p.dims.n_attributes;
    std::vector<std::size_t> on(nv, 0);
    std::size_t n = 0;
    for (const auto& x : inputs) {
        std::vector<T> v(x.begin(), x.end());
        const auto act = attribute_activations<T>(p, v);
        for (std::size_t i = 0; i < nv; ++i) on[i] += act[i] >= T(0.5) ? 1 : 0;
        ++n;
    }
    std::vector<std::uint8_t> inverted(nv, 0);
    for (std::size_t i = 0; i < nv; ++i) inverted[i] = 2 * on[i] > n ? 1 : 0;
    return inverted;
}

}  // namespace dan
