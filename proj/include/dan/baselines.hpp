#pragma once

// Comparison systems:
//  - RandomBaseline: each attribute independently discriminative with its
//    training-pair frequency.
//  - Ablation: no attribute layer; a two-layer map from [v_r; v_c] straight to
//    |V| discriminativeness scores, same MSE objective as DAN.
//  - AttrClassifier: one-hidden-layer network trained with per-attribute
//    logistic loss on gold attribute vectors; discriminativeness is the
//    symmetric difference of its two thresholded predictions.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dan/dataset.hpp"
#include "dan/model.hpp"
#include "dan/numeric.hpp"
#include "dan/params.hpp"
#include "dan/rng.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Random baseline

struct RandomBaseline {
    std::vector<double> probs;

    double expected_size() const {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }
};

inline RandomBaseline fit_random_baseline(std::span<const PairTriple> triples) {
    if (triples.empty()) throw ParameterError("fit_random_baseline: no training pairs");
    const std::size_t nv = triples.front().gold.size();
    std::vector<std::uint64_t> counts(nv, 0);
    for (const auto& t : triples) {
        if (t.gold.size() != nv) throw ShapeError("fit_random_baseline: inconsistent gold lengths");
        for (std::size_t v = 0; v < nv; ++v) counts[v] += t.gold[v] ? 1 : 0;
    }
    RandomBaseline b;
    b.probs.resize(nv);
    for (std::size_t v = 0; v < nv; ++v)
        b.probs[v] = static_cast<double>(counts[v]) / static_cast<double>(triples.size());
    return b;
}

/// Frequency baseline over per-concept attribute vectors, for attribute prediction.
inline RandomBaseline fit_random_attribute_baseline(std::span<const AttributeVector> attributes) {
    if (attributes.empty()) throw ParameterError("fit_random_attribute_baseline: no concepts");
    const std::size_t nv = attributes.front().size();
    RandomBaseline b;
    b.probs.assign(nv, 0.0);
    for (const auto& a : attributes)
        for (std::size_t v = 0; v < nv; ++v) b.probs[v] += a[v] ? 1.0 : 0.0;
    for (auto& p : b.probs) p /= static_cast<double>(attributes.size());
    return b;
}

inline AttrSet sample_random_prediction(const RandomBaseline& b, Rng& rng) {
    AttrSet out;
    for (std::size_t v = 0; v < b.probs.size(); ++v)
        if (rng.uniform() < b.probs[v]) out.push_back(static_cast<std::uint32_t>(v));
    return out;
}

// ---------------------------------------------------------------------------
// Two-layer sigmoid network, shared by the ablation and the classifier.

struct MlpDims {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    std::size_t output_dim = 0;

    friend bool operator==(const MlpDims&, const MlpDims&) = default;
};

template <class T = double>
struct MlpParams {
    MlpDims dims;
    Matrix<T> hidden_weights;  // input x hidden
    Matrix<T> hidden_bias;     // 1 x hidden
    Matrix<T> out_weights;     // hidden x output
    Matrix<T> out_bias;        // 1 x output

    auto blocks() {
        return std::array{NamedBlock<Matrix<T>>{"hidden_weights", &hidden_weights},
                          NamedBlock<Matrix<T>>{"hidden_bias", &hidden_bias},
                          NamedBlock<Matrix<T>>{"out_weights", &out_weights},
                          NamedBlock<Matrix<T>>{"out_bias", &out_bias}};
    }
    auto blocks() const {
        return std::array{NamedBlock<const Matrix<T>>{"hidden_weights", &hidden_weights},
                          NamedBlock<const Matrix<T>>{"hidden_bias", &hidden_bias},
                          NamedBlock<const Matrix<T>>{"out_weights", &out_weights},
                          NamedBlock<const Matrix<T>>{"out_bias", &out_bias}};
    }

    static MlpParams zeros(const MlpDims& d) {
        return MlpParams{d, Matrix<T>(d.input_dim, d.hidden), Matrix<T>(1, d.hidden),
                         Matrix<T>(d.hidden, d.output_dim), Matrix<T>(1, d.output_dim)};
    }
};

constexpr std::size_t mlp_parameter_count(const MlpDims& d) {
    return d.input_dim * d.hidden + d.hidden + d.hidden * d.output_dim + d.output_dim;
}

template <class T = double>
MlpParams<T> init_mlp(const MlpDims& dims, Rng& rng) {
    if (dims.input_dim == 0 || dims.hidden == 0 || dims.output_dim == 0) {
        throw ParameterError("init_mlp: all dimensions must be positive");
    }
    auto p = MlpParams<T>::zeros(dims);
    p.hidden_weights = gaussian_matrix<T>(dims.input_dim, dims.hidden, dims.input_dim, rng);
    p.out_weights = gaussian_matrix<T>(dims.hidden, dims.output_dim, dims.hidden, rng);
    return p;
}

template <class T>
struct MlpActivations {
    std::vector<T> hidden;
    std::vector<T> out;  // linear output (scores or logits)
};

template <class T>
MlpActivations<T> mlp_forward(const MlpParams<T>& p, std::span<const T> x) {
    if (x.size() != p.dims.input_dim) {
        throw ShapeError("network input has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(p.dims.input_dim));
    }
    MlpActivations<T> a;
    a.hidden.resize(p.dims.hidden);
    affine_transposed<T>(p.hidden_weights, x, p.hidden_bias.values(), a.hidden);
    for (auto& v : a.hidden) v = sigmoid(v);
    a.out.resize(p.dims.output_dim);
    affine_transposed<T>(p.out_weights, a.hidden, p.out_bias.values(), a.out);
    return a;
}

/// Accumulates the gradient for one example given dL/d(out).
template <class T>
void mlp_accumulate(const MlpParams<T>& p, std::span<const T> x, const MlpActivations<T>& a,
                    std::span<const T> d_out, MlpParams<T>& g) {
    const std::size_t nh = p.dims.hidden;
    const std::size_t no = p.dims.output_dim;
    std::vector<T> d_hidden(nh, T{0});
    for (std::size_t k = 0; k < nh; ++k) {
        const T* wk = p.out_weights.row(k).data();
        T* gk = g.out_weights.row(k).data();
        T s{0};
        for (std::size_t o = 0; o < no; ++o) {
            gk[o] += a.hidden[k] * d_out[o];
            s += wk[o] * d_out[o];
        }
        d_hidden[k] = s * a.hidden[k] * (T{1} - a.hidden[k]);
        g.hidden_bias[k] += d_hidden[k];
    }
    for (std::size_t o = 0; o < no; ++o) g.out_bias[o] += d_out[o];
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T xi = x[i];
        if (xi == T{0}) continue;
        T* gi = g.hidden_weights.row(i).data();
        for (std::size_t k = 0; k < nh; ++k) gi[k] += xi * d_hidden[k];
    }
}

// ---------------------------------------------------------------------------
// Ablation without attribute layer

template <class T = double>
struct AblationParams : MlpParams<T> {
    using MlpParams<T>::MlpParams;
    AblationParams() = default;
    explicit AblationParams(MlpParams<T> p) : MlpParams<T>(std::move(p)) {}
};

/// Hidden width that makes the ablation's parameter count closest to DAN's.
inline std::size_t ablation_hidden_for_parity(const DanDims& dan) {
    const double target = static_cast<double>(dan_parameter_count(dan));
    const double per_unit = static_cast<double>(2 * dan.input_dim + 1 + dan.n_attributes);
    const double h = (target - static_cast<double>(dan.n_attributes)) / per_unit;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(h)));
}

inline MlpDims ablation_dims(std::size_t input_dim, std::size_t n_attributes, std::size_t hidden) {
    return {2 * input_dim, hidden, n_attributes};
}

template <class T = double>
AblationParams<T> init_ablation(std::size_t input_dim, std::size_t n_attributes, std::size_t hidden, Rng& rng) {
    return AblationParams<T>(init_mlp<T>(ablation_dims(input_dim, n_attributes, hidden), rng));
}

template <class T>
std::vector<T> ablation_input(std::span<const T> v_r, std::span<const T> v_c) {
    std::vector<T> x(v_r.begin(), v_r.end());
    x.insert(x.end(), v_c.begin(), v_c.end());
    return x;
}

template <class T>
std::vector<T> ablation_forward(const AblationParams<T>& p, std::span<const T> v_r, std::span<const T> v_c) {
    if (v_r.size() * 2 != p.dims.input_dim || v_c.size() != v_r.size()) {
        throw ShapeError("ablation_forward: inputs of dimension " + std::to_string(v_r.size()) + " and " +
                         std::to_string(v_c.size()) + " do not fit " + std::to_string(p.dims.input_dim));
    }
    const auto x = ablation_input(v_r, v_c);
    return mlp_forward<T>(p, x).out;
}

template <class T>
Gradient<AblationParams<T>> backward(const AblationParams<T>& p, const PairBatch<T>& batch) {
    if (batch.size() == 0) throw ParameterError("backward: empty batch");
    const std::size_t nv = p.dims.output_dim;
    if (batch.referents.cols() * 2 != p.dims.input_dim || batch.gold.cols() != nv) {
        throw ShapeError("ablation backward: batch shapes do not fit model dims");
    }
    Gradient<AblationParams<T>> out{zeros_like(p), 0.0};
    const T scale = T{2} / static_cast<T>(nv * batch.size());
    std::vector<T> d_out(nv);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto x = ablation_input(batch.referents.row(b), batch.contexts.row(b));
        const auto a = mlp_forward<T>(p, x);
        const auto gold = batch.gold.row(b);
        double l = 0.0;
        for (std::size_t v = 0; v < nv; ++v) {
            const T err = a.out[v] - gold[v];
            l += static_cast<double>(err) * static_cast<double>(err);
            d_out[v] = scale * err;
        }
        out.loss += l / static_cast<double>(nv);
        mlp_accumulate<T>(p, x, a, d_out, out.grad);
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

template <class T>
double batch_loss(const AblationParams<T>& p, const PairBatch<T>& batch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto d_hat = ablation_forward<T>(p, batch.referents.row(b), batch.contexts.row(b));
        total += static_cast<double>(mse<T>(d_hat, batch.gold.row(b)));
    }
    return batch.size() ? total / static_cast<double>(batch.size()) : 0.0;
}

template <class T>
AttrSet predict_discriminative(const AblationParams<T>& p, std::span<const T> v_r, std::span<const T> v_c,
                               double threshold = 0.5) {
    return threshold_set<T>(ablation_forward(p, v_r, v_c), threshold);
}

// ---------------------------------------------------------------------------
// Directly supervised attribute classifier

template <class T = double>
struct ClassifierParams : MlpParams<T> {
    using MlpParams<T>::MlpParams;
    ClassifierParams() = default;
    explicit ClassifierParams(MlpParams<T> p) : MlpParams<T>(std::move(p)) {}
};

/// Hidden width matching the classifier's parameter count to DAN's attribute block.
inline std::size_t classifier_hidden_for_parity(const DanDims& dan) {
    const double target = static_cast<double>(dan.input_dim * dan.n_attributes + dan.n_attributes);
    const double per_unit = static_cast<double>(dan.input_dim + 1 + dan.n_attributes);
    const double h = (target - static_cast<double>(dan.n_attributes)) / per_unit;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(h)));
}

template <class T = double>
ClassifierParams<T> init_classifier(std::size_t input_dim, std::size_t n_attributes, std::size_t hidden, Rng& rng) {
    return ClassifierParams<T>(init_mlp<T>({input_dim, hidden, n_attributes}, rng));
}

/// Row-aligned instance batch with gold attribute targets.
template <class T = double>
struct InstanceBatch {
    Matrix<T> inputs;   // B x D
    Matrix<T> targets;  // B x |V|, entries in {0, 1}

    std::size_t size() const noexcept { return inputs.rows(); }
};

/// log(1 + exp(z)) without overflow.
template <class T>
T softplus(T z) {
    return z > T{0} ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Mean per-attribute binary cross-entropy of logits z against targets y.
template <class T>
T cross_entropy(std::span<const T> logits, std::span<const T> targets) {
    if (logits.size() != targets.size()) throw ShapeError("cross_entropy: length mismatch");
    T s{0};
    for (std::size_t i = 0; i < logits.size(); ++i) s += softplus(logits[i]) - logits[i] * targets[i];
    return logits.empty() ? T{0} : s / static_cast<T>(logits.size());
}

template <class T>
Gradient<ClassifierParams<T>> backward(const ClassifierParams<T>& p, const InstanceBatch<T>& batch) {
    if (batch.size() == 0) throw ParameterError("backward: empty batch");
    const std::size_t nv = p.dims.output_dim;
    if (batch.inputs.cols() != p.dims.input_dim || batch.targets.cols() != nv) {
        throw ShapeError("classifier backward: batch shapes do not fit model dims");
    }
    Gradient<ClassifierParams<T>> out{zeros_like(p), 0.0};
    const T scale = T{1} / static_cast<T>(nv * batch.size());
    std::vector<T> d_out(nv);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto x = batch.inputs.row(b);
        const auto y = batch.targets.row(b);
        const auto a = mlp_forward<T>(p, x);
        out.loss += static_cast<double>(cross_entropy<T>(a.out, y));
        for (std::size_t v = 0; v < nv; ++v) d_out[v] = scale * (sigmoid(a.out[v]) - y[v]);
        mlp_accumulate<T>(p, x, a, d_out, out.grad);
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

template <class T>
double batch_loss(const ClassifierParams<T>& p, const InstanceBatch<T>& batch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b)
        total += static_cast<double>(cross_entropy<T>(mlp_forward<T>(p, batch.inputs.row(b)).out, batch.targets.row(b)));
    return batch.size() ? total / static_cast<double>(batch.size()) : 0.0;
}

template <class T>
AttributeVector predict_attributes(const ClassifierParams<T>& p, std::span<const T> v, double threshold = 0.5) {
    const auto logits = mlp_forward<T>(p, v).out;
    AttributeVector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = static_cast<double>(sigmoid(logits[i])) >= threshold ? 1 : 0;
    return out;
}

/// Symmetric difference of the two predicted attribute vectors.
template <class T>
AttrSet attr_classifier_discriminate(const ClassifierParams<T>& p, std::span<const T> v_r, std::span<const T> v_c,
                                     double threshold = 0.5) {
    return to_set(symmetric_difference(predict_attributes(p, v_r, threshold), predict_attributes(p, v_c, threshold)));
}

}  // namespace dan
