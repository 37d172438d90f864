#pragma once

// Central finite-difference check of analytic gradients, block by block.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dan/baselines.hpp"
#include "dan/model.hpp"
#include "dan/params.hpp"
#include "dan/rng.hpp"

namespace dan {

struct BlockCheck {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t entries = 0;
};

struct GradcheckReport {
    std::vector<BlockCheck> blocks;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
        return m;
    }
    bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero from dividing rounding noise by nothing.
inline double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

/// Compares `analytic` against (L(θ+ε) − L(θ−ε)) / 2ε for every parameter
/// entry. `loss(params) -> double`. `params` is perturbed and restored.
template <HasBlocks P, class LossFn>
GradcheckReport check_gradients(P params, const P& analytic, LossFn&& loss, double eps = 1e-5,
                                double floor = 1e-6) {
    GradcheckReport report;
    auto pb = params.blocks();
    auto ab = analytic.blocks();
    for (std::size_t bi = 0; bi < pb.size(); ++bi) {
        BlockCheck bc{std::string(pb[bi].name), 0.0, 0.0, 0};
        auto values = pb[bi].value->values();
        const auto grads = ab[bi].value->values();
        using T = std::remove_cvref_t<decltype(values[0])>;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            values[i] = static_cast<T>(saved + static_cast<T>(eps));
            const double up = loss(params);
            values[i] = static_cast<T>(saved - static_cast<T>(eps));
            const double down = loss(params);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(grads[i]);
            bc.max_abs_error = std::max(bc.max_abs_error, std::abs(a - numeric));
            bc.max_rel_error = std::max(bc.max_rel_error, relative_error(a, numeric, floor));
            ++bc.entries;
        }
        report.blocks.push_back(std::move(bc));
    }
    return report;
}

struct GradcheckSetup {
    std::size_t input_dim = 16;
    std::size_t n_attributes = 8;
    std::size_t hidden = 5;
    std::size_t batch = 4;
    double eps = 1e-5;
    double floor = 1e-6;
    double tolerance = 1e-4;
    /// Negates the analytic gradient of one block before comparing; a
    /// negative control for the checker itself.
    bool inject_sign_flip = false;

    /// Single precision: float rounding in the loss (~1e-7 relative) divided
    /// by 2*eps swamps a 1e-5 step, so the step, floor and tolerance widen.
    static GradcheckSetup single_precision() {
        GradcheckSetup s;
        s.eps = 1e-2;
        s.floor = 1e-2;
        s.tolerance = 1e-2;
        return s;
    }
};

namespace detail {

template <class T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix<T> m(r, c);
    for (auto& v : m.values()) v = static_cast<T>(rng.gaussian());
    return m;
}

template <class T>
Matrix<T> random_bits(std::size_t r, std::size_t c, Rng& rng) {
    Matrix<T> m(r, c);
    for (auto& v : m.values()) v = rng.bernoulli(0.5) ? T{1} : T{0};
    return m;
}

template <class P>
void flip_block(P& grad, std::string_view name) {
    for (auto& b : grad.blocks())
        if (b.name == name)
            for (auto& v : b.value->values()) v = -v;
}

}  // namespace detail

/// One random parameter/input draw for DAN.
template <class T = double>
GradcheckReport gradcheck_dan(const GradcheckSetup& s, Rng& rng, DanOptions options = {}) {
    auto p = init_dan<T>({s.input_dim, s.n_attributes, s.hidden}, rng, options);
    for (auto& b : p.blocks())
        if (b.name == "attr_bias" || b.name == "pair_bias" || b.name == "out_bias")
            *b.value = options.bias ? detail::random_matrix<T>(b.value->rows(), b.value->cols(), rng) : *b.value;
    PairBatch<T> batch{detail::random_matrix<T>(s.batch, s.input_dim, rng),
                       detail::random_matrix<T>(s.batch, s.input_dim, rng),
                       detail::random_bits<T>(s.batch, s.n_attributes, rng)};
    auto g = backward(p, batch);
    if (s.inject_sign_flip) detail::flip_block(g.grad, "pair_weights");
    return check_gradients(p, g.grad, [&](const DanParams<T>& q) { return batch_loss(q, batch); }, s.eps, s.floor);
}

template <class T = double>
GradcheckReport gradcheck_ablation(const GradcheckSetup& s, Rng& rng) {
    auto p = init_ablation<T>(s.input_dim, s.n_attributes, s.hidden, rng);
    p.hidden_bias = detail::random_matrix<T>(1, s.hidden, rng);
    p.out_bias = detail::random_matrix<T>(1, s.n_attributes, rng);
    PairBatch<T> batch{detail::random_matrix<T>(s.batch, s.input_dim, rng),
                       detail::random_matrix<T>(s.batch, s.input_dim, rng),
                       detail::random_bits<T>(s.batch, s.n_attributes, rng)};
    auto g = backward(p, batch);
    if (s.inject_sign_flip) detail::flip_block(g.grad, "out_weights");
    return check_gradients(p, g.grad, [&](const AblationParams<T>& q) { return batch_loss(q, batch); }, s.eps, s.floor);
}

template <class T = double>
GradcheckReport gradcheck_classifier(const GradcheckSetup& s, Rng& rng) {
    auto p = init_classifier<T>(s.input_dim, s.n_attributes, s.hidden, rng);
    p.hidden_bias = detail::random_matrix<T>(1, s.hidden, rng);
    p.out_bias = detail::random_matrix<T>(1, s.n_attributes, rng);
    InstanceBatch<T> batch{detail::random_matrix<T>(s.batch, s.input_dim, rng),
                           detail::random_bits<T>(s.batch, s.n_attributes, rng)};
    auto g = backward(p, batch);
    if (s.inject_sign_flip) detail::flip_block(g.grad, "out_weights");
    return check_gradients(p, g.grad, [&](const ClassifierParams<T>& q) { return batch_loss(q, batch); }, s.eps, s.floor);
}

}  // namespace dan
