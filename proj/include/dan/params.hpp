#pragma once

// Every model stores its weights as a fixed list of named matrices. The
// helpers here work over any type exposing `blocks()` so the optimizer,
// checkpoints and gradient checks do not need to know the architecture.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dan/numeric.hpp"

namespace dan {

enum class ModelKind : std::uint8_t { dan = 0, ablation = 1, classifier = 2 };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::dan: return "dan";
        case ModelKind::ablation: return "ablation";
        case ModelKind::classifier: return "classifier";
    }
    return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
    if (s == "dan") return ModelKind::dan;
    if (s == "ablation") return ModelKind::ablation;
    if (s == "classifier") return ModelKind::classifier;
    return std::nullopt;
}

template <class M>
struct NamedBlock {
    std::string_view name;
    M* value;
};

template <class P>
concept HasBlocks = requires(P& p, const P& cp) {
    p.blocks();
    cp.blocks();
};

template <HasBlocks P>
std::size_t parameter_count(const P& p) {
    std::size_t n = 0;
    for (const auto& b : p.blocks()) n += b.value->size();
    return n;
}

/// Same shapes and metadata as `p`, all weights zero.
template <HasBlocks P>
P zeros_like(const P& p) {
    P out = p;
    for (auto& b : out.blocks()) b.value->fill(0);
    return out;
}

template <HasBlocks P>
bool all_finite(const P& p) {
    for (const auto& b : p.blocks())
        if (!all_finite(b.value->values())) return false;
    return true;
}

template <HasBlocks P>
bool same_weights(const P& a, const P& b) {
    auto ba = a.blocks();
    auto bb = b.blocks();
    if (ba.size() != bb.size()) return false;
    for (std::size_t i = 0; i < ba.size(); ++i)
        if (!(*ba[i].value == *bb[i].value)) return false;
    return true;
}

template <class P>
struct Gradient {
    P grad;
    double loss = 0.0;
};

/// Gaussian(0, 1/sqrt(fan_in)) fill.
template <class T, class Rng>
Matrix<T> gaussian_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    Matrix<T> m(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : m.values()) v = static_cast<T>(sd * rng.gaussian());
    return m;
}

}  // namespace dan
