#pragma once

// Attribute spaces, concepts, instance vectors, stratified splits and
// referent/context pair enumeration. Also hosts the synthetic world
// generator: a linear-plus-Gaussian "renderer" that maps attribute vectors
// into a dense visual space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dan/numeric.hpp"
#include "dan/rng.hpp"

namespace dan {

using AttributeVector = std::vector<std::uint8_t>;
/// Sorted attribute ids.
using AttrSet = std::vector<std::uint32_t>;

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

struct AttributeSpace {
    std::vector<std::string> names;

    std::size_t size() const noexcept { return names.size(); }
    std::optional<std::size_t> index_of(std::string_view name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - names.begin());
    }
};

struct Concept {
    std::string id;
    std::string category;
    AttributeVector attributes;

    friend bool operator==(const Concept&, const Concept&) = default;
};

struct PairTriple {
    std::size_t referent;  // index into World::concepts
    std::size_t context;
    AttributeVector gold;
};

struct World {
    AttributeSpace space;
    std::vector<Concept> concepts;
    /// One matrix per concept: rows are instances, columns the visual dimension.
    std::vector<Matrix<double>> instances;
    std::vector<Split> splits;
    /// D x |V| renderer for synthetic worlds; empty for loaded data.
    Matrix<double> render_map;
    double noise_std = 0.0;
    std::size_t dim = 0;

    std::size_t n_attributes() const noexcept { return space.size(); }

    std::optional<std::size_t> find(std::string_view id) const {
        for (std::size_t i = 0; i < concepts.size(); ++i)
            if (concepts[i].id == id) return i;
        return std::nullopt;
    }

    std::vector<std::size_t> concepts_in(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < splits.size(); ++i)
            if (splits[i] == s) out.push_back(i);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Attribute-vector helpers

inline AttributeVector symmetric_difference(std::span<const std::uint8_t> referent,
                                            std::span<const std::uint8_t> context) {
    if (referent.size() != context.size()) {
        throw ShapeError("symmetric_difference: lengths " + std::to_string(referent.size()) +
                         " and " + std::to_string(context.size()));
    }
    AttributeVector out(referent.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>((referent[i] != 0) != (context[i] != 0));
    return out;
}

inline std::size_t popcount(std::span<const std::uint8_t> bits) {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

inline AttrSet to_set(std::span<const std::uint8_t> bits) {
    AttrSet out;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

inline AttributeVector to_bits(const AttrSet& set, std::size_t n) {
    AttributeVector out(n, 0);
    for (auto v : set) {
        if (v >= n) throw ShapeError("attribute id " + std::to_string(v) + " out of range " + std::to_string(n));
        out[v] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitAssignment {
    std::vector<Split> splits;  // parallel to the input concept list
    std::vector<std::string> warnings;
};

/// Number of concepts a category of size n contributes to (train, val, test).
/// Val and test are round(n * ratio); train takes the remainder. Categories
/// with at least three members get at least one concept in every split;
/// smaller categories go entirely to train.
inline std::array<std::size_t, 3> stratum_counts(std::size_t n, const SplitRatios& r) {
    if (n < 3) return {n, 0, 0};
    auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.val));
    auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test));
    val = std::max<std::size_t>(val, 1);
    test = std::max<std::size_t>(test, 1);
    while (val + test > n - 1) {
        if (val >= test && val > 1)
            --val;
        else if (test > 1)
            --test;
        else
            break;
    }
    return {n - val - test, val, test};
}

inline SplitAssignment split_concepts(std::span<const Concept> concepts, const SplitRatios& ratios,
                                      Rng& rng) {
    if (concepts.empty()) throw ParameterError("split_concepts: no concepts");
    const double total = ratios.train + ratios.val + ratios.test;
    if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
        throw ParameterError("split_concepts: ratios must be non-negative and sum to 1");
    }

    // Categories in order of first appearance, so the shuffle sequence is fixed.
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        auto [it, inserted] = members.try_emplace(concepts[i].category);
        if (inserted) order.push_back(concepts[i].category);
        it->second.push_back(i);
    }

    SplitAssignment out;
    out.splits.assign(concepts.size(), Split::train);
    for (const auto& cat : order) {
        auto& idx = members[cat];
        if (idx.size() < 3) {
            out.warnings.push_back("category '" + cat + "' has " + std::to_string(idx.size()) +
                                   " concept(s); all assigned to train");
            continue;
        }
        rng.shuffle(std::span(idx));
        const auto [n_train, n_val, n_test] = stratum_counts(idx.size(), ratios);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.splits[idx[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
        }
        (void)n_test;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pairs

/// All unordered pairs among `members` (indices into world.concepts). The
/// concept with the lexicographically smaller id is the referent; with
/// `ordered`, both role assignments are emitted.
inline std::vector<PairTriple> build_pairs(const World& world, std::span<const std::size_t> members,
                                           bool ordered = false) {
    if (members.size() < 2) throw ParameterError("build_pairs: need at least two concepts");
    std::vector<std::size_t> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return world.concepts[a].id < world.concepts[b].id;
    });
    std::vector<PairTriple> out;
    out.reserve(sorted.size() * (sorted.size() - 1) / (ordered ? 1 : 2));
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        for (std::size_t j = i + 1; j < sorted.size(); ++j) {
            const auto& a = world.concepts[sorted[i]];
            const auto& b = world.concepts[sorted[j]];
            auto gold = symmetric_difference(a.attributes, b.attributes);
            if (ordered) out.push_back({sorted[j], sorted[i], gold});
            out.push_back({sorted[i], sorted[j], std::move(gold)});
        }
    }
    return out;
}

inline std::vector<PairTriple> build_pairs(const World& world, Split split, bool ordered = false) {
    const auto members = world.concepts_in(split);
    return build_pairs(world, members, ordered);
}

// ---------------------------------------------------------------------------
// Synthetic worlds

struct WorldConfig {
    std::size_t n_categories = 8;
    std::size_t concepts_per_category = 15;
    std::size_t n_attributes = 64;
    std::size_t dim = 128;
    std::size_t instances_per_concept = 30;
    double attr_density = 0.2;
    double category_coherence = 0.9;
    double noise_std = 0.1;
    SplitRatios ratios{};
};

/// v = G * p_c + eps, eps ~ N(0, noise_std) per coordinate.
inline std::vector<double> render_instance(const World& world, std::size_t concept_index, Rng& rng) {
    if (concept_index >= world.concepts.size()) {
        throw ParameterError("render_instance: unknown concept index " + std::to_string(concept_index));
    }
    const auto& g = world.render_map;
    const auto& p = world.concepts[concept_index].attributes;
    if (g.rows() != world.dim || g.cols() != p.size()) {
        throw ShapeError("render_instance: render map " + g.shape() + " does not match world dims");
    }
    std::vector<double> v(world.dim, 0.0);
    for (std::size_t i = 0; i < world.dim; ++i) {
        double s = 0.0;
        auto gr = g.row(i);
        for (std::size_t a = 0; a < p.size(); ++a)
            if (p[a]) s += gr[a];
        v[i] = s;
    }
    if (world.noise_std > 0.0)
        for (auto& x : v) x += world.noise_std * rng.gaussian();
    return v;
}

inline std::vector<double> render_instance(const World& world, std::string_view concept_id, Rng& rng) {
    auto idx = world.find(concept_id);
    if (!idx) throw ParameterError("render_instance: unknown concept '" + std::string(concept_id) + "'");
    return render_instance(world, *idx, rng);
}

inline std::string synthetic_category_id(std::size_t c) {
    std::string s = std::to_string(c);
    return "cat" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

inline std::string synthetic_concept_id(std::size_t c, std::size_t k) {
    std::string s = std::to_string(k);
    return synthetic_category_id(c) + "_c" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

/// Category prototypes ~ Bernoulli(attr_density); each concept flips each
/// prototype bit with probability 1 - category_coherence. The render map is
/// drawn once with N(0, 1/sqrt(|V|)) entries.
inline World gen_world(const WorldConfig& cfg, Rng& rng) {
    if (cfg.n_categories == 0 || cfg.concepts_per_category == 0 || cfg.n_attributes == 0 ||
        cfg.dim == 0 || cfg.instances_per_concept == 0) {
        throw ParameterError("gen_world: all counts must be >= 1");
    }
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(cfg.attr_density) || !in_unit(cfg.category_coherence)) {
        throw ParameterError("gen_world: attr_density and category_coherence must lie in [0, 1]");
    }
    if (!(cfg.noise_std >= 0.0)) throw ParameterError("gen_world: noise_std must be >= 0");

    World w;
    w.dim = cfg.dim;
    w.noise_std = cfg.noise_std;
    for (std::size_t a = 0; a < cfg.n_attributes; ++a) w.space.names.push_back("attr" + std::to_string(a));

    for (std::size_t c = 0; c < cfg.n_categories; ++c) {
        AttributeVector proto(cfg.n_attributes);
        for (auto& b : proto) b = rng.bernoulli(cfg.attr_density) ? 1 : 0;
        for (std::size_t k = 0; k < cfg.concepts_per_category; ++k) {
            Concept con{synthetic_concept_id(c, k), synthetic_category_id(c), proto};
            for (auto& b : con.attributes)
                if (rng.bernoulli(1.0 - cfg.category_coherence)) b ^= 1;
            w.concepts.push_back(std::move(con));
        }
    }

    const double g_std = 1.0 / std::sqrt(static_cast<double>(cfg.n_attributes));
    w.render_map = Matrix<double>(cfg.dim, cfg.n_attributes, rng_gaussian(rng, cfg.dim * cfg.n_attributes, 0.0, g_std));

    for (std::size_t i = 0; i < w.concepts.size(); ++i) {
        Matrix<double> inst(cfg.instances_per_concept, cfg.dim);
        for (std::size_t r = 0; r < cfg.instances_per_concept; ++r) {
            auto v = render_instance(w, i, rng);
            std::copy(v.begin(), v.end(), inst.row(r).begin());
        }
        w.instances.push_back(std::move(inst));
    }

    w.splits = split_concepts(w.concepts, cfg.ratios, rng).splits;
    return w;
}

/// Mean of the instance rows.
inline std::vector<double> concept_vector(const Matrix<double>& instances) {
    if (instances.rows() == 0) throw ParameterError("concept_vector: no instances");
    return mean_rows(instances);
}

struct PairStatistics {
    std::size_t n_concepts = 0;
    std::size_t n_pairs = 0;
    std::uint64_t total_discriminative = 0;
    double mean_discriminative = 0.0;
};

/// Pair count and mean gold popcount over all unordered pairs of `members`,
/// computed per attribute as k * (n - k) rather than by scanning pairs.
inline PairStatistics pair_statistics(const World& world, std::span<const std::size_t> members) {
    PairStatistics s;
    s.n_concepts = members.size();
    s.n_pairs = members.size() < 2 ? 0 : members.size() * (members.size() - 1) / 2;
    for (std::size_t a = 0; a < world.n_attributes(); ++a) {
        std::uint64_t k = 0;
        for (auto i : members) k += world.concepts[i].attributes[a] ? 1 : 0;
        s.total_discriminative += k * (members.size() - k);
    }
    s.mean_discriminative =
        s.n_pairs ? static_cast<double>(s.total_discriminative) / static_cast<double>(s.n_pairs) : 0.0;
    return s;
}

inline PairStatistics pair_statistics(const World& world) {
    std::vector<std::size_t> all(world.concepts.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return pair_statistics(world, all);
}

inline PairStatistics pair_statistics(const World& world, Split split) {
    const auto members = world.concepts_in(split);
    return pair_statistics(world, members);
}

}  // namespace dan
