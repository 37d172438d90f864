#pragma once

// Evaluation protocols: discriminativeness P/R/F1 on held-out concept pairs,
// attribute prediction from concept vectors, and a simulated referential game
// with a rule-based listener.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dan/baselines.hpp"
#include "dan/dataset.hpp"
#include "dan/metrics.hpp"
#include "dan/model.hpp"
#include "dan/parallel.hpp"
#include "dan/rng.hpp"

namespace dan {

struct EvalPair {
    std::size_t referent = 0;
    std::size_t context = 0;
    std::span<const double> v_r;  // views into a ConceptVectors table
    std::span<const double> v_c;
    AttrSet gold;
};

struct EvalConcept {
    std::size_t index = 0;
    std::span<const double> v;
    AttrSet gold;
};

/// Averaged instance vector for every concept in the world, indexed like world.concepts.
class ConceptVectors {
public:
    explicit ConceptVectors(const World& world) {
        table_.reserve(world.concepts.size());
        for (const auto& inst : world.instances)
            table_.push_back(inst.rows() ? concept_vector(inst) : std::vector<double>{});
    }
    std::span<const double> operator[](std::size_t i) const { return table_.at(i); }

private:
    std::vector<std::vector<double>> table_;
};

/// Unordered pairs of the split's concepts (lexicographic roles), optionally
/// subsampled to `max_pairs` by seed.
inline std::vector<EvalPair> build_eval_pairs(const World& world, const ConceptVectors& vectors, Split split,
                                              std::size_t max_pairs = 0, std::uint64_t seed = 0) {
    const auto members = world.concepts_in(split);
    if (members.size() < 2) {
        throw ParameterError("evaluation split '" + std::string(to_string(split)) + "' has fewer than two concepts");
    }
    auto triples = build_pairs(world, members);
    if (max_pairs && max_pairs < triples.size()) {
        Rng rng(seed);
        rng.shuffle(std::span(triples));
        triples.resize(max_pairs);
        std::sort(triples.begin(), triples.end(), [&](const PairTriple& a, const PairTriple& b) {
            return std::pair(world.concepts[a.referent].id, world.concepts[a.context].id) <
                   std::pair(world.concepts[b.referent].id, world.concepts[b.context].id);
        });
    }
    std::vector<EvalPair> out;
    out.reserve(triples.size());
    for (const auto& t : triples) out.push_back({t.referent, t.context, vectors[t.referent], vectors[t.context], to_set(t.gold)});
    return out;
}

inline std::vector<EvalConcept> build_eval_concepts(const World& world, const ConceptVectors& vectors, Split split) {
    const auto members = world.concepts_in(split);
    if (members.empty()) {
        throw ParameterError("evaluation split '" + std::string(to_string(split)) + "' is empty");
    }
    std::vector<EvalConcept> out;
    for (auto i : members) out.push_back({i, vectors[i], to_set(world.concepts[i].attributes)});
    return out;
}

struct EvalOutcome {
    PrfReport report;
    std::vector<AttrSet> predicted;
    std::vector<AttrSet> gold;
};

/// Scores `predict(item, index) -> AttrSet` over items carrying a `gold` set.
/// Predictions may run on several workers; scoring happens in item order.
template <class Item, class Predict>
EvalOutcome score_items(std::span<const Item> items, Predict&& predict, unsigned workers = 1,
                        Averaging averaging = Averaging::micro) {
    EvalOutcome out;
    out.predicted.resize(items.size());
    parallel_for_index(items.size(), workers, [&](std::size_t i) { out.predicted[i] = predict(items[i], i); });
    out.gold.reserve(items.size());
    for (const auto& it : items) out.gold.push_back(it.gold);
    out.report = prf(out.predicted, out.gold, averaging);
    return out;
}

template <class Predict>
EvalOutcome eval_discriminativeness(std::span<const EvalPair> pairs, Predict&& predict, unsigned workers = 1,
                                    Averaging averaging = Averaging::micro) {
    return score_items<EvalPair>(pairs, std::forward<Predict>(predict), workers, averaging);
}

template <class Predict>
EvalOutcome eval_attributes(std::span<const EvalConcept> concepts, Predict&& predict, unsigned workers = 1,
                            Averaging averaging = Averaging::micro) {
    return score_items<EvalConcept>(concepts, std::forward<Predict>(predict), workers, averaging);
}

/// Mean size of the predicted discriminative sets.
inline double active_count(std::span<const AttrSet> predicted) { return mean_set_size(predicted); }

template <class Predict>
double active_count(std::span<const EvalPair> pairs, Predict&& predict) {
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) total += static_cast<double>(predict(pairs[i], i).size());
    return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Predictor adapters

inline auto dan_discriminator(const DanParams<double>& p, double threshold = 0.5) {
    return [&p, threshold](const EvalPair& e, std::size_t) { return predict_discriminative(p, e.v_r, e.v_c, threshold); };
}

inline auto ablation_discriminator(const AblationParams<double>& p, double threshold = 0.5) {
    return [&p, threshold](const EvalPair& e, std::size_t) { return predict_discriminative(p, e.v_r, e.v_c, threshold); };
}

inline auto classifier_discriminator(const ClassifierParams<double>& p, double threshold = 0.5) {
    return [&p, threshold](const EvalPair& e, std::size_t) {
        return attr_classifier_discriminate(p, e.v_r, e.v_c, threshold);
    };
}

/// Each item gets its own stream derived from (seed, index), so results do
/// not depend on evaluation order or worker count.
inline auto random_predictor(const RandomBaseline& b, std::uint64_t seed) {
    return [&b, seed](const auto&, std::size_t i) {
        Rng rng = Rng(seed).derive(i);
        return sample_random_prediction(b, rng);
    };
}

inline auto gold_predictor() {
    return [](const auto& item, std::size_t) { return item.gold; };
}

inline auto dan_attribute_reader(const DanParams<double>& p, double threshold = 0.5) {
    return [&p, threshold](const EvalConcept& c, std::size_t) { return to_set(predict_attributes(p, c.v, threshold)); };
}

inline auto classifier_attribute_reader(const ClassifierParams<double>& p, double threshold = 0.5) {
    return [&p, threshold](const EvalConcept& c, std::size_t) { return to_set(predict_attributes(p, c.v, threshold)); };
}

// ---------------------------------------------------------------------------
// Referential game

/// An attribute plus its polarity: positive means "the referent has it",
/// negative "the referent lacks it".
struct SignedAttribute {
    std::uint32_t id = 0;
    bool positive = true;
};

struct GameItem {
    std::size_t referent = 0;
    std::size_t context = 0;
    std::span<const double> v_r;
    std::span<const double> v_c;
};

struct GameRecord {
    GameItem item;
    SignedAttribute said;
    bool listener_certain = false;
    bool success = false;
};

struct RefGameReport {
    std::size_t n_pairs = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;
    double chance_level = 0.5;
    double binomial_p_value = 1.0;
};

enum class ListenerChoice { referent, context, guess };

/// Picks the single object whose gold attributes agree with the utterance;
/// if both or neither agree the listener has to guess.
inline ListenerChoice listen(const SignedAttribute& said, const Concept& referent, const Concept& context) {
    const bool r = (referent.attributes.at(said.id) != 0) == said.positive;
    const bool c = (context.attributes.at(said.id) != 0) == said.positive;
    if (r && !c) return ListenerChoice::referent;
    if (c && !r) return ListenerChoice::context;
    return ListenerChoice::guess;
}

/// Plays n_games: two distinct concepts of the split, one random instance
/// each, the first is the referent. `speak(GameItem) -> SignedAttribute`.
template <class Speaker>
RefGameReport refgame(const World& world, Speaker&& speak, std::size_t n_games, Rng& rng, Split split = Split::test,
                      std::vector<GameRecord>* log = nullptr) {
    const auto members = world.concepts_in(split);
    if (members.size() < 2) throw ParameterError("refgame: need at least two concepts in the split");
    RefGameReport rep;
    rep.n_pairs = n_games;
    for (std::size_t g = 0; g < n_games; ++g) {
        const auto ia = static_cast<std::size_t>(rng.below(members.size()));
        auto ib = static_cast<std::size_t>(rng.below(members.size() - 1));
        if (ib >= ia) ++ib;
        GameItem item;
        item.referent = members[ia];
        item.context = members[ib];
        const auto& inst_r = world.instances.at(item.referent);
        const auto& inst_c = world.instances.at(item.context);
        if (inst_r.rows() == 0 || inst_c.rows() == 0) throw ParameterError("refgame: concept without instances");
        item.v_r = inst_r.row(static_cast<std::size_t>(rng.below(inst_r.rows())));
        item.v_c = inst_c.row(static_cast<std::size_t>(rng.below(inst_c.rows())));

        const SignedAttribute said = speak(item);
        const auto choice = listen(said, world.concepts[item.referent], world.concepts[item.context]);
        bool success = choice == ListenerChoice::referent;
        if (choice == ListenerChoice::guess) success = rng.bernoulli(0.5);
        rep.successes += success ? 1 : 0;
        if (log) log->push_back({item, said, choice != ListenerChoice::guess, success});
    }
    rep.success_rate = n_games ? static_cast<double>(rep.successes) / static_cast<double>(n_games) : 0.0;
    rep.binomial_p_value = n_games ? binomial_two_sided_p(rep.successes, n_games, rep.chance_level) : 1.0;
    return rep;
}

/// Speaker that names DAN's top-scoring attribute; polarity comes from
/// comparing the two (oriented) attribute-layer activations for it.
inline auto dan_speaker(const DanParams<double>& p) {
    return [&p](const GameItem& g) {
        const auto act = forward(p, g.v_r, g.v_c);
        const auto best = std::max_element(act.d_hat.begin(), act.d_hat.end()) - act.d_hat.begin();
        const auto v = static_cast<std::size_t>(best);
        const bool referent_higher = p.is_inverted(v) ? act.a_r[v] <= act.a_c[v] : act.a_r[v] >= act.a_c[v];
        return SignedAttribute{static_cast<std::uint32_t>(v), referent_higher};
    };
}

/// Speaker with access to gold attributes: first attribute that separates the
/// pair, phrased from the referent's side.
inline auto gold_speaker(const World& world) {
    return [&world](const GameItem& g) {
        const auto& r = world.concepts[g.referent].attributes;
        const auto& c = world.concepts[g.context].attributes;
        for (std::size_t v = 0; v < r.size(); ++v)
            if (r[v] != c[v]) return SignedAttribute{static_cast<std::uint32_t>(v), r[v] != 0};
        return SignedAttribute{0, true};
    };
}

}  // namespace dan
