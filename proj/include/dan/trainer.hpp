#pragma once

// Mini-batch rmsprop with per-epoch instance resampling and validation-based
// model selection. Everything is driven by one seeded Rng, so a (world,
// config) pair reproduces every loss value and the returned weights bitwise.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dan/baselines.hpp"
#include "dan/dataset.hpp"
#include "dan/evaluator.hpp"
#include "dan/metrics.hpp"
#include "dan/model.hpp"
#include "dan/params.hpp"
#include "dan/rng.hpp"

namespace dan {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EvalMetric { val_loss, val_f1 };

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double rms_decay = 0.9;
    double rms_epsilon = 1e-8;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;  // 0 disables early stopping
    std::uint64_t seed = 7;
    EvalMetric eval_metric = EvalMetric::val_loss;
    bool ordered_pairs = false;
    double clip_norm = 0.0;     // 0 disables gradient clipping
    double threshold = 0.5;     // for validation F1
    bool record_wall_time = false;
    bool orient_units = true;   // DAN only: fix attribute-unit polarity after training

    void validate() const {
        if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
        if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw ParameterError("rms_decay must lie in (0, 1)");
        if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
        if (!(rms_epsilon >= 0.0)) throw ParameterError("rms_epsilon must be >= 0");
        if (!(clip_norm >= 0.0)) throw ParameterError("clip_norm must be >= 0");
    }
};

template <HasBlocks P>
struct RmsState {
    P accumulators;

    explicit RmsState(const P& like) : accumulators(zeros_like(like)) {}
};

/// s <- rho*s + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(s)+eps), every block.
template <HasBlocks P>
void rmsprop_step(P& params, const P& grads, RmsState<P>& state, const TrainConfig& cfg) {
    auto pb = params.blocks();
    auto gb = grads.blocks();
    auto sb = state.accumulators.blocks();
    for (std::size_t i = 0; i < pb.size(); ++i) {
        auto& w = *pb[i].value;
        const auto& g = *gb[i].value;
        auto& s = *sb[i].value;
        if (!w.same_shape(g) || !w.same_shape(s)) {
            throw ShapeError("rmsprop_step: block '" + std::string(pb[i].name) + "' has shape " + w.shape() +
                             " but gradient " + g.shape() + " and state " + s.shape());
        }
        using T = typename std::remove_cvref_t<decltype(w)>::value_type;
        const auto rho = static_cast<T>(cfg.rms_decay);
        const auto lr = static_cast<T>(cfg.learning_rate);
        const auto eps = static_cast<T>(cfg.rms_epsilon);
        for (std::size_t k = 0; k < w.size(); ++k) {
            s[k] = rho * s[k] + (T{1} - rho) * g[k] * g[k];
            if (g[k] != T{0}) w[k] -= lr * g[k] / (std::sqrt(s[k]) + eps);
        }
    }
}

template <HasBlocks P>
double gradient_norm(const P& grads) {
    double s = 0.0;
    for (const auto& b : grads.blocks())
        for (auto x : b.value->values()) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

template <HasBlocks P>
void scale_gradient(P& grads, double factor) {
    for (auto& b : grads.blocks())
        for (auto& x : b.value->values()) x = static_cast<std::remove_cvref_t<decltype(x)>>(x * factor);
}

// ---------------------------------------------------------------------------
// Batching

/// One training example: a pair plus the instance rows drawn for it.
struct SampledPair {
    std::size_t triple = 0;
    std::size_t referent_instance = 0;
    std::size_t context_instance = 0;
};

/// Shuffles the pairs, draws one instance of each concept per pair, and cuts
/// the epoch into batches; the last short batch is kept.
inline std::vector<std::vector<SampledPair>> make_batches(std::span<const PairTriple> triples, const World& world,
                                                          std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw ParameterError("make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span(order));

    std::vector<std::vector<SampledPair>> batches;
    batches.reserve((triples.size() + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<SampledPair> batch;
        const std::size_t end = std::min(order.size(), start + batch_size);
        for (std::size_t k = start; k < end; ++k) {
            const auto& t = triples[order[k]];
            const auto nr = world.instances.at(t.referent).rows();
            const auto nc = world.instances.at(t.context).rows();
            if (nr == 0 || nc == 0) {
                throw ParameterError("make_batches: concept '" + world.concepts[nr == 0 ? t.referent : t.context].id +
                                     "' has no instances");
            }
            SampledPair s{order[k], 0, 0};
            s.referent_instance = static_cast<std::size_t>(rng.below(nr));
            s.context_instance = static_cast<std::size_t>(rng.below(nc));
            batch.push_back(s);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

template <class T = double>
PairBatch<T> materialize(std::span<const SampledPair> batch, std::span<const PairTriple> triples, const World& world) {
    const std::size_t d = world.dim;
    const std::size_t nv = world.n_attributes();
    PairBatch<T> out{Matrix<T>(batch.size(), d), Matrix<T>(batch.size(), d), Matrix<T>(batch.size(), nv)};
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& t = triples[batch[b].triple];
        const auto r = world.instances[t.referent].row(batch[b].referent_instance);
        const auto c = world.instances[t.context].row(batch[b].context_instance);
        std::copy(r.begin(), r.end(), out.referents.row(b).begin());
        std::copy(c.begin(), c.end(), out.contexts.row(b).begin());
        for (std::size_t v = 0; v < nv; ++v) out.gold(b, v) = static_cast<T>(t.gold[v]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// History and the generic loop

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_f1 = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    double initial_train_loss = 0.0;
    std::size_t best_epoch = 0;  // 0: the initial parameters were kept
};

template <class P>
struct TrainResult {
    P params;
    TrainHistory history;
};

struct ValScores {
    double loss = 0.0;
    double f1 = 0.0;
};

inline bool improves(const ValScores& candidate, const ValScores& best, EvalMetric m) {
    return m == EvalMetric::val_loss ? candidate.loss < best.loss : candidate.f1 > best.f1;
}

/// epoch(params, state, rng) -> mean train loss; validate(params) -> ValScores.
template <HasBlocks P, class EpochFn, class ValFn>
TrainResult<P> run_training(P params, const TrainConfig& cfg, Rng& rng, double initial_train_loss, EpochFn&& epoch,
                            ValFn&& validate) {
    TrainResult<P> result{params, {}};
    result.history.initial_train_loss = initial_train_loss;
    if (cfg.max_epochs == 0) return result;

    RmsState<P> state(params);
    ValScores best{std::numeric_limits<double>::infinity(), -1.0};
    std::size_t since_best = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
        const double train_loss = epoch(params, state, rng);
        if (!std::isfinite(train_loss)) {
            throw DivergenceError("training diverged: non-finite train loss at epoch " + std::to_string(e));
        }
        const ValScores val = validate(params);
        if (!std::isfinite(val.loss)) {
            throw DivergenceError("training diverged: non-finite validation loss at epoch " + std::to_string(e));
        }
        EpochRecord rec{e, train_loss, val.loss, val.f1, 0.0};
        if (cfg.record_wall_time) {
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        result.history.epochs.push_back(rec);
        if (improves(val, best, cfg.eval_metric)) {
            best = val;
            result.params = params;
            result.history.best_epoch = e;
            since_best = 0;
        } else if (cfg.patience && ++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

namespace detail {

template <class P, class Batch>
void apply_batch(P& params, RmsState<P>& state, const Batch& batch, const TrainConfig& cfg, double& loss_sum) {
    auto g = backward(params, batch);
    if (!std::isfinite(g.loss) || !all_finite(g.grad)) {
        throw DivergenceError("training diverged: non-finite loss or gradient");
    }
    if (cfg.clip_norm > 0.0) {
        const double n = gradient_norm(g.grad);
        if (n > cfg.clip_norm) scale_gradient(g.grad, cfg.clip_norm / n);
    }
    rmsprop_step(params, g.grad, state, cfg);
    loss_sum += g.loss * static_cast<double>(batch.size());
}

}  // namespace detail

/// Validation on concept-vector pairs of the validation split.
template <class P>
ValScores validate_pairs(const P& params, std::span<const EvalPair> pairs, double threshold) {
    using T = typename std::remove_cvref_t<decltype(params.out_bias)>::value_type;
    double loss_sum = 0.0;
    std::vector<AttrSet> predicted, gold;
    for (const auto& e : pairs) {
        std::vector<T> vr(e.v_r.begin(), e.v_r.end());
        std::vector<T> vc(e.v_c.begin(), e.v_c.end());
        std::vector<T> scores;
        if constexpr (std::is_same_v<P, DanParams<T>>)
            scores = forward<T>(params, vr, vc).d_hat;
        else
            scores = ablation_forward<T>(params, vr, vc);
        const auto bits = to_bits(e.gold, scores.size());
        loss_sum += static_cast<double>(loss<T>(scores, bits));
        predicted.push_back(threshold_set<T>(scores, threshold));
        gold.push_back(e.gold);
    }
    ValScores s;
    s.loss = pairs.empty() ? 0.0 : loss_sum / static_cast<double>(pairs.size());
    s.f1 = prf(predicted, gold).f1;
    return s;
}

/// Trains a pair model (DAN or the ablation) from initial parameters.
template <class P>
TrainResult<P> train_pair_model(P init, const World& world, const TrainConfig& cfg) {
    cfg.validate();
    using T = typename std::remove_cvref_t<decltype(init.out_bias)>::value_type;
    const auto triples = build_pairs(world, Split::train, cfg.ordered_pairs);
    const ConceptVectors vectors(world);
    const auto val_pairs = build_eval_pairs(world, vectors, Split::val);

    Rng rng(cfg.seed);
    double initial = 0.0;
    {
        Rng probe = rng.derive(0x1417);
        const auto batches = make_batches(triples, world, cfg.batch_size, probe);
        double sum = 0.0;
        for (const auto& b : batches) {
            const auto pb = materialize<T>(b, triples, world);
            sum += batch_loss(init, pb) * static_cast<double>(pb.size());
        }
        initial = sum / static_cast<double>(triples.size());
    }

    auto epoch = [&](P& params, RmsState<P>& state, Rng& r) {
        const auto batches = make_batches(triples, world, cfg.batch_size, r);
        double sum = 0.0;
        for (const auto& b : batches) detail::apply_batch(params, state, materialize<T>(b, triples, world), cfg, sum);
        return sum / static_cast<double>(triples.size());
    };
    auto validate = [&](const P& params) { return validate_pairs(params, val_pairs, cfg.threshold); };
    return run_training(std::move(init), cfg, rng, initial, epoch, validate);
}

/// One (concept, instance) row of the classifier's training set.
struct InstanceRef {
    std::size_t concept_index = 0;
    std::size_t instance = 0;
};

template <class T = double>
InstanceBatch<T> materialize(std::span<const InstanceRef> refs, const World& world) {
    InstanceBatch<T> out{Matrix<T>(refs.size(), world.dim), Matrix<T>(refs.size(), world.n_attributes())};
    for (std::size_t b = 0; b < refs.size(); ++b) {
        const auto v = world.instances[refs[b].concept_index].row(refs[b].instance);
        std::copy(v.begin(), v.end(), out.inputs.row(b).begin());
        const auto& a = world.concepts[refs[b].concept_index].attributes;
        for (std::size_t k = 0; k < a.size(); ++k) out.targets(b, k) = static_cast<T>(a[k]);
    }
    return out;
}

/// Trains the attribute classifier on every training instance once per epoch
/// with per-attribute logistic loss. Validation scores attribute prediction
/// on validation concept vectors.
template <class T>
TrainResult<ClassifierParams<T>> train_classifier(ClassifierParams<T> init, const World& world, const TrainConfig& cfg) {
    cfg.validate();
    using P = ClassifierParams<T>;
    std::vector<InstanceRef> rows;
    for (auto c : world.concepts_in(Split::train))
        for (std::size_t i = 0; i < world.instances[c].rows(); ++i) rows.push_back({c, i});
    if (rows.empty()) throw ParameterError("train_classifier: no training instances");
    const ConceptVectors vectors(world);
    const auto val_concepts = build_eval_concepts(world, vectors, Split::val);

    auto batches_of = [&](Rng& r) {
        auto order = rows;
        r.shuffle(std::span(order));
        return order;
    };

    Rng rng(cfg.seed);
    double initial = 0.0;
    {
        Rng probe = rng.derive(0x1417);
        const auto order = batches_of(probe);
        for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - s);
            const auto b = materialize<T>(std::span(order).subspan(s, n), world);
            initial += batch_loss(init, b) * static_cast<double>(n);
        }
        initial /= static_cast<double>(rows.size());
    }

    auto epoch = [&](P& params, RmsState<P>& state, Rng& r) {
        const auto order = batches_of(r);
        double sum = 0.0;
        for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - s);
            detail::apply_batch(params, state, materialize<T>(std::span(order).subspan(s, n), world), cfg, sum);
        }
        return sum / static_cast<double>(order.size());
    };
    auto validate = [&](const P& params) {
        double loss_sum = 0.0;
        std::vector<AttrSet> predicted, gold;
        for (const auto& c : val_concepts) {
            std::vector<T> v(c.v.begin(), c.v.end());
            const auto logits = mlp_forward<T>(params, v).out;
            std::vector<T> y(logits.size(), T{0});
            for (auto a : c.gold) y[a] = T{1};
            loss_sum += static_cast<double>(cross_entropy<T>(logits, y));
            predicted.push_back(to_set(predict_attributes<T>(params, v, cfg.threshold)));
            gold.push_back(c.gold);
        }
        return ValScores{loss_sum / static_cast<double>(val_concepts.size()), prf(predicted, gold).f1};
    };
    return run_training(std::move(init), cfg, rng, initial, epoch, validate);
}

/// Sets the readout polarity of every attribute unit from the (unlabeled)
/// training concept vectors.
template <class T>
void orient_on_training_concepts(DanParams<T>& p, const World& world) {
    const ConceptVectors vectors(world);
    std::vector<std::span<const double>> inputs;
    for (auto c : world.concepts_in(Split::train)) inputs.push_back(vectors[c]);
    p.inverted_units = orient_attribute_units(p, inputs);
}

/// Default-initialized DAN trained on `world`; initialization uses a stream
/// derived from the config seed.
template <class T = double>
TrainResult<DanParams<T>> train_dan(const World& world, const TrainConfig& cfg, std::size_t hidden = 60,
                                    DanOptions options = {}) {
    Rng init_rng = Rng(cfg.seed).derive(0xDA17);
    auto p = init_dan<T>({world.dim, world.n_attributes(), hidden}, init_rng, options);
    auto result = train_pair_model(std::move(p), world, cfg);
    if (cfg.orient_units && !result.history.epochs.empty()) orient_on_training_concepts(result.params, world);
    return result;
}

template <class T = double>
TrainResult<AblationParams<T>> train_ablation(const World& world, const TrainConfig& cfg, std::size_t hidden) {
    Rng init_rng = Rng(cfg.seed).derive(0xDA17);
    auto p = init_ablation<T>(world.dim, world.n_attributes(), hidden, init_rng);
    return train_pair_model(std::move(p), world, cfg);
}

template <class T = double>
TrainResult<ClassifierParams<T>> train_attr_classifier(const World& world, const TrainConfig& cfg, std::size_t hidden) {
    Rng init_rng = Rng(cfg.seed).derive(0xDA17);
    auto p = init_classifier<T>(world.dim, world.n_attributes(), hidden, init_rng);
    return train_classifier(std::move(p), world, cfg);
}

}  // namespace dan
