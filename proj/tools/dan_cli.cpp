// dan: command-line front end for data generation, training, evaluation,
// prediction, gradient checks and the referential game.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include "dan/baselines.hpp"
#include "dan/dataset.hpp"
#include "dan/evaluator.hpp"
#include "dan/gradcheck.hpp"
#include "dan/metrics.hpp"
#include "dan/model.hpp"
#include "dan/storage.hpp"
#include "dan/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit : int { ok = 0, usage = 1, data = 2, numeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string num(double v) { return dan::io::to_chars_exact(v); }

std::string fixed(double v, int digits = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string join_ids(const dan::AttrSet& s) {
    std::string out;
    for (auto v : s) out += (out.empty() ? "" : ",") + std::to_string(v);
    return out;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("DAN_SEED"); env && *env) {
        try {
            return dan::io::parse_uint(env, "DAN_SEED");
        } catch (const dan::FormatError&) {
            std::cerr << "warning: ignoring DAN_SEED='" << env << "' (not an unsigned integer)\n";
        }
    }
    return 7;
}

struct Common {
    std::uint64_t seed = default_seed();
    unsigned workers = 1;
};

// ---------------------------------------------------------------------------
// gen-data

struct GenOptions {
    fs::path out;
    dan::WorldConfig world;
    std::size_t concepts = 0;
};

void print_stats_row(const std::string& label, const dan::PairStatistics& s) {
    std::cout << std::left << std::setw(8) << label << std::right << std::setw(10) << s.n_concepts << std::setw(10)
              << s.n_pairs << std::setw(14) << fixed(s.mean_discriminative, 2) << "\n";
}

int cmd_gen_data(const GenOptions& o, const Common& c) {
    auto cfg = o.world;
    if (o.concepts) {
        cfg.n_categories = 1;
        cfg.concepts_per_category = o.concepts;
    }
    dan::Rng rng(c.seed);
    const auto world = dan::gen_world(cfg, rng);
    dan::save_world(world, o.out);

    std::cout << "world written to " << o.out.string() << "\n"
              << "attributes " << world.n_attributes() << ", dim " << world.dim << ", instances/concept "
              << cfg.instances_per_concept << ", noise_std " << num(world.noise_std) << "\n\n"
              << std::left << std::setw(8) << "split" << std::right << std::setw(10) << "concepts" << std::setw(10)
              << "pairs" << std::setw(14) << "mean |gold|" << "\n";
    print_stats_row("all", dan::pair_statistics(world));
    for (auto s : {dan::Split::train, dan::Split::val, dan::Split::test})
        print_stats_row(std::string(dan::to_string(s)), dan::pair_statistics(world, s));
    return ok;
}

// ---------------------------------------------------------------------------
// import-visa

struct ImportOptions {
    fs::path attributes;
    fs::path vectors;
    fs::path exclude;
    fs::path out;
};

int cmd_import_visa(const ImportOptions& o, const Common& c) {
    std::set<std::string> excluded;
    if (!o.exclude.empty()) excluded = dan::read_exclusions(o.exclude);
    const auto r = dan::load_visa(o.attributes, o.vectors, excluded, c.seed);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    dan::save_world(r.world, o.out);
    std::cout << "world written to " << o.out.string() << "\n"
              << "concepts " << r.world.concepts.size() << ", attributes " << r.world.n_attributes() << " ("
              << r.dropped_attributes.size() << " unused dropped), dim " << r.world.dim << "\n";
    for (auto s : {dan::Split::train, dan::Split::val, dan::Split::test})
        std::cout << dan::to_string(s) << " " << r.world.concepts_in(s).size() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    fs::path world;
    fs::path out;
    std::string model = "dan";
    dan::TrainConfig cfg;
    std::size_t hidden = 0;  // 0: 60 for DAN, parameter parity for the baselines
    std::string metric = "val_loss";
    bool no_attr_sigmoid = false;
    bool no_bias = false;
    bool no_orient = false;
};

void write_history(const fs::path& path, const dan::TrainHistory& h) {
    dan::io::write_atomic(path, [&](std::ostream& out) {
        out << "epoch,train_loss,val_loss,val_f1,seconds\n";
        for (const auto& e : h.epochs)
            out << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ',' << num(e.val_f1) << ','
                << num(e.seconds) << '\n';
    });
}

template <class P>
void report_training(const dan::TrainResult<P>& r, const fs::path& out) {
    const auto& h = r.history;
    std::cout << "initial train loss " << fixed(h.initial_train_loss, 5) << "\n";
    if (!h.epochs.empty()) {
        const auto& last = h.epochs.back();
        std::cout << "epochs run " << h.epochs.size() << ", final train loss " << fixed(last.train_loss, 5)
                  << ", best epoch " << h.best_epoch << "\n";
    }
    std::cout << "checkpoint " << (out / "checkpoint.danc").string() << "\n"
              << "history    " << (out / "history.csv").string() << "\n";
}

int cmd_train(const TrainOptions& o, const Common& c, const std::string& echo) {
    auto kind = dan::parse_model_kind(o.model);
    if (!kind) throw UsageError("unknown model '" + o.model + "'");
    auto cfg = o.cfg;
    cfg.seed = c.seed;
    cfg.eval_metric = o.metric == "val_f1" ? dan::EvalMetric::val_f1 : dan::EvalMetric::val_loss;
    cfg.orient_units = !o.no_orient;

    const auto world = dan::load_world(o.world);
    const dan::DanDims dan_dims{world.dim, world.n_attributes(), o.hidden ? o.hidden : 60};
    fs::create_directories(o.out);

    dan::Checkpoint ck;
    switch (*kind) {
        case dan::ModelKind::dan: {
            auto r = dan::train_dan(world, cfg, dan_dims.hidden, {!o.no_attr_sigmoid, !o.no_bias});
            write_history(o.out / "history.csv", r.history);
            ck = dan::to_checkpoint(r.params, c.seed, echo);
            report_training(r, o.out);
            break;
        }
        case dan::ModelKind::ablation: {
            const auto h = o.hidden ? o.hidden : dan::ablation_hidden_for_parity({world.dim, world.n_attributes(), 60});
            auto r = dan::train_ablation(world, cfg, h);
            write_history(o.out / "history.csv", r.history);
            ck = dan::to_checkpoint(r.params, c.seed, echo);
            report_training(r, o.out);
            break;
        }
        case dan::ModelKind::classifier: {
            const auto h =
                o.hidden ? o.hidden : dan::classifier_hidden_for_parity({world.dim, world.n_attributes(), 60});
            auto r = dan::train_attr_classifier(world, cfg, h);
            write_history(o.out / "history.csv", r.history);
            ck = dan::to_checkpoint(r.params, c.seed, echo);
            report_training(r, o.out);
            break;
        }
    }
    dan::save_checkpoint(o.out / "checkpoint.danc", ck);
    return ok;
}

// ---------------------------------------------------------------------------
// Loaded models

struct LoadedModel {
    dan::ModelKind kind = dan::ModelKind::dan;
    std::optional<dan::DanParams<double>> dan;
    std::optional<dan::AblationParams<double>> ablation;
    std::optional<dan::ClassifierParams<double>> classifier;
};

LoadedModel load_model(const fs::path& path, const dan::World& world) {
    const auto ck = dan::load_checkpoint(path);
    LoadedModel m;
    m.kind = ck.kind;
    std::size_t input = 0, outputs = 0;
    switch (ck.kind) {
        case dan::ModelKind::dan:
            m.dan = dan::dan_from_checkpoint(ck);
            input = m.dan->dims.input_dim;
            outputs = m.dan->dims.n_attributes;
            break;
        case dan::ModelKind::ablation:
            m.ablation = dan::ablation_from_checkpoint(ck);
            input = m.ablation->dims.input_dim / 2;
            outputs = m.ablation->dims.output_dim;
            break;
        case dan::ModelKind::classifier:
            m.classifier = dan::classifier_from_checkpoint(ck);
            input = m.classifier->dims.input_dim;
            outputs = m.classifier->dims.output_dim;
            break;
    }
    if (input != world.dim || outputs != world.n_attributes()) {
        throw dan::FormatError("checkpoint expects dim " + std::to_string(input) + " and " + std::to_string(outputs) +
                               " attributes; world has " + std::to_string(world.dim) + " and " +
                               std::to_string(world.n_attributes()));
    }
    return m;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    fs::path world;
    fs::path checkpoint;
    fs::path out;
    std::string task = "discrim";
    std::string baseline;
    std::string split = "test";
    double threshold = 0.5;
    std::size_t games = 200;
    std::size_t max_pairs = 0;
    bool macro = false;
};

json prf_json(const dan::PrfReport& r) {
    return {{"precision", r.precision}, {"recall", r.recall},   {"f1", r.f1},
            {"tp", r.tp},               {"fp", r.fp},           {"fn", r.fn},
            {"mean_predicted_size", r.mean_predicted_size},     {"n_items", r.n_items}};
}

void print_prf_table(const std::string& system, const dan::PrfReport& r) {
    std::cout << std::left << std::setw(12) << "system" << std::right << std::setw(8) << "P" << std::setw(8) << "R"
              << std::setw(8) << "F1" << std::setw(10) << "|pred|" << "\n"
              << std::left << std::setw(12) << system << std::right << std::setw(8) << fixed(r.precision)
              << std::setw(8) << fixed(r.recall) << std::setw(8) << fixed(r.f1) << std::setw(10)
              << fixed(r.mean_predicted_size, 2) << "\n";
}

void write_predictions(const fs::path& path, const std::vector<std::string>& ids, const dan::EvalOutcome& e) {
    dan::io::write_atomic(path, [&](std::ostream& out) {
        out << "id\tpredicted\tgold\n";
        for (std::size_t i = 0; i < ids.size(); ++i)
            out << ids[i] << '\t' << join_ids(e.predicted[i]) << '\t' << join_ids(e.gold[i]) << '\n';
    });
}

void write_report(const fs::path& out, const json& report) {
    dan::io::write_atomic(out / "report.json", [&](std::ostream& s) { s << report.dump(2) << '\n'; });
}

int cmd_eval(const EvalOptions& o, const Common& c, const std::string& echo) {
    const auto split = dan::parse_split(o.split);
    if (!split) throw UsageError("unknown split '" + o.split + "'");
    if (o.baseline.empty() == o.checkpoint.empty()) throw UsageError("give exactly one of --checkpoint or --baseline");

    const auto world = dan::load_world(o.world);
    std::optional<LoadedModel> model;
    if (!o.checkpoint.empty()) model = load_model(o.checkpoint, world);
    const std::string system = model ? std::string(dan::to_string(model->kind)) : o.baseline;
    const auto averaging = o.macro ? dan::Averaging::macro : dan::Averaging::micro;
    const dan::ConceptVectors vectors(world);

    json report = {{"task", o.task},       {"system", system},  {"split", o.split},
                   {"seed", c.seed},       {"threshold", o.threshold},
                   {"averaging", o.macro ? "macro" : "micro"}, {"config", echo}};

    if (o.task == "discrim") {
        const auto pairs = dan::build_eval_pairs(world, vectors, *split, o.max_pairs, c.seed);
        dan::EvalOutcome e;
        if (!model) {
            if (o.baseline == "random") {
                const auto triples = dan::build_pairs(world, dan::Split::train);
                const auto b = dan::fit_random_baseline(triples);
                e = dan::eval_discriminativeness(pairs, dan::random_predictor(b, c.seed), c.workers, averaging);
            } else {
                e = dan::eval_discriminativeness(pairs, dan::gold_predictor(), c.workers, averaging);
            }
        } else if (model->dan) {
            e = dan::eval_discriminativeness(pairs, dan::dan_discriminator(*model->dan, o.threshold), c.workers, averaging);
        } else if (model->ablation) {
            e = dan::eval_discriminativeness(pairs, dan::ablation_discriminator(*model->ablation, o.threshold), c.workers,
                                             averaging);
        } else {
            e = dan::eval_discriminativeness(pairs, dan::classifier_discriminator(*model->classifier, o.threshold),
                                             c.workers, averaging);
        }
        report["metrics"] = prf_json(e.report);
        report["n_pairs"] = pairs.size();
        print_prf_table(system, e.report);
        if (!o.out.empty()) {
            std::vector<std::string> ids;
            for (const auto& p : pairs) ids.push_back(world.concepts[p.referent].id + "|" + world.concepts[p.context].id);
            write_predictions(o.out / "predictions.tsv", ids, e);
        }
    } else if (o.task == "attrib") {
        const auto concepts = dan::build_eval_concepts(world, vectors, *split);
        dan::EvalOutcome e;
        if (!model) {
            if (o.baseline == "random") {
                std::vector<dan::AttributeVector> train_attrs;
                for (auto i : world.concepts_in(dan::Split::train)) train_attrs.push_back(world.concepts[i].attributes);
                const auto b = dan::fit_random_attribute_baseline(train_attrs);
                e = dan::eval_attributes(concepts, dan::random_predictor(b, c.seed), c.workers, averaging);
            } else {
                e = dan::eval_attributes(concepts, dan::gold_predictor(), c.workers, averaging);
            }
        } else if (model->dan) {
            e = dan::eval_attributes(concepts, dan::dan_attribute_reader(*model->dan, o.threshold), c.workers, averaging);
        } else if (model->classifier) {
            e = dan::eval_attributes(concepts, dan::classifier_attribute_reader(*model->classifier, o.threshold),
                                     c.workers, averaging);
        } else {
            throw UsageError("the ablation has no attribute layer; --task attrib needs a dan or classifier checkpoint");
        }
        report["metrics"] = prf_json(e.report);
        print_prf_table(system, e.report);
        if (!o.out.empty()) {
            std::vector<std::string> ids;
            for (const auto& ec : concepts) ids.push_back(world.concepts[ec.index].id);
            write_predictions(o.out / "predictions.tsv", ids, e);
        }
    } else if (o.task == "refgame") {
        dan::Rng rng = dan::Rng(c.seed).derive(0x6A3E);
        std::vector<dan::GameRecord> log;
        dan::RefGameReport r;
        if (!model) {
            if (o.baseline == "random") {
                dan::Rng speaker_rng = dan::Rng(c.seed).derive(0x5EA7);
                auto speak = [&](const dan::GameItem&) {
                    return dan::SignedAttribute{static_cast<std::uint32_t>(speaker_rng.below(world.n_attributes())),
                                                speaker_rng.bernoulli(0.5)};
                };
                r = dan::refgame(world, speak, o.games, rng, *split, &log);
            } else {
                r = dan::refgame(world, dan::gold_speaker(world), o.games, rng, *split, &log);
            }
        } else if (model->dan) {
            r = dan::refgame(world, dan::dan_speaker(*model->dan), o.games, rng, *split, &log);
        } else {
            throw UsageError("--task refgame needs a dan checkpoint or a baseline");
        }
        report["metrics"] = {{"n_pairs", r.n_pairs},
                             {"successes", r.successes},
                             {"success_rate", r.success_rate},
                             {"chance_level", r.chance_level},
                             {"binomial_p_value", r.binomial_p_value}};
        std::cout << system << ": " << r.successes << "/" << r.n_pairs << " games won, success rate "
                  << fixed(r.success_rate) << ", two-sided binomial p = " << std::setprecision(3) << std::scientific
                  << r.binomial_p_value << std::defaultfloat << "\n";
        if (!o.out.empty()) {
            dan::io::write_atomic(o.out / "predictions.tsv", [&](std::ostream& out) {
                out << "game\treferent\tcontext\tattribute\tpolarity\tlistener_certain\tsuccess\n";
                for (std::size_t i = 0; i < log.size(); ++i) {
                    const auto& g = log[i];
                    out << i << '\t' << world.concepts[g.item.referent].id << '\t' << world.concepts[g.item.context].id
                        << '\t' << g.said.id << '\t' << (g.said.positive ? '+' : '-') << '\t' << g.listener_certain
                        << '\t' << g.success << '\n';
                }
            });
        }
    } else {
        throw UsageError("unknown task '" + o.task + "'");
    }
    if (!o.out.empty()) write_report(o.out, report);
    return ok;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
    fs::path world;
    fs::path checkpoint;
    std::string referent;
    std::string context;
    std::string concept_id;
    double threshold = 0.5;
};

std::size_t concept_index(const dan::World& w, const std::string& id) {
    auto i = w.find(id);
    if (!i) throw UsageError("unknown concept '" + id + "'");
    return *i;
}

int cmd_predict(const PredictOptions& o) {
    const auto world = dan::load_world(o.world);
    const auto m = load_model(o.checkpoint, world);
    const dan::ConceptVectors vectors(world);
    const auto& names = world.space.names;

    if (!o.concept_id.empty()) {
        const auto i = concept_index(world, o.concept_id);
        std::vector<double> act;
        if (m.dan) {
            act = dan::oriented_activations<double>(*m.dan, vectors[i]);
        } else if (m.classifier) {
            act = dan::mlp_forward<double>(*m.classifier, vectors[i]).out;
            for (auto& a : act) a = dan::sigmoid(a);
        } else {
            throw UsageError("the ablation has no attribute layer");
        }
        std::cout << "attributes of " << o.concept_id << ":\n";
        for (std::size_t v = 0; v < act.size(); ++v)
            if (act[v] >= o.threshold) std::cout << "  " << names[v] << "\t" << fixed(act[v]) << "\n";
        return ok;
    }
    if (o.referent.empty() || o.context.empty()) throw UsageError("give --concept, or both --referent and --context");
    const auto r = concept_index(world, o.referent);
    const auto c = concept_index(world, o.context);
    std::vector<double> scores;
    if (m.dan) {
        scores = dan::forward<double>(*m.dan, vectors[r], vectors[c]).d_hat;
    } else if (m.ablation) {
        scores = dan::ablation_forward<double>(*m.ablation, vectors[r], vectors[c]);
    } else {
        const auto set = dan::attr_classifier_discriminate(*m.classifier, vectors[r], vectors[c], o.threshold);
        scores.assign(world.n_attributes(), 0.0);
        for (auto v : set) scores[v] = 1.0;
    }
    std::cout << "discriminative attributes of " << o.referent << " vs " << o.context << ":\n";
    for (std::size_t v = 0; v < scores.size(); ++v)
        if (scores[v] >= o.threshold) std::cout << "  " << names[v] << "\t" << fixed(scores[v]) << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
    std::string model = "all";
    dan::GradcheckSetup setup;
    std::size_t draws = 10;
    bool f32 = false;
    bool no_attr_sigmoid = false;
    bool no_bias = false;
};

template <class T>
dan::GradcheckReport run_gradcheck(const std::string& model, const dan::GradcheckSetup& s, dan::Rng& rng,
                                   dan::DanOptions opt) {
    if (model == "dan") return dan::gradcheck_dan<T>(s, rng, opt);
    if (model == "ablation") return dan::gradcheck_ablation<T>(s, rng);
    return dan::gradcheck_classifier<T>(s, rng);
}

int cmd_gradcheck(const GradcheckOptions& o, const Common& c) {
    std::vector<std::string> models;
    if (o.model == "all")
        models = {"dan", "ablation", "classifier"};
    else if (dan::parse_model_kind(o.model))
        models = {o.model};
    else
        throw UsageError("unknown model '" + o.model + "'");

    auto s = o.f32 ? dan::GradcheckSetup::single_precision() : dan::GradcheckSetup{};
    s.input_dim = o.setup.input_dim;
    s.n_attributes = o.setup.n_attributes;
    s.hidden = o.setup.hidden;
    s.batch = o.setup.batch;
    s.inject_sign_flip = o.setup.inject_sign_flip;
    const dan::DanOptions opt{!o.no_attr_sigmoid, !o.no_bias};

    std::cout << (o.f32 ? "f32" : "f64") << ", eps " << num(s.eps) << ", tolerance " << num(s.tolerance) << ", "
              << o.draws << " draws\n";
    bool pass = true;
    for (const auto& m : models) {
        dan::Rng rng = dan::Rng(c.seed).derive(static_cast<std::uint64_t>(*dan::parse_model_kind(m)) + 1);
        std::vector<dan::BlockCheck> worst;
        for (std::size_t d = 0; d < o.draws; ++d) {
            const auto r = o.f32 ? run_gradcheck<float>(m, s, rng, opt) : run_gradcheck<double>(m, s, rng, opt);
            if (worst.empty()) worst = r.blocks;
            for (std::size_t b = 0; b < r.blocks.size(); ++b) {
                worst[b].max_rel_error = std::max(worst[b].max_rel_error, r.blocks[b].max_rel_error);
                worst[b].max_abs_error = std::max(worst[b].max_abs_error, r.blocks[b].max_abs_error);
            }
        }
        for (const auto& b : worst) {
            const bool block_ok = b.max_rel_error < s.tolerance;
            pass = pass && block_ok;
            std::cout << std::left << std::setw(12) << m << std::setw(16) << b.name << std::right << std::setw(8)
                      << b.entries << "  max rel err " << std::scientific << std::setprecision(2) << b.max_rel_error
                      << std::defaultfloat << (block_ok ? "  ok" : "  FAIL") << "\n";
        }
    }
    std::cout << (pass ? "gradients match" : "gradient check failed") << "\n";
    return pass ? ok : numeric;
}

// ---------------------------------------------------------------------------
// refgame-demo

struct DemoOptions {
    fs::path world;
    fs::path checkpoint;
    std::size_t games = 10;
    std::string split = "test";
};

int cmd_refgame_demo(const DemoOptions& o, const Common& c) {
    const auto split = dan::parse_split(o.split);
    if (!split) throw UsageError("unknown split '" + o.split + "'");
    const auto world = dan::load_world(o.world);
    const auto m = load_model(o.checkpoint, world);
    if (!m.dan) throw UsageError("refgame-demo needs a dan checkpoint");
    dan::Rng rng = dan::Rng(c.seed).derive(0x6A3E);
    std::vector<dan::GameRecord> log;
    const auto r = dan::refgame(world, dan::dan_speaker(*m.dan), o.games, rng, *split, &log);
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& g = log[i];
        std::cout << "game " << std::setw(3) << i + 1 << ": referent " << world.concepts[g.item.referent].id
                  << ", context " << world.concepts[g.item.context].id << "\n  speaker: \""
                  << (g.said.positive ? "the one with " : "the one without ") << world.space.names[g.said.id]
                  << "\"\n  listener: " << (g.listener_certain ? "picks " : "has to guess, picks ")
                  << (g.success ? "the referent" : "the context") << "\n";
    }
    std::cout << "\n" << r.successes << "/" << r.n_pairs << " successful, two-sided binomial p = " << std::setprecision(3)
              << std::scientific << r.binomial_p_value << std::defaultfloat << "\n";
    return ok;
}

/// Effective options of a subcommand as key=value lines. Output locations are
/// left out so that identical runs written to different places match byte for byte.
std::string echo_of(const CLI::App& sub, std::uint64_t seed) {
    std::string s = "seed=" + std::to_string(seed) + "\n";
    for (const auto* opt : sub.get_options()) {
        const auto name = opt->get_single_name();
        if (name == "help" || name == "out" || !opt->get_configurable()) continue;
        const auto results = opt->reduced_results();
        std::string value;
        if (opt->get_expected_min() == 0) {
            value = opt->count() ? "true" : "false";
        } else if (!results.empty()) {
            for (const auto& r : results) value += (value.empty() ? "" : ",") + r;
        } else {
            value = opt->get_default_str();
        }
        s += name + "=" + value + "\n";
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discriminative attribute networks: data, training, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; command-line flags override it");

    Common common;
    app.add_option("--seed", common.seed, "Random seed (default: $DAN_SEED, else 7)")->capture_default_str();
    app.add_option("--workers", common.workers, "Worker threads for evaluation")->capture_default_str()->check(
        CLI::Range(1u, 256u));

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic world");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--categories", gen.world.n_categories)->capture_default_str();
    gen_cmd->add_option("--per-category", gen.world.concepts_per_category)->capture_default_str();
    gen_cmd->add_option("--concepts", gen.concepts, "Total concepts in a single category (overrides the two above)");
    gen_cmd->add_option("--attributes", gen.world.n_attributes)->capture_default_str();
    gen_cmd->add_option("--dim", gen.world.dim)->capture_default_str();
    gen_cmd->add_option("--instances", gen.world.instances_per_concept)->capture_default_str();
    gen_cmd->add_option("--density", gen.world.attr_density)->capture_default_str();
    gen_cmd->add_option("--coherence", gen.world.category_coherence)->capture_default_str();
    gen_cmd->add_option("--noise", gen.world.noise_std)->capture_default_str();

    ImportOptions imp;
    auto* imp_cmd = app.add_subcommand("import-visa", "Convert a concept-attribute table plus vectors into a world");
    imp_cmd->add_option("--attributes", imp.attributes, "TSV: concept, category, one 0/1 column per attribute")
        ->required();
    imp_cmd->add_option("--vectors", imp.vectors, "Directory of <concept>.danv files")->required();
    imp_cmd->add_option("--exclude", imp.exclude, "File listing concept ids to leave out, one per line");
    imp_cmd->add_option("--out", imp.out, "Output world directory")->required();

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint.danc and history.csv");
    train_cmd->add_option("--world", train.world, "World directory")->required();
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_option("--model", train.model)->capture_default_str()->check(
        CLI::IsMember({"dan", "ablation", "classifier"}));
    train_cmd->add_option("--epochs", train.cfg.max_epochs)->capture_default_str();
    train_cmd->add_option("--patience", train.cfg.patience, "0 disables early stopping")->capture_default_str();
    train_cmd->add_option("--batch", train.cfg.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", train.cfg.learning_rate)->capture_default_str();
    train_cmd->add_option("--rho", train.cfg.rms_decay)->capture_default_str();
    train_cmd->add_option("--rms-eps", train.cfg.rms_epsilon)->capture_default_str();
    train_cmd->add_option("--hidden", train.hidden, "Hidden width; 0 = 60 for dan, parameter parity otherwise")
        ->capture_default_str();
    train_cmd->add_option("--metric", train.metric, "Model-selection metric")->capture_default_str()->check(
        CLI::IsMember({"val_loss", "val_f1"}));
    train_cmd->add_option("--clip", train.cfg.clip_norm, "Gradient-norm clip, 0 = off")->capture_default_str();
    train_cmd->add_option("--threshold", train.cfg.threshold)->capture_default_str();
    train_cmd->add_flag("--ordered", train.cfg.ordered_pairs, "Train on both role orders of every pair");
    train_cmd->add_flag("--wall-time", train.cfg.record_wall_time, "Record elapsed seconds in history.csv");
    train_cmd->add_flag("--no-attr-sigmoid", train.no_attr_sigmoid, "Linear attribute layer");
    train_cmd->add_flag("--no-bias", train.no_bias, "Drop all DAN biases");
    train_cmd->add_flag("--no-orient", train.no_orient, "Skip attribute-unit polarity orientation");

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline");
    eval_cmd->add_option("--world", eval.world)->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint);
    eval_cmd->add_option("--baseline", eval.baseline)->check(CLI::IsMember({"random", "oracle"}));
    eval_cmd->add_option("--task", eval.task)->capture_default_str()->check(
        CLI::IsMember({"discrim", "attrib", "refgame"}));
    eval_cmd->add_option("--split", eval.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--threshold", eval.threshold)->capture_default_str();
    eval_cmd->add_option("--games", eval.games)->capture_default_str();
    eval_cmd->add_option("--max-pairs", eval.max_pairs, "Subsample evaluation pairs (0 = all)")->capture_default_str();
    eval_cmd->add_flag("--macro", eval.macro, "Macro-average P/R/F1 over items");
    eval_cmd->add_option("--out", eval.out, "Directory for report.json and predictions.tsv");

    PredictOptions pred;
    auto* pred_cmd = app.add_subcommand("predict", "Predict attributes or discriminative attributes for concepts");
    pred_cmd->add_option("--world", pred.world)->required();
    pred_cmd->add_option("--checkpoint", pred.checkpoint)->required();
    pred_cmd->add_option("--referent", pred.referent);
    pred_cmd->add_option("--context", pred.context);
    pred_cmd->add_option("--concept", pred.concept_id);
    pred_cmd->add_option("--threshold", pred.threshold)->capture_default_str();

    GradcheckOptions gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    gc_cmd->add_option("--model", gc.model)->capture_default_str()->check(
        CLI::IsMember({"all", "dan", "ablation", "classifier"}));
    gc_cmd->add_option("--dim", gc.setup.input_dim)->capture_default_str();
    gc_cmd->add_option("--attributes", gc.setup.n_attributes)->capture_default_str();
    gc_cmd->add_option("--hidden", gc.setup.hidden)->capture_default_str();
    gc_cmd->add_option("--batch", gc.setup.batch)->capture_default_str();
    gc_cmd->add_option("--draws", gc.draws)->capture_default_str();
    gc_cmd->add_flag("--f32", gc.f32, "Single precision (eps 1e-2, tolerance 1e-2)");
    gc_cmd->add_flag("--no-attr-sigmoid", gc.no_attr_sigmoid);
    gc_cmd->add_flag("--no-bias", gc.no_bias);
    gc_cmd->add_flag("--inject-sign-flip", gc.setup.inject_sign_flip, "Test hook: corrupt one gradient block");

    DemoOptions demo;
    auto* demo_cmd = app.add_subcommand("refgame-demo", "Play and narrate referential games");
    demo_cmd->add_option("--world", demo.world)->required();
    demo_cmd->add_option("--checkpoint", demo.checkpoint)->required();
    demo_cmd->add_option("--games", demo.games)->capture_default_str();
    demo_cmd->add_option("--split", demo.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen, common);
        if (*imp_cmd) return cmd_import_visa(imp, common);
        if (*train_cmd) return cmd_train(train, common, echo_of(*train_cmd, common.seed));
        if (*eval_cmd) return cmd_eval(eval, common, echo_of(*eval_cmd, common.seed));
        if (*pred_cmd) return cmd_predict(pred);
        if (*gc_cmd) return cmd_gradcheck(gc, common);
        if (*demo_cmd) return cmd_refgame_demo(demo, common);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const dan::ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const dan::DivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numeric;
    } catch (const dan::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data;
    } catch (const dan::ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    }
    return usage;
}
