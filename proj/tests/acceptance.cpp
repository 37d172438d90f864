// Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "dan/evaluator.hpp"
#include "dan/gradcheck.hpp"
#include "dan/storage.hpp"
#include "dan/trainer.hpp"

namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::fail;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body, double budget_seconds = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.verdict == Verdict::pass && budget_seconds > 0 && secs >= budget_seconds) {
        o.verdict = Verdict::fail;
        o.detail += "; over the " + std::to_string(static_cast<int>(budget_seconds)) + " s budget";
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::fail) ++failures;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.1f s", secs);
    std::cout << "[" << tag << "] " << id << " " << name << ": " << o.detail << " (" << timing << ")" << std::endl;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string num(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

dan::AttrSet set_difference_oracle(const dan::AttrSet& r, const dan::AttrSet& c) {
    dan::AttrSet r_minus_c, c_minus_r, out;
    std::set_difference(r.begin(), r.end(), c.begin(), c.end(), std::back_inserter(r_minus_c));
    std::set_difference(c.begin(), c.end(), r.begin(), r.end(), std::back_inserter(c_minus_r));
    std::set_union(r_minus_c.begin(), r_minus_c.end(), c_minus_r.begin(), c_minus_r.end(), std::back_inserter(out));
    return out;
}

dan::AttributeVector bits_of(std::uint32_t mask, std::size_t n) {
    dan::AttributeVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
    return v;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(DAN_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

constexpr std::uint64_t kSeed = 7;

double discrim_f1_random(const dan::World& world, const std::vector<dan::EvalPair>& pairs) {
    const auto b = dan::fit_random_baseline(dan::build_pairs(world, dan::Split::train));
    return dan::eval_discriminativeness(pairs, dan::random_predictor(b, kSeed)).report.f1;
}

double attrib_f1_random(const dan::World& world, const std::vector<dan::EvalConcept>& concepts) {
    std::vector<dan::AttributeVector> train;
    for (auto i : world.concepts_in(dan::Split::train)) train.push_back(world.concepts[i].attributes);
    const auto b = dan::fit_random_attribute_baseline(train);
    return dan::eval_attributes(concepts, dan::random_predictor(b, kSeed)).report.f1;
}

}  // namespace

int main() {
    std::cout << "acceptance suite, seed " << kSeed << std::endl;

    report(1, "gradient fidelity", [] {
        const dan::GradcheckSetup s;  // D=16, |V|=8, h=5, eps 1e-5, f64
        double worst = 0;
        std::string worst_where;
        const std::pair<const char*, int> kinds[] = {{"dan", 0}, {"ablation", 1}, {"classifier", 2}};
        for (const auto& [name, k] : kinds) {
            dan::Rng rng = dan::Rng(kSeed).derive(static_cast<std::uint64_t>(k) + 1);
            for (int draw = 0; draw < 10; ++draw) {
                const auto r = k == 0   ? dan::gradcheck_dan<double>(s, rng)
                               : k == 1 ? dan::gradcheck_ablation<double>(s, rng)
                                        : dan::gradcheck_classifier<double>(s, rng);
                if (r.max_rel_error() >= worst) {
                    worst = r.max_rel_error();
                    worst_where = name;
                }
            }
        }
        return verdict(worst < 1e-4, "max relative error " + num(worst) + " (" + worst_where + ") < 1e-4 over 3x10 draws");
    }, 10);

    report(2, "symmetric-difference oracle", [] {
        std::size_t cases = 0, mismatches = 0;
        for (std::size_t n = 0; n <= 4; ++n)
            for (std::uint32_t a = 0; a < (1u << n); ++a)
                for (std::uint32_t b = 0; b < (1u << n); ++b) {
                    const auto r = bits_of(a, n), c = bits_of(b, n);
                    ++cases;
                    if (dan::to_set(dan::symmetric_difference(r, c)) != set_difference_oracle(dan::to_set(r), dan::to_set(c)))
                        ++mismatches;
                }
        const std::size_t exhaustive = cases;
        dan::Rng rng(kSeed);
        for (int i = 0; i < 10000; ++i) {
            dan::AttributeVector r(573), c(573);
            const double density = rng.uniform();
            for (std::size_t v = 0; v < 573; ++v) {
                r[v] = rng.bernoulli(density);
                c[v] = rng.bernoulli(density);
            }
            ++cases;
            if (dan::to_set(dan::symmetric_difference(r, c)) != set_difference_oracle(dan::to_set(r), dan::to_set(c)))
                ++mismatches;
        }
        return verdict(mismatches == 0, std::to_string(mismatches) + " mismatches in " + std::to_string(exhaustive) +
                                            " exhaustive (|V|<=4) + 10000 random (|V|=573) cases");
    }, 5);

    // Shared by criteria 3-5: the default synthetic world and its trained models.
    dan::Rng world_rng(kSeed);
    const auto world = dan::gen_world(dan::WorldConfig{}, world_rng);
    const dan::ConceptVectors vectors(world);
    const auto test_pairs = dan::build_eval_pairs(world, vectors, dan::Split::test);
    const auto test_concepts = dan::build_eval_concepts(world, vectors, dan::Split::test);
    dan::TrainConfig cfg;
    cfg.seed = kSeed;
    std::optional<dan::DanParams<double>> dan_model;

    report(3, "synthetic ordering DAN > ablation > random", [&] {
        const dan::DanDims dims{world.dim, world.n_attributes(), 60};
        dan_model = dan::train_dan(world, cfg, 60).params;
        const auto ablation = dan::train_ablation(world, cfg, dan::ablation_hidden_for_parity(dims)).params;
        const double f_dan = dan::eval_discriminativeness(test_pairs, dan::dan_discriminator(*dan_model)).report.f1;
        const double f_abl = dan::eval_discriminativeness(test_pairs, dan::ablation_discriminator(ablation)).report.f1;
        const double f_rnd = discrim_f1_random(world, test_pairs);
        const bool ok = f_dan > f_abl && f_dan >= f_rnd + 0.1 && f_abl >= f_rnd + 0.1;
        return verdict(ok, "test micro-F1 dan " + num(f_dan) + ", ablation " + num(f_abl) + ", random " + num(f_rnd) +
                               " (" + std::to_string(test_pairs.size()) + " pairs)");
    }, 300);

    report(4, "emergent attributes", [&] {
        if (!dan_model) return Outcome{Verdict::fail, "no trained DAN from criterion 3"};
        const double f_noisy = dan::eval_attributes(test_concepts, dan::dan_attribute_reader(*dan_model)).report.f1;
        const double f_rnd = attrib_f1_random(world, test_concepts);

        dan::WorldConfig clean_cfg;
        clean_cfg.noise_std = 0.0;
        dan::Rng clean_rng(kSeed);
        const auto clean = dan::gen_world(clean_cfg, clean_rng);
        const dan::ConceptVectors clean_vectors(clean);
        const auto clean_concepts = dan::build_eval_concepts(clean, clean_vectors, dan::Split::test);
        const auto clean_dan = dan::train_dan(clean, cfg, 60).params;
        const double f_clean = dan::eval_attributes(clean_concepts, dan::dan_attribute_reader(clean_dan)).report.f1;
        return verdict(f_clean >= 0.6 && f_noisy > f_rnd, "attribute micro-F1 noiseless " + num(f_clean) +
                                                              " (>= 0.6), noisy " + num(f_noisy) + " vs random " +
                                                              num(f_rnd));
    });

    report(5, "referential success", [&] {
        if (!dan_model) return Outcome{Verdict::fail, "no trained DAN from criterion 3"};
        dan::Rng rng = dan::Rng(kSeed).derive(0x6A3E);
        const auto r = dan::refgame(world, dan::dan_speaker(*dan_model), 200, rng, dan::Split::test);
        return verdict(r.binomial_p_value < 1e-3 && r.success_rate > 0.5,
                       std::to_string(r.successes) + "/200 games won, two-sided binomial p = " +
                           num(r.binomial_p_value) + " < 0.001");
    });

    report(6, "training determinism", [] {
        const auto root = fs::temp_directory_path() / ("dan_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(root);
        const auto w = (root / "world").string();
        if (run_cli("gen-data --seed 7 --out " + w) != 0) return Outcome{Verdict::fail, "gen-data failed"};
        const std::string args = "train --seed 7 --world " + w + " --epochs 5 --out ";
        if (run_cli(args + (root / "a").string()) != 0 || run_cli(args + (root / "b").string()) != 0)
            return Outcome{Verdict::fail, "train failed"};
        const bool hist = slurp(root / "a" / "history.csv") == slurp(root / "b" / "history.csv");
        const bool ck = slurp(root / "a" / "checkpoint.danc") == slurp(root / "b" / "checkpoint.danc");
        const auto size = fs::file_size(root / "a" / "checkpoint.danc");
        fs::remove_all(root);
        return verdict(hist && ck, std::string("history.csv ") + (hist ? "identical" : "differs") + ", checkpoint.danc (" +
                                       std::to_string(size) + " bytes) " + (ck ? "identical" : "differs"));
    });

    report(7, "parameter count at full scale", [] {
        const dan::DanDims d{4096, 573, 60};
        // attribute weights + attribute biases + pair weights + pair biases + readout weights + readout bias
        const std::size_t by_shapes = 4096 * 573 + 573 + 2 * 60 + 60 + 60 + 1;
        const auto counted = dan::parameter_count(dan::DanParams<double>::zeros(d));
        return verdict(counted == by_shapes && dan::dan_parameter_count(d) == by_shapes,
                       "model reports " + std::to_string(counted) + ", shape arithmetic gives " +
                           std::to_string(by_shapes) + "; a figure of 2347486 would drop 336 of them");
    });

    report(8, "ViSA-scale F1 (optional)", [] {
        const char* attrs = std::getenv("DAN_VISA_ATTRIBUTES");
        const char* vecs = std::getenv("DAN_VISA_VECTORS");
        if (!attrs || !vecs) return Outcome{Verdict::skip, "set DAN_VISA_ATTRIBUTES and DAN_VISA_VECTORS to run"};
        std::set<std::string> excluded;
        if (const char* ex = std::getenv("DAN_VISA_EXCLUDE")) excluded = dan::read_exclusions(ex);
        const auto visa = dan::load_visa(attrs, vecs, excluded);
        const auto& w = visa.world;
        dan::TrainConfig c;
        c.seed = kSeed;
        const auto p = dan::train_dan(w, c, 60).params;
        const dan::ConceptVectors v(w);
        const auto pairs = dan::build_eval_pairs(w, v, dan::Split::test);
        const double f_d = dan::eval_discriminativeness(pairs, dan::dan_discriminator(p)).report.f1;
        const double f_a =
            dan::eval_attributes(dan::build_eval_concepts(w, v, dan::Split::test), dan::dan_attribute_reader(p)).report.f1;
        const bool ok = std::abs(f_d - 0.56) <= 0.05 && std::abs(f_a - 0.61) <= 0.05;
        return verdict(ok, "discriminativeness F1 " + num(f_d) + " (0.56 +/- 0.05), attribute F1 " + num(f_a) +
                               " (0.61 +/- 0.05), " + std::to_string(w.concepts.size()) + " concepts, " +
                               std::to_string(w.n_attributes()) + " attributes");
    });

    std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria met"))
              << std::endl;
    return failures ? 1 : 0;
}
