#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dan/dataset.hpp"
#include "dan/numeric.hpp"

namespace dan {

enum class Averaging { micro, macro };

struct PrfReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    double mean_predicted_size = 0.0;
    std::size_t n_items = 0;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Size of the intersection of two sorted sets.
inline std::size_t intersection_size(const AttrSet& a, const AttrSet& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j)
            ++i;
        else if (*j < *i)
            ++j;
        else {
            ++n, ++i, ++j;
        }
    }
    return n;
}

/// Precision/recall/F1 over (item, attribute) decisions. Micro pools the
/// counts; macro averages per-item P, R and F1. Undefined ratios are 0.
inline PrfReport prf(std::span<const AttrSet> predicted, std::span<const AttrSet> gold,
                     Averaging averaging = Averaging::micro) {
    if (predicted.size() != gold.size()) {
        throw ShapeError("prf: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(gold.size()) + " gold items");
    }
    PrfReport r;
    r.n_items = predicted.size();
    double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0, sum_size = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto tp = intersection_size(predicted[i], gold[i]);
        const auto fp = predicted[i].size() - tp;
        const auto fn = gold[i].size() - tp;
        r.tp += tp;
        r.fp += fp;
        r.fn += fn;
        sum_size += static_cast<double>(predicted[i].size());
        const double p = predicted[i].empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted[i].size());
        const double rc = gold[i].empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold[i].size());
        sum_p += p;
        sum_r += rc;
        sum_f += f1_score(p, rc);
    }
    if (r.n_items) r.mean_predicted_size = sum_size / static_cast<double>(r.n_items);
    if (averaging == Averaging::micro) {
        r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
        r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
        r.f1 = f1_score(r.precision, r.recall);
    } else if (r.n_items) {
        const auto n = static_cast<double>(r.n_items);
        r.precision = sum_p / n;
        r.recall = sum_r / n;
        r.f1 = sum_f / n;
    }
    return r;
}

inline double mean_set_size(std::span<const AttrSet> sets) {
    if (sets.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : sets) s += static_cast<double>(x.size());
    return s / static_cast<double>(sets.size());
}

inline double log_binomial_pmf(std::uint64_t k, std::uint64_t n, double p) {
    const auto kd = static_cast<double>(k);
    const auto nd = static_cast<double>(n);
    double lp = std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0);
    if (k > 0) lp += kd * std::log(p);
    if (k < n) lp += (nd - kd) * std::log1p(-p);
    return lp;
}

/// Exact two-sided binomial test: total probability of outcomes no more
/// likely than the observed one (the convention of R's binom.test).
inline double binomial_two_sided_p(std::uint64_t successes, std::uint64_t n, double p = 0.5) {
    if (successes > n) throw ParameterError("binomial test: successes exceed trials");
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("binomial test: p must lie in (0, 1)");
    const double observed = log_binomial_pmf(successes, n, p);
    const double tol = 1e-7;
    double total = 0.0;
    for (std::uint64_t i = 0; i <= n; ++i) {
        const double lp = log_binomial_pmf(i, n, p);
        if (lp <= observed + tol) total += std::exp(lp);
    }
    return std::min(1.0, total);
}

}  // namespace dan
