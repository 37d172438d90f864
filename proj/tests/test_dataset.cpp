#include <gtest/gtest.h>

#include <algorithm>
#include <iterator>
#include <set>

#include "dan/dataset.hpp"

using dan::AttributeVector;

namespace {

std::set<std::size_t> as_index_set(const AttributeVector& v) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i]) s.insert(i);
    return s;
}

// (A - B) ∪ (B - A) with standard set algorithms.
std::set<std::size_t> set_symdiff(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::set<std::size_t> a_minus_b, b_minus_a, out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(a_minus_b, a_minus_b.end()));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::inserter(b_minus_a, b_minus_a.end()));
    std::set_union(a_minus_b.begin(), a_minus_b.end(), b_minus_a.begin(), b_minus_a.end(),
                   std::inserter(out, out.end()));
    return out;
}

AttributeVector bits_of(unsigned mask, std::size_t n) {
    AttributeVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1u;
    return v;
}

AttributeVector random_bits(std::size_t n, double density, dan::Rng& rng) {
    AttributeVector v(n);
    for (auto& b : v) b = rng.bernoulli(density) ? 1 : 0;
    return v;
}

dan::WorldConfig small_config() {
    dan::WorldConfig c;
    c.n_categories = 3;
    c.concepts_per_category = 6;
    c.n_attributes = 10;
    c.dim = 12;
    c.instances_per_concept = 4;
    return c;
}

}  // namespace

TEST(SymmetricDifference, ExhaustiveUpToFourAttributes) {
    for (std::size_t n = 1; n <= 4; ++n)
        for (unsigned a = 0; a < (1u << n); ++a)
            for (unsigned b = 0; b < (1u << n); ++b) {
                const auto va = bits_of(a, n), vb = bits_of(b, n);
                EXPECT_EQ(as_index_set(dan::symmetric_difference(va, vb)), set_symdiff(as_index_set(va), as_index_set(vb)));
            }
}

TEST(SymmetricDifference, RandomLargeVectorsMatchSetDefinition) {
    dan::Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_bits(573, rng.uniform(), rng);
        const auto b = random_bits(573, rng.uniform(), rng);
        ASSERT_EQ(as_index_set(dan::symmetric_difference(a, b)), set_symdiff(as_index_set(a), as_index_set(b)));
    }
}

TEST(SymmetricDifference, AlgebraicProperties) {
    dan::Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_bits(40, 0.3, rng), b = random_bits(40, 0.3, rng);
        const auto d = dan::symmetric_difference(a, b);
        EXPECT_EQ(d, dan::symmetric_difference(b, a));
        EXPECT_EQ(dan::popcount(dan::symmetric_difference(a, a)), 0u);
        std::size_t both = 0;
        for (std::size_t k = 0; k < a.size(); ++k) both += a[k] && b[k];
        EXPECT_EQ(dan::popcount(d), dan::popcount(a) + dan::popcount(b) - 2 * both);
        EXPECT_EQ(dan::symmetric_difference(d, b), a);
    }
}

TEST(SymmetricDifference, LengthMismatchThrows) {
    const AttributeVector a(3), b(4);
    EXPECT_THROW(dan::symmetric_difference(a, b), dan::ShapeError);
}

TEST(AttrSetConversion, RoundTripAndRange) {
    const AttributeVector v{0, 1, 1, 0, 1};
    EXPECT_EQ(dan::to_set(v), (dan::AttrSet{1, 2, 4}));
    EXPECT_EQ(dan::to_bits(dan::to_set(v), 5), v);
    EXPECT_THROW(dan::to_bits({7}, 5), dan::ShapeError);
}

TEST(StratumCounts, HandValues) {
    const dan::SplitRatios r{};
    EXPECT_EQ(dan::stratum_counts(15, r), (std::array<std::size_t, 3>{11, 2, 2}));
    EXPECT_EQ(dan::stratum_counts(10, r), (std::array<std::size_t, 3>{8, 1, 1}));
    EXPECT_EQ(dan::stratum_counts(3, r), (std::array<std::size_t, 3>{1, 1, 1}));
    EXPECT_EQ(dan::stratum_counts(2, r), (std::array<std::size_t, 3>{2, 0, 0}));
}

TEST(StratumCounts, PartitionsEveryCategorySize) {
    for (const dan::SplitRatios r : {dan::SplitRatios{}, dan::SplitRatios{0.6, 0.2, 0.2}, dan::SplitRatios{0.5, 0.0, 0.5}})
        for (std::size_t n = 0; n <= 200; ++n) {
            const auto [tr, va, te] = dan::stratum_counts(n, r);
            EXPECT_EQ(tr + va + te, n);
            if (n >= 3) {
                EXPECT_GE(tr, 1u);
                EXPECT_GE(va, 1u);
                EXPECT_GE(te, 1u);
            }
        }
}

TEST(SplitConcepts, StratifiedAndDeterministic) {
    std::vector<dan::Concept> cs;
    for (int c = 0; c < 4; ++c)
        for (int k = 0; k < 10; ++k) cs.push_back({"c" + std::to_string(c) + "_" + std::to_string(k), "cat" + std::to_string(c), {}});
    dan::Rng r1(3), r2(3);
    const auto a = dan::split_concepts(cs, {}, r1);
    const auto b = dan::split_concepts(cs, {}, r2);
    EXPECT_EQ(a.splits, b.splits);
    for (int c = 0; c < 4; ++c) {
        std::array<int, 3> n{};
        for (int k = 0; k < 10; ++k) ++n[static_cast<int>(a.splits[c * 10 + k])];
        EXPECT_EQ(n, (std::array<int, 3>{8, 1, 1}));
    }
    EXPECT_TRUE(a.warnings.empty());
}

TEST(SplitConcepts, TinyCategoryGoesToTrainWithWarning) {
    std::vector<dan::Concept> cs{{"a", "x", {}}, {"b", "x", {}}};
    dan::Rng r(1);
    const auto s = dan::split_concepts(cs, {}, r);
    EXPECT_EQ(s.splits, (std::vector<dan::Split>{dan::Split::train, dan::Split::train}));
    ASSERT_EQ(s.warnings.size(), 1u);
}

TEST(SplitConcepts, BadRatiosThrow) {
    std::vector<dan::Concept> cs{{"a", "x", {}}};
    dan::Rng r(1);
    EXPECT_THROW(dan::split_concepts(cs, {0.5, 0.1, 0.1}, r), dan::ParameterError);
    EXPECT_THROW(dan::split_concepts({}, {}, r), dan::ParameterError);
}

TEST(BuildPairs, CountsRolesAndGold) {
    dan::Rng rng(4);
    const auto w = dan::gen_world(small_config(), rng);
    const auto members = w.concepts_in(dan::Split::train);
    const auto n = members.size();
    const auto pairs = dan::build_pairs(w, dan::Split::train);
    EXPECT_EQ(pairs.size(), n * (n - 1) / 2);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& p : pairs) {
        EXPECT_LT(w.concepts[p.referent].id, w.concepts[p.context].id);
        EXPECT_EQ(p.gold, dan::symmetric_difference(w.concepts[p.referent].attributes, w.concepts[p.context].attributes));
        EXPECT_TRUE(seen.insert({p.referent, p.context}).second);
    }
    EXPECT_EQ(dan::build_pairs(w, dan::Split::train, true).size(), n * (n - 1));
}

TEST(BuildPairs, NeedsTwoConcepts) {
    dan::World w;
    std::vector<std::size_t> one{0};
    EXPECT_THROW(dan::build_pairs(w, one), dan::ParameterError);
}

TEST(PairStatistics, MatchesBruteForceScan) {
    dan::Rng rng(5);
    auto cfg = small_config();
    cfg.attr_density = 0.4;
    const auto w = dan::gen_world(cfg, rng);
    for (auto split : {dan::Split::train, dan::Split::val, dan::Split::test}) {
        const auto members = w.concepts_in(split);
        std::size_t pairs = 0, total = 0;
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                ++pairs;
                total += dan::popcount(dan::symmetric_difference(w.concepts[members[i]].attributes,
                                                                 w.concepts[members[j]].attributes));
            }
        const auto s = dan::pair_statistics(w, split);
        EXPECT_EQ(s.n_pairs, pairs);
        EXPECT_EQ(s.total_discriminative, total);
        if (pairs) EXPECT_DOUBLE_EQ(s.mean_discriminative, static_cast<double>(total) / pairs);
    }
}

TEST(GenWorld, ShapesIdsAndDeterminism) {
    const auto cfg = small_config();
    dan::Rng r1(9), r2(9), r3(10);
    const auto a = dan::gen_world(cfg, r1);
    const auto b = dan::gen_world(cfg, r2);
    const auto c = dan::gen_world(cfg, r3);
    ASSERT_EQ(a.concepts.size(), 18u);
    EXPECT_EQ(a.concepts[7].id, "cat01_c01");
    EXPECT_EQ(a.concepts[7].category, "cat01");
    EXPECT_EQ(a.n_attributes(), 10u);
    EXPECT_EQ(a.render_map.rows(), 12u);
    EXPECT_EQ(a.render_map.cols(), 10u);
    for (const auto& m : a.instances) {
        EXPECT_EQ(m.rows(), 4u);
        EXPECT_EQ(m.cols(), 12u);
    }
    EXPECT_EQ(a.concepts, b.concepts);
    EXPECT_EQ(a.instances, b.instances);
    EXPECT_EQ(a.splits, b.splits);
    EXPECT_NE(a.render_map, c.render_map);
}

TEST(GenWorld, NoiselessInstancesEqualRenderMapTimesAttributes) {
    auto cfg = small_config();
    cfg.noise_std = 0.0;
    dan::Rng rng(11);
    const auto w = dan::gen_world(cfg, rng);
    for (std::size_t i = 0; i < w.concepts.size(); ++i) {
        dan::Matrix<double> p(cfg.n_attributes, 1);
        for (std::size_t a = 0; a < cfg.n_attributes; ++a) p(a, 0) = w.concepts[i].attributes[a];
        const auto want = dan::matmul(w.render_map, p);
        for (std::size_t r = 0; r < cfg.instances_per_concept; ++r)
            for (std::size_t d = 0; d < cfg.dim; ++d) EXPECT_NEAR(w.instances[i](r, d), want(d, 0), 1e-12);
    }
}

TEST(GenWorld, ConceptsStayCloseToTheirCategoryPrototype) {
    auto cfg = small_config();
    cfg.n_attributes = 200;
    cfg.category_coherence = 0.9;
    dan::Rng rng(12);
    const auto w = dan::gen_world(cfg, rng);
    // Two members of one category differ in about 2 * 0.1 * 0.9 of the bits; members
    // of different categories in about half of 2 * density * (1 - density).
    const auto within = dan::popcount(dan::symmetric_difference(w.concepts[0].attributes, w.concepts[1].attributes));
    EXPECT_LT(within, 60u);
}

TEST(GenWorld, RejectsBadConfig) {
    dan::Rng rng(1);
    auto cfg = small_config();
    cfg.dim = 0;
    EXPECT_THROW(dan::gen_world(cfg, rng), dan::ParameterError);
    cfg = small_config();
    cfg.attr_density = 1.5;
    EXPECT_THROW(dan::gen_world(cfg, rng), dan::ParameterError);
    cfg = small_config();
    cfg.noise_std = -1;
    EXPECT_THROW(dan::gen_world(cfg, rng), dan::ParameterError);
}

TEST(ConceptVector, IsColumnMean) {
    dan::Matrix<double> inst{{1, 2}, {3, 4}, {5, 9}};
    EXPECT_EQ(dan::concept_vector(inst), (std::vector<double>{3, 5}));
    EXPECT_THROW(dan::concept_vector(dan::Matrix<double>(0, 2)), dan::ParameterError);
}

TEST(World, FindAndSplitMembership) {
    dan::Rng rng(13);
    const auto w = dan::gen_world(small_config(), rng);
    EXPECT_EQ(w.find("cat02_c05"), 17u);
    EXPECT_FALSE(w.find("nope").has_value());
    std::size_t total = 0;
    for (auto s : {dan::Split::train, dan::Split::val, dan::Split::test}) total += w.concepts_in(s).size();
    EXPECT_EQ(total, w.concepts.size());
    EXPECT_EQ(dan::parse_split("val"), dan::Split::val);
    EXPECT_FALSE(dan::parse_split("dev").has_value());
}
