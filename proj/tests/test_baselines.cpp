#include <gtest/gtest.h>

#include <cmath>

#include "dan/baselines.hpp"
#include "dan/gradcheck.hpp"

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

dan::PairTriple triple(dan::AttributeVector gold) { return {0, 1, std::move(gold)}; }

}  // namespace

TEST(RandomBaseline, FrequenciesFromTrainingPairs) {
    const std::vector<dan::PairTriple> t{triple({1, 0, 1}), triple({1, 0, 0}), triple({0, 0, 1}), triple({1, 0, 0})};
    const auto b = dan::fit_random_baseline(t);
    EXPECT_EQ(b.probs, (std::vector<double>{0.75, 0.0, 0.5}));
    EXPECT_DOUBLE_EQ(b.expected_size(), 1.25);
    EXPECT_THROW(dan::fit_random_baseline({}), dan::ParameterError);
}

TEST(RandomBaseline, SampledSetSizeMatchesExpectation) {
    dan::RandomBaseline b{{0.1, 0.5, 0.9, 0.0, 1.0}};
    dan::Rng rng(1);
    double total = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto s = dan::sample_random_prediction(b, rng);
        for (auto v : s) ASSERT_NE(v, 3u);
        total += static_cast<double>(s.size());
    }
    const double var = 0.09 + 0.25 + 0.09;
    EXPECT_NEAR(total / n, b.expected_size(), 4 * std::sqrt(var / n));
}

TEST(RandomBaseline, AttributeVariantUsesConceptFrequencies) {
    const std::vector<dan::AttributeVector> a{{1, 0}, {1, 1}, {0, 0}, {1, 0}};
    EXPECT_EQ(dan::fit_random_attribute_baseline(a).probs, (std::vector<double>{0.75, 0.25}));
}

TEST(Mlp, HandComputedForward) {
    auto p = dan::MlpParams<double>::zeros({2, 1, 2});
    p.hidden_weights = {{1.0}, {2.0}};
    p.hidden_bias = {{-1.0}};
    p.out_weights = {{3.0, -1.0}};
    p.out_bias = {{0.5, 0.0}};
    const std::vector<double> x{1.0, 1.0};
    const auto a = dan::mlp_forward<double>(p, x);
    const double h = logistic(2.0);
    EXPECT_NEAR(a.out[0], 3.0 * h + 0.5, 1e-15);
    EXPECT_NEAR(a.out[1], -h, 1e-15);
}

TEST(Ablation, InputIsConcatenationOfBothVectors) {
    dan::Rng rng(2);
    const auto p = dan::init_ablation<double>(3, 4, 5, rng);
    EXPECT_EQ(p.dims.input_dim, 6u);
    const std::vector<double> vr{1, 2, 3}, vc{4, 5, 6};
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    EXPECT_EQ(dan::ablation_forward<double>(p, vr, vc), dan::mlp_forward<double>(p, x).out);
    const std::vector<double> wrong{1, 2};
    EXPECT_THROW(dan::ablation_forward<double>(p, vr, wrong), dan::ShapeError);
}

TEST(Ablation, GradientsMatchFiniteDifferences) {
    dan::Rng rng(3);
    for (int draw = 0; draw < 10; ++draw) {
        const auto r = dan::gradcheck_ablation<double>({}, rng);
        for (const auto& b : r.blocks) EXPECT_LT(b.max_rel_error, 1e-4) << b.name;
    }
}

TEST(Classifier, GradientsMatchFiniteDifferences) {
    dan::Rng rng(4);
    for (int draw = 0; draw < 10; ++draw) {
        const auto r = dan::gradcheck_classifier<double>({}, rng);
        for (const auto& b : r.blocks) EXPECT_LT(b.max_rel_error, 1e-4) << b.name;
    }
}

TEST(Classifier, SinglePrecisionGradients) {
    dan::Rng rng(5);
    const auto s = dan::GradcheckSetup::single_precision();
    for (int draw = 0; draw < 5; ++draw) {
        EXPECT_LT(dan::gradcheck_classifier<float>(s, rng).max_rel_error(), s.tolerance);
        EXPECT_LT(dan::gradcheck_ablation<float>(s, rng).max_rel_error(), s.tolerance);
    }
}

TEST(Classifier, CrossEntropyMatchesDirectFormula) {
    dan::Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> z(4), y(4);
        double want = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            z[k] = rng.gaussian() * 5;
            y[k] = rng.bernoulli(0.5) ? 1 : 0;
            const double p = logistic(z[k]);
            want -= y[k] * std::log(p) + (1 - y[k]) * std::log(1 - p);
        }
        EXPECT_NEAR(dan::cross_entropy<double>(z, y), want / 4, 1e-10);
    }
}

TEST(Classifier, CrossEntropyStableForLargeLogits) {
    const std::vector<double> z{800.0, -800.0}, y{0.0, 1.0};
    EXPECT_NEAR(dan::cross_entropy<double>(z, y), 800.0, 1e-9);
}

TEST(Classifier, DiscriminatesBySymmetricDifferenceOfPredictions) {
    auto p = dan::ClassifierParams<double>(dan::MlpParams<double>::zeros({1, 1, 3}));
    p.hidden_weights = {{1.0}};
    p.out_weights = {{10.0, -10.0, 0.0}};
    p.out_bias = {{-5.0, 5.0, 1.0}};
    // hidden unit is σ(x): ~1 for x = 10, ~0 for x = -10
    const std::vector<double> hi{10.0}, lo{-10.0};
    EXPECT_EQ(dan::predict_attributes<double>(p, hi), (dan::AttributeVector{1, 0, 1}));
    EXPECT_EQ(dan::predict_attributes<double>(p, lo), (dan::AttributeVector{0, 1, 1}));
    EXPECT_EQ(dan::attr_classifier_discriminate<double>(p, hi, lo), (dan::AttrSet{0, 1}));
}

TEST(ParameterParity, HiddenSizesTrackDanBudget) {
    const dan::DanDims d{128, 64, 60};
    const auto dan_total = static_cast<double>(dan::dan_parameter_count(d));
    const auto h_abl = dan::ablation_hidden_for_parity(d);
    const auto abl = static_cast<double>(dan::mlp_parameter_count(dan::ablation_dims(128, 64, h_abl)));
    const auto abl_next = static_cast<double>(dan::mlp_parameter_count(dan::ablation_dims(128, 64, h_abl + 1)));
    const auto abl_prev = static_cast<double>(dan::mlp_parameter_count(dan::ablation_dims(128, 64, h_abl - 1)));
    EXPECT_LE(std::abs(abl - dan_total), std::abs(abl_next - dan_total));
    EXPECT_LE(std::abs(abl - dan_total), std::abs(abl_prev - dan_total));

    const auto attr_block = static_cast<double>(128 * 64 + 64);
    const auto h_cls = dan::classifier_hidden_for_parity(d);
    const auto cls = static_cast<double>(dan::mlp_parameter_count({128, h_cls, 64}));
    const auto cls_next = static_cast<double>(dan::mlp_parameter_count({128, h_cls + 1, 64}));
    EXPECT_LE(std::abs(cls - attr_block), std::abs(cls_next - attr_block));
}
