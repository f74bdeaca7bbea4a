#include <sstream>

#include <gtest/gtest.h>

#include "striplab/verification.hpp"
#include "test_util.hpp"

using namespace striplab;
using namespace striplab::verify;
using striplab::testing::seeded_rng;

TEST(GradCheck, QuadraticIsNearlyExact) {
    const Tensor x = Tensor::vector({0.3, -1.2, 2.0});
    const auto f = [](const Tensor& t) { return t[0] * t[0] + 3.0 * t[1] * t[1] + t[0] * t[2]; };
    const Tensor g = Tensor::vector({2 * 0.3 + 2.0, 6 * -1.2, 0.3});
    const auto r = grad_check("quad", f, x, g);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_rel_error, 1e-9);
    EXPECT_EQ(r.step, 1e-5);
    EXPECT_EQ(r.tolerance, 1e-6);
}

TEST(GradCheck, SigmoidChain) {
    const Tensor x = Tensor::vector({0.4, -0.7});
    const auto f = [](const Tensor& t) { return 1.0 / (1.0 + std::exp(-(2.0 * t[0] - t[1]))); };
    const double s = f(x), ds = s * (1 - s);
    const auto r = grad_check("sigmoid", f, x, Tensor::vector({2 * ds, -ds}));
    EXPECT_TRUE(r.passed) << format_report(r);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, CorruptedCoordinateIsNamed) {
    const Tensor x({2, 3}, 0.5);
    const auto f = [](const Tensor& t) {
        double s = 0;
        for (double v : t.data()) s += v * v * v;
        return s;
    };
    Tensor g({2, 3}, 3 * 0.25);
    g.at(1, 2) *= kFaultScale;
    const auto r = grad_check("cube", f, x, g);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.worst_index, (std::vector<std::size_t>{1, 2}));
    EXPECT_NEAR(r.max_rel_error, 0.01 / 1.01, 1e-6);
    EXPECT_NE(format_report(r).find("worst_index=(1,2)"), std::string::npos);
}

TEST(GradCheck, NonFiniteEvaluationsFail) {
    const auto f = [](const Tensor& t) { return t[0] > 0 ? std::log(t[0]) : NAN; };
    const auto r = grad_check("log", f, Tensor::vector({0.0}), Tensor::vector({1.0}));
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.non_finite, 1u);
}

TEST(OracleSuite, PassesAndIsDeterministic) {
    SuiteOptions opt;
    opt.seed = seed_from_env();
    opt.cases = 20;
    const auto a = run_oracle_suite(opt);
    const auto b = run_oracle_suite(opt);
    ASSERT_EQ(a.size(), b.size());
    ASSERT_FALSE(a.empty());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(a[i].passed) << format_report(a[i]);
        EXPECT_EQ(a[i].num_cases, 20u);
        EXPECT_EQ(format_report(a[i]), format_report(b[i]));
    }
}

TEST(OracleSuite, DetectsReversedTaps) {
    SuiteOptions opt;
    opt.seed = seed_from_env();
    opt.cases = 10;
    opt.break_strip_index = true;
    bool strip_failed = false;
    for (const auto& r : run_oracle_suite(opt))
        if (r.op_name == "oracle_strip_apply") strip_failed = !r.passed;
    EXPECT_TRUE(strip_failed);
}

TEST(GradientSuite, PassesWithFullFaultDetection) {
    SuiteOptions opt;
    opt.seed = seed_from_env();
    const auto r = run_gradient_suite(opt, 1);
    for (const auto& rep : r.reports) EXPECT_TRUE(rep.passed) << format_report(rep);
    EXPECT_GT(r.fault_trials, 0u);
    EXPECT_EQ(r.faults_detected, r.fault_trials);
    EXPECT_TRUE(r.passed());
}

TEST(Impulse, ResponseOfIdentityOperatorIsTheImpulse) {
    const auto r = impulse_response([](const Tensor& x) { return x; }, 1, 2, 0, {2, 3, 3});
    EXPECT_EQ(r.at(1, 2, 0), 1.0);
    EXPECT_EQ(pairwise_sum(r.data()), 1.0);
}

TEST(Impulse, BorderImpulseIsClipped) {
    const Tensor a = Tensor::vector({0.2, 0.5, 0.3});
    const auto r = impulse_response([&](const Tensor& x) { return stda_frozen(x, a, a); }, 0, 0, 0, {1, 4, 4});
    // Output (h, w) reads input (h + i - 1, w + j - 1) with tap a_v[i]·a_h[j].
    EXPECT_DOUBLE_EQ(r.at(0, 0, 0), 0.5 * 0.5);
    EXPECT_DOUBLE_EQ(r.at(0, 1, 1), 0.2 * 0.2);
    EXPECT_DOUBLE_EQ(r.at(0, 0, 1), 0.5 * 0.2);
    EXPECT_EQ(r.at(0, 2, 2), 0.0);
}

TEST(Impulse, SuiteChecksPassForOddK) {
    auto rng = seeded_rng();
    for (std::size_t k : {1, 3, 5}) {
        const auto r = run_impulse_check(rng, k);
        EXPECT_TRUE(r.passed) << format_report(r);
        EXPECT_EQ(r.support_violations, 0u);
    }
}

TEST(AllSuites, ReportEndsWithSuiteLines) {
    SuiteOptions opt;
    opt.seed = seed_from_env();
    opt.cases = 5;
    std::ostringstream os;
    EXPECT_TRUE(run_all_suites(opt, os));
    const auto s = os.str();
    for (const char* name : {"oracle", "gradient", "impulse", "chain"})
        EXPECT_NE(s.find(std::string("suite ") + name + " PASS"), std::string::npos) << name;
}
