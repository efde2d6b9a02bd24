#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "pcann/evaluation.hpp"

using namespace pcann;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> adf_series(char which) {
    // Deterministic inputs shared with the reference values below.
    std::vector<double> out(206);
    double acc = 0.0;
    for (int t = 0; t < 206; ++t) {
        const double td = t;
        switch (which) {
            case 'a':
                out[t] = std::sin(0.3 * td) + 0.5 * std::cos(1.7 * td) + 0.01 * td;
                break;
            case 'b':
                acc += std::sin(td * td * 0.7);
                out[t] = acc;
                break;
            default:
                out[t] = std::sin(td * td * 0.7) + 0.3 * std::cos(td * 1.3);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("F1 from precision and recall", "[evaluation]") {
    CHECK_THAT(evaluation::f1_score(0.9736, 0.8421), WithinAbs(0.9031, 5e-5));
    CHECK(evaluation::f1_score(0.0, 0.0) == 0.0);
}

TEST_CASE("binary metrics", "[evaluation]") {
    const std::vector<int> truth{1, 0, 1, 1, 0, 0, 0, 1, 0, 0};
    CHECK(evaluation::classification_metrics(truth, truth).f1 == 1.0);
    CHECK(evaluation::classification_metrics(truth, truth).accuracy == 1.0);
    const std::vector<int> all(truth.size(), 1);
    const auto m = evaluation::classification_metrics(truth, all);
    CHECK(m.recall == 1.0);
    CHECK_THAT(m.precision, WithinAbs(0.4, 1e-15));
    const std::vector<int> pred{1, 1, 0, 1, 0, 0, 1, 1, 0, 0};
    const auto p = evaluation::classification_metrics(truth, pred);
    CHECK(p.tp == 3);
    CHECK(p.fp == 2);
    CHECK(p.fn == 1);
    CHECK(p.tn == 4);
    CHECK(p.total() == 10);
    CHECK(p.f1 >= std::min(p.precision, p.recall));
    CHECK(p.f1 <= std::max(p.precision, p.recall));
    CHECK_THROWS_AS(evaluation::classification_metrics(truth, std::vector<int>{1}), ValidationError);
}

TEST_CASE("F1 lies between precision and recall", "[evaluation]") {
    Rng rng = make_rng(3, 0);
    std::bernoulli_distribution coin(0.3);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<int> t(40), p(40);
        for (int i = 0; i < 40; ++i) {
            t[i] = coin(rng);
            p[i] = coin(rng);
        }
        const auto m = evaluation::classification_metrics(t, p);
        CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
        CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
    }
}

TEST_CASE("support-weighted localization metrics", "[evaluation]") {
    const std::vector<int> truth{1, 1, 2, 3};
    const std::vector<int> pred{1, 2, 2, 3};
    const auto m = evaluation::localization_metrics(truth, pred);
    CHECK_THAT(m.accuracy, WithinAbs(0.75, 1e-15));
    CHECK_THAT(m.precision, WithinAbs(0.875, 1e-15));
    CHECK_THAT(m.recall, WithinAbs(0.75, 1e-15));
    CHECK_THAT(m.f1, WithinAbs(0.75, 1e-15));
    CHECK(evaluation::localization_metrics(truth, truth).accuracy == 1.0);
    const std::vector<int> wrong{4, 4, 4, 4};
    CHECK(evaluation::localization_metrics(truth, wrong).accuracy == 0.0);
    CHECK_THROWS_AS(evaluation::localization_metrics(std::vector<int>{}, std::vector<int>{}), ValidationError);
}

TEST_CASE("precision-recall curve", "[evaluation]") {
    const std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
    const std::vector<int> sep{0, 0, 0, 1, 1, 1};
    const auto perfect = evaluation::precision_recall_curve(s, sep);
    CHECK_THAT(perfect.auc, WithinAbs(1.0, 1e-15));
    CHECK(perfect.points.front().recall == 0.0);
    CHECK(perfect.points.front().precision == 1.0);
    CHECK(perfect.points.back().recall == 1.0);
    CHECK_THAT(perfect.points.back().precision, WithinAbs(0.5, 1e-15));

    Rng rng = make_rng(8, 0);
    std::uniform_real_distribution<double> u;
    std::vector<double> r(10000), tr(10000);
    std::vector<int> lab(10000);
    for (int i = 0; i < 10000; ++i) {
        r[i] = u(rng);
        lab[i] = i % 2;
        tr[i] = std::exp(3.0 * r[i]) - 7.0;
    }
    const auto rand = evaluation::precision_recall_curve(r, lab);
    CHECK_THAT(rand.auc, WithinAbs(0.5, 0.05));
    CHECK(rand.points.size() <= 513);
    const auto mono = evaluation::precision_recall_curve(tr, lab);
    CHECK_THAT(mono.auc, WithinAbs(rand.auc, 1e-12));
    CHECK_THROWS_AS(evaluation::precision_recall_curve(s, std::vector<int>(6, 1)), ValidationError);
}

TEST_CASE("cut-off robustness", "[evaluation]") {
    Rng rng = make_rng(4, 0);
    std::normal_distribution<double> normal;
    std::vector<double> s(400);
    std::vector<int> t(400);
    for (int i = 0; i < 400; ++i) {
        t[i] = i % 5 == 0 ? 1 : 0;
        s[i] = normal(rng) + 1.5 * t[i];
    }
    const auto shocks = evaluation::default_cutoff_shocks();
    const auto rows = evaluation::cutoff_robustness(s, t, 0.7, shocks);
    REQUIRE(rows.size() == 13);
    std::vector<int> base(400);
    for (int i = 0; i < 400; ++i) {
        base[i] = s[i] > 0.7 ? 1 : 0;
    }
    const auto ref = evaluation::classification_metrics(t, base);
    CHECK(rows[6].shock == 0.0);
    CHECK(rows[6].metrics.f1 == ref.f1);
    CHECK(rows[6].metrics.accuracy == ref.accuracy);
    for (std::size_t j = 1; j < rows.size(); ++j) {
        CHECK(rows[j].metrics.recall <= rows[j - 1].metrics.recall);
        CHECK(rows[j].predicted_positive <= rows[j - 1].predicted_positive);
    }
    const std::vector<double> huge{-100.0};
    const auto all = evaluation::cutoff_robustness(s, t, 0.7, huge);
    CHECK(all[0].metrics.recall == 1.0);
    CHECK_THAT(all[0].metrics.precision, WithinAbs(0.2, 1e-15));
}

TEST_CASE("amplitude buckets", "[evaluation]") {
    const std::vector<double> a{0.001, 0.002, 0.011, 0.02, 0.025, 0.035, 0.036, 0.039};
    const std::vector<int> ok{0, 1, 1, 1, 1, 1, 1, 1};
    const std::array<double, 5> edges{0.0, 0.01, 0.02, 0.03, 0.04};
    const auto b = evaluation::amplitude_buckets(a, ok, edges);
    REQUIRE(b.size() == 4);
    CHECK(b[0].count == 2);
    CHECK(*b[0].ratio == 0.5);
    CHECK(b[1].count == 1);
    CHECK(b[2].count == 2);
    CHECK(b[3].count == 3);
    const std::array<double, 5> gap{0.0, 0.005, 0.006, 0.007, 0.04};
    const auto g = evaluation::amplitude_buckets(a, ok, gap);
    CHECK_FALSE(g[1].ratio.has_value());
    const auto q = evaluation::amplitude_buckets(a, ok);
    CHECK(q[0].lo == 0.001);
    CHECK(q[3].hi == 0.039);
    std::size_t total = 0;
    for (const auto& x : q) {
        total += x.count;
    }
    CHECK(total == a.size());
}

TEST_CASE("multirun summaries", "[evaluation]") {
    const std::vector<std::uint64_t> same{5, 5, 5};
    const auto s = evaluation::multirun(
        [](std::uint64_t seed) {
            return evaluation::RunMetrics{{"x", static_cast<double>(seed) * 0.1}};
        },
        same);
    CHECK(s.at("x").std == 0.0);
    CHECK(s.at("x").n == 3);
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto m = evaluation::multirun(
        [](std::uint64_t seed) { return evaluation::RunMetrics{{"x", static_cast<double>(seed)}}; }, seeds);
    CHECK(m.at("x").mean == 2.0);
    CHECK(m.at("x").std == 1.0);
    CHECK_THROWS_WITH(evaluation::multirun(
                          [](std::uint64_t seed) -> evaluation::RunMetrics {
                              if (seed == 2) {
                                  throw NumericalError("boom");
                              }
                              return {};
                          },
                          seeds),
                      Catch::Matchers::ContainsSubstring("run 1 (seed 2)"));
    CHECK_THROWS_AS(evaluation::multirun([](std::uint64_t) { return evaluation::RunMetrics{}; },
                                         std::vector<std::uint64_t>{1}),
                    ValidationError);
}

TEST_CASE("ADF statistic matches reference values", "[evaluation]") {
    // Reference: statsmodels adfuller(x, maxlag=L, regression="c", autolag=None).
    CHECK(evaluation::schwert_lag(206) == 14);
    const auto b = evaluation::adf_test(adf_series('b'));
    CHECK(b.lags == 14);
    CHECK(b.n_obs == 191);
    CHECK_THAT(b.statistic, WithinAbs(-2.954027234315424, 1e-9));
    CHECK_THAT(b.p_value, WithinAbs(0.03941646765379366, 1e-9));
    CHECK_THAT(b.critical_1, WithinAbs(-3.465058702600837, 1e-9));
    CHECK_THAT(b.critical_5, WithinAbs(-2.8767942675230356, 1e-9));
    CHECK_THAT(b.critical_10, WithinAbs(-2.5749014492475535, 1e-9));
    CHECK(b.reject_5);

    const auto a2 = evaluation::adf_test(adf_series('a'), 2);
    CHECK(a2.n_obs == 203);
    CHECK_THAT(a2.statistic, WithinAbs(-1.9901500846900606, 1e-9));
    CHECK_THAT(a2.p_value, WithinAbs(0.29090857395148223, 1e-9));
    CHECK_FALSE(a2.reject_5);

    const auto b2 = evaluation::adf_test(adf_series('b'), 2);
    CHECK_THAT(b2.statistic, WithinAbs(-1.9756660731325149, 1e-9));
    CHECK_THAT(b2.p_value, WithinAbs(0.29734352762268057, 1e-9));

    const auto c = evaluation::adf_test(adf_series('c'));
    CHECK_THAT(c.statistic, WithinAbs(-3.236843348542275, 1e-9));
    CHECK_THAT(c.p_value, WithinAbs(0.017948668785697793, 1e-9));

    const auto c0 = evaluation::adf_test(adf_series('c'), 0);
    CHECK(c0.n_obs == 205);
    CHECK_THAT(c0.statistic, WithinAbs(-14.36103890690485, 1e-9));
    CHECK_THAT(c0.p_value, WithinRel(9.847883767332626e-27, 1e-6));
}

TEST_CASE("ADF size and power by simulation", "[evaluation]") {
    std::normal_distribution<double> normal;
    int walk_kept = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng = make_rng(seed, 1);
        std::vector<double> x(10000);
        double level = 0.0;
        for (auto& v : x) {
            level += normal(rng);
            v = level;
        }
        walk_kept += evaluation::adf_test(x).reject_5 ? 0 : 1;
    }
    CHECK(walk_kept >= 45);
    // 14 augmentation lags cost power at n = 206; without them white noise is always rejected
    int rejected_schwert = 0;
    int rejected_plain = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = make_rng(seed, 2);
        std::vector<double> x(206);
        for (auto& v : x) {
            v = normal(rng);
        }
        rejected_schwert += evaluation::adf_test(x).reject_5 ? 1 : 0;
        rejected_plain += evaluation::adf_test(x, 0).reject_5 ? 1 : 0;
    }
    CHECK(rejected_schwert >= 80);
    CHECK(rejected_plain >= 99);
}

TEST_CASE("ADF input checks", "[evaluation]") {
    CHECK_THROWS_AS(evaluation::adf_test(std::vector<double>(10, 1.0), 14), ValidationError);
    CHECK_THROWS_AS(evaluation::adf_test(std::vector<double>(50, 1.0), 2), NumericalError);
}
