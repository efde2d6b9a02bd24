#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pcann/calibration.hpp"
#include "pcann/pcafeat.hpp"
#include "pcann/riskmetrics.hpp"
#include "pcann/simgen.hpp"

using namespace pcann;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

simgen::PricePanel small_panel(std::uint64_t seed, std::size_t n = 4, std::size_t t = 300) {
    simgen::DiffusionConfig cfg;
    cfg.n_stocks = n;
    cfg.n_steps = t;
    cfg.seed = seed;
    return simgen::simulate_gbm(cfg);
}

}  // namespace

// ---- simgen ----------------------------------------------------------------

TEST_CASE("zero volatility gives the deterministic exponential", "[simgen]") {
    simgen::DiffusionConfig cfg;
    cfg.n_stocks = 2;
    cfg.n_steps = 253;
    cfg.drift_range = {0.1, 0.1};
    cfg.vol_range = {0.0, 0.0};
    cfg.s0_mean = 100.0;
    cfg.s0_std = 0.0;
    const auto panel = simgen::simulate_gbm(cfg);
    CHECK_THAT(panel.prices(0, 252), WithinRel(100.0 * std::exp(0.1), 1e-12));
    CHECK_THAT(panel.prices(1, 252), WithinAbs(110.5171, 1e-4));
}

TEST_CASE("default panel shape and bit-identical reruns", "[simgen]") {
    simgen::DiffusionConfig cfg;
    cfg.seed = 11;
    const auto a = simgen::simulate_gbm(cfg);
    const auto b = simgen::simulate_gbm(cfg);
    CHECK(a.prices.rows() == 20);
    CHECK(a.prices.cols() == 1500);
    CHECK(a.prices == b.prices);
    cfg.seed = 12;
    CHECK(simgen::simulate_gbm(cfg).prices != a.prices);
}

TEST_CASE("drawn parameters respect their ranges", "[simgen]") {
    const auto panel = small_panel(3, 30, 10);
    for (const auto& p : panel.params) {
        CHECK(p.mu >= 0.01);
        CHECK(p.mu <= 0.2);
        CHECK(p.sigma >= 0.01);
        CHECK(p.sigma <= 0.1);
        CHECK(p.s0 > 0.0);
    }
}

TEST_CASE("log returns have the GBM mean and variance", "[simgen]") {
    // 3 standard errors over T = 1e5 steps.
    simgen::DiffusionConfig cfg;
    cfg.n_stocks = 2;
    cfg.n_steps = 100001;
    cfg.seed = 21;
    const auto panel = simgen::simulate_gbm(cfg);
    const Matrix r = riskmetrics::log_returns(panel.prices, 1);
    const double n = static_cast<double>(r.cols());
    for (Eigen::Index i = 0; i < 2; ++i) {
        const auto& p = panel.params[static_cast<std::size_t>(i)];
        const double var = p.sigma * p.sigma * cfg.dt;
        const double m = r.row(i).mean();
        const double s2 = (r.row(i).array() - m).square().sum() / (n - 1);
        CHECK(std::abs(m - (p.mu - 0.5 * p.sigma * p.sigma) * cfg.dt) < 3.0 * std::sqrt(var / n));
        CHECK(std::abs(s2 - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
    }
}

TEST_CASE("contamination multiplies by 1 + delta and labels the stamp", "[simgen]") {
    const auto clean = small_panel(5, 20, 1000);
    const auto cont = simgen::contaminate(clean, {4, 0.04, 9});
    CHECK(cont.labels.sum() == 80);
    for (Eigen::Index i = 0; i < 20; ++i) {
        CHECK(cont.labels.row(i).sum() == 4);
        for (Eigen::Index t = 0; t < 1000; ++t) {
            const double delta = cont.mask(i, t) - 1.0;
            CHECK(std::abs(delta) <= 0.04);
            CHECK(cont.panel.prices(i, t) == clean.prices(i, t) * cont.mask(i, t));
            if (cont.labels(i, t) == 0) {
                CHECK(delta == 0.0);
            }
        }
    }
    simgen::PricePanel one;
    one.prices = Matrix::Constant(1, 3, 100.0);
    const auto c1 = simgen::contaminate(one, {1, 0.04, 1});
    Eigen::Index t = 0;
    c1.labels.row(0).maxCoeff(&t);
    CHECK_THAT(c1.panel.prices(0, t), WithinRel(100.0 * c1.mask(0, t), 1e-15));
    CHECK_THROWS_AS(simgen::contaminate(one, {4, 0.04, 1}), ValidationError);
}

TEST_CASE("sliding windows count and label shift", "[simgen]") {
    const auto clean = small_panel(6, 20, 1000);
    LabelMatrix y = LabelMatrix::Zero(20, 1000);
    y(0, 300) = 1;
    const auto s = simgen::slide(clean.prices, y, 206);
    CHECK(s.windows.rows() == 20 * 795);
    CHECK(s.windows.cols() == 206);
    // window q (0-based start) holds stamp 300 at 1-based index 300 - q + 1.
    for (std::size_t r = 0; r < 795; ++r) {
        const auto q = s.provenance[r].offset;
        const int expected = (q <= 300 && 300 < q + 206) ? 1 : 0;
        CHECK(s.labels.row(static_cast<Eigen::Index>(r)).sum() == expected);
        if (expected == 1) {
            CHECK(s.labels(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(300 - q)) == 1);
        }
    }
    CHECK(s.windows.row(20 * 795 - 1) == clean.prices.row(19).tail(206));
    CHECK_THROWS_AS(simgen::slide(clean.prices, y, 1001), ValidationError);
}

TEST_CASE("row labels from window labels", "[simgen]") {
    LabelMatrix w = LabelMatrix::Zero(3, 206);
    w(1, 56) = 1;
    w(2, 3) = 1;
    w(2, 9) = 1;
    const auto one = simgen::label(w.topRows(2));
    CHECK(one.ident == std::vector<int>{0, 1});
    CHECK_FALSE(one.loc[0].has_value());
    CHECK(*one.loc[1] == 57);
    CHECK_THROWS_AS(simgen::label(w), ValidationError);
}

TEST_CASE("selection sizes and the at-most-one rule", "[simgen]") {
    // 6000 contaminated, 20000 clean, 50 doubly contaminated rows.
    LabelMatrix w = LabelMatrix::Zero(26050, 4);
    for (Eigen::Index r = 0; r < 6000; ++r) {
        w(r, r % 4) = 1;
    }
    for (Eigen::Index r = 26000; r < 26050; ++r) {
        w(r, 0) = w(r, 1) = 1;
    }
    const auto train = simgen::select_rows(w, simgen::SelectionMode::Train, 0.5, 1);
    CHECK(train.size() == 12000);
    CHECK(std::is_sorted(train.begin(), train.end()));
    for (auto r : train) {
        CHECK(r < 26000);
    }
    LabelMatrix t = LabelMatrix::Zero(20400, 4);
    for (Eigen::Index r = 0; r < 400; ++r) {
        t(r, 0) = 1;
    }
    const auto test = simgen::select_rows(t, simgen::SelectionMode::Test, 0.16, 2);
    CHECK(test.size() == 2500);
    CHECK(std::count_if(test.begin(), test.end(), [](std::size_t r) { return r < 400; }) == 400);
}

TEST_CASE("selection falls back when clean windows are scarce", "[simgen]") {
    LabelMatrix w = LabelMatrix::Zero(1000, 4);
    for (Eigen::Index r = 0; r < 700; ++r) {
        w(r, 1) = 1;
    }
    const auto train = simgen::select_rows(w, simgen::SelectionMode::Train, 0.5, 3);
    CHECK(train.size() == 600);
    CHECK(std::count_if(train.begin(), train.end(), [](std::size_t r) { return r < 700; }) == 300);
    const auto test = simgen::select_rows(w, simgen::SelectionMode::Test, 0.16, 3);
    const auto n_c = std::count_if(test.begin(), test.end(), [](std::size_t r) { return r < 700; });
    CHECK(test.size() - static_cast<std::size_t>(n_c) == 300);
    CHECK_THAT(static_cast<double>(n_c) / static_cast<double>(test.size()), WithinAbs(0.16, 0.005));
}

TEST_CASE("train/test split shapes and concatenation", "[simgen]") {
    const auto panel = small_panel(8, 20, 1500);
    const auto [a, b] = simgen::split_train_test(panel, 1000);
    CHECK(a.prices.cols() == 1000);
    CHECK(b.prices.cols() == 500);
    Matrix joined(20, 1500);
    joined << a.prices, b.prices;
    CHECK(joined == panel.prices);
    CHECK_THROWS_AS(simgen::split_train_test(panel, 0), ValidationError);
    CHECK_THROWS_AS(simgen::split_train_test(panel, 1500), ValidationError);
}

// ---- pcafeat ---------------------------------------------------------------

namespace {

Matrix random_windows(std::uint64_t seed, int n, int p) {
    Rng rng = make_rng(seed, 0);
    std::normal_distribution<double> normal;
    Matrix x(n, p);
    for (int i = 0; i < n; ++i) {
        double level = 100.0;
        for (int j = 0; j < p; ++j) {
            level += normal(rng);
            x(i, j) = level;
        }
    }
    return x;
}

}  // namespace

TEST_CASE("full-rank reconstruction is exact", "[pcafeat]") {
    const Matrix x = random_windows(1, 60, 12);
    const auto model = pcafeat::fit_pca(x, 12);
    CHECK(pcafeat::reconstruction_errors(model, x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("PCA basis is orthonormal with descending eigenvalues", "[pcafeat]") {
    const Matrix x = random_windows(2, 80, 20);
    const auto model = pcafeat::fit_pca(x, 5);
    CHECK(model.k() == 5);
    CHECK(model.p() == 20);
    CHECK((model.omega * model.omega.transpose() - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-12);
    for (int j = 0; j + 1 < 5; ++j) {
        CHECK(model.eigenvalues[j] >= model.eigenvalues[j + 1]);
    }
}

TEST_CASE("rows in the principal subspace have zero error", "[pcafeat]") {
    const Matrix x = random_windows(3, 80, 20);
    const auto model = pcafeat::fit_pca(x, 4);
    const Vector coef = Vector::LinSpaced(4, -2.0, 3.0);
    const Vector row = model.mean + model.omega.transpose() * coef;
    CHECK(pcafeat::reconstruction_errors(model, row).norm() < 1e-10);
}

TEST_CASE("test features use the train basis", "[pcafeat]") {
    const Matrix train = random_windows(4, 80, 20);
    const Matrix test = random_windows(5, 30, 20);
    const auto model = pcafeat::fit_pca(train, 6);
    const Matrix eps = pcafeat::reconstruction_errors(model, test);
    const Matrix centered = test.rowwise() - model.mean.transpose();
    const Matrix expected = centered * (model.omega.transpose() * model.omega - Eigen::MatrixXd::Identity(20, 20));
    CHECK((eps - expected).norm() < 1e-9);
}

TEST_CASE("latent dimension bounds", "[pcafeat]") {
    const Matrix x = random_windows(6, 30, 10);
    CHECK_THROWS_AS(pcafeat::fit_pca(x, 0), ValidationError);
    CHECK_THROWS_AS(pcafeat::fit_pca(x, 11), ValidationError);
    const auto model = pcafeat::fit_pca(x, 3);
    CHECK_THROWS_AS(pcafeat::reconstruction_errors(model, Matrix(2, 9)), ValidationError);
}

// ---- calibration -----------------------------------------------------------

TEST_CASE("latent dimension calibration", "[calibration]") {
    simgen::DiffusionConfig cfg;
    cfg.n_stocks = 6;
    cfg.n_steps = 400;
    cfg.seed = 31;
    const auto clean = simgen::simulate_gbm(cfg);
    const auto cont = simgen::contaminate(clean, {6, 0.04, 32});
    const auto slided = simgen::slide(cont.panel.prices, cont.labels, 50);
    const auto keep = simgen::select_rows(slided.labels, simgen::SelectionMode::Train, 0.5, 33);
    const auto rows = simgen::build_labeled_panel(slided, keep);

    const std::vector<std::size_t> single{10};
    CHECK(calibration::calibrate_latent_dim(rows.windows, rows.ident, single).k == 10);

    const std::vector<std::size_t> grid{2, 5, 10, 20, 30};
    const auto res = calibration::calibrate_latent_dim(rows.windows, rows.ident, grid, 0.02);
    REQUIRE(res.curve.size() == grid.size());
    double best = 0.0;
    for (const auto& pt : res.curve) {
        best = std::max(best, pt.f1);
    }
    for (const auto& pt : res.curve) {
        if (pt.k < res.k) {
            CHECK(pt.f1 < best - 0.02);
        }
        if (pt.k == res.k) {
            CHECK(pt.f1 >= best - 0.02);
        }
    }
    // With an unlimited tolerance the head of the grid wins.
    CHECK(calibration::calibrate_latent_dim(rows.windows, rows.ident, grid, 1.0).k == 2);
}
