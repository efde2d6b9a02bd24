#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "pcann/evaluation.hpp"
#include "pcann/scorer.hpp"

using namespace pcann;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

scorer::ScoringNetwork zero_network(std::vector<std::size_t> dims) {
    auto net = scorer::make_network(dims, 1);
    for (auto& l : net.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    return net;
}

// Rows of i.i.d. noise; contaminated rows carry one spike of size 4.
struct SpikeData {
    Matrix eps;
    std::vector<int> labels;
};

SpikeData spike_data(std::uint64_t seed, int n, int p) {
    Rng rng = make_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 0.3);
    std::uniform_int_distribution<int> where(0, p - 1);
    SpikeData d;
    d.eps.resize(n, p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            d.eps(i, j) = normal(rng);
        }
        d.labels.push_back(i % 2);
        if (i % 2 == 1) {
            d.eps(i, where(rng)) += 4.0;
        }
    }
    return d;
}

}  // namespace

TEST_CASE("all-zero network scores zero", "[scorer]") {
    const auto net = zero_network({6, 5, 3, 1});
    const Matrix x = Matrix::Random(4, 6);
    CHECK(net.forward(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single affine layer with unit weights sums the input", "[scorer]") {
    auto net = zero_network({5, 1});
    net.layers[0].weights.setOnes();
    Vector row(5);
    row << 1.0, -2.0, 0.5, 3.0, 0.25;
    CHECK_THAT(net.forward_row(row), WithinAbs(2.75, 1e-15));
}

TEST_CASE("initial weights lie in the He-uniform bound", "[scorer]") {
    const auto net = scorer::make_network({206, 64, 32, 1}, 3);
    const std::vector<double> fan_in{206, 64, 32};
    for (std::size_t l = 0; l < 3; ++l) {
        const double bound = std::sqrt(6.0 / fan_in[l]);
        CHECK(net.layers[l].weights.cwiseAbs().maxCoeff() <= bound);
        CHECK(net.layers[l].weights.cwiseAbs().maxCoeff() > 0.9 * bound);
        CHECK(net.layers[l].bias.cwiseAbs().maxCoeff() <= bound);
    }
    CHECK(net.layer_dims() == std::vector<std::size_t>{206, 64, 32, 1});
    const auto again = scorer::make_network({206, 64, 32, 1}, 3);
    CHECK(again.layers[1].weights == net.layers[1].weights);
}

TEST_CASE("network validation", "[scorer]") {
    auto net = scorer::make_network({4, 3, 1}, 1);
    CHECK_NOTHROW(net.validate());
    CHECK_THROWS_AS(net.forward(Matrix(2, 5)), ValidationError);
    net.temperature = 0.0;
    CHECK_THROWS_AS(net.validate(), ValidationError);
    CHECK_THROWS_AS(scorer::make_network({4, 2}, 1), ValidationError);
}

TEST_CASE("smooth and hard labels", "[scorer]") {
    auto net = zero_network({1, 1});
    net.cutoff = 0.3;
    net.temperature = 0.2;
    Vector s(4);
    s << 0.3, 0.3 + 10 * 0.2, 0.3 - 10 * 0.2, 0.3 + 1e-12;
    const Vector p = scorer::smooth_labels(net, s);
    CHECK(p[0] == 0.5);
    CHECK(p[1] > 0.9999);
    CHECK(p[2] < 1e-4);
    const auto hard = scorer::hard_labels(s, net.cutoff);
    CHECK(hard == std::vector<int>{0, 1, 0, 1});
    for (int i = 1; i < 3; ++i) {
        CHECK(hard[static_cast<std::size_t>(i)] == static_cast<int>(std::round(p[i])));
    }
    CHECK(scorer::logistic(-800.0) == 0.0);
    CHECK(scorer::logistic(800.0) == 1.0);
}

TEST_CASE("degenerate loss equals ln 2 plus one", "[scorer]") {
    const Vector scores = Vector::Constant(6, 1.5);
    const std::vector<int> labels{0, 1, 0, 1, 0, 1};
    for (std::optional<double> bw : {std::optional<double>{}, std::optional<double>{0.4}}) {
        const auto l = scorer::score_loss(scores, labels, 1.5, 0.7, bw, false);
        CHECK_THAT(l.terms.bce, WithinAbs(std::numbers::ln2, 1e-15));
        CHECK_THAT(l.terms.auc_u, WithinAbs(0.5, 1e-15));
        CHECK_THAT(l.terms.auc_c, WithinAbs(0.5, 1e-15));
        CHECK_THAT(l.terms.total(), WithinAbs(std::numbers::ln2 + 1.0, 1e-14));
    }
}

TEST_CASE("separated scores give a vanishing loss", "[scorer]") {
    Vector scores(8);
    scores << -5.0, -4.7, -4.3, -4.0, 4.0, 4.4, 4.6, 5.0;
    const std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1};
    const auto l = scorer::score_loss(scores, labels, 0.0, 0.01, std::nullopt, false);
    CHECK(l.terms.total() < 0.01);
}

TEST_CASE("loss needs both classes", "[scorer]") {
    const Vector scores = Vector::LinSpaced(4, 0.0, 1.0);
    const std::vector<int> labels{1, 1, 1, 1};
    CHECK_THROWS_WITH(scorer::score_loss(scores, labels, 0.5, 1.0, std::nullopt, false),
                      Catch::Matchers::ContainsSubstring("both classes required"));
}

TEST_CASE("analytic gradient matches central differences", "[scorer]") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = oracle::gradient_case(seed);
        const std::optional<double> bw = seed % 2 == 0 ? std::optional<double>(0.5) : std::nullopt;
        INFO("instance " << seed);
        CHECK(oracle::worst_gradient_error(c.net, c.eps, c.labels, bw, 1e-5) <= 1e-4);
    }
}

TEST_CASE("gradient vanishes at a symmetric stationary point", "[scorer]") {
    auto net = scorer::make_network({3, 4, 1}, 5);
    Matrix eps(6, 3);
    for (int i = 0; i < 6; ++i) {
        eps.row(i) << 0.3, -0.2, 0.9;
    }
    net.cutoff = net.forward_row(eps.row(0).transpose());
    const std::vector<int> labels{0, 1, 0, 1, 0, 1};
    const auto g = scorer::loss_gradient(net, eps, labels, 0.5).gradient;
    double norm = std::abs(g.cutoff);
    for (const auto& l : g.layers) {
        norm += l.weights.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
    }
    CHECK(norm < 1e-12);
}

TEST_CASE("cut-off derivative changes sign across the density intersection", "[scorer]") {
    // With a huge temperature the BCE part is flat in s, so dL/ds = f_c(s) - f_u(s).
    Vector scores(10);
    scores << -0.4, -0.2, 0.0, 0.2, 0.4, 2.6, 2.8, 3.0, 3.2, 3.4;
    const std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const double bw = 0.5;
    std::vector<double> su(scores.data(), scores.data() + 5);
    std::vector<double> sc(scores.data() + 5, scores.data() + 10);
    const auto fu = density::fit_kde(su, bw);
    const auto fc = density::fit_kde(sc, bw);
    const auto cut = density::intersection_cutoff(fu, fc, 1e-3, density::union_grid(fu, fc, 2049));
    CHECK_THAT(cut.value, WithinAbs(1.5, 1e-2));
    const double left = scorer::score_loss(scores, labels, cut.value - 0.5, 1e6, bw, true).d_cutoff;
    const double right = scorer::score_loss(scores, labels, cut.value + 0.5, 1e6, bw, true).d_cutoff;
    CHECK(left < 0.0);
    CHECK(right > 0.0);
    CHECK_THAT(left, WithinAbs(fc.density(cut.value - 0.5) - fu.density(cut.value - 0.5), 1e-6));
}

TEST_CASE("one Adam step moves the parameters", "[scorer]") {
    const auto d = spike_data(2, 40, 8);
    scorer::TrainConfig cfg;
    cfg.max_iters = 1;
    cfg.hidden = {6, 4};
    cfg.seed = 4;
    const auto res = scorer::train(d.eps, d.labels, cfg);
    CHECK(res.log.size() == 1);
    CHECK(res.best_iter == 0);
    CHECK(res.final.layers[0].weights != res.best.layers[0].weights);
}

TEST_CASE("training is deterministic and keeps the best snapshot", "[scorer]") {
    const auto d = spike_data(3, 120, 10);
    scorer::TrainConfig cfg;
    cfg.max_iters = 150;
    cfg.hidden = {8, 4};
    cfg.seed = 9;
    const auto a = scorer::train(d.eps, d.labels, cfg);
    const auto b = scorer::train(d.eps, d.labels, cfg);
    for (std::size_t l = 0; l < a.final.layers.size(); ++l) {
        CHECK(a.final.layers[l].weights == b.final.layers[l].weights);
        CHECK(a.final.layers[l].bias == b.final.layers[l].bias);
    }
    CHECK(a.final.cutoff == b.final.cutoff);
    REQUIRE(a.log.size() == 150);
    double running = std::numeric_limits<double>::infinity();
    for (const auto& e : a.log) {
        running = std::min(running, e.terms.total());
    }
    CHECK(a.best_loss == running);
    CHECK(a.log[a.best_iter].terms.total() == a.best_loss);
    // the returned network reproduces the logged best loss on the raw inputs
    const auto again = scorer::loss(a.best, d.eps, d.labels, cfg.bandwidth);
    CHECK_THAT(again.total(), WithinRel(a.best_loss, 1e-9));
    CHECK(a.log.front().terms.total() > a.best_loss);
}

TEST_CASE("training separates spiked rows", "[scorer]") {
    const auto d = spike_data(5, 200, 10);
    scorer::TrainConfig cfg;
    cfg.max_iters = 300;
    cfg.hidden = {16, 8};
    cfg.learning_rate = 1e-2;
    cfg.seed = 1;
    const auto res = scorer::train(d.eps, d.labels, cfg);
    const auto pred = scorer::hard_labels(res.best.forward(d.eps), res.best.cutoff);
    CHECK(evaluation::classification_metrics(d.labels, pred).f1 > 0.9);
}

TEST_CASE("naive scores are row norms", "[scorer]") {
    Matrix eps = Matrix::Zero(2, 5);
    eps(1, 0) = 3.0;
    eps(1, 1) = 4.0;
    const Vector s = scorer::naive_scores(eps);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 5.0);
}

TEST_CASE("naive cut-off between disjoint supports", "[scorer]") {
    Vector s(10);
    s << 1.0, 1.1, 1.2, 1.3, 1.4, 5.0, 5.1, 5.2, 5.3, 5.4;
    const std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const auto m = scorer::fit_intersection(s, labels, 1e-3);
    CHECK(m.cutoff.value > 1.4);
    CHECK(m.cutoff.value < 5.0);
    const auto pred = scorer::hard_labels(s, m.cutoff.value);
    CHECK(evaluation::classification_metrics(labels, pred).f1 == 1.0);
    CHECK(m.auc_u() < 1e-6);
    CHECK(m.auc_c() < 1e-6);
}
