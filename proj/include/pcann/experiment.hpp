#pragma once

// End-to-end experiments on simulated panels: dataset construction, training
// and evaluation of the detector, imputation and VaR studies.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "core.hpp"
#include "detector.hpp"
#include "evaluation.hpp"
#include "pcafeat.hpp"
#include "riskmetrics.hpp"
#include "scorer.hpp"
#include "simgen.hpp"

namespace pcann::experiment {

struct PipelineConfig {
    simgen::DiffusionConfig diffusion;  // full panel, split into train and test below
    std::size_t split = 1000;
    std::size_t train_anomalies = 4;
    std::size_t test_anomalies = 2;
    double rho = 0.04;
    std::size_t window = 206;
    double test_rate = 0.16;
    std::size_t k = 40;
    double eta = 1e-3;
    scorer::TrainConfig train;
    std::uint64_t seed = 0;

    /// Seeds every stage from `seed`.
    void reseed(std::uint64_t s) {
        seed = s;
        diffusion.seed = mix_seed(s, 1);
        train.seed = mix_seed(s, 6);
    }
};

enum Salt : std::uint64_t { kDiffusion = 1, kTrainShocks = 2, kTestShocks = 3, kTrainSelect = 4, kTestSelect = 5 };

struct Split {
    simgen::PricePanel clean;
    simgen::ContaminatedPanel contaminated;
    simgen::LabeledPanel rows;
};

struct Dataset {
    Split train;
    Split test;
};

inline Split make_split(const simgen::PricePanel& clean, std::size_t n_anom, double rho, std::size_t window,
                        simgen::SelectionMode mode, double rate, std::uint64_t shock_seed, std::uint64_t select_seed) {
    Split s;
    s.clean = clean;
    s.contaminated = simgen::contaminate(clean, {n_anom, rho, shock_seed});
    const auto slided = simgen::slide(s.contaminated.panel.prices, s.contaminated.labels, window);
    const auto keep = simgen::select_rows(slided.labels, mode, rate, select_seed);
    s.rows = simgen::build_labeled_panel(slided, keep);
    return s;
}

/// Simulates the full panel, splits it in time, then contaminates, slides and
/// selects each part independently.
inline Dataset build_dataset(const PipelineConfig& cfg) {
    const auto panel = simgen::simulate_gbm(cfg.diffusion);
    const auto [train, test] = simgen::split_train_test(panel, cfg.split);
    Dataset d;
    d.train = make_split(train, cfg.train_anomalies, cfg.rho, cfg.window, simgen::SelectionMode::Train, 0.5,
                         mix_seed(cfg.seed, kTrainShocks), mix_seed(cfg.seed, kTrainSelect));
    d.test = make_split(test, cfg.test_anomalies, cfg.rho, cfg.window, simgen::SelectionMode::Test, cfg.test_rate,
                        mix_seed(cfg.seed, kTestShocks), mix_seed(cfg.seed, kTestSelect));
    return d;
}

/// |delta| of the anomaly in every contaminated row (0 for clean rows).
inline std::vector<double> row_amplitudes(const Split& s) {
    std::vector<double> out(s.rows.rows(), 0.0);
    for (std::size_t r = 0; r < s.rows.rows(); ++r) {
        if (s.rows.loc[r]) {
            const auto& prov = s.rows.provenance[r];
            const auto col = static_cast<Eigen::Index>(prov.offset + static_cast<std::size_t>(*s.rows.loc[r]) - 1);
            out[r] = std::abs(s.contaminated.mask(static_cast<Eigen::Index>(prov.series), col) - 1.0);
        }
    }
    return out;
}

/// True when the value at the 1-based `loc` is neither the window max nor min.
inline bool non_extreme(const Vector& row, int loc) {
    const double v = row[loc - 1];
    return v < row.maxCoeff() && v > row.minCoeff();
}

inline int raw_argmax(const Vector& row) {
    Eigen::Index arg = 0;
    row.maxCoeff(&arg);
    return static_cast<int>(arg) + 1;
}

struct LocalizationSummary {
    std::optional<evaluation::MetricsReport> all;          // A = 1 and A_hat = 1 rows
    std::optional<evaluation::MetricsReport> non_extreme;  // subset with a non-extreme anomaly
    std::optional<evaluation::MetricsReport> dummy_non_extreme;
    std::size_t n_rows = 0;
    std::size_t n_non_extreme = 0;
};

inline LocalizationSummary evaluate_localization(const simgen::LabeledPanel& rows, const Matrix& eps,
                                                 std::span<const int> predicted) {
    std::vector<int> truth, pred, truth_ne, pred_ne, dummy_ne;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        if (rows.ident[r] != 1 || predicted[r] != 1) {
            continue;
        }
        const int l = *rows.loc[r];
        const int l_hat = detector::argmax_abs(eps.row(static_cast<Eigen::Index>(r)).transpose());
        truth.push_back(l);
        pred.push_back(l_hat);
        const Vector x = rows.windows.row(static_cast<Eigen::Index>(r)).transpose();
        if (non_extreme(x, l)) {
            truth_ne.push_back(l);
            pred_ne.push_back(l_hat);
            dummy_ne.push_back(raw_argmax(x));
        }
    }
    LocalizationSummary s;
    s.n_rows = truth.size();
    s.n_non_extreme = truth_ne.size();
    if (!truth.empty()) {
        s.all = evaluation::localization_metrics(truth, pred);
    }
    if (!truth_ne.empty()) {
        s.non_extreme = evaluation::localization_metrics(truth_ne, pred_ne);
        s.dummy_non_extreme = evaluation::localization_metrics(truth_ne, dummy_ne);
    }
    return s;
}

struct SideResult {
    Matrix eps;
    Vector scores;
    Vector naive_scores;
    std::vector<int> predicted;
    evaluation::MetricsReport identification;
    evaluation::MetricsReport naive_identification;
    LocalizationSummary localization;
    double auc_u = 0.0;  // network, KDE tail masses at the learned cut-off
    double auc_c = 0.0;
    double naive_auc_u = 0.0;
    double naive_auc_c = 0.0;
};

struct RunResult {
    Dataset data;
    pcafeat::PcaModel pca;
    scorer::TrainResult training;
    scorer::NaiveModel naive;
    SideResult train;
    SideResult test;

    detector::DetectionModel model() const { return {pca, training.best}; }
};

inline SideResult evaluate_side(const Split& s, const pcafeat::PcaModel& pca, const scorer::ScoringNetwork& net,
                                const scorer::NaiveModel& naive, std::optional<double> bandwidth) {
    SideResult out;
    out.eps = pcafeat::reconstruction_errors(pca, s.rows.windows);
    out.scores = net.forward(out.eps);
    out.predicted = scorer::hard_labels(out.scores, net.cutoff);
    out.identification = evaluation::classification_metrics(s.rows.ident, out.predicted);
    out.localization = evaluate_localization(s.rows, out.eps, out.predicted);

    const auto nn_kde = scorer::fit_intersection(out.scores, s.rows.ident, 1e-3, 1024, bandwidth);
    out.auc_u = nn_kde.kde_u.auc_above(net.cutoff);
    out.auc_c = nn_kde.kde_c.auc_below(net.cutoff);

    out.naive_scores = scorer::naive_scores(out.eps);
    const auto naive_pred = scorer::hard_labels(out.naive_scores, naive.cutoff.value);
    out.naive_identification = evaluation::classification_metrics(s.rows.ident, naive_pred);
    const auto naive_kde = scorer::fit_intersection(out.naive_scores, s.rows.ident, 1e-3, 1024, bandwidth);
    out.naive_auc_u = naive_kde.kde_u.auc_above(naive.cutoff.value);
    out.naive_auc_c = naive_kde.kde_c.auc_below(naive.cutoff.value);
    return out;
}

/// Builds the data, fits PCA, the naive detector and the network, and evaluates
/// both splits.
inline RunResult run_pipeline(const PipelineConfig& cfg, const scorer::TrainCallback& on_iter = {}) {
    Dataset data = build_dataset(cfg);
    auto pca = pcafeat::fit_pca(data.train.rows.windows, cfg.k);
    const Matrix eps_train = pcafeat::reconstruction_errors(pca, data.train.rows.windows);
    auto naive = scorer::naive_fit(eps_train, data.train.rows.ident, cfg.eta);
    auto training = scorer::train(eps_train, data.train.rows.ident, cfg.train, on_iter);
    auto train = evaluate_side(data.train, pca, training.best, naive, cfg.train.bandwidth);
    auto test = evaluate_side(data.test, pca, training.best, naive, cfg.train.bandwidth);
    RunResult r{std::move(data), std::move(pca), std::move(training), std::move(naive), std::move(train),
                std::move(test)};
    return r;
}

/// Identification success by anomaly amplitude over the contaminated rows of
/// one split, bucketed at the amplitude quartiles.
inline std::vector<evaluation::AmplitudeBucket> identification_buckets(const Split& s, const SideResult& side) {
    const auto amp = row_amplitudes(s);
    std::vector<double> a;
    std::vector<int> ok;
    for (std::size_t r = 0; r < s.rows.rows(); ++r) {
        if (s.rows.ident[r] == 1) {
            a.push_back(amp[r]);
            ok.push_back(side.predicted[r]);
        }
    }
    return evaluation::amplitude_buckets(a, ok);
}

/// Flat scalar summary of one run; absent localization metrics are omitted.
inline evaluation::RunMetrics run_metrics(const RunResult& r) {
    evaluation::RunMetrics m;
    auto side = [&m](const std::string& tag, const SideResult& s) {
        m[tag + "_f1"] = s.identification.f1;
        m[tag + "_precision"] = s.identification.precision;
        m[tag + "_recall"] = s.identification.recall;
        m[tag + "_accuracy"] = s.identification.accuracy;
        m[tag + "_naive_f1"] = s.naive_identification.f1;
        m[tag + "_auc_u"] = s.auc_u;
        m[tag + "_auc_c"] = s.auc_c;
        m[tag + "_naive_auc_u"] = s.naive_auc_u;
        m[tag + "_naive_auc_c"] = s.naive_auc_c;
        if (s.localization.all) {
            m[tag + "_loc_accuracy"] = s.localization.all->accuracy;
        }
        if (s.localization.non_extreme) {
            m[tag + "_loc_ne_accuracy"] = s.localization.non_extreme->accuracy;
            m[tag + "_dummy_ne_accuracy"] = s.localization.dummy_non_extreme->accuracy;
        }
    };
    side("train", r.train);
    side("test", r.test);
    m["best_iter"] = static_cast<double>(r.training.best_iter);
    m["best_loss"] = r.training.best_loss;
    m["cutoff"] = r.training.best.cutoff;
    return m;
}

// ---- imputation study ------------------------------------------------------

struct ImputationConfig {
    simgen::DiffusionConfig diffusion;
    std::size_t n_anomalies = 6;
    double rho = 0.04;
    std::uint64_t seed = 0;
};

struct ImputationRun {
    double clean = 0.0;  // ErrCov of each series variant against the true covariance
    double contaminated = 0.0;
    double bf = 0.0;
    double li = 0.0;
    double pca = 0.0;
    double imputation_contaminated = 0.0;  // mean per-series imputation error
    double imputation_bf = 0.0;
    double imputation_li = 0.0;
    double imputation_pca = 0.0;
};

/// Annualized covariance of daily log returns.
inline Eigen::MatrixXd annualized_covariance(const Matrix& prices, double dt) {
    return riskmetrics::estimate_params(riskmetrics::log_returns(prices, 1)).sigma / dt;
}

inline Eigen::MatrixXd true_covariance(const simgen::PricePanel& panel) {
    Vector sigma(static_cast<Eigen::Index>(panel.params.size()));
    for (std::size_t i = 0; i < panel.params.size(); ++i) {
        sigma[static_cast<Eigen::Index>(i)] = panel.params[i].sigma;
    }
    return sigma.asDiagonal() * panel.correlation * sigma.asDiagonal();
}

/// Sorted 0-based stamps flagged in row `i` of a value-label matrix.
inline std::vector<std::size_t> flagged_stamps(const LabelMatrix& labels, Eigen::Index i) {
    std::vector<std::size_t> out;
    for (Eigen::Index t = 0; t < labels.cols(); ++t) {
        if (labels(i, t) != 0) {
            out.push_back(static_cast<std::size_t>(t));
        }
    }
    return out;
}

/// Applies `method` at every stamp of a full series in ascending order.
/// PCA imputation reconstructs a window of the model's width around each stamp.
inline Vector impute_series(const Vector& series, const std::vector<std::size_t>& stamps, detector::ImputeMethod method,
                            const pcafeat::PcaModel* pca = nullptr) {
    Vector out = series;
    std::vector<int> flagged;
    for (auto t : stamps) {
        flagged.push_back(static_cast<int>(t) + 1);
    }
    for (auto t : stamps) {
        if (method == detector::ImputeMethod::PcaReconstruction) {
            require(pca != nullptr, "PCA imputation needs a model");
            const auto p = static_cast<Eigen::Index>(pca->p());
            require(p <= out.size(), "series shorter than the PCA window");
            Eigen::Index start = static_cast<Eigen::Index>(t) - p / 2;
            start = std::clamp<Eigen::Index>(start, 0, out.size() - p);
            const Vector window = out.segment(start, p);
            const auto loc = static_cast<int>(static_cast<Eigen::Index>(t) - start) + 1;
            out.segment(start, p) = detector::impute(window, loc, method, pca);
        } else {
            out = detector::impute(out, static_cast<int>(t) + 1, method, nullptr, flagged);
        }
    }
    return out;
}

/// One imputation run with the true anomaly locations. `pca` is a model fitted
/// on windows of another panel.
inline ImputationRun run_imputation(const ImputationConfig& cfg, const pcafeat::PcaModel& pca) {
    auto diffusion = cfg.diffusion;
    diffusion.seed = mix_seed(cfg.seed, kDiffusion);
    const auto clean = simgen::simulate_gbm(diffusion);
    const auto cont = simgen::contaminate(clean, {cfg.n_anomalies, cfg.rho, mix_seed(cfg.seed, kTrainShocks)});
    const Eigen::MatrixXd truth = true_covariance(clean);

    Matrix bf = cont.panel.prices;
    Matrix li = cont.panel.prices;
    Matrix pc = cont.panel.prices;
    ImputationRun run;
    const auto n = static_cast<double>(clean.n_series());
    for (Eigen::Index i = 0; i < cont.panel.prices.rows(); ++i) {
        const auto stamps = flagged_stamps(cont.labels, i);
        const Vector row = cont.panel.prices.row(i).transpose();
        const Vector c = clean.prices.row(i).transpose();
        bf.row(i) = impute_series(row, stamps, detector::ImputeMethod::BackwardFill).transpose();
        li.row(i) = impute_series(row, stamps, detector::ImputeMethod::LinearInterpolation).transpose();
        pc.row(i) = impute_series(row, stamps, detector::ImputeMethod::PcaReconstruction, &pca).transpose();
        run.imputation_contaminated += riskmetrics::imputation_error(c, row, cfg.n_anomalies) / n;
        run.imputation_bf += riskmetrics::imputation_error(c, bf.row(i).transpose(), cfg.n_anomalies) / n;
        run.imputation_li += riskmetrics::imputation_error(c, li.row(i).transpose(), cfg.n_anomalies) / n;
        run.imputation_pca += riskmetrics::imputation_error(c, pc.row(i).transpose(), cfg.n_anomalies) / n;
    }
    run.clean = riskmetrics::cov_error(truth, annualized_covariance(clean.prices, clean.dt));
    run.contaminated = riskmetrics::cov_error(truth, annualized_covariance(cont.panel.prices, clean.dt));
    run.bf = riskmetrics::cov_error(truth, annualized_covariance(bf, clean.dt));
    run.li = riskmetrics::cov_error(truth, annualized_covariance(li, clean.dt));
    run.pca = riskmetrics::cov_error(truth, annualized_covariance(pc, clean.dt));
    return run;
}

// ---- VaR study -------------------------------------------------------------

struct VarConfig {
    simgen::DiffusionConfig diffusion;
    std::size_t n_anomalies = 5;
    double rho = 0.04;
    double alpha = 0.99;
    std::size_t horizon = 1;
    std::size_t max_iter = 5;
    std::uint64_t seed = 0;
};

struct VarRun {
    riskmetrics::VarEstimate theo, clean, anom, loc_true, loc_pred;
    riskmetrics::VarErrors err_clean, err_anom, err_loc_true, err_loc_pred;
    std::size_t n_true = 0;
    std::size_t n_predicted = 0;
    std::size_t n_hit = 0;  // predicted stamps that are true anomalies
};

/// Absolute 0-based stamps flagged by running the detector on consecutive
/// windows of width p (the last window is aligned to the series end).
inline std::vector<std::size_t> predict_stamps(const detector::DetectionModel& model, const Vector& series,
                                               std::size_t max_iter) {
    const auto p = static_cast<Eigen::Index>(model.pca.p());
    require(series.size() >= p, "series shorter than the detector window");
    std::vector<Eigen::Index> starts;
    for (Eigen::Index s = 0; s + p <= series.size(); s += p) {
        starts.push_back(s);
    }
    if (starts.back() + p < series.size()) {
        starts.push_back(series.size() - p);
    }
    std::set<std::size_t> stamps;
    for (auto s : starts) {
        const auto rep = detector::detect_iterative(model, series.segment(s, p), detector::ImputeMethod::BackwardFill,
                                                    max_iter);
        for (int loc : rep.locations) {
            stamps.insert(static_cast<std::size_t>(s + loc - 1));
        }
    }
    return {stamps.begin(), stamps.end()};
}

inline riskmetrics::VarEstimate panel_var(const Matrix& prices, const Vector& weights, const VarConfig& cfg,
                                          const char* tag) {
    const auto model = riskmetrics::estimate_params(riskmetrics::log_returns(prices, cfg.horizon));
    return riskmetrics::portfolio_var(model, weights, cfg.alpha, tag, cfg.horizon);
}

/// VaR of `weights` from the true parameters of `clean`, the clean panel, the
/// contaminated panel, and the contaminated panel after BF imputation at the
/// true and at the predicted locations. Without a model the predicted-location
/// estimate equals the contaminated one and n_predicted stays 0.
inline VarRun compare_var(const simgen::PricePanel& clean, const Matrix& contaminated, const LabelMatrix& labels,
                          const Vector& weights, const VarConfig& cfg, const detector::DetectionModel* model) {
    require(contaminated.rows() == clean.prices.rows() && contaminated.cols() == clean.prices.cols(),
            "contaminated panel shape differs from the clean panel");
    require(labels.rows() == contaminated.rows() && labels.cols() == contaminated.cols(),
            "label matrix shape differs from the panel");
    require(clean.params.size() == clean.n_series(), "true parameters are needed for the theoretical VaR");
    Vector mu(static_cast<Eigen::Index>(clean.n_series()));
    Vector sigma(mu.size());
    for (std::size_t i = 0; i < clean.params.size(); ++i) {
        mu[static_cast<Eigen::Index>(i)] = clean.params[i].mu;
        sigma[static_cast<Eigen::Index>(i)] = clean.params[i].sigma;
    }
    VarRun run;
    const auto theo = riskmetrics::theoretical_params(mu, sigma, clean.correlation, clean.dt, cfg.horizon);
    run.theo = riskmetrics::portfolio_var(theo, weights, cfg.alpha, "theo", cfg.horizon);

    Matrix loc_true = contaminated;
    Matrix loc_pred = contaminated;
    for (Eigen::Index i = 0; i < contaminated.rows(); ++i) {
        const Vector row = contaminated.row(i).transpose();
        const auto truth = flagged_stamps(labels, i);
        run.n_true += truth.size();
        loc_true.row(i) = impute_series(row, truth, detector::ImputeMethod::BackwardFill).transpose();
        if (model != nullptr) {
            const auto pred = predict_stamps(*model, row, cfg.max_iter);
            run.n_predicted += pred.size();
            for (auto t : pred) {
                run.n_hit += static_cast<std::size_t>(labels(i, static_cast<Eigen::Index>(t)));
            }
            loc_pred.row(i) = impute_series(row, pred, detector::ImputeMethod::BackwardFill).transpose();
        }
    }
    run.clean = panel_var(clean.prices, weights, cfg, "clean");
    run.anom = panel_var(contaminated, weights, cfg, "anom");
    run.loc_true = panel_var(loc_true, weights, cfg, "loc_true");
    run.loc_pred = panel_var(loc_pred, weights, cfg, "loc_pred");
    run.err_clean = riskmetrics::var_errors(run.theo, run.clean);
    run.err_anom = riskmetrics::var_errors(run.theo, run.anom);
    run.err_loc_true = riskmetrics::var_errors(run.theo, run.loc_true);
    run.err_loc_pred = riskmetrics::var_errors(run.theo, run.loc_pred);
    return run;
}

/// One simulated run of compare_var with an equal-weight portfolio.
inline VarRun run_var(const VarConfig& cfg, const detector::DetectionModel& model) {
    auto diffusion = cfg.diffusion;
    diffusion.seed = mix_seed(cfg.seed, kDiffusion);
    const auto clean = simgen::simulate_gbm(diffusion);
    const auto cont = simgen::contaminate(clean, {cfg.n_anomalies, cfg.rho, mix_seed(cfg.seed, kTestShocks)});
    const Vector weights = Vector::Ones(static_cast<Eigen::Index>(clean.n_series()));
    return compare_var(clean, cont.panel.prices, cont.labels, weights, cfg, &model);
}

}  // namespace pcann::experiment
