// pcann: command-line front-end.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcann/calibration.hpp"
#include "pcann/core.hpp"
#include "pcann/detector.hpp"
#include "pcann/evaluation.hpp"
#include "pcann/experiment.hpp"
#include "pcann/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pcann;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::string config;
    std::string out_dir = ".";
    bool quiet = false;

    fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }

    void log(const std::string& msg) const {
        if (!quiet) {
            std::cerr << msg << '\n';
        }
    }
};

struct SimOptions {
    std::size_t n_stocks = 20;
    std::size_t n_steps = 1500;
    double dt = 1.0 / 252.0;
    double drift_lo = 0.01;
    double drift_hi = 0.2;
    double vol_lo = 0.01;
    double vol_hi = 0.1;
    double s0_mean = 100.0;
    double s0_std = 1.0;
    double correlation = 0.5;
    std::size_t split = 1000;
    std::size_t train_anom = 4;
    std::size_t test_anom = 2;
    double rho = 0.04;
    std::size_t window = 206;
    double test_rate = 0.16;

    simgen::DiffusionConfig diffusion() const {
        simgen::DiffusionConfig d;
        d.n_stocks = n_stocks;
        d.n_steps = n_steps;
        d.dt = dt;
        d.drift_range = {drift_lo, drift_hi};
        d.vol_range = {vol_lo, vol_hi};
        d.s0_mean = s0_mean;
        d.s0_std = s0_std;
        d.correlation.constant = correlation;
        return d;
    }
};

struct TrainOptions {
    std::size_t k = 40;
    double eta = 1e-3;
    std::size_t iters = 2000;
    double lr = 1e-3;
    std::vector<std::size_t> hidden = {64, 32};
    double temperature_scale = 0.05;
    double anneal = 0.5;
    std::optional<double> bandwidth;

    scorer::TrainConfig config(std::uint64_t seed) const {
        scorer::TrainConfig c;
        c.learning_rate = lr;
        c.max_iters = iters;
        c.seed = mix_seed(seed, 6);
        c.hidden = hidden;
        c.bandwidth = bandwidth;
        c.temperature_scale = temperature_scale;
        c.anneal_factor = anneal;
        return c;
    }
};

experiment::PipelineConfig pipeline_config(const SimOptions& s, const TrainOptions& t, std::uint64_t seed) {
    experiment::PipelineConfig cfg;
    cfg.diffusion = s.diffusion();
    cfg.split = s.split;
    cfg.train_anomalies = s.train_anom;
    cfg.test_anomalies = s.test_anom;
    cfg.rho = s.rho;
    cfg.window = s.window;
    cfg.test_rate = s.test_rate;
    cfg.k = t.k;
    cfg.eta = t.eta;
    cfg.train = t.config(seed);
    cfg.reseed(seed);
    return cfg;
}

void add_sim_options(CLI::App* app, SimOptions& o) {
    app->add_option("--n-stocks", o.n_stocks, "number of series")->capture_default_str();
    app->add_option("--n-steps", o.n_steps, "time steps per series")->capture_default_str();
    app->add_option("--dt", o.dt, "step length in years")->capture_default_str();
    app->add_option("--drift-lo", o.drift_lo, "lower bound of the drift range")->capture_default_str();
    app->add_option("--drift-hi", o.drift_hi, "upper bound of the drift range")->capture_default_str();
    app->add_option("--vol-lo", o.vol_lo, "lower bound of the volatility range")->capture_default_str();
    app->add_option("--vol-hi", o.vol_hi, "upper bound of the volatility range")->capture_default_str();
    app->add_option("--s0-mean", o.s0_mean, "mean initial price")->capture_default_str();
    app->add_option("--s0-std", o.s0_std, "std of the initial price")->capture_default_str();
    app->add_option("--correlation", o.correlation, "constant pairwise correlation")->capture_default_str();
    app->add_option("--split", o.split, "first test time step")->capture_default_str();
    app->add_option("--train-anom", o.train_anom, "anomalies per series in the train part")->capture_default_str();
    app->add_option("--test-anom", o.test_anom, "anomalies per series in the test part")->capture_default_str();
    app->add_option("--rho", o.rho, "shock scale")->capture_default_str();
    app->add_option("--window", o.window, "window width p")->capture_default_str();
    app->add_option("--test-rate", o.test_rate, "contaminated share of the test rows")->capture_default_str();
}

void add_train_options(CLI::App* app, TrainOptions& o) {
    app->add_option("--k", o.k, "latent dimension")->capture_default_str();
    app->add_option("--eta", o.eta, "KDE intersection threshold of the naive detector")->capture_default_str();
    app->add_option("--iters", o.iters, "training iterations")->capture_default_str();
    app->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--hidden", o.hidden, "hidden layer widths")->delimiter(',')->capture_default_str();
    app->add_option("--temperature-scale", o.temperature_scale, "initial temperature / sd(initial scores)")
        ->capture_default_str();
    app->add_option("--anneal", o.anneal, "temperature factor per quarter of training")->capture_default_str();
    app->add_option("--bandwidth", o.bandwidth, "fixed KDE bandwidth (default: Silverman)");
}

json metrics_json(const evaluation::MetricsReport& m) {
    return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
            {"tp", m.tp},             {"fp", m.fp},               {"tn", m.tn},         {"fn", m.fn}};
}

json optional_metrics(const std::optional<evaluation::MetricsReport>& m) {
    return m ? metrics_json(*m) : json(nullptr);
}

void write_json(const fs::path& path, const json& j) {
    auto out = io::open_out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

template <class Row>
void write_csv(const fs::path& path, const std::string& header, const std::vector<Row>& rows) {
    auto out = io::open_out(path);
    out << header << '\n';
    for (const auto& r : rows) {
        out << r << '\n';
    }
}

detector::DetectionModel load_model(const std::string& pca_path, const std::string& net_path) {
    detector::DetectionModel model{io::read_pca(pca_path), io::read_network(net_path)};
    model.validate();
    return model;
}

// ---- simulate --------------------------------------------------------------

void cmd_simulate(const Global& g, const SimOptions& o) {
    const auto cfg = pipeline_config(o, TrainOptions{}, g.seed);
    const auto d = experiment::build_dataset(cfg);
    const auto n = d.train.clean.prices.rows();
    const auto t_tr = d.train.clean.prices.cols();
    const auto t_te = d.test.clean.prices.cols();
    Matrix clean(n, t_tr + t_te);
    Matrix cont(n, t_tr + t_te);
    LabelMatrix y(n, t_tr + t_te);
    clean << d.train.clean.prices, d.test.clean.prices;
    cont << d.train.contaminated.panel.prices, d.test.contaminated.panel.prices;
    y << d.train.contaminated.labels, d.test.contaminated.labels;
    io::write_panel(g.out("clean.csv"), clean);
    io::write_panel(g.out("contaminated.csv"), cont);
    io::write_panel(g.out("Y.csv"), y);
    io::write_params(g.out("params.csv"), d.train.clean.params);
    io::write_matrix(g.out("correlation.csv"), d.train.clean.correlation);
    g.log("simulated " + std::to_string(n) + " x " + std::to_string(clean.cols()) + " panel, " +
          std::to_string(y.sum()) + " anomalies");
}

// ---- augment ---------------------------------------------------------------

struct AugmentOptions {
    std::string panel;
    std::string labels;
    std::string mode = "train";
    std::string columns;
    std::size_t window = 206;
    double rate = 0.16;
    std::string name;
};

std::pair<Eigen::Index, Eigen::Index> parse_range(const std::string& spec, Eigen::Index t_len) {
    if (spec.empty()) {
        return {0, t_len};
    }
    const auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw ValidationError("--columns expects 'begin:end', got '" + spec + "'");
    }
    const auto a = spec.substr(0, colon);
    const auto b = spec.substr(colon + 1);
    const Eigen::Index lo = a.empty() ? 0 : io::parse_int(a, "--columns");
    const Eigen::Index hi = b.empty() ? t_len : io::parse_int(b, "--columns");
    require(0 <= lo && lo < hi && hi <= t_len, "--columns range is outside the panel");
    return {lo, hi};
}

void cmd_augment(const Global& g, const AugmentOptions& o) {
    const Matrix prices = io::read_panel(o.panel);
    const LabelMatrix y = io::read_label_panel(o.labels);
    require(prices.rows() == y.rows() && prices.cols() == y.cols(), "panel and label matrix shapes differ");
    simgen::SelectionMode mode;
    std::uint64_t salt;
    if (o.mode == "train") {
        mode = simgen::SelectionMode::Train;
        salt = experiment::kTrainSelect;
    } else if (o.mode == "test") {
        mode = simgen::SelectionMode::Test;
        salt = experiment::kTestSelect;
    } else {
        throw ValidationError("--mode must be 'train' or 'test', got '" + o.mode + "'");
    }
    const auto [lo, hi] = parse_range(o.columns, prices.cols());
    const Matrix part = prices.middleCols(lo, hi - lo);
    const LabelMatrix ypart = y.middleCols(lo, hi - lo);
    const auto slided = simgen::slide(part, ypart, o.window);
    const auto keep = simgen::select_rows(slided.labels, mode, o.rate, mix_seed(g.seed, salt));
    const auto rows = simgen::build_labeled_panel(slided, keep);
    const std::string name = o.name.empty() ? o.mode : o.name;
    io::write_panel(g.out(name + "_windows.csv"), rows.windows);
    io::write_labels(g.out(name + "_labels.csv"), rows.ident, rows.loc);
    std::vector<std::string> prov;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        prov.push_back(std::to_string(r) + "," + std::to_string(rows.provenance[r].series) + "," +
                       std::to_string(rows.provenance[r].offset + static_cast<std::size_t>(lo)));
    }
    write_csv(g.out(name + "_provenance.csv"), "row_id,series_id,offset", prov);
    g.log(std::to_string(rows.rows()) + " windows, " + std::to_string(rows.n_contaminated()) + " contaminated");
}

// ---- fit -------------------------------------------------------------------

struct FitOptions {
    std::string windows;
    std::string labels;
};

void cmd_fit(const Global& g, const FitOptions& o, const TrainOptions& t) {
    const Matrix x = io::read_panel(o.windows);
    const auto lab = io::read_labels(o.labels);
    require(static_cast<std::size_t>(x.rows()) == lab.ident.size(), "window and label row counts differ");
    const auto pca = pcafeat::fit_pca(x, t.k);
    const Matrix eps = pcafeat::reconstruction_errors(pca, x);
    const auto naive = scorer::naive_fit(eps, lab.ident, t.eta);
    const auto cfg = t.config(g.seed);
    const std::size_t every = std::max<std::size_t>(1, cfg.max_iters / 10);
    const auto result = scorer::train(eps, lab.ident, cfg, [&](const scorer::TrainLogEntry& e) {
        if (e.iter % every == 0) {
            g.log("iter " + std::to_string(e.iter) + " loss " + io::format_double(e.terms.total()));
        }
    });
    io::write_pca(g.out("pca.txt"), pca);
    io::write_network(g.out("net.txt"), result.best);
    io::write_train_log(g.out("train_log.csv"), result.log);

    const Vector scores = result.best.forward(eps);
    const auto pred = scorer::hard_labels(scores, result.best.cutoff);
    const auto naive_pred = scorer::hard_labels(scorer::naive_scores(eps), naive.cutoff.value);
    json j;
    j["k"] = pca.k();
    j["p"] = pca.p();
    j["rows"] = x.rows();
    j["contaminated"] = std::count(lab.ident.begin(), lab.ident.end(), 1);
    j["best_iter"] = result.best_iter;
    j["best_loss"] = result.best_loss;
    j["cutoff"] = result.best.cutoff;
    j["temperature"] = result.best.temperature;
    j["train"] = metrics_json(evaluation::classification_metrics(lab.ident, pred));
    j["naive"] = {{"cutoff", naive.cutoff.value},
                  {"auc_u", naive.auc_u()},
                  {"auc_c", naive.auc_c()},
                  {"metrics", metrics_json(evaluation::classification_metrics(lab.ident, naive_pred))}};
    write_json(g.out("fit.json"), j);
    g.log("best loss " + io::format_double(result.best_loss) + " at iteration " + std::to_string(result.best_iter));
}

// ---- detect ----------------------------------------------------------------

struct DetectOptions {
    std::string windows;
    std::string pca;
    std::string net;
    std::string impute = "bf";
    std::size_t max_iter = 5;
    bool cleaned = false;
};

void cmd_detect(const Global& g, const DetectOptions& o) {
    const auto method = detector::parse_impute_method(o.impute);
    const auto model = load_model(o.pca, o.net);
    const Matrix x = io::read_panel(o.windows);
    const auto reports = detector::detect_all(model, x, method, o.max_iter);
    io::write_detect_report(g.out("report.csv"), reports);
    if (o.cleaned) {
        Matrix cleaned(x.rows(), x.cols());
        for (std::size_t r = 0; r < reports.size(); ++r) {
            cleaned.row(static_cast<Eigen::Index>(r)) = reports[r].imputed.transpose();
        }
        io::write_panel(g.out("cleaned.csv"), cleaned);
    }
    std::size_t flagged = 0;
    for (const auto& r : reports) {
        flagged += static_cast<std::size_t>(r.predicted);
    }
    g.log(std::to_string(flagged) + " of " + std::to_string(reports.size()) + " rows flagged");
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOptions {
    std::string windows;
    std::string labels;
    std::string pca;
    std::string net;
    std::size_t prc_grid = 512;
    bool adf = true;
};

void cmd_evaluate(const Global& g, const EvaluateOptions& o) {
    const auto model = load_model(o.pca, o.net);
    simgen::LabeledPanel rows;
    rows.windows = io::read_panel(o.windows);
    auto lab = io::read_labels(o.labels);
    require(rows.rows() == lab.ident.size(), "window and label row counts differ");
    rows.ident = std::move(lab.ident);
    rows.loc = std::move(lab.loc);
    model.pca.check_width(rows.windows);

    const Matrix eps = pcafeat::reconstruction_errors(model.pca, rows.windows);
    const Vector scores = model.net.forward(eps);
    const auto pred = scorer::hard_labels(scores, model.net.cutoff);
    const auto ident = evaluation::classification_metrics(rows.ident, pred);
    const auto loc = experiment::evaluate_localization(rows, eps, pred);
    const auto s = to_std(scores);
    const auto prc = evaluation::precision_recall_curve(s, rows.ident, o.prc_grid);
    const auto shocks = evaluation::default_cutoff_shocks();
    const auto robust = evaluation::cutoff_robustness(s, rows.ident, model.net.cutoff, shocks);
    const auto kde = scorer::fit_intersection(scores, rows.ident, 1e-3);

    json j;
    j["rows"] = rows.rows();
    j["cutoff"] = model.net.cutoff;
    j["identification"] = metrics_json(ident);
    j["localization"] = {{"rows", loc.n_rows},
                         {"non_extreme_rows", loc.n_non_extreme},
                         {"all", optional_metrics(loc.all)},
                         {"non_extreme", optional_metrics(loc.non_extreme)},
                         {"dummy_non_extreme", optional_metrics(loc.dummy_non_extreme)}};
    j["auc_u"] = kde.kde_u.auc_above(model.net.cutoff);
    j["auc_c"] = kde.kde_c.auc_below(model.net.cutoff);
    j["prc_auc"] = prc.auc;

    std::vector<std::string> prc_rows;
    for (const auto& pt : prc.points) {
        prc_rows.push_back(io::format_double(pt.threshold) + "," + io::format_double(pt.recall) + "," +
                           io::format_double(pt.precision));
    }
    write_csv(g.out("prc.csv"), "threshold,recall,precision", prc_rows);

    std::vector<std::string> rob_rows;
    for (const auto& r : robust) {
        rob_rows.push_back(io::format_double(r.shock) + "," + io::format_double(r.metrics.accuracy) + "," +
                           io::format_double(r.metrics.precision) + "," + io::format_double(r.metrics.recall) + "," +
                           io::format_double(r.metrics.f1) + "," + std::to_string(r.predicted_positive));
    }
    write_csv(g.out("robustness.csv"), "shock,accuracy,precision,recall,f1,predicted_positive", rob_rows);

    if (o.adf) {
        std::vector<std::string> adf_rows;
        std::vector<double> stat, pval;
        std::size_t rejected = 0;
        for (Eigen::Index r = 0; r < eps.rows(); ++r) {
            const Vector e = eps.row(r).transpose();
            const auto res = evaluation::adf_test(to_std(e));
            stat.push_back(res.statistic);
            pval.push_back(res.p_value);
            rejected += static_cast<std::size_t>(res.reject_5);
            adf_rows.push_back(std::to_string(r) + "," + io::format_double(res.statistic) + "," +
                               std::to_string(res.lags) + "," + io::format_double(res.p_value) + "," +
                               (res.reject_5 ? "1" : "0"));
        }
        write_csv(g.out("adf.csv"), "row_id,statistic,lags,p_value,reject_5", adf_rows);
        j["adf"] = {{"rows", eps.rows()},
                    {"reject_share", static_cast<double>(rejected) / static_cast<double>(eps.rows())},
                    {"statistic_mean", stats::mean(stat)},
                    {"statistic_max", *std::max_element(stat.begin(), stat.end())},
                    {"p_value_max", *std::max_element(pval.begin(), pval.end())}};
    }
    write_json(g.out("metrics.json"), j);
    g.log("F1 " + io::format_double(ident.f1) + ", PRC AUC " + io::format_double(prc.auc));
}

// ---- var -------------------------------------------------------------------

struct VarOptions {
    std::string clean;
    std::string panel;
    std::string y;
    std::string params;
    std::string correlation;
    std::string weights;
    std::string pca;
    std::string net;
    double alpha = 0.99;
    std::size_t h = 1;
    std::size_t max_iter = 5;
    std::size_t runs = 50;
    std::size_t n_anom = 5;
};

json var_json(const experiment::VarRun& r) {
    auto est = [](const riskmetrics::VarEstimate& e) {
        return json{{"value", e.value}, {"mu_p", e.mu_p}, {"sigma_p", e.sigma_p}};
    };
    auto err = [](const riskmetrics::VarErrors& e) { return json{{"absolute", e.absolute}, {"relative", e.relative}}; };
    return {{"var",
             {{"theo", est(r.theo)},
              {"clean", est(r.clean)},
              {"anom", est(r.anom)},
              {"loc_true", est(r.loc_true)},
              {"loc_pred", est(r.loc_pred)}}},
            {"errors",
             {{"clean", err(r.err_clean)},
              {"anom", err(r.err_anom)},
              {"loc_true", err(r.err_loc_true)},
              {"loc_pred", err(r.err_loc_pred)}}},
            {"n_true", r.n_true},
            {"n_predicted", r.n_predicted},
            {"n_hit", r.n_hit}};
}

Vector read_weights(const std::string& path, std::size_t n) {
    if (path.empty()) {
        return Vector::Ones(static_cast<Eigen::Index>(n));
    }
    const Eigen::MatrixXd m = io::read_matrix(path);
    require(m.size() == static_cast<Eigen::Index>(n), "weights file must hold one weight per series");
    return Eigen::Map<const Vector>(m.data(), m.size());
}

void cmd_var(const Global& g, const VarOptions& o, const SimOptions& sim) {
    experiment::VarConfig cfg;
    cfg.diffusion = sim.diffusion();
    cfg.n_anomalies = o.n_anom;
    cfg.rho = sim.rho;
    cfg.alpha = o.alpha;
    cfg.horizon = o.h;
    cfg.max_iter = o.max_iter;

    std::optional<detector::DetectionModel> model;
    if (!o.pca.empty() || !o.net.empty()) {
        require(!o.pca.empty() && !o.net.empty(), "--pca and --net must be given together");
        model = load_model(o.pca, o.net);
    }

    json j;
    j["alpha"] = o.alpha;
    j["h"] = o.h;
    if (!o.panel.empty()) {
        require(!o.clean.empty() && !o.y.empty() && !o.params.empty() && !o.correlation.empty(),
                "file mode needs --clean, --panel, --y, --params and --corr-file");
        simgen::PricePanel clean;
        clean.prices = io::read_panel(o.clean);
        clean.params = io::read_params(o.params);
        clean.correlation = io::read_matrix(o.correlation);
        clean.dt = sim.dt;
        const Matrix cont = io::read_panel(o.panel);
        const LabelMatrix y = io::read_label_panel(o.y);
        const Vector w = read_weights(o.weights, clean.n_series());
        const auto run = experiment::compare_var(clean, cont, y, w, cfg, model ? &*model : nullptr);
        j["runs"] = json::array({var_json(run)});
    } else {
        require(model.has_value(), "simulation mode needs --pca and --net");
        require(o.runs >= 1, "--runs must be >= 1");
        j["n_anom"] = o.n_anom;
        j["runs"] = json::array();
        std::map<std::string, std::vector<double>> rel;
        for (std::size_t r = 0; r < o.runs; ++r) {
            cfg.seed = g.seed + r;
            const auto run = experiment::run_var(cfg, *model);
            j["runs"].push_back(var_json(run));
            rel["clean"].push_back(run.err_clean.relative);
            rel["anom"].push_back(run.err_anom.relative);
            rel["loc_true"].push_back(run.err_loc_true.relative);
            rel["loc_pred"].push_back(run.err_loc_pred.relative);
            g.log("run " + std::to_string(r + 1) + "/" + std::to_string(o.runs));
        }
        json mean;
        for (const auto& [k, v] : rel) {
            mean[k] = stats::mean(v);
        }
        j["mean_relative_error"] = mean;
    }
    write_json(g.out("var.json"), j);
}

// ---- bench -----------------------------------------------------------------

struct BenchOptions {
    std::size_t runs = 10;
};

void cmd_bench(const Global& g, const BenchOptions& b, const SimOptions& sim, const TrainOptions& t) {
    require(b.runs >= 2, "--runs must be >= 2");
    std::vector<std::uint64_t> seeds;
    for (std::size_t r = 0; r < b.runs; ++r) {
        seeds.push_back(g.seed + r);
    }
    std::vector<std::string> run_rows;
    std::vector<std::string> bucket_rows;
    std::vector<std::string> keys;
    const auto summary = evaluation::multirun(
        [&](std::uint64_t seed) {
            const auto result = experiment::run_pipeline(pipeline_config(sim, t, seed));
            auto m = experiment::run_metrics(result);
            if (keys.empty()) {
                for (const auto& [k, v] : m) {
                    keys.push_back(k);
                }
            }
            std::string row = std::to_string(seed);
            for (const auto& k : keys) {
                const auto it = m.find(k);
                row += "," + (it == m.end() ? std::string() : io::format_double(it->second));
            }
            run_rows.push_back(row);
            const auto buckets = experiment::identification_buckets(result.data.test, result.test);
            for (std::size_t q = 0; q < buckets.size(); ++q) {
                const auto& bk = buckets[q];
                bucket_rows.push_back(std::to_string(seed) + "," + std::to_string(q + 1) + "," +
                                      io::format_double(bk.lo) + "," + io::format_double(bk.hi) + "," +
                                      std::to_string(bk.count) + "," +
                                      (bk.ratio ? io::format_double(*bk.ratio) : std::string()));
                if (bk.ratio) {
                    m["test_bucket_" + std::to_string(q + 1) + "_ratio"] = *bk.ratio;
                }
            }
            g.log("seed " + std::to_string(seed) + ": train F1 " + io::format_double(m["train_f1"]) + ", test F1 " +
                  io::format_double(m["test_f1"]));
            return m;
        },
        seeds);

    std::string header = "seed";
    for (const auto& k : keys) {
        header += "," + k;
    }
    write_csv(g.out("bench_runs.csv"), header, run_rows);
    write_csv(g.out("buckets.csv"), "seed,bucket,lo,hi,count,ratio", bucket_rows);
    json j;
    j["runs"] = b.runs;
    j["first_seed"] = g.seed;
    for (const auto& [k, s] : summary) {
        j["metrics"][k] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    }
    write_json(g.out("bench.json"), j);
}

// ---- config file -----------------------------------------------------------

// Reads `key = value` lines; '#' and ';' start comments. Keys may use '_' or '-'.
std::vector<std::string> config_args(const std::string& path) {
    std::vector<std::string> out;
    const auto lines = io::read_lines(path);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        std::string line = lines[n];
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError(path + ":" + std::to_string(n + 1) + ": expected 'key = value'");
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r\"");
            const auto b = s.find_last_not_of(" \t\r\"");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty() || key == "config") {
            throw IoError(path + ":" + std::to_string(n + 1) + ": invalid key");
        }
        out.push_back("--" + key + "=" + value);
    }
    return out;
}

// Rewrites argv as: program, subcommand, config entries, remaining arguments.
// Options keep their last value, so command-line flags override the file.
std::vector<std::string> expand_config(int argc, char** argv, const std::vector<std::string>& commands) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        }
    }
    if (config.empty()) {
        return args;
    }
    auto cmd = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return std::find(commands.begin(), commands.end(), a) != commands.end();
    });
    if (cmd == args.end()) {
        return args;
    }
    const std::string name = *cmd;
    args.erase(cmd);
    std::vector<std::string> out{name};
    const auto extra = config_args(config);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin(), args.end());
    return out;
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const ValidationError*>(&e) != nullptr) {
        return 3;
    }
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
        return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PCA reconstruction-error anomaly detection for price panels", "pcann"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Global g;
    app.add_option("--seed", g.seed, "seed of every random stage")->capture_default_str();
    app.add_option("--config", g.config, "flat 'key = value' file; command-line flags take precedence");
    app.add_option("--out-dir", g.out_dir, "existing directory for output files")->capture_default_str();
    app.add_flag("--quiet", g.quiet, "suppress progress messages");

    SimOptions sim;
    TrainOptions train;

    auto* simulate = app.add_subcommand("simulate", "simulate and contaminate a price panel");
    add_sim_options(simulate, sim);

    AugmentOptions aug;
    auto* augment = app.add_subcommand("augment", "slide windows over a panel and select labelled rows");
    augment->add_option("--panel", aug.panel, "contaminated panel CSV")->required();
    augment->add_option("--labels", aug.labels, "value-label panel CSV (Y)")->required();
    augment->add_option("--mode", aug.mode, "train (balanced) or test (fixed contaminated rate)")
        ->capture_default_str();
    augment->add_option("--columns", aug.columns, "0-based half-open column range 'begin:end' (default: all)");
    augment->add_option("--window", aug.window, "window width p")->capture_default_str();
    augment->add_option("--rate", aug.rate, "contaminated share in test mode")->capture_default_str();
    augment->add_option("--name", aug.name, "output file prefix (default: the mode)");

    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "fit the PCA model and the scoring network");
    fit->add_option("--windows", fit_opt.windows, "window panel CSV")->required();
    fit->add_option("--labels", fit_opt.labels, "row label CSV")->required();
    add_train_options(fit, train);

    DetectOptions det;
    auto* detect = app.add_subcommand("detect", "identify, localize and impute anomalies");
    detect->add_option("--windows", det.windows, "window panel CSV")->required();
    detect->add_option("--pca", det.pca, "PCA model file")->required();
    detect->add_option("--net", det.net, "network model file")->required();
    detect->add_option("--impute", det.impute, "bf, li or pca")->capture_default_str();
    detect->add_option("--max-iter", det.max_iter, "detection rounds per row")->capture_default_str();
    detect->add_flag("--cleaned", det.cleaned, "also write cleaned.csv");

    EvaluateOptions ev;
    auto* evaluate = app.add_subcommand("evaluate", "metrics, PRC, cut-off robustness and ADF summary");
    evaluate->add_option("--windows", ev.windows, "window panel CSV")->required();
    evaluate->add_option("--labels", ev.labels, "row label CSV")->required();
    evaluate->add_option("--pca", ev.pca, "PCA model file")->required();
    evaluate->add_option("--net", ev.net, "network model file")->required();
    evaluate->add_option("--prc-grid", ev.prc_grid, "maximum PRC thresholds")->capture_default_str();
    evaluate->add_option("--adf", ev.adf, "run the ADF test on every reconstruction-error row")
        ->capture_default_str();

    VarOptions vo;
    auto* var = app.add_subcommand("var", "portfolio VaR before and after imputation");
    var->set_help_flag("--help", "print this help message and exit");  // frees --h
    var->add_option("--clean", vo.clean, "clean panel CSV (file mode)");
    var->add_option("--panel", vo.panel, "contaminated panel CSV; selects file mode");
    var->add_option("--y", vo.y, "value-label panel CSV (file mode)");
    var->add_option("--params", vo.params, "true parameters CSV (file mode)");
    var->add_option("--corr-file", vo.correlation, "true correlation matrix CSV (file mode)");
    var->add_option("--weights", vo.weights, "portfolio weights CSV (default: all ones)");
    var->add_option("--pca", vo.pca, "PCA model file");
    var->add_option("--net", vo.net, "network model file");
    var->add_option("--alpha", vo.alpha, "VaR level")->capture_default_str();
    var->add_option("--h", vo.h, "return horizon in steps")->capture_default_str();
    var->add_option("--max-iter", vo.max_iter, "detection rounds per window")->capture_default_str();
    var->add_option("--runs", vo.runs, "simulated runs (simulation mode)")->capture_default_str();
    var->add_option("--n-anom", vo.n_anom, "anomalies per series (simulation mode)")->capture_default_str();
    add_sim_options(var, sim);

    BenchOptions bo;
    auto* bench = app.add_subcommand("bench", "multi-seed simulate, fit and evaluate");
    bench->add_option("--runs", bo.runs, "number of seeds, starting at --seed")->capture_default_str();
    add_sim_options(bench, sim);
    add_train_options(bench, train);

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv, {"simulate", "augment", "fit", "detect", "evaluate", "var", "bench"});
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }

    try {
        if (!fs::is_directory(g.out_dir)) {
            throw IoError("output directory '" + g.out_dir + "' does not exist");
        }
        if (*simulate) {
            cmd_simulate(g, sim);
        } else if (*augment) {
            cmd_augment(g, aug);
        } else if (*fit) {
            cmd_fit(g, fit_opt, train);
        } else if (*detect) {
            cmd_detect(g, det);
        } else if (*evaluate) {
            cmd_evaluate(g, ev);
        } else if (*var) {
            cmd_var(g, vo, sim);
        } else if (*bench) {
            cmd_bench(g, bo, sim, train);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
    return 0;
}
