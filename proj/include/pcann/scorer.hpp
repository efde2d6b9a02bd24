#pragma once

// Anomaly scorers. The naive scorer is the l2 norm of the reconstruction
// errors with a KDE-intersection cut-off; the learned scorer is a ReLU
// feedforward network trained jointly with its cut-off under
// BCE + AUC^u + AUC^c.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "core.hpp"
#include "density.hpp"
#include "stats.hpp"

namespace pcann::scorer {

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;
};

/// Feedforward scorer F with hidden ReLU layers and an affine output, plus
/// the learned cut-off s and the logistic temperature used while training.
struct ScoringNetwork {
    std::vector<DenseLayer> layers;
    double cutoff = 0.0;
    double temperature = 1.0;

    std::vector<std::size_t> layer_dims() const {
        std::vector<std::size_t> dims;
        if (layers.empty()) {
            return dims;
        }
        dims.push_back(static_cast<std::size_t>(layers.front().weights.cols()));
        for (const auto& layer : layers) {
            dims.push_back(static_cast<std::size_t>(layer.weights.rows()));
        }
        return dims;
    }

    std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols()); }

    void validate() const {
        require(!layers.empty(), "network has no layers");
        require(temperature > 0.0, "network temperature must be > 0");
        require(std::isfinite(cutoff), "network cut-off must be finite");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            require(layer.bias.size() == layer.weights.rows(), "bias length differs from layer width");
            if (l > 0) {
                require(layer.weights.cols() == layers[l - 1].weights.rows(), "consecutive layer dims are incompatible");
            }
            require(layer.weights.allFinite() && layer.bias.allFinite(), "network parameters must be finite");
        }
        require(layers.back().weights.rows() == 1, "output layer must have a single unit");
    }

    void check_input(Eigen::Index width) const {
        if (static_cast<std::size_t>(width) != input_dim()) {
            std::ostringstream msg;
            msg << "network expects inputs of length " << input_dim() << ", got " << width;
            throw ValidationError(msg.str());
        }
    }

    /// Scores for every row of `eps`.
    Vector forward(const Matrix& eps) const {
        check_input(eps.cols());
        Matrix h = eps;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Matrix z = h * layers[l].weights.transpose();
            z.rowwise() += layers[l].bias.transpose();
            h = (l + 1 < layers.size()) ? Matrix(z.cwiseMax(0.0)) : z;
        }
        return h.col(0);
    }

    double forward_row(const Vector& eps_row) const {
        Matrix x = eps_row.transpose();
        return forward(x)[0];
    }
};

/// Weights and biases uniform in +-sqrt(6)/sqrt(fan_in), the variance-preserving
/// bound for ReLU layers; cut-off 0, temperature 1.
inline ScoringNetwork make_network(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    require(dims.size() >= 2, "network needs an input and an output dimension");
    require(dims.back() == 1, "network output dimension must be 1");
    ScoringNetwork net;
    Rng rng = make_rng(seed, 0);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        require(dims[l] >= 1 && dims[l + 1] >= 1, "layer widths must be >= 1");
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l]));
        std::uniform_real_distribution<double> init(-bound, bound);
        DenseLayer layer;
        layer.weights.resize(static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l]));
        layer.bias.resize(static_cast<Eigen::Index>(dims[l + 1]));
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
                layer.weights(i, j) = init(rng);
            }
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = init(rng);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline double logistic(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Relaxed labels logistic((score - s) / tau).
inline Vector smooth_labels(const ScoringNetwork& net, const Vector& scores) {
    require(net.temperature > 0.0, "temperature must be > 0");
    Vector p(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        p[i] = logistic((scores[i] - net.cutoff) / net.temperature);
    }
    return p;
}

/// Hard labels 1{score > s}.
inline std::vector<int> hard_labels(const Vector& scores, double cutoff) {
    std::vector<int> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        out[static_cast<std::size_t>(i)] = scores[i] > cutoff ? 1 : 0;
    }
    return out;
}

struct LossTerms {
    double bce = 0.0;
    double auc_u = 0.0;
    double auc_c = 0.0;

    double total() const { return bce + auc_u + auc_c; }
};

inline constexpr double kProbabilityClip = 1e-7;

struct ScoreLoss {
    LossTerms terms;
    Vector d_scores;  // empty unless gradients were requested
    double d_cutoff = 0.0;
};

/// Loss as a function of the scores and the cut-off.
///
/// BCE uses the clipped logistic relaxation. The AUC terms are tail masses of
/// class-conditional Gaussian KDEs of the current scores, in closed form; when
/// no bandwidth override is given, the Silverman bandwidth of each class is
/// itself a function of the scores and is differentiated as well.
inline ScoreLoss score_loss(const Vector& scores, std::span<const int> labels, double cutoff, double temperature,
                            std::optional<double> bandwidth, bool with_gradient) {
    const auto n = static_cast<std::size_t>(scores.size());
    require(labels.size() == n, "label count differs from score count");
    require(temperature > 0.0, "temperature must be > 0");

    std::vector<std::size_t> idx_u;
    std::vector<std::size_t> idx_c;
    for (std::size_t i = 0; i < n; ++i) {
        require(labels[i] == 0 || labels[i] == 1, "identification labels must be 0 or 1");
        (labels[i] == 1 ? idx_c : idx_u).push_back(i);
    }
    if (idx_u.empty() || idx_c.empty()) {
        throw ValidationError("both classes required");
    }

    ScoreLoss out;
    if (with_gradient) {
        out.d_scores = Vector::Zero(scores.size());
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = logistic((scores[static_cast<Eigen::Index>(i)] - cutoff) / temperature);
        const double clipped = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
        out.terms.bce -= inv_n * (labels[i] == 1 ? std::log(clipped) : std::log1p(-clipped));
        if (with_gradient && clipped == p) {
            out.d_scores[static_cast<Eigen::Index>(i)] += inv_n * (p - labels[i]) / temperature;
        }
    }
    if (with_gradient) {
        out.d_cutoff = -out.d_scores.sum();
    }

    // upper == true: AUC^u = mean Q((s - x)/h); otherwise AUC^c = mean Phi((s - x)/h).
    auto tail_term = [&](const std::vector<std::size_t>& idx, bool upper) {
        std::vector<double> xs(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            xs[j] = scores[static_cast<Eigen::Index>(idx[j])];
        }
        density::BandwidthGradient bw;
        if (bandwidth) {
            bw.value = *bandwidth;
            bw.d_samples.assign(xs.size(), 0.0);
        } else {
            bw = density::silverman_bandwidth_gradient(xs);
        }
        const double h = bw.value;
        const double inv_m = 1.0 / static_cast<double>(xs.size());
        double value = 0.0;
        double d_h = 0.0;
        const double sign = upper ? 1.0 : -1.0;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const double z = (cutoff - xs[j]) / h;
            value += inv_m * (upper ? stats::normal_sf(z) : stats::normal_cdf(z));
            if (with_gradient) {
                const double phi = stats::normal_pdf(z);
                out.d_cutoff -= sign * inv_m * phi / h;
                out.d_scores[static_cast<Eigen::Index>(idx[j])] += sign * inv_m * phi / h;
                d_h += sign * inv_m * phi * z / h;
            }
        }
        if (with_gradient && d_h != 0.0) {
            for (std::size_t j = 0; j < xs.size(); ++j) {
                out.d_scores[static_cast<Eigen::Index>(idx[j])] += d_h * bw.d_samples[j];
            }
        }
        return value;
    };
    out.terms.auc_u = tail_term(idx_u, true);
    out.terms.auc_c = tail_term(idx_c, false);
    return out;
}

/// Same shape as the network's trainable parameters.
struct Gradient {
    std::vector<DenseLayer> layers;
    double cutoff = 0.0;
};

inline LossTerms loss(const ScoringNetwork& net, const Matrix& eps, std::span<const int> labels,
                      std::optional<double> bandwidth = std::nullopt) {
    return score_loss(net.forward(eps), labels, net.cutoff, net.temperature, bandwidth, false).terms;
}

struct LossAndGradient {
    LossTerms terms;
    Gradient gradient;
};

/// Exact gradient of the loss by back-propagation through the ReLU layers
/// (subgradient 0 at the kink).
inline LossAndGradient loss_gradient(const ScoringNetwork& net, const Matrix& eps, std::span<const int> labels,
                                     std::optional<double> bandwidth = std::nullopt) {
    net.check_input(eps.cols());
    const std::size_t n_layers = net.layers.size();
    std::vector<Matrix> inputs(n_layers);
    std::vector<Matrix> pre(n_layers);
    Matrix h = eps;
    for (std::size_t l = 0; l < n_layers; ++l) {
        inputs[l] = h;
        pre[l] = h * net.layers[l].weights.transpose();
        pre[l].rowwise() += net.layers[l].bias.transpose();
        if (l + 1 < n_layers) {
            h = pre[l].cwiseMax(0.0);
        }
    }
    const Vector scores = pre.back().col(0);
    ScoreLoss sl = score_loss(scores, labels, net.cutoff, net.temperature, bandwidth, true);

    LossAndGradient out;
    out.terms = sl.terms;
    out.gradient.cutoff = sl.d_cutoff;
    out.gradient.layers.resize(n_layers);
    Matrix upstream = sl.d_scores;  // n x 1
    for (std::size_t l = n_layers; l-- > 0;) {
        out.gradient.layers[l].weights = upstream.transpose() * inputs[l];
        out.gradient.layers[l].bias = upstream.colwise().sum().transpose();
        if (l > 0) {
            upstream = upstream * net.layers[l].weights;
            upstream.array() *= (pre[l - 1].array() > 0.0).cast<double>();
        }
    }
    return out;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_iters = 2000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden = {64, 32};
    std::optional<double> bandwidth;  // fixed KDE bandwidth; Silverman when empty
    double temperature_scale = 0.05;  // tau0 = scale * sd(initial scores)
    double anneal_factor = 0.5;       // tau *= factor every max_iters / 4 iterations
    bool scale_inputs = true;         // train on eps / rms(eps), folded back into W1 afterwards

    void validate() const {
        require(learning_rate > 0.0, "learning rate must be > 0");
        require(max_iters >= 1, "max_iters must be >= 1");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
        require(epsilon > 0.0, "Adam epsilon must be > 0");
        require(temperature_scale > 0.0, "temperature scale must be > 0");
        require(anneal_factor > 0.0 && anneal_factor <= 1.0, "anneal factor must lie in (0, 1]");
    }
};

struct TrainLogEntry {
    std::size_t iter = 0;
    LossTerms terms;
    double cutoff = 0.0;
    double temperature = 0.0;
};

struct TrainResult {
    ScoringNetwork best;   // lowest observed loss
    ScoringNetwork final;  // parameters after the last Adam step
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t best_iter = 0;
    std::vector<TrainLogEntry> log;
};

namespace detail {

struct AdamState {
    std::vector<DenseLayer> m;
    std::vector<DenseLayer> v;
    double m_cut = 0.0;
    double v_cut = 0.0;
    std::size_t step = 0;

    explicit AdamState(const ScoringNetwork& net) {
        for (const auto& layer : net.layers) {
            m.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()), Vector::Zero(layer.bias.size())});
            v.push_back(m.back());
        }
    }
};

template <class Param, class Grad>
void adam_update(Param& theta, const Grad& g, Param& m, Param& v, const TrainConfig& cfg, double c1, double c2) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    theta.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

inline void adam_step(ScoringNetwork& net, const Gradient& g, AdamState& st, const TrainConfig& cfg) {
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        adam_update(net.layers[l].weights, g.layers[l].weights, st.m[l].weights, st.v[l].weights, cfg, c1, c2);
        adam_update(net.layers[l].bias, g.layers[l].bias, st.m[l].bias, st.v[l].bias, cfg, c1, c2);
    }
    st.m_cut = cfg.beta1 * st.m_cut + (1.0 - cfg.beta1) * g.cutoff;
    st.v_cut = cfg.beta2 * st.v_cut + (1.0 - cfg.beta2) * g.cutoff * g.cutoff;
    net.cutoff -= cfg.learning_rate * (st.m_cut / c1) / (std::sqrt(st.v_cut / c2) + cfg.epsilon);
}

inline double median(const Vector& v) {
    std::vector<double> xs = to_std(v);
    std::sort(xs.begin(), xs.end());
    return stats::sorted_quantile(xs, 0.5);
}

}  // namespace detail

using TrainCallback = std::function<void(const TrainLogEntry&)>;

/// Full-batch Adam on BCE + AUC^u + AUC^c; returns the best-loss snapshot.
///
/// Initialization: seeded uniform weights, s0 = median of the initial scores,
/// tau0 = temperature_scale * sd(initial scores), halved every K/4 steps.
/// With scale_inputs, the features are divided by their RMS during training
/// and the factor is folded into the first layer of the returned networks.
inline TrainResult train(const Matrix& eps, std::span<const int> labels, const TrainConfig& cfg,
                         const TrainCallback& on_iter = {}) {
    cfg.validate();
    require(static_cast<std::size_t>(eps.rows()) == labels.size(), "feature rows differ from label count");
    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) {
        throw ValidationError("both classes required");
    }

    double input_scale = 1.0;
    if (cfg.scale_inputs && eps.size() > 0) {
        const double rms = std::sqrt(eps.squaredNorm() / static_cast<double>(eps.size()));
        if (rms > 0.0 && std::isfinite(rms)) {
            input_scale = rms;
        }
    }
    const Matrix x = eps / input_scale;

    std::vector<std::size_t> dims{static_cast<std::size_t>(eps.cols())};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(1);
    ScoringNetwork net = make_network(dims, cfg.seed);

    const Vector initial = net.forward(x);
    net.cutoff = detail::median(initial);
    const double sd = stats::sample_std(to_std(initial));
    const double tau0 = std::max(cfg.temperature_scale * sd, 1e-12);
    const std::size_t anneal_every = std::max<std::size_t>(1, cfg.max_iters / 4);

    TrainResult result;
    result.log.reserve(cfg.max_iters);
    detail::AdamState adam(net);
    for (std::size_t k = 0; k < cfg.max_iters; ++k) {
        net.temperature = tau0 * std::pow(cfg.anneal_factor, static_cast<double>(k / anneal_every));
        const LossAndGradient lg = loss_gradient(net, x, labels, cfg.bandwidth);
        const double total = lg.terms.total();
        if (!std::isfinite(total)) {
            std::ostringstream msg;
            msg << "training diverged at iteration " << k << ": loss=" << total << " (bce=" << lg.terms.bce
                << ", auc_u=" << lg.terms.auc_u << ", auc_c=" << lg.terms.auc_c << ", s=" << net.cutoff << ")";
            throw NumericalError(msg.str());
        }
        TrainLogEntry entry{k, lg.terms, net.cutoff, net.temperature};
        result.log.push_back(entry);
        if (on_iter) {
            on_iter(entry);
        }
        if (total < result.best_loss) {
            result.best_loss = total;
            result.best_iter = k;
            result.best = net;
        }
        detail::adam_step(net, lg.gradient, adam, cfg);
    }
    result.final = net;
    result.best.layers.front().weights /= input_scale;
    result.final.layers.front().weights /= input_scale;
    return result;
}

/// l2 norm of each reconstruction-error row.
inline Vector naive_scores(const Matrix& eps) {
    return eps.rowwise().norm();
}

struct NaiveModel {
    density::KdeModel kde_u;
    density::KdeModel kde_c;
    density::Cutoff cutoff;

    double auc_u() const { return kde_u.auc_above(cutoff.value); }
    double auc_c() const { return kde_c.auc_below(cutoff.value); }
};

/// Class-conditional KDEs of arbitrary scores with their intersection cut-off.
inline NaiveModel fit_intersection(const Vector& scores, std::span<const int> labels, double eta,
                                   std::size_t grid_size = 1024, std::optional<double> bandwidth = std::nullopt) {
    require(static_cast<std::size_t>(scores.size()) == labels.size(), "score count differs from label count");
    std::vector<double> su;
    std::vector<double> sc;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? sc : su).push_back(scores[static_cast<Eigen::Index>(i)]);
    }
    if (su.empty() || sc.empty()) {
        throw ValidationError("both classes required");
    }
    auto fu = density::fit_kde(su, bandwidth);
    auto fc = density::fit_kde(sc, bandwidth);
    const auto grid = density::union_grid(fu, fc, grid_size);
    const auto cut = density::intersection_cutoff(fu, fc, eta, grid);
    return {std::move(fu), std::move(fc), cut};
}

/// Naive detector: KDE-intersection cut-off on the l2 scores.
inline NaiveModel naive_fit(const Matrix& eps, std::span<const int> labels, double eta = 1e-3,
                            std::size_t grid_size = 1024) {
    return fit_intersection(naive_scores(eps), labels, eta, grid_size);
}

}  // namespace pcann::scorer
