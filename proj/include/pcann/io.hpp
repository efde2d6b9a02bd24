#pragma once

// Text formats: panel / label CSVs, PCA and network model files, reports.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "core.hpp"
#include "detector.hpp"
#include "pcafeat.hpp"
#include "scorer.hpp"
#include "simgen.hpp"

namespace pcann::io {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_exact(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError(where + ": cannot parse integer '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path() && !fs::is_directory(path.parent_path())) {
        throw IoError("output directory '" + path.parent_path().string() + "' does not exist");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
    auto in = open_in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

// ---- panels ---------------------------------------------------------------

/// `series_id,t_1,...,t_T` header, one row per series.
template <class Derived>
void write_panel(const fs::path& path, const Eigen::MatrixBase<Derived>& values) {
    auto out = open_out(path);
    out << "series_id";
    for (Eigen::Index t = 0; t < values.cols(); ++t) {
        out << ",t_" << t + 1;
    }
    out << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        out << i;
        for (Eigen::Index t = 0; t < values.cols(); ++t) {
            if constexpr (std::is_integral_v<typename Derived::Scalar>) {
                out << ',' << values(i, t);
            } else {
                out << ',' << format_double(values(i, t));
            }
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

inline Matrix read_panel(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) {
        throw IoError("'" + path.string() + "' is empty");
    }
    const auto header = split(lines[0]);
    if (header.size() < 2 || header[0] != "series_id") {
        throw IoError("'" + path.string() + "': expected header 'series_id,t_1,...'");
    }
    const auto t_len = static_cast<Eigen::Index>(header.size() - 1);
    Matrix m(static_cast<Eigen::Index>(lines.size() - 1), t_len);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split(lines[r]);
        const std::string where = path.string() + ":" + std::to_string(r + 1);
        if (static_cast<Eigen::Index>(fields.size()) != t_len + 1) {
            throw IoError(where + ": expected " + std::to_string(t_len + 1) + " fields, got " +
                          std::to_string(fields.size()));
        }
        for (Eigen::Index t = 0; t < t_len; ++t) {
            m(static_cast<Eigen::Index>(r - 1), t) = parse_double(fields[static_cast<std::size_t>(t + 1)], where);
        }
    }
    return m;
}

inline LabelMatrix read_label_panel(const fs::path& path) {
    const Matrix m = read_panel(path);
    LabelMatrix out = m.cast<int>();
    if (!(out.cast<double>().array() == m.array()).all() || !((out.array() == 0) || (out.array() == 1)).all()) {
        throw IoError("'" + path.string() + "': value labels must be 0 or 1");
    }
    return out;
}

/// `row_id,A,L` with an empty L for clean rows.
inline void write_labels(const fs::path& path, const std::vector<int>& ident, const std::vector<std::optional<int>>& loc) {
    require(ident.size() == loc.size(), "label vectors differ in length");
    auto out = open_out(path);
    out << "row_id,A,L\n";
    for (std::size_t r = 0; r < ident.size(); ++r) {
        out << r << ',' << ident[r] << ',';
        if (loc[r]) {
            out << *loc[r];
        }
        out << '\n';
    }
}

struct LabelFile {
    std::vector<int> ident;
    std::vector<std::optional<int>> loc;
};

inline LabelFile read_labels(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "row_id,A,L") {
        throw IoError("'" + path.string() + "': expected header 'row_id,A,L'");
    }
    LabelFile out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split(lines[r]);
        const std::string where = path.string() + ":" + std::to_string(r + 1);
        if (fields.size() != 3) {
            throw IoError(where + ": expected 3 fields");
        }
        const auto a = parse_int(fields[1], where);
        if (a != 0 && a != 1) {
            throw IoError(where + ": A must be 0 or 1");
        }
        out.ident.push_back(static_cast<int>(a));
        if (fields[2].empty()) {
            if (a == 1) {
                throw IoError(where + ": contaminated row without a location");
            }
            out.loc.emplace_back(std::nullopt);
        } else {
            out.loc.emplace_back(static_cast<int>(parse_int(fields[2], where)));
        }
    }
    return out;
}

inline void write_params(const fs::path& path, const std::vector<simgen::StockParams>& params) {
    auto out = open_out(path);
    out << "series_id,mu,sigma,s0\n";
    for (std::size_t i = 0; i < params.size(); ++i) {
        out << i << ',' << format_double(params[i].mu) << ',' << format_double(params[i].sigma) << ','
            << format_double(params[i].s0) << '\n';
    }
}

inline std::vector<simgen::StockParams> read_params(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "series_id,mu,sigma,s0") {
        throw IoError("'" + path.string() + "': expected header 'series_id,mu,sigma,s0'");
    }
    std::vector<simgen::StockParams> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto f = split(lines[r]);
        const std::string where = path.string() + ":" + std::to_string(r + 1);
        if (f.size() != 4) {
            throw IoError(where + ": expected 4 fields");
        }
        out.push_back({parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where)});
    }
    return out;
}

/// Plain numeric matrix without header.
inline void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << format_double(m(i, j));
        }
        out << '\n';
    }
}

inline Eigen::MatrixXd read_matrix(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) {
        throw IoError("'" + path.string() + "' is empty");
    }
    const std::size_t cols = split(lines[0]).size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(lines.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto f = split(lines[r]);
        const std::string where = path.string() + ":" + std::to_string(r + 1);
        if (f.size() != cols) {
            throw IoError(where + ": ragged matrix row");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(f[c], where);
        }
    }
    return m;
}

// ---- models ---------------------------------------------------------------

namespace detail {

template <class V>
void write_row(std::ostream& out, std::string_view tag, const V& v) {
    out << tag;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        out << ' ' << format_exact(v[j]);
    }
    out << '\n';
}

class Tokens {
public:
    Tokens(const fs::path& path) : path_(path.string()) {
        auto in = open_in(path);
        std::string tok;
        while (in >> tok) {
            tokens_.push_back(tok);
        }
    }

    std::string next() {
        if (pos_ >= tokens_.size()) {
            throw IoError(path_ + ": unexpected end of file");
        }
        return tokens_[pos_++];
    }

    void expect(const std::string& tok) {
        const auto got = next();
        if (got != tok) {
            throw IoError(path_ + ": expected '" + tok + "', got '" + got + "'");
        }
    }

    double number() { return parse_double(next(), path_); }

    std::size_t count() {
        const auto v = parse_int(next(), path_);
        if (v < 0) {
            throw IoError(path_ + ": negative size");
        }
        return static_cast<std::size_t>(v);
    }

    bool done() const { return pos_ >= tokens_.size(); }

private:
    std::string path_;
    std::vector<std::string> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void write_pca(const fs::path& path, const pcafeat::PcaModel& model) {
    auto out = open_out(path);
    out << "pcann-pca v1\n";
    out << "k " << model.k() << '\n';
    out << "p " << model.p() << '\n';
    detail::write_row(out, "mean", model.mean);
    detail::write_row(out, "eigenvalues", model.eigenvalues);
    out << "omega\n";
    for (Eigen::Index i = 0; i < model.omega.rows(); ++i) {
        for (Eigen::Index j = 0; j < model.omega.cols(); ++j) {
            out << (j ? " " : "") << format_exact(model.omega(i, j));
        }
        out << '\n';
    }
}

inline pcafeat::PcaModel read_pca(const fs::path& path) {
    detail::Tokens tk(path);
    tk.expect("pcann-pca");
    tk.expect("v1");
    tk.expect("k");
    const std::size_t k = tk.count();
    tk.expect("p");
    const std::size_t p = tk.count();
    if (k < 1 || k > p) {
        throw IoError(path.string() + ": invalid k/p");
    }
    pcafeat::PcaModel m;
    m.mean.resize(static_cast<Eigen::Index>(p));
    m.eigenvalues.resize(static_cast<Eigen::Index>(k));
    m.omega.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
    tk.expect("mean");
    for (Eigen::Index j = 0; j < m.mean.size(); ++j) {
        m.mean[j] = tk.number();
    }
    tk.expect("eigenvalues");
    for (Eigen::Index j = 0; j < m.eigenvalues.size(); ++j) {
        m.eigenvalues[j] = tk.number();
    }
    tk.expect("omega");
    for (Eigen::Index i = 0; i < m.omega.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.omega.cols(); ++j) {
            m.omega(i, j) = tk.number();
        }
    }
    if (!tk.done()) {
        throw IoError(path.string() + ": trailing data");
    }
    return m;
}

inline void write_network(const fs::path& path, const scorer::ScoringNetwork& net) {
    auto out = open_out(path);
    out << "pcann-net v1\n";
    const auto dims = net.layer_dims();
    out << "dims " << dims.size();
    for (auto d : dims) {
        out << ' ' << d;
    }
    out << '\n';
    out << "temperature " << format_exact(net.temperature) << '\n';
    out << "cutoff " << format_exact(net.cutoff) << '\n';
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        out << "layer " << l << '\n';
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
                out << (j ? " " : "") << format_exact(layer.weights(i, j));
            }
            out << '\n';
        }
        detail::write_row(out, "bias", layer.bias);
    }
}

inline scorer::ScoringNetwork read_network(const fs::path& path) {
    detail::Tokens tk(path);
    tk.expect("pcann-net");
    tk.expect("v1");
    tk.expect("dims");
    const std::size_t n_dims = tk.count();
    if (n_dims < 2) {
        throw IoError(path.string() + ": network needs at least two dims");
    }
    std::vector<std::size_t> dims(n_dims);
    for (auto& d : dims) {
        d = tk.count();
    }
    scorer::ScoringNetwork net;
    tk.expect("temperature");
    net.temperature = tk.number();
    tk.expect("cutoff");
    net.cutoff = tk.number();
    for (std::size_t l = 0; l + 1 < n_dims; ++l) {
        tk.expect("layer");
        if (tk.count() != l) {
            throw IoError(path.string() + ": layers out of order");
        }
        scorer::DenseLayer layer;
        layer.weights.resize(static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l]));
        layer.bias.resize(static_cast<Eigen::Index>(dims[l + 1]));
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
                layer.weights(i, j) = tk.number();
            }
        }
        tk.expect("bias");
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = tk.number();
        }
        net.layers.push_back(std::move(layer));
    }
    if (!tk.done()) {
        throw IoError(path.string() + ": trailing data");
    }
    try {
        net.validate();
    } catch (const ValidationError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return net;
}

inline void write_train_log(const fs::path& path, const std::vector<scorer::TrainLogEntry>& log) {
    auto out = open_out(path);
    out << "iter,loss,bce,auc_u,auc_c,s\n";
    for (const auto& e : log) {
        out << e.iter << ',' << format_double(e.terms.total()) << ',' << format_double(e.terms.bce) << ','
            << format_double(e.terms.auc_u) << ',' << format_double(e.terms.auc_c) << ',' << format_double(e.cutoff)
            << '\n';
    }
}

inline void write_detect_report(const fs::path& path, const std::vector<detector::DetectionReport>& reports) {
    auto out = open_out(path);
    out << "row_id,pred_A,score,locations,iterations\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
        const auto& rep = reports[r];
        out << r << ',' << rep.predicted << ',' << format_double(rep.score) << ',';
        for (std::size_t j = 0; j < rep.locations.size(); ++j) {
            out << (j ? ";" : "") << rep.locations[j];
        }
        out << ',' << rep.iterations << '\n';
    }
}

}  // namespace pcann::io
