#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "msde/core/error.hpp"

namespace msde {

/// Averaged coefficients at one tabulation node.
struct AveragedNode {
    std::vector<double> bbar;     ///< d
    std::vector<double> sigmabar; ///< d x d, symmetric PSD root of 2 abar
    std::vector<double> se_bbar;  ///< d
    std::vector<double> se_abar;  ///< d x d
    bool nonstationary = false;
};

/// The averaged coefficients (b_bar, sigma_bar) over (t, x), either tabulated on a node grid
/// with multilinear interpolation or given in closed form.
///
/// Queries outside the node hull are clamped to the hull (constant extrapolation) and
/// reported through the return value of `eval`.
class AveragedModel {
public:
    using Field = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

    AveragedModel() = default;

    static AveragedModel closed_form(std::size_t d, Field bbar, Field sigmabar, std::string name = "closed-form") {
        require(d > 0 && bbar && sigmabar, "closed-form model needs a dimension and both fields");
        AveragedModel m;
        m.d_ = d;
        m.bbar_fn_ = std::move(bbar);
        m.sigmabar_fn_ = std::move(sigmabar);
        m.metadata_["name"] = std::move(name);
        m.metadata_["kind"] = "closed-form";
        m.metadata_["sigma_root"] = "symmetric-psd";
        return m;
    }

    /// Nodes are ordered with t slowest and x_d fastest.
    static AveragedModel tabulated(std::vector<double> t_nodes, std::vector<std::vector<double>> x_nodes,
                                   std::vector<AveragedNode> nodes) {
        require(!x_nodes.empty(), "tabulated model needs at least one slow axis");
        AveragedModel m;
        m.d_ = x_nodes.size();
        m.axes_.push_back(std::move(t_nodes));
        for (auto& a : x_nodes) m.axes_.push_back(std::move(a));
        std::size_t count = 1;
        for (const auto& a : m.axes_) {
            require(!a.empty(), "node axes must be non-empty");
            require(std::is_sorted(a.begin(), a.end()) && std::adjacent_find(a.begin(), a.end()) == a.end(),
                    "node axes must be strictly increasing");
            count *= a.size();
        }
        require(nodes.size() == count, "node count does not match the axis grid");
        for (const auto& n : nodes) {
            require(n.bbar.size() == m.d_ && n.sigmabar.size() == m.d_ * m.d_ && n.se_bbar.size() == m.d_ &&
                        n.se_abar.size() == m.d_ * m.d_,
                    "node value has the wrong dimension");
        }
        m.nodes_ = std::move(nodes);
        m.metadata_["kind"] = "tabulated";
        m.metadata_["interpolation"] = "multilinear, constant extrapolation";
        m.metadata_["sigma_root"] = "symmetric-psd";
        return m;
    }

    std::size_t dim() const noexcept { return d_; }
    bool is_tabulated() const noexcept { return !nodes_.empty(); }
    const std::vector<double>& t_nodes() const { return axes_.at(0); }
    const std::vector<double>& x_nodes(std::size_t i) const { return axes_.at(i + 1); }
    std::size_t n_nodes() const noexcept { return nodes_.size(); }
    const AveragedNode& node(std::size_t i) const { return nodes_.at(i); }
    std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

    /// (t, x_1, ..., x_d) of node i.
    std::vector<double> node_coords(std::size_t i) const {
        std::vector<double> c(axes_.size());
        for (std::size_t k = axes_.size(); k-- > 0;) {
            c[k] = axes_[k][i % axes_[k].size()];
            i /= axes_[k].size();
        }
        return c;
    }

    /// Writes b_bar(t, x) and sigma_bar(t, x); returns true if (t, x) lies outside the node hull.
    bool eval(double t, std::span<const double> x, std::span<double> bbar, std::span<double> sigmabar) const {
        if (!is_tabulated()) {
            require(static_cast<bool>(bbar_fn_), "averaged model is empty");
            bbar_fn_(t, x, bbar);
            sigmabar_fn_(t, x, sigmabar);
            return false;
        }
        const std::size_t k_axes = axes_.size();
        std::size_t lo[8];
        double w[8];
        require(k_axes <= 8, "tabulated models support at most 7 slow dimensions", ErrorCode::Unsupported);
        bool outside = false;
        for (std::size_t k = 0; k < k_axes; ++k) {
            const auto& a = axes_[k];
            double v = k == 0 ? t : x[k - 1];
            if (a.size() == 1) {
                lo[k] = 0;
                w[k] = 0.0;
                outside = outside || v != a[0];
                continue;
            }
            if (v < a.front() || v > a.back() || std::isnan(v)) {
                outside = true;
                v = std::isnan(v) ? a.front() : std::clamp(v, a.front(), a.back());
            }
            std::size_t i = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), v) - a.begin());
            i = std::min(i == 0 ? 0 : i - 1, a.size() - 2);
            lo[k] = i;
            w[k] = (v - a[i]) / (a[i + 1] - a[i]);
        }
        std::fill(bbar.begin(), bbar.end(), 0.0);
        std::fill(sigmabar.begin(), sigmabar.end(), 0.0);
        for (std::size_t corner = 0; corner < (std::size_t{1} << k_axes); ++corner) {
            double weight = 1.0;
            std::size_t index = 0;
            for (std::size_t k = 0; k < k_axes; ++k) {
                bool up = (corner >> k) & 1u;
                double wk = up ? w[k] : 1.0 - w[k];
                if (wk == 0.0) {
                    weight = 0.0;
                    break;
                }
                weight *= wk;
                index = index * axes_[k].size() + lo[k] + (up ? 1 : 0);
            }
            if (weight == 0.0) continue;
            const AveragedNode& n = nodes_[index];
            for (std::size_t i = 0; i < d_; ++i) bbar[i] += weight * n.bbar[i];
            for (std::size_t i = 0; i < d_ * d_; ++i) sigmabar[i] += weight * n.sigmabar[i];
        }
        return outside;
    }

    /// Column names of the flat table for dimension d.
    static std::vector<std::string> table_columns(std::size_t d) {
        std::vector<std::string> c{"t"};
        auto idx = [](std::size_t i) { return std::to_string(i + 1); };
        for (std::size_t i = 0; i < d; ++i) c.push_back("x_" + idx(i));
        for (std::size_t i = 0; i < d; ++i) c.push_back("bbar_" + idx(i));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) c.push_back("sigmabar_" + idx(i) + idx(j));
        for (std::size_t i = 0; i < d; ++i) c.push_back("se_bbar_" + idx(i));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) c.push_back("se_abar_" + idx(i) + idx(j));
        return c;
    }

    /// One header line, then one row per node in node order. Values use 17 significant digits
    /// so a read-back reproduces them exactly.
    void write_table(std::ostream& os) const {
        require(is_tabulated(), "only tabulated models can be written as a table", ErrorCode::Unsupported);
        auto cols = table_columns(d_);
        for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
        os << '\n';
        char buf[32];
        auto put = [&](double v, bool first = false) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << (first ? "" : ",") << buf;
        };
        for (std::size_t n = 0; n < nodes_.size(); ++n) {
            auto c = node_coords(n);
            put(c[0], true);
            for (std::size_t k = 1; k < c.size(); ++k) put(c[k]);
            const auto& v = nodes_[n];
            for (double x : v.bbar) put(x);
            for (double x : v.sigmabar) put(x);
            for (double x : v.se_bbar) put(x);
            for (double x : v.se_abar) put(x);
            os << '\n';
        }
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        require(static_cast<bool>(f), "cannot open " + path + " for writing");
        write_table(f);
    }

    static AveragedModel read_table(std::istream& is) {
        std::string line;
        require(static_cast<bool>(std::getline(is, line)), "averaged-model table is empty", ErrorCode::SchemaMismatch);
        auto header = split(line);
        std::size_t d = 0;
        while (1 + 3 * d + 2 * d * d < header.size()) ++d;
        if (d == 0 || table_columns(d) != header) {
            throw Error(ErrorCode::SchemaMismatch, "unexpected averaged-model header: " + line);
        }
        std::vector<std::vector<double>> coords;
        std::vector<AveragedNode> nodes;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto cells = split(line);
            if (cells.size() != header.size()) {
                throw Error(ErrorCode::SchemaMismatch, "row has " + std::to_string(cells.size()) + " cells, expected " +
                                                           std::to_string(header.size()));
            }
            std::vector<double> v;
            for (const auto& s : cells) v.push_back(parse_double(s));
            std::size_t p = 0;
            coords.emplace_back(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(1 + d));
            p = 1 + d;
            AveragedNode n;
            auto take = [&](std::vector<double>& dst, std::size_t k) {
                dst.assign(v.begin() + static_cast<std::ptrdiff_t>(p), v.begin() + static_cast<std::ptrdiff_t>(p + k));
                p += k;
            };
            take(n.bbar, d);
            take(n.sigmabar, d * d);
            take(n.se_bbar, d);
            take(n.se_abar, d * d);
            nodes.push_back(std::move(n));
        }
        require(!nodes.empty(), "averaged-model table has no rows", ErrorCode::SchemaMismatch);
        std::vector<std::vector<double>> axes(1 + d);
        for (std::size_t k = 0; k <= d; ++k) {
            for (const auto& c : coords) axes[k].push_back(c[k]);
            std::sort(axes[k].begin(), axes[k].end());
            axes[k].erase(std::unique(axes[k].begin(), axes[k].end()), axes[k].end());
        }
        std::vector<double> t_axis = axes[0];
        std::vector<std::vector<double>> x_axes(axes.begin() + 1, axes.end());
        AveragedModel m;
        try {
            m = tabulated(t_axis, x_axes, nodes);
        } catch (const Error& e) {
            throw Error(ErrorCode::SchemaMismatch, std::string("averaged-model rows do not form a grid: ") + e.what());
        }
        for (std::size_t i = 0; i < coords.size(); ++i) {
            if (m.node_coords(i) != coords[i]) {
                throw Error(ErrorCode::SchemaMismatch, "averaged-model rows are not in node order at row " +
                                                           std::to_string(i + 2));
            }
        }
        return m;
    }

    static AveragedModel load(const std::string& path) {
        std::ifstream f(path);
        require(static_cast<bool>(f), "cannot open " + path);
        return read_table(f);
    }

private:
    static std::vector<std::string> split(const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            auto b = cell.find_first_not_of(" \t\r");
            auto e = cell.find_last_not_of(" \t\r");
            out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        return out;
    }

    static double parse_double(const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) throw Error(ErrorCode::SchemaMismatch, "not a number: '" + s + "'");
        return v;
    }

    std::size_t d_ = 0;
    std::vector<std::vector<double>> axes_;
    std::vector<AveragedNode> nodes_;
    Field bbar_fn_;
    Field sigmabar_fn_;
    std::map<std::string, std::string> metadata_;
};

} // namespace msde
