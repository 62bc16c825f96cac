#pragma once

// CSV, JSON and SVG emission for trajectories, regret curves and reports.
// Numbers are printed with 17 significant digits so CSV files reload exactly.

#include "counterexample.hpp"
#include "regret.hpp"
#include "transition.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace regstab::io {

using json = nlohmann::json;

[[nodiscard]] inline std::string format_number(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[nodiscard]] inline double parse_number(const std::string& s) {
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw Error("malformed number '" + s + "'");
    return v;
}

/// JSON has no infinities; they are written as the strings "inf"/"-inf".
[[nodiscard]] inline json number(double v) {
    if (std::isfinite(v))
        return v;
    return format_number(v);
}

[[nodiscard]] inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

[[nodiscard]] inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(number(v(i)));
    return out;
}

// ============================================================================
// CSV
// ============================================================================

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
    const Eigen::Index m = traj.inputs.empty() ? 0 : traj.inputs.front().size();
    os << "t";
    for (Eigen::Index i = 0; i < n; ++i)
        os << ",x" << i;
    for (Eigen::Index i = 0; i < m; ++i)
        os << ",u" << i;
    os << ",stage_cost,cum_cost\r\n";
    double cum = 0.0;
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        cum += traj.stage_costs[t];
        os << t;
        for (Eigen::Index i = 0; i < n; ++i)
            os << ',' << format_number(traj.states[t](i));
        for (Eigen::Index i = 0; i < m; ++i)
            os << ',' << format_number(traj.inputs[t](i));
        os << ',' << format_number(traj.stage_costs[t]) << ',' << format_number(cum) << "\r\n";
    }
}

inline constexpr const char* kCurveHeader = "T,R_T,R_T_over_T,flag";

inline void write_curve_csv(std::ostream& os, const RegretCurve& curve) {
    os << kCurveHeader << "\r\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        os << curve.horizons[i] << ',' << format_number(curve.regret[i]) << ','
           << format_number(curve.time_averaged[i]) << ',' << curve.flags[i] << "\r\n";
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    std::vector<std::string> fields;
    std::stringstream        ss(line);
    std::string              field;
    while (std::getline(ss, field, ','))
        fields.push_back(field);
    if (!line.empty() && line.back() == ',')
        fields.emplace_back();
    return fields;
}

} // namespace detail

/// Inverse of write_curve_csv (metadata is not part of the CSV).
[[nodiscard]] inline RegretCurve read_curve_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line))
        throw Error("empty curve CSV");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kCurveHeader)
        throw Error("unexpected curve CSV header '" + line + "'");
    RegretCurve curve;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 4)
            throw Error("curve CSV row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
        curve.horizons.push_back(static_cast<std::size_t>(std::stoull(f[0])));
        curve.regret.push_back(parse_number(f[1]));
        curve.time_averaged.push_back(parse_number(f[2]));
        curve.flags.push_back(f[3]);
    }
    return curve;
}

inline void write_gamma_scan_csv(std::ostream& os, const std::vector<GammaScanRow>& rows) {
    os << "alpha,converged,in_gamma,rho,alpha_norm\r\n";
    for (const auto& r : rows)
        os << format_number(r.alpha) << ',' << (r.converged ? 1 : 0) << ',' << (r.in_gamma ? 1 : 0) << ','
           << format_number(r.rho) << ',' << format_number(r.alpha_norm) << "\r\n";
}

// ============================================================================
// JSON reports
// ============================================================================

[[nodiscard]] inline json to_json(const StabilityReport& r) {
    json j;
    j["classification"] = to_string(r.classification);
    j["spectral_radius"] = r.spectral_radius ? number(*r.spectral_radius) : json(nullptr);
    j["phi_norm_tail"] = number(r.phi_norm_tail);
    j["bibs_sup"] = number(r.bibs_sup);
    j["D_sum"] = number(r.D_sum);
    j["D_bar"] = number(r.D_bar);
    j["H_bar"] = number(r.H_bar);
    j["summable"] = r.summable;
    if (r.exp_fit)
        j["exp_fit"] = {{"d", number(r.exp_fit->d)}, {"delta", number(r.exp_fit->delta)}};
    else
        j["exp_fit"] = nullptr;
    j["full_rank_ok"] = r.full_rank_ok;
    j["notes"] = r.notes;
    return j;
}

[[nodiscard]] inline json to_json(const LinearRegretCertificate& c) {
    return json{{"applicable", c.applicable},
                {"reason", c.reason},
                {"M", number(c.M)},
                {"D_bar", number(c.D_bar)},
                {"H_bar", number(c.H_bar)},
                {"X", number(c.X)},
                {"W", number(c.W)},
                {"C_0", number(c.C_0)},
                {"C_w", number(c.C_w)},
                {"holds", c.holds},
                {"max_violation", number(c.max_violation)},
                {"bibs_sup", number(c.bibs_sup)},
                {"C_w_bibs", number(c.C_w_bibs)},
                {"holds_bibs", c.holds_bibs},
                {"max_violation_bibs", number(c.max_violation_bibs)},
                {"samples", c.samples}};
}

[[nodiscard]] inline json to_json(const DiscountedBoundReport& r) {
    json points = json::array();
    for (const auto& p : r.points)
        points.push_back({{"T", p.T}, {"worst_cost", number(p.worst_cost)}, {"bound", number(p.bound)}});
    return json{{"applicable", r.applicable},
                {"reason", r.reason},
                {"alpha", number(r.alpha)},
                {"rho", number(r.rho)},
                {"sigma", number(r.sigma)},
                {"P_norm", number(r.P_norm)},
                {"X", number(r.X)},
                {"W", number(r.W)},
                {"C_0", number(r.C_0)},
                {"C_w", number(r.C_w)},
                {"holds", r.holds},
                {"unstable", r.unstable},
                {"undiscounted_T_lo", r.undiscounted_T_lo},
                {"undiscounted_T_hi", r.undiscounted_T_hi},
                {"undiscounted_growth", number(r.undiscounted_growth)},
                {"points", std::move(points)}};
}

// ============================================================================
// SVG
// ============================================================================

struct SvgSeries {
    std::string         label;
    std::vector<double> x;
    std::vector<double> y; // plotted on a log10 axis; nonpositive values are skipped
};

/// Polyline plot with a linear x axis and a log10 y axis.
[[nodiscard]] inline std::string semilog_svg(const std::vector<SvgSeries>& series, const std::string& title,
                                             const std::string& x_label, const std::string& y_label) {
    constexpr double width = 640, height = 420;
    constexpr double left = 70, right = 150, top = 40, bottom = 50;
    constexpr double plot_w = width - left - right, plot_h = height - top - bottom;
    static const char* const colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i]))
                continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) {
        xmin = 0;
        xmax = 1;
        ymin = 1;
        ymax = 10;
    }
    if (xmax == xmin)
        xmax = xmin + 1;
    const int dec_lo = static_cast<int>(std::floor(std::log10(ymin)));
    int       dec_hi = static_cast<int>(std::ceil(std::log10(ymax)));
    if (dec_hi == dec_lo)
        ++dec_hi;

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return top + plot_h - (std::log10(y) - dec_lo) / (dec_hi - dec_lo) * plot_h; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
       << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"15\">" << title << "</text>\n";

    // Decade grid and ticks.
    for (int d = dec_lo; d <= dec_hi; ++d) {
        const double y = top + plot_h - static_cast<double>(d - dec_lo) / (dec_hi - dec_lo) * plot_h;
        os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left + plot_w) << "\" y2=\""
           << fmt(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
           << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << d << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double x = px(xv);
        os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(top + plot_h) << "\" x2=\"" << fmt(x) << "\" y2=\""
           << fmt(top + plot_h + 5) << "\" stroke=\"black\" stroke-width=\"1\"/>\n"
           << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + plot_h + 18)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(xv) << "</text>\n";
    }
    os << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w) << "\" height=\""
       << fmt(plot_h) << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
       << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 10)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n"
       << "<text x=\"16\" y=\"" << fmt(top + plot_h / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"12\" transform=\"rotate(-90 16 " << fmt(top + plot_h / 2) << ")\">" << y_label << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % (sizeof colors / sizeof colors[0])];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i]))
                continue;
            os << (first ? "" : " ") << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i]));
            first = false;
        }
        os << "\"/>\n";
        const double ly = top + 14 + 20.0 * static_cast<double>(k);
        os << "<line x1=\"" << fmt(left + plot_w + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
           << fmt(left + plot_w + 36) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << fmt(left + plot_w + 42) << "\" y=\"" << fmt(ly + 4)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace regstab::io
