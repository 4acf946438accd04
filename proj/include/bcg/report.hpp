#pragma once

// Report files: table CSVs, per-checkpoint histograms, convergence data and
// optional SVG histograms.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bcg/calibration.hpp"
#include "bcg/experiment.hpp"

namespace bcg {

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  std::size_t bins() const { return counts.size(); }
  double width() const { return edges.size() > 1 ? edges[1] - edges[0] : 0.0; }
  double midpoint(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Bin count from the Freedman-Diaconis width 2 IQR / N^{1/3}, at least 10
/// and at most 200.
inline std::size_t freedman_diaconis_bins(const std::vector<double>& samples) {
  constexpr std::size_t kMin = 10, kMax = 200;
  if (samples.size() < 2) return kMin;
  std::vector<double> v = samples;
  std::sort(v.begin(), v.end());
  const double range = v.back() - v.front();
  const double iqr = detail::quantile_sorted(v, 0.75) - detail::quantile_sorted(v, 0.25);
  if (!(range > 0.0) || !(iqr > 0.0)) return kMin;
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
  const double bins = std::ceil(range / width);
  return std::clamp(static_cast<std::size_t>(bins), kMin, kMax);
}

/// Equal-width bins over [lo, hi]; the last bin is closed.
inline Histogram histogram_with_edges(const std::vector<double>& samples, double lo, double hi, std::size_t bins) {
  if (bins < 1) throw InputError("histogram: need at least one bin");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double x : samples) {
    if (x < lo || x > hi) continue;
    auto k = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    h.counts[std::min(k, bins - 1)]++;
  }
  return h;
}

inline Histogram histogram(const std::vector<double>& samples, std::optional<std::size_t> bins = std::nullopt) {
  if (samples.empty()) return histogram_with_edges(samples, 0.0, 1.0, bins.value_or(10));
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  return histogram_with_edges(samples, *lo, *hi, bins.value_or(freedman_diaconis_bins(samples)));
}

/// Six significant digits in scientific notation.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5e", x);
  return buf;
}

inline std::string z_table_csv(const ExperimentReport& r) {
  std::string out = "iteration,z_mean,chi2_mean,ks\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.m) + "," + format_number(row.z.mean) + "," + format_number(row.z.chi2_mean()) + "," +
           format_number(row.z.ks) + "\n";
  return out;
}

inline std::string s_table_csv(const ExperimentReport& r) {
  std::string out = "iteration,s_mean,trace_mean,trace_std\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.m) + "," + format_number(row.s.h) + "," + format_number(row.s.trace_mean) + "," +
           format_number(row.s.trace_std) + "\n";
  return out;
}

inline std::string verdicts_csv(const ExperimentReport& r) {
  std::string out = "iteration,dof,z_verdict,z_ks,s_verdict,s_rel_diff,s_leaning,skipped\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.m) + "," + std::to_string(row.z.dof) + "," + to_string(row.z_verdict.kind) + "," +
           format_number(row.z_verdict.evidence) + "," + to_string(row.s_verdict.kind) + "," +
           format_number(row.s_verdict.evidence) + "," + to_string(row.s_verdict.leaning) + "," +
           std::to_string(row.z.skipped) + "\n";
  return out;
}

/// Bin edges, Z counts and the chi-squared density at bin midpoints.
inline std::string z_histogram_csv(const ZSampleSet& z, const Histogram& h) {
  std::string out = "bin_lo,bin_hi,count,chi2_density\n";
  for (std::size_t i = 0; i < h.bins(); ++i) {
    const double dens = z.dof > 0 ? chi_square_pdf(static_cast<double>(z.dof), h.midpoint(i)) : 0.0;
    out += format_number(h.edges[i]) + "," + format_number(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) +
           "," + format_number(dens) + "\n";
  }
  return out;
}

/// S-sample and trace counts on shared bins.
inline std::string s_histogram_csv(const SSampleSet& s) {
  std::vector<double> all = s.s;
  all.insert(all.end(), s.t.begin(), s.t.end());
  double lo = 0.0, hi = 1.0;
  if (!all.empty()) {
    lo = *std::min_element(all.begin(), all.end());
    hi = *std::max_element(all.begin(), all.end());
  }
  const std::size_t bins = freedman_diaconis_bins(s.s);
  const Histogram hs = histogram_with_edges(s.s, lo, hi, bins);
  const Histogram ht = histogram_with_edges(s.t, lo, hi, bins);
  std::string out = "bin_lo,bin_hi,s_count,trace_count\n";
  for (std::size_t i = 0; i < hs.bins(); ++i)
    out += format_number(hs.edges[i]) + "," + format_number(hs.edges[i + 1]) + "," + std::to_string(hs.counts[i]) +
           "," + std::to_string(ht.counts[i]) + "\n";
  return out;
}

inline std::string convergence_csv(const ExperimentReport& r) {
  std::string out = "iteration,relative_error\n";
  for (std::size_t i = 0; i < r.convergence.size(); ++i)
    out += std::to_string(i) + "," + format_number(r.convergence[i]) + "\n";
  return out;
}

/// Density histogram of the Z samples with the chi-squared density overlaid.
inline std::string z_histogram_svg(const ZSampleSet& z, const Histogram& h, Index m) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double total = static_cast<double>(z.samples.size());
  const double width = h.width();
  std::vector<double> dens(h.bins());
  double ymax = 0.0;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    dens[i] = total > 0 && width > 0 ? static_cast<double>(h.counts[i]) / (total * width) : 0.0;
    ymax = std::max(ymax, dens[i]);
  }
  const double lo = h.edges.front(), hi = h.edges.back();
  std::vector<std::pair<double, double>> curve;
  if (z.dof > 0) {
    for (int k = 0; k <= 200; ++k) {
      const double x = lo + (hi - lo) * k / 200.0;
      const double y = chi_square_pdf(static_cast<double>(z.dof), x);
      if (std::isfinite(y)) {
        curve.emplace_back(x, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  auto px = [&](double x) { return L + (x - lo) / (hi - lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << "Z-statistic, m = " << m << ", chi-squared dof = " << z.dof << "</text>\n";
  for (std::size_t i = 0; i < h.bins(); ++i) {
    const double x0 = px(h.edges[i]), x1 = px(h.edges[i + 1]);
    s << "<rect x=\"" << x0 << "\" y=\"" << py(dens[i]) << "\" width=\"" << std::max(0.0, x1 - x0)
      << "\" height=\"" << (H - B - py(dens[i])) << "\" fill=\"#7aa6d6\" stroke=\"#35608f\"/>\n";
  }
  if (!curve.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : curve) s << px(x) << "," << py(y) << " ";
    s << "\"/>\n";
  }
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << L << "\" y=\"" << H - B + 20 << "\" font-family=\"sans-serif\" font-size=\"11\">"
    << format_number(lo) << "</text>\n";
  s << "<text x=\"" << W - R << "\" y=\"" << H - B + 20
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << format_number(hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(p.string() + ": cannot open for writing");
  out << content;
  if (!out) throw Error(p.string() + ": write failed");
}

}  // namespace detail

/// Writes z_table.csv, s_table.csv, verdicts.csv, convergence.csv,
/// z_hist_m<m>.csv and s_hist_m<m>.csv (plus z_hist_m<m>.svg when requested).
inline void write_report(const ExperimentReport& r, const std::string& dir, bool svg = false) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(dir + ": cannot create directory: " + ec.message());
  const fs::path base(dir);
  detail::write_file(base / "z_table.csv", z_table_csv(r));
  detail::write_file(base / "s_table.csv", s_table_csv(r));
  detail::write_file(base / "verdicts.csv", verdicts_csv(r));
  detail::write_file(base / "convergence.csv", convergence_csv(r));
  for (const auto& row : r.rows) {
    const std::string tag = "m" + std::to_string(row.m);
    const Histogram h = histogram(row.z.samples);
    detail::write_file(base / ("z_hist_" + tag + ".csv"), z_histogram_csv(row.z, h));
    detail::write_file(base / ("s_hist_" + tag + ".csv"), s_histogram_csv(row.s));
    if (svg) detail::write_file(base / ("z_hist_" + tag + ".svg"), z_histogram_svg(row.z, h, row.m));
  }
}

}  // namespace bcg
