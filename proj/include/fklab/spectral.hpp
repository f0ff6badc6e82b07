#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fklab/errors.hpp"
#include "fklab/factors.hpp"
#include "fklab/panel.hpp"

namespace fklab {

// Diagnostics below index the spectrum by the number k of head eigenvalues
// removed; the tail is eigs[k..] inclusive, so the quantities match
//   r_k = sum(tail)/tail[0],  R_k = sum(tail)^2/sum(tail^2),
// and a flat n-value tail gives r = R = n.

inline void check_spectrum(const Eigen::VectorXd& eigs) {
  if (eigs.size() == 0) throw input_error("empty spectrum");
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (!(eigs[i] > 0.0)) throw input_error("eigenvalue " + std::to_string(i) + " is not positive");
    if (i > 0 && eigs[i] > eigs[i - 1] * (1.0 + 1e-12))
      throw input_error("eigenvalues must be non-increasing (violated at " + std::to_string(i) + ")");
  }
}

// Numerical zeros corrupt the log-based tail estimators; drop them up front.
inline Eigen::VectorXd drop_negligible(const Eigen::VectorXd& eigs) {
  if (eigs.size() == 0) throw input_error("empty spectrum");
  const double cut = 1e-12 * eigs[0];
  Eigen::Index n = 0;
  while (n < eigs.size() && eigs[n] > cut) ++n;
  if (n == 0) throw input_error("spectrum has no positive mass");
  return eigs.head(n);
}

inline std::pair<double, double> effective_ranks(const Eigen::VectorXd& eigs, int k) {
  check_spectrum(eigs);
  if (k < 0 || k >= eigs.size())
    throw input_error("head count " + std::to_string(k) + " leaves an empty tail");
  const auto tail = eigs.tail(eigs.size() - k);
  const double s1 = tail.sum();
  const double s2 = tail.squaredNorm();
  return {s1 / tail[0], s1 * s1 / s2};
}

// Split index: smallest k whose tail effective rank r_k reaches b*T. A spectrum
// can exhaust before that happens; the empty optional is that outcome.
inline std::optional<int> split_index(const Eigen::VectorXd& eigs, int T, double b) {
  check_spectrum(eigs);
  if (T < 1) throw input_error("T must be positive");
  if (!(b > 0.0)) throw input_error("split constant must be positive");
  for (int k = 0; k < eigs.size(); ++k) {
    if (effective_ranks(eigs, k).first >= b * static_cast<double>(T)) return k;
  }
  return std::nullopt;
}

enum class TheoremCase { a_homoscedastic, b_bounded, c_diverging, fail };

inline const char* theorem_case_name(TheoremCase c) {
  switch (c) {
    case TheoremCase::a_homoscedastic: return "a";
    case TheoremCase::b_bounded: return "b";
    case TheoremCase::c_diverging: return "c";
    default: return "fail";
  }
}

struct ConcentrationCase {
  double concentration = 1.0;  // mean square over squared mean of the tail
  double flatness = 0.0;       // T * C / (N - k)
  double growth_ratio = 1.0;   // C on the full tail over C on its top half
  TheoremCase theorem_case = TheoremCase::fail;
};

inline double tail_concentration(const Eigen::VectorXd& tail) {
  const double mean = tail.mean();
  const double meansq = tail.squaredNorm() / static_cast<double>(tail.size());
  return meansq / (mean * mean);
}

// Case assignment is a finite-sample heuristic: the asymptotic trichotomy
// (flat tail / bounded concentration / slow divergence) is proxied by C itself
// and by how C grows from the top half of the tail to the whole tail.
inline ConcentrationCase concentration_and_case(const Eigen::VectorXd& eigs, int k, int T,
                                                double c_cap = 10.0) {
  check_spectrum(eigs);
  if (k < 0 || k >= eigs.size()) throw input_error("head count leaves an empty tail");
  const Eigen::VectorXd tail = eigs.tail(eigs.size() - k);
  const Eigen::Index n = tail.size();
  ConcentrationCase out;
  out.concentration = tail_concentration(tail);
  out.flatness = static_cast<double>(T) * out.concentration / static_cast<double>(n);
  const Eigen::Index half = std::max<Eigen::Index>(1, n / 2);
  const double c_half = tail_concentration(tail.head(half));
  out.growth_ratio = out.concentration / c_half;
  const double fl_half = static_cast<double>(T) * c_half / static_cast<double>(half);
  if (out.concentration < 1.05) {
    out.theorem_case = TheoremCase::a_homoscedastic;
  } else if (out.growth_ratio > 1.15 && out.flatness < fl_half) {
    out.theorem_case = TheoremCase::c_diverging;
  } else if (out.concentration <= c_cap && out.flatness <= fl_half * (1.0 + 1e-9)) {
    out.theorem_case = TheoremCase::b_bounded;
  } else {
    out.theorem_case = TheoremCase::fail;
  }
  return out;
}

// Hill estimator on the k_h largest tail values relative to value k_h+1.
inline double hill_estimator(const Eigen::VectorXd& tail, int k_h) {
  check_spectrum(tail);
  if (k_h < 1 || k_h + 1 > tail.size())
    throw input_error("Hill cutoff " + std::to_string(k_h) + " needs k_h+1 tail values");
  const double ref = tail[k_h];
  if (!(ref > 0.0)) throw numeric_error("Hill reference value is zero");
  double acc = 0.0;
  for (int j = 0; j < k_h; ++j) acc += std::log(tail[j] / ref);
  return static_cast<double>(k_h) / acc;
}

// Log-rank regression: slope of log lambda_(j) on -log(j/m) equals 1/alpha on
// an exact power law. Plain least squares, no small-sample rank shift.
inline double logrank_estimator(const Eigen::VectorXd& tail) {
  check_spectrum(tail);
  const Eigen::Index m = tail.size();
  if (m < 3) throw input_error("log-rank regression needs at least 3 values");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double x = -std::log(static_cast<double>(j + 1) / static_cast<double>(m));
    const double y = std::log(tail[j]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double n = static_cast<double>(m);
  const double varx = sxx - sx * sx / n;
  if (!(varx > 0.0)) throw numeric_error("log-rank regressor has zero variance");
  const double slope = (sxy - sx * sy / n) / varx;
  if (slope == 0.0) throw numeric_error("log-rank slope is zero; no tail index");
  return 1.0 / slope;
}

struct TailRow {
  int k = 0;
  double r_k = 0.0;
  double R_k = 0.0;
  double t_over_R = 0.0;
  double concentration = 0.0;
  double hill_alpha = 0.0;
  double logrank_alpha = 0.0;
  bool skipped = false;
  std::string note;
};

// Per-k tail diagnostics of a panel's sample covariance spectrum. The panel is
// standardized column-by-column first so the spectrum is that of a correlation
// matrix, matching how the diagnostics are quoted.
inline std::vector<TailRow> tail_table(const Panel& panel, const std::vector<int>& k_grid, int k_h) {
  if (k_grid.empty()) throw input_error("empty k grid");
  if (k_h < 1) throw input_error("Hill cutoff must be positive");
  auto [std_panel, mom] = window_standardize(panel.values);
  const Eigen::VectorXd eigs = drop_negligible(gram_eigenvalues(std_panel));
  const int T = static_cast<int>(panel.values.rows());
  std::vector<TailRow> rows;
  for (int k : k_grid) {
    TailRow row;
    row.k = k;
    if (k < 0 || k >= eigs.size()) {
      row.skipped = true;
      row.note = "no tail left after removing " + std::to_string(k) + " eigenvalues";
      rows.push_back(row);
      continue;
    }
    auto [rk, Rk] = effective_ranks(eigs, k);
    row.r_k = rk;
    row.R_k = Rk;
    row.t_over_R = static_cast<double>(T) / Rk;
    const Eigen::VectorXd tail = eigs.tail(eigs.size() - k);
    row.concentration = tail_concentration(tail);
    if (k_h + 1 > tail.size()) {
      row.skipped = true;
      row.note = "tail shorter than the Hill cutoff";
      rows.push_back(row);
      continue;
    }
    row.hill_alpha = hill_estimator(tail, k_h);
    row.logrank_alpha = logrank_estimator(tail);
    rows.push_back(row);
  }
  return rows;
}

struct SpectrumDiagnostics {
  Eigen::VectorXd eigenvalues;
  std::optional<int> k_star;
  double r0 = 0.0;
  double r_k = 0.0;
  double R_k = 0.0;
  double concentration_C = 1.0;
  double flatness = 0.0;
  std::array<double, 3> bllt_ratios{};  // r0/T, k*/T, T/R_{k*}
  TheoremCase theorem_case = TheoremCase::fail;
  double hill_alpha = 0.0;
  double logrank_alpha = 0.0;
};

// One-stop summary at the split index (or at k = 0 when no split exists).
inline SpectrumDiagnostics diagnose_spectrum(const Eigen::VectorXd& raw_eigs, int T, double b,
                                             int k_h) {
  SpectrumDiagnostics d;
  d.eigenvalues = drop_negligible(raw_eigs);
  check_spectrum(d.eigenvalues);
  d.k_star = split_index(d.eigenvalues, T, b);
  const int k = d.k_star.value_or(0);
  d.r0 = effective_ranks(d.eigenvalues, 0).first;
  auto [rk, Rk] = effective_ranks(d.eigenvalues, k);
  d.r_k = rk;
  d.R_k = Rk;
  const ConcentrationCase cc = concentration_and_case(d.eigenvalues, k, T);
  d.concentration_C = cc.concentration;
  d.flatness = cc.flatness;
  d.theorem_case = cc.theorem_case;
  d.bllt_ratios = {d.r0 / static_cast<double>(T), static_cast<double>(k) / static_cast<double>(T),
                   static_cast<double>(T) / d.R_k};
  // degenerate tails (e.g. exactly flat) have no tail index; report 0 there
  const Eigen::VectorXd tail = d.eigenvalues.tail(d.eigenvalues.size() - k);
  if (k_h + 1 <= tail.size()) {
    const double a = hill_estimator(tail, k_h);
    if (std::isfinite(a)) d.hill_alpha = a;
  }
  if (tail.size() >= 3) {
    try {
      d.logrank_alpha = logrank_estimator(tail);
    } catch (const numeric_error&) {
    }
  }
  return d;
}

}  // namespace fklab
