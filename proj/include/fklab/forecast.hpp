#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "fklab/errors.hpp"
#include "fklab/factors.hpp"
#include "fklab/kernel.hpp"
#include "fklab/panel.hpp"
#include "fklab/ridgeless.hpp"

namespace fklab {

struct EvalConfig {
  int window = 120;                 // 120 monthly, 40 quarterly
  std::vector<int> horizons{1, 3, 6, 12};
  int k_max = 20;
  std::vector<std::string> targets;            // empty: every series in turn
  std::vector<Eigen::Index> subsample_breaks;  // row boundaries between periods
  bool self_compare = false;                   // benchmark against itself (harness check)
  bool exclude_target_from_panel = true;
};

inline void validate(const EvalConfig& cfg, Eigen::Index T) {
  if (cfg.window < 8) throw input_error("window too short");
  if (cfg.horizons.empty()) throw input_error("no horizons given");
  for (int h : cfg.horizons) {
    if (h < 1) throw input_error("horizons must be positive");
    if (T - h - cfg.window < 24)
      throw input_error("panel leaves fewer than 24 forecasts at horizon " + std::to_string(h));
  }
  if (cfg.k_max < 1) throw input_error("k_max must be positive");
  for (Eigen::Index b : cfg.subsample_breaks)
    if (b <= 0 || b >= T) throw input_error("subsample break outside the sample");
}

// ---------------------------------------------------------------------------
// Models. Both work on a standardized window whose last row is the forecast
// origin; regression pairs are (features at s, target at s+h) for every s the
// window can score without peeking past the origin.

inline double fm_forecast(const FactorModelFit& fit, const Eigen::VectorXd& y_std, int h) {
  const Eigen::Index W = y_std.size();
  if (fit.factors.rows() != W) throw input_error("factor path does not match the window");
  const Eigen::Index m = W - h;
  const int k = fit.k;
  if (m < k + 2) throw input_error("window too short for the factor regression");
  Eigen::MatrixXd design(m, 1 + k);
  design.col(0) = y_std.head(m);
  design.rightCols(k) = fit.factors.topRows(m);
  RidgelessFit ols = fit_min_norm(design, y_std.tail(m));
  Eigen::VectorXd x_t(1 + k);
  x_t[0] = y_std[W - 1];
  x_t.tail(k) = fit.factors.row(W - 1).transpose();
  return x_t.dot(ols.coefficients);
}

inline double fm_forecast(const Eigen::MatrixXd& X_std, const Eigen::VectorXd& y_std, int h, int k) {
  return fm_forecast(extract_factors_pca(X_std, k), y_std, h);
}

struct SemiparametricFit {
  double phi = 0.0;
  Eigen::VectorXd alpha;
};

// GLS step of the semiparametric model: phi from the kernel-weighted
// projection of the lead onto the lag, alpha from the kernel-ridge fit of what
// is left. Solving once for M^+ y_lag and M^+ y_h gives both and makes the
// orthogonality y_lag' M^+ (y_h - phi y_lag) = 0 hold by construction.
inline SemiparametricFit fk_fit_gls(const FactorKernel& kernel, const Eigen::VectorXd& y_h,
                                    const Eigen::VectorXd& y_lag) {
  const Eigen::Index W = kernel.K.rows();
  if (y_h.size() != W || y_lag.size() != W) throw input_error("vector lengths do not match the kernel window");
  if (y_lag.norm() == 0.0) throw input_error("lag regressor is identically zero");
  Eigen::MatrixXd m = kernel.K;
  m.diagonal().array() += kernel.ridge;
  Eigen::VectorXd ml, mh;
  if (kernel.ridge > 0.0) {
    Eigen::LLT<Eigen::MatrixXd> chol(m);
    if (chol.info() != Eigen::Success) throw numeric_error("kernel system not positive definite");
    ml = chol.solve(y_lag);
    mh = chol.solve(y_h);
  } else {
    // Moore-Penrose via the eigendecomposition when there is no ridge
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd& w = es.eigenvalues();
    const double tol = static_cast<double>(W) * std::numeric_limits<double>::epsilon() *
                       std::max(w[W - 1], 0.0);
    auto pinv_apply = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd c = es.eigenvectors().transpose() * v;
      for (Eigen::Index j = 0; j < W; ++j) c[j] = w[j] > tol ? c[j] / w[j] : 0.0;
      return Eigen::VectorXd(es.eigenvectors() * c);
    };
    ml = pinv_apply(y_lag);
    mh = pinv_apply(y_h);
  }
  const double denom = y_lag.dot(ml);
  if (!(denom > 0.0)) throw numeric_error("lag regressor degenerate under the kernel metric");
  SemiparametricFit fit;
  fit.phi = y_lag.dot(mh) / denom;
  fit.alpha = mh - fit.phi * ml;
  return fit;
}

inline double fk_forecast(const SemiparametricFit& fit, const Eigen::VectorXd& k_vec, double y_t) {
  if (k_vec.size() != fit.alpha.size()) throw input_error("kernel vector length does not match alpha");
  return fit.phi * y_t + k_vec.dot(fit.alpha);
}

// ---------------------------------------------------------------------------
// Comparison statistics.

struct DmResult {
  double stat = 0.0;
  double pvalue = 1.0;
};

// Equal-accuracy test on squared-error loss. Long-run variance of the loss
// differential uses Bartlett weights with h-1 lags; no small-sample correction.
inline DmResult dm_test(const Eigen::VectorXd& errors_a, const Eigen::VectorXd& errors_b, int h) {
  const Eigen::Index P = errors_a.size();
  if (errors_b.size() != P) throw input_error("error series have different lengths");
  if (P < 10) throw input_error("too few forecasts for the accuracy test");
  if (h < 1) throw input_error("horizon must be positive");
  Eigen::VectorXd d = errors_a.array().square() - errors_b.array().square();
  const double mean = d.mean();
  Eigen::VectorXd dc = d.array() - mean;
  double lrv = dc.squaredNorm() / static_cast<double>(P);
  for (int l = 1; l <= h - 1; ++l) {
    if (l >= P) break;
    const double gamma = dc.head(P - l).dot(dc.tail(P - l)) / static_cast<double>(P);
    lrv += 2.0 * (1.0 - static_cast<double>(l) / static_cast<double>(h)) * gamma;
  }
  DmResult out;
  if (lrv <= 0.0) {
    if (mean == 0.0) return {0.0, 1.0};  // identical losses
    out.stat = mean > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    out.pvalue = 0.0;
    return out;
  }
  out.stat = mean / std::sqrt(lrv / static_cast<double>(P));
  out.pvalue = std::erfc(std::abs(out.stat) / std::sqrt(2.0));
  return out;
}

// Lag-1 autocorrelation over the second half of the sample, skipping gaps.
inline double persistence(const Eigen::VectorXd& series) {
  const Eigen::Index T = series.size();
  const Eigen::Index lo = T / 2;
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index t = lo; t < T; ++t)
    if (!is_missing(series[t])) { sum += series[t]; ++n; }
  if (n < 4) throw input_error("second half too short for persistence");
  const double mean = sum / static_cast<double>(n);
  double denom = 0.0, numer = 0.0;
  Eigen::Index pairs = 0;
  for (Eigen::Index t = lo; t < T; ++t) {
    if (is_missing(series[t])) continue;
    denom += (series[t] - mean) * (series[t] - mean);
    if (t + 1 < T && !is_missing(series[t + 1])) {
      numer += (series[t] - mean) * (series[t + 1] - mean);
      ++pairs;
    }
  }
  if (pairs < 3) throw input_error("second half has fewer than 3 consecutive pairs");
  if (!(denom > 0.0)) throw numeric_error("second half is constant; persistence undefined");
  return numer / denom;
}

// ---------------------------------------------------------------------------
// Rolling evaluation.

struct ForecastRecord {
  Eigen::Index origin = 0;      // row of the forecast origin
  Eigen::Index target_row = 0;  // origin + h
  double err_a = 0.0;           // semiparametric model, standardized units
  double err_b = 0.0;           // benchmark
};

struct EvalCell {
  std::string target;
  int horizon = 0;
  double msfe_fk = 0.0;
  double msfe_fm = 0.0;
  double rmse_ratio = 0.0;
  double dm_stat = 0.0;
  double dm_pvalue = 1.0;
  double persist = 0.0;
  int P = 0;
  int skipped = 0;
  std::vector<ForecastRecord> records;
};

struct SubsampleCell {
  std::string label;
  Eigen::Index row_lo = 0, row_hi = 0;  // target rows in [lo, hi)
  std::string target;
  int horizon = 0;
  double msfe_fk = 0.0, msfe_fm = 0.0, rmse_ratio = 0.0;
  double dm_stat = 0.0, dm_pvalue = 1.0;
  int P = 0;
};

struct EvalReport {
  EvalConfig config;
  std::vector<std::string> dates;
  std::vector<EvalCell> cells;
  std::vector<SubsampleCell> subsamples;
  std::vector<std::string> skip_log;
};

inline std::vector<SubsampleCell> subsample_report(const EvalReport& report,
                                                   const std::vector<Eigen::Index>& bounds);

namespace detail {

inline void summarize_cell(EvalCell& cell) {
  const int P = static_cast<int>(cell.records.size());
  cell.P = P;
  if (P == 0) return;
  double sa = 0, sb = 0;
  Eigen::VectorXd ea(P), eb(P);
  for (int i = 0; i < P; ++i) {
    ea[i] = cell.records[static_cast<std::size_t>(i)].err_a;
    eb[i] = cell.records[static_cast<std::size_t>(i)].err_b;
    sa += ea[i] * ea[i];
    sb += eb[i] * eb[i];
  }
  cell.msfe_fk = sa / P;
  cell.msfe_fm = sb / P;
  cell.rmse_ratio = std::sqrt(cell.msfe_fk / cell.msfe_fm);
  if (P >= 10) {
    DmResult dm = dm_test(ea, eb, cell.horizon);
    cell.dm_stat = dm.stat;
    cell.dm_pvalue = dm.pvalue;
  } else {
    cell.dm_stat = missing_value();
    cell.dm_pvalue = missing_value();
  }
}

}  // namespace detail

// Recipe per origin t (last row of its window): standardize the window with
// its own moments, estimate factors on the window's predictor block, fit both
// models on the in-window pairs, forecast y at t+h, and score against the
// realized value standardized with the same window moments. Nothing after t
// ever enters the fit, so truncating the sample after t+h cannot change the
// forecast.
inline EvalReport rolling_evaluate(const RawPanel& panel, const EvalConfig& cfg) {
  const Eigen::Index T = panel.rows(), ncols = panel.cols();
  validate(cfg, T);
  const int W = cfg.window;
  const int hmin = *std::min_element(cfg.horizons.begin(), cfg.horizons.end());

  std::vector<Eigen::Index> target_ids;
  if (cfg.targets.empty()) {
    for (Eigen::Index j = 0; j < ncols; ++j) target_ids.push_back(j);
  } else {
    for (const auto& name : cfg.targets) {
      Eigen::Index id = -1;
      for (Eigen::Index j = 0; j < ncols; ++j)
        if (panel.names[static_cast<std::size_t>(j)] == name) id = j;
      if (id < 0) throw input_error("target series '" + name + "' not in the panel");
      target_ids.push_back(id);
    }
  }

  EvalReport report;
  report.config = cfg;
  report.dates = panel.dates;

  for (Eigen::Index ti : target_ids) {
    const std::string& tname = panel.names[static_cast<std::size_t>(ti)];
    const Eigen::Index N = cfg.exclude_target_from_panel ? ncols - 1 : ncols;
    if (N < 2) throw input_error("not enough predictor series");

    Eigen::MatrixXd M(T, 1 + N);  // target first, predictors after
    M.col(0) = panel.values.col(ti);
    Eigen::Index w = 1;
    for (Eigen::Index j = 0; j < ncols; ++j)
      if (!cfg.exclude_target_from_panel || j != ti) M.col(w++) = panel.values.col(j);

    double persist_val = missing_value();
    try {
      persist_val = persistence(panel.values.col(ti));
    } catch (const std::exception& e) {
      report.skip_log.push_back(tname + ": persistence unavailable (" + e.what() + ")");
    }

    std::vector<EvalCell> cells(cfg.horizons.size());
    for (std::size_t hi = 0; hi < cfg.horizons.size(); ++hi) {
      cells[hi].target = tname;
      cells[hi].horizon = cfg.horizons[hi];
      cells[hi].persist = persist_val;
    }

    for (Eigen::Index t = W; t + hmin <= T - 1; ++t) {  // window [t-W+1, t], forecast t+h
      const Eigen::Index lo = t - W + 1;

      bool window_ok = true;
      for (Eigen::Index s = lo; s <= t; ++s)
        if (is_missing(M(s, 0))) { window_ok = false; break; }
      if (!window_ok) {
        for (auto& c : cells)
          if (t + c.horizon <= T - 1) ++c.skipped;
        report.skip_log.push_back(tname + " @ " + panel.dates[static_cast<std::size_t>(t)] +
                                  ": target missing inside the window");
        continue;
      }

      Eigen::MatrixXd window = M.middleRows(lo, W);
      Eigen::MatrixXd std_win;
      StandardizationMoments mom;
      int k = 0;
      FactorModelFit fit;
      try {
        std::tie(std_win, mom) = window_standardize(window, Eigen::Index(0));
        const int k_cap = static_cast<int>(
            std::min<Eigen::Index>(cfg.k_max, std::min<Eigen::Index>(W, N) - 1));
        k = select_k_bai_ng(std_win.rightCols(N), k_cap).k;
        fit = extract_factors_pca(std_win.rightCols(N), k);
      } catch (const std::exception& e) {
        for (auto& c : cells)
          if (t + c.horizon <= T - 1) ++c.skipped;
        report.skip_log.push_back(tname + " @ " + panel.dates[static_cast<std::size_t>(t)] +
                                  ": " + e.what());
        continue;
      }
      const Eigen::VectorXd y_std = std_win.col(0);

      for (std::size_t hi = 0; hi < cfg.horizons.size(); ++hi) {
        const int h = cfg.horizons[hi];
        if (t + h > T - 1) continue;
        const double y_future_raw = M(t + h, 0);
        if (is_missing(y_future_raw)) {
          ++cells[hi].skipped;
          report.skip_log.push_back(tname + " @ " + panel.dates[static_cast<std::size_t>(t)] +
                                    " h=" + std::to_string(h) + ": realized value missing");
          continue;
        }
        const double y_future = (y_future_raw - mom.means[0]) / mom.stds[0];
        try {
          const double f_fm = fm_forecast(fit, y_std, h);
          double f_fk;
          if (cfg.self_compare) {
            f_fk = f_fm;
          } else {
            const Eigen::Index m = W - h;
            std::vector<Eigen::Index> pair_rows(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i) pair_rows[static_cast<std::size_t>(i)] = i;
            FactorKernel kern = build_factor_kernel(fit, pair_rows);
            SemiparametricFit gls = fk_fit_gls(kern, y_std.segment(h, m), y_std.head(m));
            const Eigen::VectorXd k_vec = kernel_cross(kern, fit.factors.row(W - 1).transpose());
            f_fk = fk_forecast(gls, k_vec, y_std[W - 1]);
          }
          cells[hi].records.push_back({t, t + h, f_fk - y_future, f_fm - y_future});
        } catch (const std::exception& e) {
          ++cells[hi].skipped;
          report.skip_log.push_back(tname + " @ " + panel.dates[static_cast<std::size_t>(t)] +
                                    " h=" + std::to_string(h) + ": " + e.what());
        }
      }
    }

    for (auto& c : cells) {
      detail::summarize_cell(c);
      report.cells.push_back(std::move(c));
    }
  }

  if (!cfg.subsample_breaks.empty()) {
    std::vector<Eigen::Index> bounds{0};
    for (Eigen::Index b : cfg.subsample_breaks) bounds.push_back(b);
    bounds.push_back(T);
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
    report.subsamples = subsample_report(report, bounds);
  }
  return report;
}

// Recompute the summary on records whose target dates land inside each period.
// `bounds` is the full sorted boundary list including 0 and T.
inline std::vector<SubsampleCell> subsample_report(const EvalReport& report,
                                                   const std::vector<Eigen::Index>& bounds) {
  if (bounds.size() < 2) throw input_error("need at least one period");
  std::vector<SubsampleCell> out;
  for (std::size_t p = 0; p + 1 < bounds.size(); ++p) {
    const Eigen::Index lo = bounds[p], hi = bounds[p + 1];
    for (const auto& cell : report.cells) {
      EvalCell slice;
      slice.target = cell.target;
      slice.horizon = cell.horizon;
      for (const auto& rec : cell.records)
        if (rec.target_row >= lo && rec.target_row < hi) slice.records.push_back(rec);
      if (slice.records.empty()) continue;  // empty period for this cell: omitted
      detail::summarize_cell(slice);
      SubsampleCell sc;
      sc.label = report.dates[static_cast<std::size_t>(lo)] + ".." +
                 report.dates[static_cast<std::size_t>(hi - 1)];
      sc.row_lo = lo;
      sc.row_hi = hi;
      sc.target = slice.target;
      sc.horizon = slice.horizon;
      sc.msfe_fk = slice.msfe_fk;
      sc.msfe_fm = slice.msfe_fm;
      sc.rmse_ratio = slice.rmse_ratio;
      sc.dm_stat = slice.dm_stat;
      sc.dm_pvalue = slice.dm_pvalue;
      sc.P = slice.P;
      out.push_back(std::move(sc));
    }
  }
  return out;
}

}  // namespace fklab
