#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fklab/csv.hpp"
#include "fklab/errors.hpp"

namespace fklab {

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double x) { return !std::isfinite(x); }

enum class Frequency { monthly, quarterly };

// A dated panel straight from disk (or mid-pipeline): values may be missing,
// each series carries its transformation code.
struct RawPanel {
  std::vector<std::string> dates;
  std::vector<std::string> names;
  std::vector<int> tcodes;
  Eigen::MatrixXd values;  // T x N, NaN = missing
  Frequency frequency = Frequency::monthly;
  std::vector<std::string> warnings;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Fully observed panel, ready for matrix work.
struct Panel {
  std::vector<std::string> dates;
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // T x N, all finite
  Frequency frequency = Frequency::monthly;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct StandardizationMoments {
  Eigen::VectorXd means;
  Eigen::VectorXd stds;     // sample std, 1/(n-1) divisor, strictly positive
  Eigen::VectorXd medians;  // imputation values (NaN on a non-imputed target column)
};

// Recognize YYYY-MM, YYYY-MM-DD, and M/D/YYYY period labels.
inline bool parse_date(const std::string& s, int& y, int& m, int& d) {
  y = m = 0;
  d = 1;
  if (std::sscanf(s.c_str(), "%d/%d/%d", &m, &d, &y) == 3 && y >= 1000) return m >= 1 && m <= 12;
  if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) == 3 && y >= 1000) return m >= 1 && m <= 12;
  d = 1;
  if (std::sscanf(s.c_str(), "%d-%d", &y, &m) == 2 && y >= 1000) return m >= 1 && m <= 12;
  return false;
}

// Sortable key for a period label: ISO form when the label parses as a date,
// the raw string otherwise.
inline std::string date_key(const std::string& s) {
  int y, m, d;
  if (!parse_date(s, y, m, d)) return s;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV layout: header row with a date column followed by series names, a second
// row of integer transformation codes (conventionally labeled "Transform:"),
// then one row per period. Blank cells are missing.
inline RawPanel parse_fred_csv(std::istream& in) {
  auto rows = read_csv_rows(in);
  if (rows.size() < 3) throw input_error("panel CSV needs a header, a transform row, and data rows");

  RawPanel p;
  const auto& header = rows[0];
  if (header.size() < 2) throw input_error("panel CSV header has no series columns");
  const std::size_t ncol = header.size();
  for (std::size_t j = 1; j < ncol; ++j) p.names.push_back(trim_ws(header[j]));

  const auto& trow = rows[1];
  if (trow.size() != ncol)
    throw input_error("transform row has " + std::to_string(trow.size()) + " cells, expected " + std::to_string(ncol));
  for (std::size_t j = 1; j < ncol; ++j) {
    const std::string cell = trim_ws(trow[j]);
    std::size_t pos = 0;
    int code = 0;
    try {
      code = std::stoi(cell, &pos);
    } catch (...) {
      throw input_error("non-integer transform code '" + cell + "' for series " + p.names[j - 1]);
    }
    if (pos != cell.size()) throw input_error("non-integer transform code '" + cell + "' for series " + p.names[j - 1]);
    if (code < 1 || code > 7) throw input_error("transform code " + std::to_string(code) + " out of range 1..7 for series " + p.names[j - 1]);
    p.tcodes.push_back(code);
  }
  // Accept any all-integer second row as the transform row, but note unusual labels.
  if (trim_ws(trow[0]) != "Transform:")
    p.warnings.push_back("transform row label is '" + trim_ws(trow[0]) + "', expected 'Transform:'");

  const std::size_t T = rows.size() - 2;
  p.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(ncol - 1));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& r = rows[t + 2];
    if (r.size() != ncol)
      throw input_error("data row " + std::to_string(t + 3) + " has " + std::to_string(r.size()) + " cells, expected " + std::to_string(ncol));
    p.dates.push_back(trim_ws(r[0]));
    for (std::size_t j = 1; j < ncol; ++j) {
      const std::string cell = trim_ws(r[j]);
      if (cell.empty() || cell == "NA" || cell == "NaN") {
        p.values(t, j - 1) = missing_value();
        continue;
      }
      try {
        std::size_t pos = 0;
        p.values(t, j - 1) = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (...) {
        throw input_error("unparseable value '" + cell + "' at row " + std::to_string(t + 3) + ", series " + p.names[j - 1]);
      }
    }
  }

  // Date sanity: when labels parse as calendar dates, require strict increase
  // and infer the frequency from the modal month gap; otherwise warn and keep
  // the monthly default.
  bool parseable = true;
  std::vector<int> months;
  for (const auto& ds : p.dates) {
    int y, m, d;
    if (!parse_date(ds, y, m, d)) {
      parseable = false;
      break;
    }
    months.push_back(12 * y + (m - 1));
  }
  if (parseable) {
    std::vector<int> gaps;
    for (std::size_t t = 1; t < months.size(); ++t) {
      if (months[t] <= months[t - 1])
        throw input_error("dates not strictly increasing at row " + std::to_string(t + 3) + " (" + p.dates[t] + ")");
      gaps.push_back(months[t] - months[t - 1]);
    }
    if (!gaps.empty()) {
      const int gap0 = gaps.front();
      if (gap0 == 3) p.frequency = Frequency::quarterly;
      for (int g : gaps)
        if (g != gap0) {
          p.warnings.push_back("non-uniform period spacing in the date column");
          break;
        }
    }
  } else {
    p.warnings.push_back("unrecognized date format; assuming monthly frequency");
  }
  return p;
}

// Leading observations a transformation consumes: levels/logs lose none,
// first differences lose one, second differences (and the growth-rate change
// of code 7) lose two.
inline int transform_loss(int code) {
  switch (code) {
    case 1: case 4: return 0;
    case 2: case 5: return 1;
    case 3: case 6: case 7: return 2;
    default: throw input_error("transform code " + std::to_string(code) + " out of range 1..7");
  }
}

// The seven standard transformation codes:
//   1 level          2 first difference       3 second difference
//   4 log            5 log first difference   6 log second difference
//   7 change in simple growth rate, delta(x_t/x_{t-1} - 1)
inline Eigen::VectorXd apply_tcode(const Eigen::VectorXd& x, int code) {
  const Eigen::Index T = x.size();
  Eigen::VectorXd out = Eigen::VectorXd::Constant(T, missing_value());
  auto ok = [&](Eigen::Index t) { return t >= 0 && !is_missing(x[t]); };
  auto logok = [&](Eigen::Index t) {
    if (!ok(t)) return false;
    if (x[t] <= 0.0)
      throw input_error("log transform requires positive values; got " + std::to_string(x[t]) + " at index " + std::to_string(t));
    return true;
  };
  switch (code) {
    case 1:
      return x;
    case 2:
      for (Eigen::Index t = 1; t < T; ++t)
        if (ok(t) && ok(t - 1)) out[t] = x[t] - x[t - 1];
      break;
    case 3:
      for (Eigen::Index t = 2; t < T; ++t)
        if (ok(t) && ok(t - 1) && ok(t - 2)) out[t] = x[t] - 2 * x[t - 1] + x[t - 2];
      break;
    case 4:
      for (Eigen::Index t = 0; t < T; ++t)
        if (logok(t)) out[t] = std::log(x[t]);
      break;
    case 5:
      for (Eigen::Index t = 1; t < T; ++t)
        if (logok(t) && logok(t - 1)) out[t] = std::log(x[t]) - std::log(x[t - 1]);
      break;
    case 6:
      for (Eigen::Index t = 2; t < T; ++t)
        if (logok(t) && logok(t - 1) && logok(t - 2))
          out[t] = std::log(x[t]) - 2 * std::log(x[t - 1]) + std::log(x[t - 2]);
      break;
    case 7:
      for (Eigen::Index t = 2; t < T; ++t)
        if (ok(t) && ok(t - 1) && ok(t - 2) && x[t - 1] != 0.0 && x[t - 2] != 0.0) {
          const double g1 = x[t] / x[t - 1] - 1.0;
          const double g0 = x[t - 1] / x[t - 2] - 1.0;
          out[t] = g1 - g0;
        }
      break;
    default:
      throw input_error("transform code " + std::to_string(code) + " out of range 1..7");
  }
  return out;
}

inline RawPanel apply_tcodes(const RawPanel& p) {
  RawPanel out = p;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    try {
      out.values.col(j) = apply_tcode(p.values.col(j), p.tcodes[static_cast<std::size_t>(j)]);
    } catch (const input_error& e) {
      throw input_error(std::string(e.what()) + " (series " + p.names[static_cast<std::size_t>(j)] + ")");
    }
  }
  return out;
}

// Drop series whose missing fraction exceeds max_frac. The count ignores the
// leading rows each series' own transformation consumes, so a fully observed
// differenced series is 0% missing.
inline RawPanel filter_missing(const RawPanel& p, double max_frac) {
  if (max_frac < 0.0 || max_frac > 1.0) throw input_error("missing fraction threshold must lie in [0,1]");
  std::vector<std::size_t> keep;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const int loss = transform_loss(p.tcodes[static_cast<std::size_t>(j)]);
    const Eigen::Index from = std::min<Eigen::Index>(loss, p.rows());
    Eigen::Index miss = 0;
    for (Eigen::Index t = from; t < p.rows(); ++t)
      if (is_missing(p.values(t, j))) ++miss;
    const Eigen::Index denom = p.rows() - from;
    const double frac = denom > 0 ? static_cast<double>(miss) / static_cast<double>(denom) : 1.0;
    if (frac <= max_frac) keep.push_back(static_cast<std::size_t>(j));
  }
  if (keep.empty()) throw input_error("missing-data filter removed every series");
  RawPanel out;
  out.dates = p.dates;
  out.frequency = p.frequency;
  out.warnings = p.warnings;
  out.values.resize(p.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.names.push_back(p.names[keep[i]]);
    out.tcodes.push_back(p.tcodes[keep[i]]);
    out.values.col(static_cast<Eigen::Index>(i)) = p.values.col(static_cast<Eigen::Index>(keep[i]));
  }
  return out;
}

// Remove the leading rows consumed by the heaviest transformation still present.
inline RawPanel trim_transform_rows(const RawPanel& p) {
  int loss = 0;
  for (int c : p.tcodes) loss = std::max(loss, transform_loss(c));
  if (loss == 0 || p.rows() <= loss) return p;
  RawPanel out = p;
  out.values = p.values.bottomRows(p.rows() - loss).eval();
  out.dates.assign(p.dates.begin() + loss, p.dates.end());
  return out;
}

// Median of the non-missing entries of a column.
inline double column_median(const Eigen::VectorXd& col) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(col.size()));
  for (Eigen::Index t = 0; t < col.size(); ++t)
    if (!is_missing(col[t])) v.push_back(col[t]);
  if (v.empty()) return missing_value();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Standardize one window. Predictor columns are median-imputed on this window
// first, then centered and scaled by the window's own moments. The target
// column (if given) is never imputed: its moments come from the observed
// entries and missing values stay missing for the caller to detect.
inline std::pair<Eigen::MatrixXd, StandardizationMoments> window_standardize(
    const Eigen::MatrixXd& window, std::optional<Eigen::Index> target_col = std::nullopt) {
  const Eigen::Index T = window.rows(), N = window.cols();
  Eigen::MatrixXd out = window;
  StandardizationMoments mom;
  mom.means.resize(N);
  mom.stds.resize(N);
  mom.medians.setConstant(N, missing_value());
  for (Eigen::Index j = 0; j < N; ++j) {
    const bool is_target = target_col && *target_col == j;
    if (!is_target) {
      const double med = column_median(out.col(j));
      if (is_missing(med)) throw input_error("window column " + std::to_string(j) + " has no observed values");
      mom.medians[j] = med;
      for (Eigen::Index t = 0; t < T; ++t)
        if (is_missing(out(t, j))) out(t, j) = med;
    }
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index t = 0; t < T; ++t)
      if (!is_missing(out(t, j))) { sum += out(t, j); ++n; }
    if (n < 2) throw input_error("window column " + std::to_string(j) + " has fewer than 2 observed values");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t)
      if (!is_missing(out(t, j))) ss += (out(t, j) - mean) * (out(t, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw input_error("window column " + std::to_string(j) + " is degenerate (zero variance)");
    for (Eigen::Index t = 0; t < T; ++t)
      if (!is_missing(out(t, j))) out(t, j) = (out(t, j) - mean) / sd;
    mom.means[j] = mean;
    mom.stds[j] = sd;
  }
  return {std::move(out), std::move(mom)};
}

// Standardize rows outside the window with the window's own moments: missing
// predictor entries take the window median; a target column keeps its gaps.
inline Eigen::MatrixXd standardize_with(const Eigen::MatrixXd& rows, const StandardizationMoments& mom,
                                        std::optional<Eigen::Index> target_col = std::nullopt) {
  if (rows.cols() != mom.means.size()) throw input_error("moment vector width does not match data");
  Eigen::MatrixXd out = rows;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const bool is_target = target_col && *target_col == j;
    for (Eigen::Index t = 0; t < out.rows(); ++t) {
      if (is_missing(out(t, j))) {
        if (is_target) continue;
        out(t, j) = mom.medians[j];
      }
      out(t, j) = (out(t, j) - mom.means[j]) / mom.stds[j];
    }
  }
  return out;
}

inline Panel to_panel(const RawPanel& p) {
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (is_missing(p.values(t, j)))
        throw input_error("panel still has a missing value at row " + std::to_string(t) + ", series " + p.names[static_cast<std::size_t>(j)]);
  return Panel{p.dates, p.names, p.values, p.frequency};
}

// Gap fill for whole-sample diagnostics (spectra only; the rolling harness
// imputes per window instead).
inline Panel impute_column_medians(const RawPanel& p) {
  Eigen::MatrixXd vals = p.values;
  for (Eigen::Index j = 0; j < vals.cols(); ++j) {
    const double med = column_median(vals.col(j));
    if (is_missing(med))
      throw input_error("series " + p.names[static_cast<std::size_t>(j)] + " has no observations");
    for (Eigen::Index t = 0; t < vals.rows(); ++t)
      if (is_missing(vals(t, j))) vals(t, j) = med;
  }
  return Panel{p.dates, p.names, vals, p.frequency};
}

inline std::vector<std::string> synthetic_dates(Eigen::Index T) {
  std::vector<std::string> d;
  d.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) d.push_back("t" + std::to_string(t + 1));
  return d;
}

template <typename PanelLike>
inline void write_panel_csv(std::ostream& os, const PanelLike& p, const std::vector<int>* tcodes = nullptr) {
  os << "date";
  for (const auto& n : p.names) os << ',' << n;
  os << '\n';
  if (tcodes) {
    os << "Transform:";
    for (int c : *tcodes) os << ',' << c;
    os << '\n';
  }
  for (Eigen::Index t = 0; t < p.values.rows(); ++t) {
    os << p.dates[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < p.values.cols(); ++j) {
      os << ',';
      if (!is_missing(p.values(t, j))) os << format_num(p.values(t, j));
    }
    os << '\n';
  }
}

}  // namespace fklab
