// Command-line front end: ingest raw macro panels, run spectrum diagnostics,
// sweep double-descent curves, and evaluate rolling forecasts. Every command
// writes its outputs plus a manifest.json that echoes the full configuration,
// so a run can be reproduced from its output directory alone.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fklab/csv.hpp"
#include "fklab/errors.hpp"
#include "fklab/factors.hpp"
#include "fklab/forecast.hpp"
#include "fklab/panel.hpp"
#include "fklab/ridgeless.hpp"
#include "fklab/spectral.hpp"
#include "fklab/svg.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.3.0";

// exit codes
constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNumericError = 2;
constexpr int kPartial = 3;

struct CommonOpts {
  std::string input;
  std::string out;
  std::uint64_t seed = 17;
};

fklab::RawPanel load_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fklab::input_error("cannot open input file: " + path);
  return fklab::parse_fred_csv(in);
}

struct CleanResult {
  fklab::RawPanel panel;
  std::vector<std::string> dropped;
};

// Full ingestion pipeline. Already-clean files (transform codes all 1, no
// gaps) pass through unchanged, so every command accepts either raw or
// previously ingested CSVs.
CleanResult load_clean(const std::string& path, double max_missing) {
  fklab::RawPanel raw = load_raw(path);
  fklab::RawPanel transformed = apply_tcodes(raw);
  fklab::RawPanel kept = filter_missing(transformed, max_missing);
  CleanResult res;
  std::set<std::string> left(kept.names.begin(), kept.names.end());
  for (const auto& n : raw.names)
    if (!left.count(n)) res.dropped.push_back(n);
  res.panel = trim_transform_rows(kept);
  return res;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw fklab::input_error("cannot write " + path.string());
  os << text;
}

// Manifest with enough to rerun the command: program version, command name,
// inputs, the full flag set, and the list of files produced.
void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "fklab";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json common_json(const CommonOpts& c) {
  return json{{"input", c.input}, {"out", c.out}, {"seed", c.seed}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const CommonOpts& common, double max_missing) {
  fklab::RawPanel raw = load_raw(common.input);
  CleanResult clean = load_clean(common.input, max_missing);
  const fs::path dir(common.out);
  fs::create_directories(dir);

  {
    std::ofstream os(dir / "panel.csv", std::ios::binary);
    std::vector<int> ones(clean.panel.names.size(), 1);  // already transformed
    fklab::write_panel_csv(os, clean.panel, &ones);
  }

  json summary;
  summary["rows_in"] = raw.rows();
  summary["series_in"] = raw.cols();
  summary["rows_out"] = clean.panel.rows();
  summary["series_out"] = clean.panel.cols();
  summary["dropped_series"] = clean.dropped;
  summary["max_missing_fraction"] = max_missing;
  summary["frequency"] = clean.panel.frequency == fklab::Frequency::monthly ? "monthly" : "quarterly";
  if (!clean.panel.dates.empty()) {
    summary["first_date"] = clean.panel.dates.front();
    summary["last_date"] = clean.panel.dates.back();
  }
  summary["warnings"] = clean.panel.warnings;
  write_text(dir / "ingest.json", summary.dump(2) + "\n");

  json cfg = common_json(common);
  cfg["max_missing"] = max_missing;
  write_manifest(dir, "ingest", cfg, {"panel.csv", "ingest.json"});
  std::cout << "ingest: kept " << clean.panel.cols() << "/" << raw.cols() << " series, "
            << clean.panel.rows() << " rows; dropped " << clean.dropped.size() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_diagnose(const CommonOpts& common, double b_const, int k_hill, int k_max,
                 double max_missing) {
  CleanResult clean = load_clean(common.input, max_missing);
  fklab::Panel panel = fklab::impute_column_medians(clean.panel);
  const int T = static_cast<int>(panel.rows());
  const fs::path dir(common.out);
  fs::create_directories(dir);

  Eigen::MatrixXd std_vals = fklab::window_standardize(panel.values).first;
  Eigen::VectorXd eigs = fklab::drop_negligible(fklab::gram_eigenvalues(std_vals));

  // split indices for a bracket of b values around the requested one
  const std::vector<double> b_grid{0.5 * b_const, b_const, 2.0 * b_const};
  std::vector<int> k_grid{0};
  std::string split_csv = "b,k_star\n";
  for (double b : b_grid) {
    auto k = fklab::split_index(eigs, T, b);
    split_csv += fklab::format_num(b) + ",";
    if (k) {
      split_csv += std::to_string(*k);
      if (std::find(k_grid.begin(), k_grid.end(), *k) == k_grid.end()) k_grid.push_back(*k);
    }
    split_csv += "\n";
  }
  std::sort(k_grid.begin(), k_grid.end());
  write_text(dir / "split_indices.csv", split_csv);

  auto rows = fklab::tail_table(panel, k_grid, k_hill);
  std::string table = "k,r_k,R_k,T_over_R,C,hill_alpha,logrank_alpha,note\n";
  for (const auto& row : rows) {
    table += std::to_string(row.k) + ",";
    if (row.skipped) {
      table += ",,,,,," + row.note + "\n";
      continue;
    }
    table += fklab::format_num(row.r_k) + "," + fklab::format_num(row.R_k) + "," +
             fklab::format_num(row.t_over_R) + "," + fklab::format_num(row.concentration) + "," +
             fklab::format_num(row.hill_alpha) + "," + fklab::format_num(row.logrank_alpha) + "," +
             row.note + "\n";
  }
  write_text(dir / "tail_table.csv", table);

  fklab::SpectrumDiagnostics diag = fklab::diagnose_spectrum(eigs, T, b_const, k_hill);
  fklab::BaiNgSelection sel = fklab::select_k_bai_ng(std_vals, k_max);

  json dj;
  dj["T"] = T;
  dj["N"] = panel.cols();
  dj["k_star"] = diag.k_star ? json(*diag.k_star) : json(nullptr);
  dj["r0"] = diag.r0;
  dj["r_k"] = diag.r_k;
  dj["R_k"] = diag.R_k;
  dj["concentration_C"] = diag.concentration_C;
  dj["flatness"] = diag.flatness;
  dj["ratios"] = {diag.bllt_ratios[0], diag.bllt_ratios[1], diag.bllt_ratios[2]};
  dj["tail_case"] = fklab::theorem_case_name(diag.theorem_case);
  dj["hill_alpha"] = diag.hill_alpha;
  dj["logrank_alpha"] = diag.logrank_alpha;
  dj["k_bai_ng"] = sel.k;
  dj["exact_fit"] = sel.exact_fit;
  write_text(dir / "diagnostics.json", dj.dump(2) + "\n");

  std::string spec_csv = "index,eigenvalue\n";
  std::vector<double> xs, ys;
  for (Eigen::Index j = 0; j < eigs.size(); ++j) {
    spec_csv += std::to_string(j + 1) + "," + fklab::format_num(eigs[j]) + "\n";
    xs.push_back(static_cast<double>(j + 1));
    ys.push_back(std::log10(eigs[j]));
  }
  write_text(dir / "spectrum.csv", spec_csv);

  fklab::LinePlot plot("Eigenvalue spectrum", "rank", "log10 eigenvalue");
  plot.add_series(xs, ys, "#1f77b4", "spectrum");
  if (diag.k_star) plot.add_vline(*diag.k_star + 1.0, "#d62728", "k*");
  std::ostringstream svg;
  plot.render(svg);
  write_text(dir / "spectrum.svg", svg.str());

  json cfg = common_json(common);
  cfg["b_const"] = b_const;
  cfg["khill"] = k_hill;
  cfg["kmax"] = k_max;
  cfg["max_missing"] = max_missing;
  write_manifest(dir, "diagnose", cfg,
                 {"split_indices.csv", "tail_table.csv", "diagnostics.json", "spectrum.csv",
                  "spectrum.svg"});
  std::cout << "diagnose: T=" << T << " N=" << panel.cols() << " k*="
            << (diag.k_star ? std::to_string(*diag.k_star) : std::string("none")) << " case "
            << fklab::theorem_case_name(diag.theorem_case) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_sweep(const CommonOpts& common, const std::string& target, int horizon,
              std::vector<int> b_grid, int k_factors, int k_max, double max_missing) {
  CleanResult clean = load_clean(common.input, max_missing);
  if (target.empty()) throw fklab::input_error("sweep needs --target");

  fklab::SweepConfig cfg;
  cfg.horizon = horizon;
  if (!b_grid.empty()) cfg.b_grid = std::move(b_grid);
  cfg.seed = common.seed;
  cfg.k_factors = k_factors;
  cfg.k_max = k_max;
  fklab::DoubleDescentCurve curve = fklab::sweep_double_descent(clean.panel, target, cfg);

  const fs::path dir(common.out);
  fs::create_directories(dir);
  std::string csv = "branch,n_eff,msfe,unstable\n";
  std::vector<double> pc_x, pc_y, aug_x, aug_y;
  for (const auto& pt : curve.points) {
    const bool pc = pt.branch == fklab::SweepBranch::pc_path;
    // the fit at the interpolation threshold rides the tolerance fallback
    const bool unstable = pt.n_eff == curve.interpolation_threshold;
    csv += std::string(pc ? "pc" : "augment") + "," + std::to_string(pt.n_eff) + "," +
           fklab::format_num(pt.msfe) + "," + (unstable ? "1" : "0") + "\n";
    (pc ? pc_x : aug_x).push_back(pt.n_eff);
    (pc ? pc_y : aug_y).push_back(pt.msfe);
  }
  write_text(dir / "curve.csv", csv);

  json meta;
  meta["target"] = target;
  meta["ar1_baseline"] = curve.ar1_baseline;
  meta["kernel_asymptote"] = curve.kernel_asymptote;
  meta["interpolation_threshold"] = curve.interpolation_threshold;
  write_text(dir / "curve_meta.json", meta.dump(2) + "\n");

  fklab::LinePlot plot("Out-of-sample MSFE vs model size: " + target, "effective regressors",
                       "MSFE");
  plot.log_x(true);
  if (!pc_x.empty()) plot.add_series(pc_x, pc_y, "#1f77b4", "pc path");
  if (!aug_x.empty()) plot.add_series(aug_x, aug_y, "#ff7f0e", "augment path");
  plot.add_vline(curve.interpolation_threshold, "#d62728", "interpolation");
  plot.add_hline(curve.ar1_baseline, "#7f7f7f", "AR(1)");
  plot.add_hline(curve.kernel_asymptote, "#2ca02c", "kernel limit");
  std::ostringstream svg;
  plot.render(svg);
  write_text(dir / "curve.svg", svg.str());

  json cj = common_json(common);
  cj["target"] = target;
  cj["horizon"] = horizon;
  cj["b_grid"] = cfg.b_grid;
  cj["kfactors"] = k_factors;
  cj["kmax"] = k_max;
  cj["max_missing"] = max_missing;
  write_manifest(dir, "sweep", cj, {"curve.csv", "curve_meta.json", "curve.svg"});
  std::cout << "sweep: " << curve.points.size() << " curve points, threshold at "
            << curve.interpolation_threshold << ", kernel limit "
            << fklab::format_num(curve.kernel_asymptote) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

std::string cell_csv_header() {
  return "target,horizon,P,skipped,msfe_fk,msfe_fm,rmse_ratio,dm_stat,dm_pvalue,persistence\n";
}

std::string cell_csv_row(const fklab::EvalCell& c) {
  return c.target + "," + std::to_string(c.horizon) + "," + std::to_string(c.P) + "," +
         std::to_string(c.skipped) + "," + fklab::format_num(c.msfe_fk) + "," +
         fklab::format_num(c.msfe_fm) + "," + fklab::format_num(c.rmse_ratio) + "," +
         fklab::format_num(c.dm_stat) + "," + fklab::format_num(c.dm_pvalue) + "," +
         fklab::format_num(c.persist) + "\n";
}

int cmd_evaluate(const CommonOpts& common, int window, std::vector<int> horizons, int k_max,
                 const std::vector<std::string>& targets, const std::string& subsamples,
                 bool self_compare, double max_missing) {
  CleanResult clean = load_clean(common.input, max_missing);
  const fklab::RawPanel& panel = clean.panel;

  fklab::EvalConfig cfg;
  cfg.window = window > 0 ? window : (panel.frequency == fklab::Frequency::monthly ? 120 : 40);
  if (!horizons.empty()) cfg.horizons = std::move(horizons);
  cfg.k_max = k_max;
  cfg.targets = targets;
  cfg.self_compare = self_compare;
  for (const auto& brk : split_list(subsamples)) {
    // a break names the first date of a new period; accept a bare row index too
    Eigen::Index row = -1;
    try {
      std::size_t pos = 0;
      const long idx = std::stol(brk, &pos);
      if (pos == brk.size()) row = static_cast<Eigen::Index>(idx);
    } catch (...) {
    }
    if (row < 0) {
      const std::string key = fklab::date_key(brk);
      for (std::size_t t = 0; t < panel.dates.size(); ++t)
        if (fklab::date_key(panel.dates[t]) >= key) {
          row = static_cast<Eigen::Index>(t);
          break;
        }
      if (row < 0) throw fklab::input_error("subsample break beyond the sample: " + brk);
    }
    cfg.subsample_breaks.push_back(row);
  }

  fklab::EvalReport report = fklab::rolling_evaluate(panel, cfg);

  const fs::path dir(common.out);
  fs::create_directories(dir);

  std::string cells = cell_csv_header();
  for (const auto& c : report.cells) cells += cell_csv_row(c);
  write_text(dir / "cells.csv", cells);

  std::string subs = "period,target,horizon,P,msfe_fk,msfe_fm,rmse_ratio,dm_stat,dm_pvalue\n";
  for (const auto& s : report.subsamples)
    subs += s.label + "," + s.target + "," + std::to_string(s.horizon) + "," + std::to_string(s.P) +
            "," + fklab::format_num(s.msfe_fk) + "," + fklab::format_num(s.msfe_fm) + "," +
            fklab::format_num(s.rmse_ratio) + "," + fklab::format_num(s.dm_stat) + "," +
            fklab::format_num(s.dm_pvalue) + "\n";
  write_text(dir / "subsamples.csv", subs);

  std::string recs = "target,horizon,origin_date,target_date,err_fk,err_fm\n";
  for (const auto& c : report.cells)
    for (const auto& r : c.records)
      recs += c.target + "," + std::to_string(c.horizon) + "," +
              report.dates[static_cast<std::size_t>(r.origin)] + "," +
              report.dates[static_cast<std::size_t>(r.target_row)] + "," +
              fklab::format_num(r.err_a) + "," + fklab::format_num(r.err_b) + "\n";
  write_text(dir / "records.csv", recs);

  // figure data: ratio histogram input and persistence scatter, one row per
  // (target, horizon) cell with forecasts
  std::string fig = "target,horizon,rmse_ratio,persistence,dm_pvalue\n";
  for (const auto& c : report.cells) {
    if (c.P == 0) continue;
    fig += c.target + "," + std::to_string(c.horizon) + "," + fklab::format_num(c.rmse_ratio) +
           "," + fklab::format_num(c.persist) + "," + fklab::format_num(c.dm_pvalue) + "\n";
  }
  write_text(dir / "ratio_table.csv", fig);

  std::vector<std::string> outputs{"cells.csv", "subsamples.csv", "records.csv",
                                   "ratio_table.csv", "summary.json"};

  // per-horizon win fraction and mean ratio; the headline comparison numbers
  json summary;
  json by_h = json::array();
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  int color_i = 0;
  for (int h : cfg.horizons) {
    std::vector<double> ratios, persists;
    int wins = 0, n = 0;
    for (const auto& c : report.cells) {
      if (c.horizon != h || c.P == 0) continue;
      ratios.push_back(c.rmse_ratio);
      persists.push_back(c.persist);
      ++n;
      if (c.rmse_ratio < 1.0) ++wins;
    }
    json row;
    row["horizon"] = h;
    row["cells"] = n;
    row["win_fraction"] = n ? static_cast<double>(wins) / n : 0.0;
    row["mean_ratio"] = n ? std::accumulate(ratios.begin(), ratios.end(), 0.0) / n : 0.0;
    by_h.push_back(row);

    if (n >= 2) {
      // histogram of ratios as a step outline
      const double lo = *std::min_element(ratios.begin(), ratios.end());
      const double hi = *std::max_element(ratios.begin(), ratios.end());
      const int nbins = std::max(5, n / 8);
      const double width = (hi - lo) > 0 ? (hi - lo) / nbins : 1.0;
      std::vector<double> bx(nbins), by(nbins, 0.0);
      for (int bi = 0; bi < nbins; ++bi) bx[bi] = lo + (bi + 0.5) * width;
      for (double r : ratios) {
        int bi = std::min(nbins - 1, static_cast<int>((r - lo) / width));
        by[bi] += 1.0;
      }
      fklab::LinePlot hist("RMSE ratio distribution, h=" + std::to_string(h), "RMSE ratio",
                           "count");
      hist.add_series(bx, by, colors[color_i % 6], "h=" + std::to_string(h));
      hist.add_vline(1.0, "#d62728", "parity");
      std::ostringstream hsvg;
      hist.render(hsvg);
      const std::string hname = "ratio_hist_h" + std::to_string(h) + ".svg";
      write_text(dir / hname, hsvg.str());
      outputs.push_back(hname);

      fklab::LinePlot scat("Relative accuracy vs persistence, h=" + std::to_string(h),
                           "target persistence", "RMSE ratio");
      scat.add_points(persists, ratios, colors[color_i % 6], "h=" + std::to_string(h));
      scat.add_hline(1.0, "#d62728", "parity");
      std::ostringstream ssvg;
      scat.render(ssvg);
      const std::string sname = "persistence_scatter_h" + std::to_string(h) + ".svg";
      write_text(dir / sname, ssvg.str());
      outputs.push_back(sname);
    }
    ++color_i;
  }
  summary["by_horizon"] = by_h;
  summary["skipped_origins"] = report.skip_log.size();
  summary["self_compare"] = cfg.self_compare;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::string skips;
  for (const auto& s : report.skip_log) skips += s + "\n";
  write_text(dir / "skip_log.txt", skips);
  outputs.push_back("skip_log.txt");

  json cj = common_json(common);
  cj["window"] = cfg.window;
  cj["horizons"] = cfg.horizons;
  cj["kmax"] = cfg.k_max;
  cj["target"] = cfg.targets;
  cj["subsamples"] = subsamples;
  cj["self_compare"] = self_compare;
  cj["max_missing"] = max_missing;
  write_manifest(dir, "evaluate", cj, outputs);

  for (const auto& row : by_h)
    std::cout << "evaluate h=" << row["horizon"] << ": " << row["cells"] << " targets, win "
              << fklab::format_num(row["win_fraction"].get<double>()) << ", mean ratio "
              << fklab::format_num(row["mean_ratio"].get<double>()) << "\n";

  bool any_skip = !report.skip_log.empty();
  for (const auto& c : report.cells) any_skip = any_skip || c.skipped > 0 || c.P == 0;
  return any_skip ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factor-kernel lab: panel ingestion, spectrum diagnostics, double-descent sweeps, rolling forecast evaluation"};
  app.set_config("--config", "", "read flags from a config file");
  app.require_subcommand(0, 1);

  CommonOpts common;
  bool self_test = false;
  double max_missing = 0.2;
  app.add_flag("--self-test", self_test, "run the built-in acceptance checks and exit");
  app.add_option("--input", common.input, "input panel CSV");
  app.add_option("--out", common.out, "output directory");
  app.add_option("--seed", common.seed, "seed recorded with every stochastic run");
  app.add_option("--max-missing", max_missing, "drop series with a higher missing fraction");

  auto* ingest = app.add_subcommand("ingest", "parse, transform, and clean a raw panel");

  double b_const = 1.0;
  int k_hill = 20, k_max = 20;
  auto* diagnose = app.add_subcommand("diagnose", "spectrum diagnostics and tail table");
  diagnose->add_option("--b-const", b_const, "split-index constant b (tail rank >= b*T)");
  diagnose->add_option("--khill", k_hill, "Hill order-statistic count");
  diagnose->add_option("--kmax", k_max, "max factor count for the information criterion");

  std::string target;
  int horizon = 1, k_factors = 0;
  std::vector<int> b_grid;
  auto* sweep = app.add_subcommand("sweep", "double-descent curve for one target");
  sweep->add_option("--target", target, "target series name")->required();
  sweep->add_option("--horizon", horizon, "forecast horizon");
  sweep->add_option("--b-grid", b_grid, "synthetic copy counts for the augment path")
      ->delimiter(',');
  sweep->add_option("--kfactors", k_factors, "augmentation factor count (0: information criterion)");
  sweep->add_option("--kmax", k_max, "max factor count for the information criterion");

  int window = 0;
  std::vector<int> horizons;
  std::vector<std::string> targets;
  std::string subsamples;
  bool self_compare = false;
  auto* evaluate = app.add_subcommand("evaluate", "rolling out-of-sample comparison");
  evaluate->add_option("--window", window, "rolling window length (default 120 monthly, 40 quarterly)");
  evaluate->add_option("--horizons", horizons, "forecast horizons")->delimiter(',');
  evaluate->add_option("--kmax", k_max, "max factor count for the information criterion");
  evaluate->add_option("--target", targets, "target series (default: all)")->delimiter(',');
  evaluate->add_option("--subsamples", subsamples, "comma-separated period start dates or row indices");
  evaluate->add_flag("--self-compare", self_compare, "benchmark the baseline against itself");

  CLI11_PARSE(app, argc, argv);

  try {
    if (self_test) {
      fklab::selftest::Options opt;
      opt.panel_csv = common.input;
      auto results = fklab::selftest::run_all(opt, std::cout);
      for (const auto& r : results)
        if (!r.pass) return kInputError;
      return kOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help() << "\n";
      return kInputError;
    }
    if (common.input.empty()) throw fklab::input_error("--input is required");
    if (common.out.empty()) throw fklab::input_error("--out is required");

    if (ingest->parsed()) return cmd_ingest(common, max_missing);
    if (diagnose->parsed()) return cmd_diagnose(common, b_const, k_hill, k_max, max_missing);
    if (sweep->parsed())
      return cmd_sweep(common, target, horizon, b_grid, k_factors, k_max, max_missing);
    if (evaluate->parsed())
      return cmd_evaluate(common, window, horizons, k_max, targets, subsamples, self_compare,
                          max_missing);
    std::cerr << app.help() << "\n";
    return kInputError;
  } catch (const fklab::input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const fklab::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericError;
  }
}
