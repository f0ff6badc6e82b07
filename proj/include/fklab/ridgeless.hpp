#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fklab/errors.hpp"
#include "fklab/factors.hpp"
#include "fklab/kernel.hpp"
#include "fklab/panel.hpp"

namespace fklab {

enum class Regime { under, interpolation, over };

struct RidgelessFit {
  Eigen::VectorXd coefficients;
  Regime regime = Regime::under;
  double rank_tolerance = 0.0;  // singular values at or below this count as zero
  int rank = 0;
  bool pinv_fallback = false;  // closed-form branch was rank-deficient
};

// Minimum-norm least squares: OLS below the interpolation threshold, the exact
// interpolant of smallest Euclidean norm at or above it. The closed-form
// branches assume the nominal full rank for the regime; when the data violates
// that numerically we drop to a tolerance-thresholded pseudoinverse and flag it.
inline RidgelessFit fit_min_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index T = X.rows(), P = X.cols();
  if (T < 1 || P < 1 || X.norm() == 0.0) throw input_error("design matrix is empty or zero");
  if (y.size() != T) throw input_error("target length does not match row count");

  RidgelessFit fit;
  fit.regime = P < T ? Regime::under : P == T ? Regime::interpolation : Regime::over;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  fit.rank_tolerance = static_cast<double>(std::max(T, P)) * std::numeric_limits<double>::epsilon() * s[0];
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > fit.rank_tolerance) ++rank;
  fit.rank = static_cast<int>(rank);

  if (rank == std::min(T, P)) {
    if (P < T) {
      fit.coefficients = (X.transpose() * X).llt().solve(X.transpose() * y);
    } else if (P == T) {
      fit.coefficients = X.partialPivLu().solve(y);
    } else {
      fit.coefficients = X.transpose() * (X * X.transpose()).llt().solve(y);
    }
    if (fit.coefficients.allFinite()) return fit;
  }
  fit.pinv_fallback = true;
  Eigen::VectorXd uty = svd.matrixU().leftCols(rank).transpose() * y;
  uty.array() /= s.head(rank).array();
  fit.coefficients = svd.matrixV().leftCols(rank) * uty;
  return fit;
}

inline Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index T = X.rows(), P = X.cols();
  if (lambda < 0.0) throw input_error("ridge penalty must be nonnegative");
  if (y.size() != T) throw input_error("target length does not match row count");
  if (lambda == 0.0) {
    if (P > T) throw numeric_error("normal equations singular at zero penalty; use fit_min_norm");
    if (P < 1) throw input_error("design matrix is empty or zero");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(X.transpose() * X);
    // LDLT::solve applies a pseudoinverse of D, so rank loss has to be read off
    // the pivots rather than rcond()
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || dmax <= 0.0 ||
        d.minCoeff() <= static_cast<double>(P) * std::numeric_limits<double>::epsilon() * dmax)
      throw numeric_error("normal equations singular at zero penalty; use fit_min_norm");
    return ldlt.solve(X.transpose() * y);
  }
  if (P <= T) {
    Eigen::MatrixXd m = X.transpose() * X;
    m.diagonal().array() += lambda;
    return m.llt().solve(X.transpose() * y);
  }
  // dual identity (X'X + lI)^{-1}X' = X'(XX' + lI)^{-1} keeps the solve T x T
  Eigen::MatrixXd m = X * X.transpose();
  m.diagonal().array() += lambda;
  return X.transpose() * m.llt().solve(y);
}

// Batch predictions under the minimum-norm fit. Above the threshold this goes
// through the Gram matrix with an eigenvalue-thresholded solve, which keeps the
// near-singular spike region finite instead of exploding to NaN.
inline Eigen::VectorXd min_norm_predictions(const Eigen::MatrixXd& Ztr, const Eigen::VectorXd& ytr,
                                            const Eigen::MatrixXd& Zte) {
  const Eigen::Index T = Ztr.rows(), P = Ztr.cols();
  if (Zte.cols() != P) throw input_error("train and test designs have different widths");
  if (P < T) return Zte * fit_min_norm(Ztr, ytr).coefficients;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ztr * Ztr.transpose());
  const Eigen::VectorXd& w = es.eigenvalues();  // ascending
  const double tol = static_cast<double>(std::max(T, P)) * std::numeric_limits<double>::epsilon() *
                     std::max(w[T - 1], 0.0);
  Eigen::VectorXd uty = es.eigenvectors().transpose() * ytr;
  for (Eigen::Index j = 0; j < T; ++j) uty[j] = w[j] > tol ? uty[j] / w[j] : 0.0;
  Eigen::VectorXd alpha = es.eigenvectors() * uty;
  return Zte * (Ztr.transpose() * alpha);
}

struct RiskEstimate {
  double bias_sq = 0.0;
  double variance = 0.0;
  double noise_floor = 0.0;  // sigma^2
  double msfe = 0.0;         // simulated independently of the decomposition
  double mc_se = 0.0;        // standard error of msfe
  double se_bias_sq = 0.0;
  double se_variance = 0.0;
  bool near_singular = false;
  int reps = 0;
};

// Monte Carlo risk of the minimum-norm forecast at a fresh draw from the same
// design distribution. Bias and variance come from the conditional closed
// forms per replication (projection mean, trace of the conditional coefficient
// covariance); msfe is simulated on fresh noise so the decomposition identity
// is a genuine cross-check rather than an accounting tautology.
inline RiskEstimate mc_risk(const SimSpec& spec, int p_used, int reps, std::uint64_t seed) {
  validate(spec);
  if (reps < 100) throw input_error("risk Monte Carlo needs at least 100 replications");
  if (p_used < 1 || p_used > spec.N) throw input_error("regressor count outside 1..N");
  const int T = spec.T, N = spec.N;
  const double sigma = spec.noise_sd;
  const Eigen::VectorXd lam = spectrum_eigenvalues(spec);
  const Eigen::VectorXd sd = lam.cwiseSqrt();
  const Eigen::VectorXd lam_used = lam.head(p_used);

  RiskEstimate out;
  out.noise_floor = sigma * sigma;
  out.near_singular = p_used >= T - 1 && p_used <= T + 1;
  out.reps = reps;

  double sb = 0, sb2 = 0, sv = 0, sv2 = 0, sm = 0, sm2 = 0;
  for (int rep = 0; rep < reps; ++rep) {
    auto eng = make_engine(seed, static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd X = randn_matrix(eng, T, N);
    X = X * sd.asDiagonal();
    const Eigen::MatrixXd Xp = X.leftCols(p_used);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Xp, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double tol =
        static_cast<double>(std::max(T, p_used)) * std::numeric_limits<double>::epsilon() * s[0];
    Eigen::Index rank = 0;
    while (rank < s.size() && s[rank] > tol) ++rank;

    const Eigen::VectorXd mean_y = X * spec.beta;

    // conditional mean of beta-hat is the pseudoinverse applied to E[y|X]
    Eigen::VectorXd c = svd.matrixU().leftCols(rank).transpose() * mean_y;
    c.array() /= s.head(rank).array();
    Eigen::VectorXd diff = -spec.beta;
    diff.head(p_used) += svd.matrixV().leftCols(rank) * c;
    const double b_i = (lam.array() * diff.array().square()).sum();

    // conditional coefficient covariance trace against the used block of Sigma:
    // both regimes reduce to sum_j v_j' Sigma_p v_j / s_j^2
    double tr = 0.0;
    for (Eigen::Index j = 0; j < rank; ++j)
      tr += (lam_used.array() * svd.matrixV().col(j).array().square()).sum() / (s[j] * s[j]);
    const double v_i = sigma * sigma * tr;

    Eigen::VectorXd y = mean_y + sigma * randn_vector(eng, T);
    Eigen::VectorXd c2 = svd.matrixU().leftCols(rank).transpose() * y;
    c2.array() /= s.head(rank).array();
    Eigen::VectorXd err = -spec.beta;
    err.head(p_used) += svd.matrixV().leftCols(rank) * c2;
    const double m_i = (lam.array() * err.array().square()).sum() + sigma * sigma;

    sb += b_i; sb2 += b_i * b_i;
    sv += v_i; sv2 += v_i * v_i;
    sm += m_i; sm2 += m_i * m_i;
  }
  const double r = static_cast<double>(reps);
  auto finish = [r](double sum, double sumsq, double& mean, double& se) {
    mean = sum / r;
    const double var = std::max(0.0, sumsq / r - mean * mean);
    se = std::sqrt(var / r);
  };
  finish(sb, sb2, out.bias_sq, out.se_bias_sq);
  finish(sv, sv2, out.variance, out.se_variance);
  finish(sm, sm2, out.msfe, out.mc_se);
  return out;
}

// ---------------------------------------------------------------------------
// Double-descent sweep on a transformed panel: a single contiguous training
// half, model size swept first by adding principal components and then by
// appending synthetic panel copies, against the AR(1) baseline and the
// closed-form kernel limit.

enum class SweepBranch { pc_path, augment_path };

struct CurvePoint {
  int n_eff = 0;
  double msfe = 0.0;
  SweepBranch branch = SweepBranch::pc_path;
};

struct SweepConfig {
  int train_len = 0;  // 0: first half
  int horizon = 1;
  std::vector<int> b_grid{1, 2, 4, 8, 16, 32};
  std::uint64_t seed = 0;
  int k_factors = 0;  // 0: information-criterion choice up to k_max
  int k_max = 20;
};

struct DoubleDescentCurve {
  std::vector<CurvePoint> points;
  double ar1_baseline = 0.0;
  double kernel_asymptote = 0.0;
  int interpolation_threshold = 0;  // training pair count
};

inline DoubleDescentCurve sweep_double_descent(const RawPanel& panel, const std::string& target,
                                               const SweepConfig& cfg) {
  const Eigen::Index T = panel.rows(), ncols = panel.cols();
  Eigen::Index ti = -1;
  for (Eigen::Index j = 0; j < ncols; ++j)
    if (panel.names[static_cast<std::size_t>(j)] == target) ti = j;
  if (ti < 0) throw input_error("target series '" + target + "' not in the panel");
  const Eigen::Index N = ncols - 1;
  if (N < 1) throw input_error("panel has no predictor series");
  const int h = cfg.horizon;
  if (h < 1) throw input_error("horizon must be positive");
  const Eigen::Index W = cfg.train_len > 0 ? cfg.train_len : T / 2;
  if (W - h < 4 || T - W - h < 1)
    throw input_error("split leaves too few training pairs or no test pairs");

  // target first, predictors after, so moment bookkeeping has one layout
  Eigen::MatrixXd M(T, ncols);
  M.col(0) = panel.values.col(ti);
  Eigen::Index w = 1;
  for (Eigen::Index j = 0; j < ncols; ++j)
    if (j != ti) M.col(w++) = panel.values.col(j);

  auto [train_std, mom] = window_standardize(M.topRows(W), Eigen::Index(0));
  Eigen::MatrixXd test_std = standardize_with(M.bottomRows(T - W), mom, Eigen::Index(0));

  Eigen::VectorXd y_std(T);
  y_std.head(W) = train_std.col(0);
  y_std.tail(T - W) = test_std.col(0);
  Eigen::MatrixXd Xtr = train_std.rightCols(N);
  Eigen::MatrixXd Xte = test_std.rightCols(N);

  std::vector<Eigen::Index> tr_pairs, te_pairs;  // regression rows: features at s, target at s+h
  for (Eigen::Index s = 0; s + h < W; ++s)
    if (!is_missing(y_std[s]) && !is_missing(y_std[s + h])) tr_pairs.push_back(s);
  for (Eigen::Index s = W; s + h < T; ++s)
    if (!is_missing(y_std[s]) && !is_missing(y_std[s + h])) te_pairs.push_back(s);
  if (tr_pairs.size() < 4 || te_pairs.empty())
    throw input_error("too few usable forecast pairs around the split");

  auto gather = [&](const Eigen::MatrixXd& src, const std::vector<Eigen::Index>& rows,
                    Eigen::Index base) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i] - base);
    return out;
  };
  const Eigen::Index m = static_cast<Eigen::Index>(tr_pairs.size());
  const Eigen::Index mt = static_cast<Eigen::Index>(te_pairs.size());
  Eigen::VectorXd lag_tr(m), yh_tr(m), lag_te(mt), yh_te(mt);
  for (Eigen::Index i = 0; i < m; ++i) {
    lag_tr[i] = y_std[tr_pairs[static_cast<std::size_t>(i)]];
    yh_tr[i] = y_std[tr_pairs[static_cast<std::size_t>(i)] + h];
  }
  for (Eigen::Index i = 0; i < mt; ++i) {
    lag_te[i] = y_std[te_pairs[static_cast<std::size_t>(i)]];
    yh_te[i] = y_std[te_pairs[static_cast<std::size_t>(i)] + h];
  }
  Eigen::MatrixXd Xtr_pairs = gather(Xtr, tr_pairs, 0);
  Eigen::MatrixXd Xte_pairs = gather(Xte, te_pairs, W);

  DoubleDescentCurve curve;
  curve.interpolation_threshold = static_cast<int>(m);

  auto msfe_of = [&](const Eigen::MatrixXd& Ztr, const Eigen::MatrixXd& Zte) {
    Eigen::VectorXd pred = min_norm_predictions(Ztr, yh_tr, Zte);
    return (pred - yh_te).squaredNorm() / static_cast<double>(mt);
  };

  // AR(1)-only baseline
  {
    Eigen::MatrixXd ztr = lag_tr, zte = lag_te;
    curve.ar1_baseline = msfe_of(ztr, zte);
  }

  // branch one: AR lag plus r principal components, r = 1..rank
  Eigen::VectorXd eigs = gram_eigenvalues(Xtr);
  Eigen::Index kfull = 0;
  while (kfull < eigs.size() && eigs[kfull] > 1e-12 * eigs[0]) ++kfull;
  kfull = std::min(kfull, N);
  FactorModelFit pc_fit = extract_factors_pca(Xtr, static_cast<int>(kfull));
  Eigen::MatrixXd f_tr = gather(pc_fit.factors, tr_pairs, 0);
  Eigen::MatrixXd f_te_full = project_factors(pc_fit, Xte_pairs);
  for (Eigen::Index r = 1; r <= kfull; ++r) {
    Eigen::MatrixXd ztr(m, 1 + r), zte(mt, 1 + r);
    ztr << lag_tr, f_tr.leftCols(r);
    zte << lag_te, f_te_full.leftCols(r);
    curve.points.push_back({static_cast<int>(r) + 1, msfe_of(ztr, zte), SweepBranch::pc_path});
  }

  // branch two: AR lag, the panel, and B synthetic copies of it
  int kaug = cfg.k_factors;
  if (kaug <= 0) {
    const int k_cap = static_cast<int>(std::min<Eigen::Index>(cfg.k_max, std::min(W, N) - 1));
    kaug = select_k_bai_ng(Xtr, k_cap).k;
  }
  FactorModelFit aug_fit = extract_factors_pca(Xtr, kaug);
  Eigen::MatrixXd af_tr = gather(aug_fit.factors, tr_pairs, 0);
  Eigen::MatrixXd af_te = project_factors(aug_fit, Xte_pairs);

  std::vector<int> grid = cfg.b_grid;
  grid.push_back(0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() < 0) throw input_error("copy counts must be nonnegative");

  Eigen::MatrixXd f_all(m + mt, kaug);
  f_all.topRows(m) = af_tr;
  f_all.bottomRows(mt) = af_te;
  for (int B : grid) {
    Eigen::MatrixXd ztr(m, 1 + (B + 1) * N), zte(mt, 1 + (B + 1) * N);
    ztr.col(0) = lag_tr;
    zte.col(0) = lag_te;
    ztr.middleCols(1, N) = Xtr_pairs;
    zte.middleCols(1, N) = Xte_pairs;
    for (int b = 1; b <= B; ++b) {
      Eigen::MatrixXd blk = synthetic_block(f_all, aug_fit.loadings, aug_fit.idio_var, cfg.seed, b);
      ztr.middleCols(1 + static_cast<Eigen::Index>(b) * N, N) = blk.topRows(m);
      zte.middleCols(1 + static_cast<Eigen::Index>(b) * N, N) = blk.bottomRows(mt);
    }
    curve.points.push_back(
        {static_cast<int>((B + 1) * N) + 1, msfe_of(ztr, zte), SweepBranch::augment_path});
  }

  // closed-form limit of the augmentation branch
  {
    FactorKernel kern = build_factor_kernel(aug_fit, tr_pairs);
    KrrSolver solver(kern, yh_tr);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mt; ++i) {
      const double p = solver.predict(kernel_cross(kern, af_te.row(i).transpose()));
      acc += (p - yh_te[i]) * (p - yh_te[i]);
    }
    curve.kernel_asymptote = acc / static_cast<double>(mt);
  }
  return curve;
}

}  // namespace fklab
