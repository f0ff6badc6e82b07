#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "fklab/errors.hpp"
#include "fklab/rng.hpp"

namespace fklab {

// Static factor model estimated by principal components, normalized so that
// factors'*factors / T = I and loadings = X'F/T. Flipping the sign of a factor
// and its loading column together is the only indeterminacy left; we pin it by
// making each factor's largest-magnitude entry positive.
struct FactorModelFit {
  int k = 0;
  Eigen::MatrixXd loadings;   // N x k
  Eigen::MatrixXd factors;    // T x k
  Eigen::VectorXd idio_var;   // per-series residual variance, 1/T divisor
  Eigen::MatrixXd residuals;  // T x N
};

inline FactorModelFit extract_factors_pca(const Eigen::MatrixXd& X, int k) {
  const Eigen::Index T = X.rows(), N = X.cols();
  if (k < 1 || k > std::min(T, N))
    throw input_error("factor count " + std::to_string(k) + " outside 1..min(T,N)");

  Eigen::MatrixXd F(T, k);
  // Work with the smaller Gram matrix; both share the nonzero spectrum.
  if (T < N) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X * X.transpose() / static_cast<double>(T));
    const auto& w = es.eigenvalues();  // ascending
    if (!(w[T - k] > 1e-12 * std::max(w[T - 1], 0.0)))
      throw numeric_error("panel rank below requested factor count " + std::to_string(k));
    for (int j = 0; j < k; ++j)
      F.col(j) = std::sqrt(static_cast<double>(T)) * es.eigenvectors().col(T - 1 - j);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / static_cast<double>(T));
    const auto& w = es.eigenvalues();
    if (!(w[N - k] > 1e-12 * std::max(w[N - 1], 0.0)))
      throw numeric_error("panel rank below requested factor count " + std::to_string(k));
    for (int j = 0; j < k; ++j)
      F.col(j) = X * es.eigenvectors().col(N - 1 - j) / std::sqrt(w[N - 1 - j]);
  }
  for (int j = 0; j < k; ++j) {
    Eigen::Index imax = 0;
    F.col(j).cwiseAbs().maxCoeff(&imax);
    if (F(imax, j) < 0) F.col(j) = -F.col(j);
  }

  FactorModelFit fit;
  fit.k = k;
  fit.factors = std::move(F);
  fit.loadings = X.transpose() * fit.factors / static_cast<double>(T);
  fit.residuals = X - fit.factors * fit.loadings.transpose();
  fit.idio_var = fit.residuals.array().square().colwise().mean();
  return fit;
}

inline Eigen::VectorXd idio_variances(const FactorModelFit& fit) {
  if (fit.residuals.size() == 0) throw input_error("factor fit has no residuals");
  return fit.residuals.array().square().colwise().mean();
}

// Factors for rows outside the estimation sample, by regressing each row on
// the estimated loadings: f = (L'L)^{-1} L' x.
inline Eigen::MatrixXd project_factors(const FactorModelFit& fit, const Eigen::MatrixXd& X_new) {
  if (X_new.cols() != fit.loadings.rows()) throw input_error("row width does not match loading count");
  Eigen::MatrixXd ltl = fit.loadings.transpose() * fit.loadings;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ltl);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw numeric_error("loading Gram is singular; cannot project factors");
  return ldlt.solve(fit.loadings.transpose() * X_new.transpose()).transpose();
}

// Descending eigenvalues of the sample covariance X'X/T, computed through the
// smaller Gram matrix (the two share every nonzero eigenvalue). Length min(T,N).
inline Eigen::VectorXd gram_eigenvalues(const Eigen::MatrixXd& X) {
  const Eigen::Index T = X.rows(), N = X.cols();
  if (T < 1 || N < 1) throw input_error("empty matrix has no spectrum");
  if (T < N) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X * X.transpose() / static_cast<double>(T));
    return es.eigenvalues().reverse();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / static_cast<double>(T));
  return es.eigenvalues().reverse();
}

struct BaiNgSelection {
  int k = 0;
  bool exact_fit = false;  // some V(k) hit zero; k is the smallest such
};

// Information-criterion factor count: argmin over k in {1..k_max} of
//   ln V(k) + k ((N+T)/(NT)) ln min(N,T),
// V(k) = mean squared residual of the rank-k principal-component fit.
// Ties resolve toward smaller k; k = 0 is excluded because downstream models
// always carry factors.
inline BaiNgSelection select_k_bai_ng(const Eigen::MatrixXd& X, int k_max) {
  const Eigen::Index T = X.rows(), N = X.cols();
  if (k_max < 1 || k_max > std::min(T, N) - 1)
    throw input_error("k_max " + std::to_string(k_max) + " outside 1..min(T,N)-1");

  Eigen::VectorXd mu;  // descending Gram eigenvalues
  if (T < N) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X * X.transpose() / static_cast<double>(T));
    mu = es.eigenvalues().reverse();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / static_cast<double>(T));
    mu = es.eigenvalues().reverse();
  }
  const double total = mu.sum();
  const double penalty_unit =
      (static_cast<double>(N + T) / static_cast<double>(N * T)) * std::log(static_cast<double>(std::min(N, T)));
  const double vfloor = 1e-14 * std::max(total, 1e-300);

  double best = std::numeric_limits<double>::infinity();
  int best_k = 1;
  double head = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    head += mu[k - 1];
    const double vk = (total - head) / static_cast<double>(N);
    if (vk <= vfloor) return {k, true};
    const double ic = std::log(vk) + k * penalty_unit;
    if (ic < best) {
      best = ic;
      best_k = k;
    }
  }
  return {best_k, false};
}

// ---------------------------------------------------------------------------
// Simulation designs: Gaussian rows with a diagonal covariance given by one of
// three spectra, signal beta* living in the leading coordinates.

enum class SpectrumKind { isotropic, geometric, flat_tail };

struct SimSpec {
  int T = 0, N = 0;
  SpectrumKind kind = SpectrumKind::isotropic;
  double scale = 1.0;       // isotropic level
  double q = 0.5;           // decay of the head (geometric / flat_tail)
  int m_head = 0;           // flat_tail head length
  double tail_level = 0.0;  // flat_tail tau
  Eigen::VectorXd beta;     // length N
  double noise_sd = 1.0;
};

inline void validate(const SimSpec& s) {
  if (s.T < 1 || s.N < 1) throw input_error("simulation needs positive T and N");
  if (s.beta.size() != s.N) throw input_error("signal vector length must equal N");
  if (s.kind == SpectrumKind::geometric || s.kind == SpectrumKind::flat_tail) {
    if (!(s.q > 0.0 && s.q < 1.0)) throw input_error("decay q must lie in (0,1)");
  }
  if (s.kind == SpectrumKind::flat_tail) {
    if (!(s.tail_level > 0.0)) throw input_error("tail level must be positive");
    if (s.m_head < 0 || s.m_head > s.N) throw input_error("head size outside 0..N");
  }
  if (s.kind == SpectrumKind::isotropic && !(s.scale > 0.0)) throw input_error("isotropic scale must be positive");
}

inline Eigen::VectorXd spectrum_eigenvalues(const SimSpec& s) {
  validate(s);
  Eigen::VectorXd lam(s.N);
  switch (s.kind) {
    case SpectrumKind::isotropic:
      lam.setConstant(s.scale);
      break;
    case SpectrumKind::geometric:
      for (int j = 0; j < s.N; ++j) lam[j] = std::pow(s.q, j);
      break;
    case SpectrumKind::flat_tail:
      for (int j = 0; j < s.N; ++j) lam[j] = j < s.m_head ? std::pow(s.q, j) : s.tail_level;
      break;
  }
  return lam;
}

inline SimSpec isotropic_spec(int T, int N, double scale, Eigen::VectorXd beta, double noise_sd) {
  SimSpec s;
  s.T = T; s.N = N; s.kind = SpectrumKind::isotropic; s.scale = scale;
  s.beta = std::move(beta); s.noise_sd = noise_sd;
  validate(s);
  return s;
}

inline SimSpec geometric_spec(int T, int N, double q, Eigen::VectorXd beta, double noise_sd) {
  SimSpec s;
  s.T = T; s.N = N; s.kind = SpectrumKind::geometric; s.q = q;
  s.beta = std::move(beta); s.noise_sd = noise_sd;
  validate(s);
  return s;
}

inline SimSpec flat_tail_spec(int T, int N, double q, int m_head, double tail_level,
                              Eigen::VectorXd beta, double noise_sd) {
  SimSpec s;
  s.T = T; s.N = N; s.kind = SpectrumKind::flat_tail; s.q = q; s.m_head = m_head; s.tail_level = tail_level;
  s.beta = std::move(beta); s.noise_sd = noise_sd;
  validate(s);
  return s;
}

struct SimPanel {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

inline SimPanel simulate_panel(const SimSpec& spec, std::uint64_t seed) {
  validate(spec);
  const Eigen::VectorXd sd = spectrum_eigenvalues(spec).cwiseSqrt();
  auto eng_x = make_engine(seed, 0);
  SimPanel out;
  out.X = randn_matrix(eng_x, spec.T, spec.N);
  out.X = out.X * sd.asDiagonal();
  auto eng_e = make_engine(seed, 1);
  out.y = out.X * spec.beta + spec.noise_sd * randn_vector(eng_e, spec.T);
  return out;
}

struct FactorSim {
  Eigen::MatrixXd X;        // T x N = F Lambda' + E
  Eigen::MatrixXd factors;  // T x k
  Eigen::MatrixXd loadings; // N x k
};

// Exact factor structure: Gaussian factors and loadings, homoscedastic
// idiosyncratic noise of standard deviation idio_sd.
inline FactorSim simulate_exact_factor_panel(int T, int N, int k, double idio_sd, std::uint64_t seed) {
  FactorSim s;
  auto eng_l = make_engine(seed, 0);
  auto eng_f = make_engine(seed, 1);
  auto eng_e = make_engine(seed, 2);
  s.loadings = randn_matrix(eng_l, N, k);
  s.factors = randn_matrix(eng_f, T, k);
  s.X = s.factors * s.loadings.transpose() + idio_sd * randn_matrix(eng_e, T, N);
  return s;
}

}  // namespace fklab
