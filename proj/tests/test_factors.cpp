#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fklab/factors.hpp"
#include "fklab/rng.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd rank1(Eigen::Index T, Eigen::Index N) {
  Eigen::VectorXd f(T), lam(N);
  for (Eigen::Index t = 0; t < T; ++t) f[t] = std::sin(1.3 * t + 0.4);
  for (Eigen::Index j = 0; j < N; ++j) lam[j] = 0.5 + 0.25 * j;
  return f * lam.transpose();
}

}  // namespace

TEST_CASE("noiseless rank-1 panel is fit exactly") {
  Eigen::MatrixXd X = rank1(6, 4);
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 1);
  REQUIRE(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(fit.idio_var.maxCoeff() < 1e-12);
  REQUIRE(fit.idio_var.minCoeff() >= 0.0);
}

TEST_CASE("leading factor matches the top singular direction") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(6, 3);
  X(0, 0) = 3.0;
  X(1, 1) = 2.0;
  X(2, 2) = 1.0;
  X(3, 0) = 3.0;  // make column norms distinct and matrix non-trivial
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 1);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  const Eigen::VectorXd u = svd.matrixU().col(0);
  const Eigen::VectorXd f = fit.factors.col(0).normalized();
  REQUIRE(std::abs(f.dot(u)) > 1.0 - 1e-10);
}

TEST_CASE("factor normalization and residual identity hold") {
  auto eng = fklab::make_engine(11, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 30, 8);
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 3);
  Eigen::MatrixXd gram = fit.factors.transpose() * fit.factors / 30.0;
  REQUIRE((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  Eigen::MatrixXd resid = X - fit.factors * fit.loadings.transpose();
  REQUIRE((resid - fit.residuals).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(fit.idio_var.minCoeff() >= 0.0);
}

TEST_CASE("joint sign flips leave the common component unchanged") {
  auto eng = fklab::make_engine(12, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 20, 6);
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 2);
  Eigen::MatrixXd common = fit.factors * fit.loadings.transpose();
  Eigen::MatrixXd flipped = (-fit.factors) * (-fit.loadings).transpose();
  REQUIRE((common - flipped).cwiseAbs().maxCoeff() == 0.0);
  // the convention itself: each factor's largest-magnitude entry is positive
  for (int j = 0; j < fit.k; ++j) {
    Eigen::Index imax;
    fit.factors.col(j).cwiseAbs().maxCoeff(&imax);
    REQUIRE(fit.factors(imax, j) > 0.0);
  }
}

TEST_CASE("fitted common component is the best rank-k approximation") {
  auto eng = fklab::make_engine(13, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 10, 7);
  const int k = 3;
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, k);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd best = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal() *
                         svd.matrixV().leftCols(k).transpose();
  const double ours = (X - fit.factors * fit.loadings.transpose()).norm();
  REQUIRE_THAT(ours, WithinAbs((X - best).norm(), 1e-8));
}

TEST_CASE("asking for more factors than the rank supports fails") {
  Eigen::MatrixXd X = rank1(6, 4);
  REQUIRE_THROWS_AS(fklab::extract_factors_pca(X, 2), fklab::numeric_error);
  REQUIRE_THROWS_AS(fklab::extract_factors_pca(X, 0), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::extract_factors_pca(X, 5), fklab::input_error);
}

TEST_CASE("tall and wide panels use consistent spectra") {
  auto eng = fklab::make_engine(14, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 8, 12);
  // gram route (T < N) and covariance route (transpose) share nonzero eigenvalues
  Eigen::VectorXd a = fklab::gram_eigenvalues(X);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / 8.0);
  Eigen::VectorXd b = es.eigenvalues().reverse();
  for (int i = 0; i < 8; ++i) REQUIRE_THAT(a[i], WithinAbs(b[i], 1e-10));

  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 2);
  Eigen::MatrixXd gram = fit.factors.transpose() * fit.factors / 8.0;
  REQUIRE((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("projection recovers factors on noiseless data") {
  Eigen::MatrixXd X = rank1(12, 5);
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X.topRows(8), 1);
  Eigen::MatrixXd proj = fklab::project_factors(fit, X.bottomRows(4));
  // the projected rows must reproduce the held-out common component
  Eigen::MatrixXd rebuilt = proj * fit.loadings.transpose();
  REQUIRE((rebuilt - X.bottomRows(4)).cwiseAbs().maxCoeff() < 1e-8);
  Eigen::MatrixXd self = fklab::project_factors(fit, X.topRows(8));
  REQUIRE((self - fit.factors).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("idiosyncratic variances follow the residuals") {
  fklab::FactorModelFit fit;
  fit.k = 1;
  fit.residuals = Eigen::MatrixXd::Zero(4, 2);
  REQUIRE(fklab::idio_variances(fit).maxCoeff() == 0.0);

  fit.residuals.col(0) << 1, -1, 1, -1;
  Eigen::VectorXd v = fklab::idio_variances(fit);
  REQUIRE_THAT(v[0], WithinAbs(1.0, 1e-14));
  REQUIRE_THAT(v.sum() * 4.0, WithinAbs(fit.residuals.squaredNorm(), 1e-12));
}

TEST_CASE("idiosyncratic variances survive joint factor rotation") {
  auto eng = fklab::make_engine(15, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 25, 6);
  fklab::FactorModelFit fit = fklab::extract_factors_pca(X, 2);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(fklab::randn_matrix(eng, 2, 2))
                          .householderQ();
  fklab::FactorModelFit rot = fit;
  rot.factors = fit.factors * q;
  rot.loadings = fit.loadings * q;
  rot.residuals = X - rot.factors * rot.loadings.transpose();
  Eigen::VectorXd v2 = fklab::idio_variances(rot);
  REQUIRE((v2 - fit.idio_var).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("information criterion picks strong factors and defaults low on noise") {
  int hits = 0;
  for (int s = 0; s < 20; ++s) {
    fklab::FactorSim sim = fklab::simulate_exact_factor_panel(200, 100, 3, 0.5, 900 + s);
    if (fklab::select_k_bai_ng(sim.X, 8).k == 3) ++hits;
  }
  REQUIRE(hits >= 18);

  int ones = 0;
  for (int s = 0; s < 30; ++s) {
    auto eng = fklab::make_engine(1700 + s, 0);
    Eigen::MatrixXd noise = fklab::randn_matrix(eng, 80, 40);
    if (fklab::select_k_bai_ng(noise, 8).k == 1) ++ones;
  }
  REQUIRE(ones >= 25);  // the penalty dominates: mode is the smallest allowed k
}

TEST_CASE("information criterion corner cases") {
  auto eng = fklab::make_engine(16, 0);
  Eigen::MatrixXd X = fklab::randn_matrix(eng, 20, 10);
  REQUIRE(fklab::select_k_bai_ng(X, 1).k == 1);
  REQUIRE_THROWS_AS(fklab::select_k_bai_ng(X, 0), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::select_k_bai_ng(X, 10), fklab::input_error);

  // noiseless: the smallest exact-fit k wins and is flagged
  Eigen::MatrixXd low = rank1(20, 10);
  fklab::BaiNgSelection sel = fklab::select_k_bai_ng(low, 5);
  REQUIRE(sel.k == 1);
  REQUIRE(sel.exact_fit);
}

TEST_CASE("selection ignores column order") {
  fklab::FactorSim sim = fklab::simulate_exact_factor_panel(120, 30, 2, 0.7, 77);
  const int base = fklab::select_k_bai_ng(sim.X, 6).k;
  Eigen::MatrixXd perm(sim.X.rows(), sim.X.cols());
  for (Eigen::Index j = 0; j < sim.X.cols(); ++j)
    perm.col(j) = sim.X.col((j * 7 + 3) % sim.X.cols());
  REQUIRE(fklab::select_k_bai_ng(perm, 6).k == base);
}

TEST_CASE("simulated spectra deliver their advertised covariance") {
  // isotropic: empirical covariance close to the identity
  fklab::SimSpec iso = fklab::isotropic_spec(100000, 5, 1.0, Eigen::VectorXd::Zero(5), 1.0);
  fklab::SimPanel draw = fklab::simulate_panel(iso, 2024);
  Eigen::MatrixXd cov = draw.X.transpose() * draw.X / 100000.0;
  REQUIRE((cov - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 0.05);

  // flat tail: eigenvalues past the head sit near tau
  fklab::SimSpec ft = fklab::flat_tail_spec(20000, 10, 0.5, 3, 0.1, Eigen::VectorXd::Zero(10), 1.0);
  fklab::SimPanel d2 = fklab::simulate_panel(ft, 2025);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d2.X.transpose() * d2.X / 20000.0);
  Eigen::VectorXd eigs = es.eigenvalues().reverse();
  for (int j = 3; j < 10; ++j) {
    REQUIRE(eigs[j] > 0.05);
    REQUIRE(eigs[j] < 0.2);
  }

  // no noise, no signal: y is identically zero
  fklab::SimSpec silent = fklab::isotropic_spec(50, 4, 1.0, Eigen::VectorXd::Zero(4), 0.0);
  REQUIRE(fklab::simulate_panel(silent, 7).y.cwiseAbs().maxCoeff() == 0.0);

  REQUIRE_THROWS_AS(fklab::geometric_spec(10, 5, 1.5, Eigen::VectorXd::Zero(5), 1.0),
                    fklab::input_error);
}

TEST_CASE("draws are reproducible and seed-sensitive") {
  fklab::SimSpec spec = fklab::isotropic_spec(30, 6, 1.0, Eigen::VectorXd::Ones(6), 1.0);
  fklab::SimPanel a = fklab::simulate_panel(spec, 99);
  fklab::SimPanel b = fklab::simulate_panel(spec, 99);
  fklab::SimPanel c = fklab::simulate_panel(spec, 100);
  REQUIRE((a.X.array() == b.X.array()).all());
  REQUIRE((a.y.array() == b.y.array()).all());
  REQUIRE_FALSE((a.X.array() == c.X.array()).all());
}
