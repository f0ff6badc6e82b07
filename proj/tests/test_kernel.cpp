#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fklab/kernel.hpp"
#include "fklab/ridgeless.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

fklab::FactorModelFit fitted_panel(int T, int N, int k, double idio_sd, std::uint64_t seed,
                                   Eigen::MatrixXd* X_out = nullptr) {
  auto sim = fklab::simulate_exact_factor_panel(T, N, k, idio_sd, seed);
  if (X_out) *X_out = sim.X;
  return fklab::extract_factors_pca(sim.X, k);
}

// three-date, two-series fit whose kernel is computable by hand
fklab::FactorModelFit hand_fit() {
  fklab::FactorModelFit fit;
  fit.k = 1;
  fit.factors = Eigen::MatrixXd(3, 1);
  fit.factors << 1, -1, 0;
  fit.loadings = Eigen::MatrixXd::Ones(2, 1);  // L'L = 2
  fit.idio_var = Eigen::VectorXd::Zero(2);
  return fit;
}

}  // namespace

TEST_CASE("synthetic blocks are a pure function of seed and block index") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(12, 5, 2, 0.7, 111, &X);
  Eigen::MatrixXd b1 = fklab::synthetic_block(fit.factors, fit.loadings, fit.idio_var, 9, 1);
  REQUIRE(same_bits(b1, fklab::synthetic_block(fit.factors, fit.loadings, fit.idio_var, 9, 1)));
  REQUIRE_FALSE(same_bits(b1, fklab::synthetic_block(fit.factors, fit.loadings, fit.idio_var, 9, 2)));
  REQUIRE_THROWS_AS(fklab::synthetic_block(fit.factors, fit.loadings.leftCols(1), fit.idio_var, 9, 1),
                    fklab::input_error);
  REQUIRE_THROWS_AS(fklab::synthetic_block(fit.factors, fit.loadings, fit.idio_var.head(3), 9, 1),
                    fklab::input_error);
}

TEST_CASE("augmenting with zero copies returns the panel untouched") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(12, 5, 2, 0.7, 112, &X);
  auto d = fklab::gen_augmented(X, fit, 0, 42);
  REQUIRE(d.Z.cols() == 5);
  REQUIRE(same_bits(d.Z, X));
  REQUIRE_THROWS_AS(fklab::gen_augmented(X, fit, -1, 42), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::gen_augmented(X.topRows(6), fit, 1, 42), fklab::input_error);
}

TEST_CASE("augmented designs keep the original block and reproduce per-block streams") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(12, 5, 2, 0.7, 113, &X);
  auto d3 = fklab::gen_augmented(X, fit, 3, 42);
  auto d5 = fklab::gen_augmented(X, fit, 5, 42);
  REQUIRE(same_bits(d3.Z.leftCols(5), X));
  REQUIRE(same_bits(d5.Z.leftCols(d3.Z.cols()), d3.Z));  // extending never rewrites
  for (int b = 1; b <= 3; ++b)
    REQUIRE(same_bits(d3.Z.middleCols(5 * b, 5),
                      fklab::synthetic_block(fit.factors, fit.loadings, fit.idio_var, 42, b)));
}

TEST_CASE("with zero idiosyncratic variance every copy is the common component") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(12, 5, 2, 0.7, 114, &X);
  fit.idio_var.setZero();
  Eigen::MatrixXd common = fit.factors * fit.loadings.transpose();
  auto d = fklab::gen_augmented(X, fit, 2, 42);
  REQUIRE(same_bits(d.Z.middleCols(5, 5), common));
  REQUIRE(same_bits(d.Z.middleCols(10, 5), common));
}

TEST_CASE("synthetic noise means concentrate at the Monte Carlo rate") {
  const int T = 10000;
  auto eng = fklab::make_engine(211, 0);
  Eigen::MatrixXd f = fklab::randn_matrix(eng, T, 1);
  Eigen::MatrixXd L(3, 1);
  L << 0.8, -1.1, 0.5;
  Eigen::VectorXd psi2(3);
  psi2 << 0.25, 0.64, 1.0;
  Eigen::MatrixXd blk = fklab::synthetic_block(f, L, psi2, 212, 1);
  Eigen::MatrixXd noise = blk - f * L.transpose();
  for (int j = 0; j < 3; ++j)
    REQUIRE(std::abs(noise.col(j).mean()) < 4.0 * std::sqrt(psi2[j]) / std::sqrt(double(T)));
}

TEST_CASE("partial column requests are prefixes of larger ones") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(12, 5, 2, 0.7, 115, &X);
  Eigen::MatrixXd cols13 = fklab::gen_augmented_cols(fit.factors, fit.loadings, fit.idio_var, 13, 42);
  Eigen::MatrixXd cols25 = fklab::gen_augmented_cols(fit.factors, fit.loadings, fit.idio_var, 25, 42);
  REQUIRE(same_bits(cols13, cols25.leftCols(13)));
  Eigen::MatrixXd whole = fklab::gen_augmented_cols(fit.factors, fit.loadings, fit.idio_var, 15, 42);
  REQUIRE(same_bits(whole, fklab::gen_augmented(X, fit, 3, 42).Z.rightCols(15)));
  REQUIRE_THROWS_AS(fklab::gen_augmented_cols(fit.factors, fit.loadings, fit.idio_var, -1, 42),
                    fklab::input_error);
}

TEST_CASE("the expected Gram matrix matches hand arithmetic") {
  fklab::FactorModelFit fit;
  fit.k = 1;
  fit.factors = Eigen::MatrixXd(2, 1);
  fit.factors << 2, 3;
  fit.loadings = Eigen::MatrixXd::Ones(2, 1);
  fit.idio_var = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::MatrixXd g = fklab::expected_gram(fit);
  REQUIRE_THAT(g(0, 1), WithinAbs(12.0, 1e-14));
  REQUIRE_THAT(g(1, 0), WithinAbs(12.0, 1e-14));
  REQUIRE_THAT(g(0, 0), WithinAbs(9.0, 1e-14));
  REQUIRE_THAT(g(1, 1), WithinAbs(19.0, 1e-14));

  fit.factors.setZero();
  fit.idio_var.setZero();
  REQUIRE(fklab::expected_gram(fit).norm() == 0.0);
}

TEST_CASE("averaged synthetic Grams close in on the expected Gram") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(30, 15, 2, 0.8, 116, &X);
  auto rows = fklab::gram_concentration_check(X, fit, {10, 40, 160}, 515);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[0].rel_frobenius > rows[1].rel_frobenius);
  REQUIRE(rows[1].rel_frobenius > rows[2].rel_frobenius);
  REQUIRE(rows[2].rel_frobenius < 0.5 * rows[0].rel_frobenius);

  auto one = fklab::gram_concentration_check(X, fit, {1}, 515);
  REQUIRE(one[0].rel_frobenius > 0.0);

  auto noiseless = fit;
  noiseless.idio_var.setZero();
  for (const auto& r : fklab::gram_concentration_check(X, noiseless, {1, 4}, 515))
    REQUIRE(r.rel_frobenius < 1e-12);

  REQUIRE_THROWS_AS(fklab::gram_concentration_check(X, fit, {}, 515), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::gram_concentration_check(X, fit, {5, 5}, 515), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::gram_concentration_check(X, fit, {0, 5}, 515), fklab::input_error);
}

TEST_CASE("the factor kernel reproduces the hand example") {
  auto fit = hand_fit();
  auto kern = fklab::build_factor_kernel(fit, {0, 1, 2});
  Eigen::MatrixXd want(3, 3);
  want << 2, -2, 0, -2, 2, 0, 0, 0, 0;
  REQUIRE((kern.K - want).norm() == 0.0);
  REQUIRE(kern.ridge == 0.0);

  Eigen::VectorXd cross = fklab::kernel_cross(kern, Eigen::VectorXd::Constant(1, 2.0));
  REQUIRE_THAT(cross[0], WithinAbs(4.0, 1e-14));
  REQUIRE_THAT(cross[1], WithinAbs(-4.0, 1e-14));
  REQUIRE_THAT(cross[2], WithinAbs(0.0, 1e-14));
  REQUIRE_THROWS_AS(fklab::kernel_cross(kern, Eigen::VectorXd::Zero(2)), fklab::input_error);
}

TEST_CASE("kernel structure: symmetry, low rank, positive semidefiniteness, ridge") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(30, 10, 2, 0.9, 117, &X);
  std::vector<Eigen::Index> window;
  for (Eigen::Index t = 0; t < 30; ++t) window.push_back(t);
  auto kern = fklab::build_factor_kernel(fit, window);
  REQUIRE((kern.K - kern.K.transpose()).norm() == 0.0);
  REQUIRE(kern.ridge == fit.idio_var.sum());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kern.K);
  const double wmax = es.eigenvalues().maxCoeff();
  REQUIRE(es.eigenvalues().minCoeff() > -1e-10 * wmax);
  int above = 0;
  for (Eigen::Index i = 0; i < 30; ++i)
    if (es.eigenvalues()[i] > 1e-10 * wmax) ++above;
  REQUIRE(above <= 2);

  REQUIRE_THROWS_AS(fklab::build_factor_kernel(fit, {}), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::build_factor_kernel(fit, {30}), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::build_factor_kernel(fit, {-1}), fklab::input_error);
}

TEST_CASE("rotating factors and loadings together leaves the kernel alone") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(24, 8, 2, 0.6, 118, &X);
  std::vector<Eigen::Index> window{0, 3, 5, 11, 17, 23};
  auto base = fklab::build_factor_kernel(fit, window);

  const double th = 0.7;
  Eigen::MatrixXd Q(2, 2);
  Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  auto rotated = fit;
  rotated.factors = fit.factors * Q;
  rotated.loadings = fit.loadings * Q;
  auto kern = fklab::build_factor_kernel(rotated, window);
  REQUIRE((kern.K - base.K).norm() < 1e-10 * base.K.norm());
}

TEST_CASE("kernel ridge prediction on the identity kernel halves the target") {
  fklab::FactorKernel kern;
  kern.K = Eigen::MatrixXd::Identity(2, 2);
  kern.ridge = 1.0;
  kern.window_factors = Eigen::MatrixXd::Zero(2, 1);
  kern.loading_gram = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd y(2);
  y << 2, 4;
  Eigen::VectorXd k_new(2);
  k_new << 1, 0;
  REQUIRE_THAT(fklab::krr_predict(kern, y, k_new), WithinAbs(1.0, 1e-14));
  REQUIRE_THROWS_AS(fklab::krr_predict(kern, Eigen::VectorXd::Zero(3), k_new), fklab::input_error);
  REQUIRE_THROWS_AS(fklab::krr_predict(kern, y, Eigen::VectorXd::Zero(3)), fklab::input_error);
}

TEST_CASE("vanishing ridge interpolates the training points") {
  fklab::FactorModelFit fit;
  fit.k = 2;
  fit.factors = Eigen::MatrixXd(2, 2);
  fit.factors << 1.0, 0.3, -0.2, 1.1;
  fit.loadings = Eigen::MatrixXd(3, 2);
  fit.loadings << 0.9, 0.1, -0.4, 1.2, 0.5, -0.7;
  fit.idio_var = Eigen::VectorXd::Zero(3);
  auto kern = fklab::build_factor_kernel(fit, {0, 1});
  Eigen::VectorXd y(2);
  y << 0.7, -1.1;

  REQUIRE_THAT(fklab::krr_predict(kern, y, kern.K.row(0).transpose()), WithinAbs(y[0], 1e-10));

  double prev = std::numeric_limits<double>::infinity();
  for (double ridge : {1e-2, 1e-6}) {
    auto soft = kern;
    soft.ridge = ridge;
    const double gap = std::abs(fklab::krr_predict(soft, y, kern.K.row(0).transpose()) - y[0]);
    REQUIRE(gap < prev);
    prev = gap;
  }
  REQUIRE(prev < 1e-4);
}

TEST_CASE("jointly scaling kernel, ridge, and kernel vector cancels out") {
  Eigen::MatrixXd X;
  auto fit = fitted_panel(20, 6, 2, 0.5, 119, &X);
  std::vector<Eigen::Index> window;
  for (Eigen::Index t = 0; t < 19; ++t) window.push_back(t);
  auto kern = fklab::build_factor_kernel(fit, window);
  auto eng = fklab::make_engine(120, 0);
  Eigen::VectorXd y = fklab::randn_vector(eng, 19);
  Eigen::VectorXd k_new = fklab::kernel_cross(kern, fit.factors.row(19).transpose());
  const double base = fklab::krr_predict(kern, y, k_new);

  const double c = 37.5;
  auto scaled = kern;
  scaled.K *= c;
  scaled.ridge *= c;
  REQUIRE_THAT(fklab::krr_predict(scaled, y, c * k_new), WithinRel(base, 1e-12));
}

TEST_CASE("a singular kernel with no ridge is refused") {
  auto kern = fklab::build_factor_kernel(hand_fit(), {0, 1, 2});  // rank 1, ridge 0
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  REQUIRE_THROWS_AS(fklab::KrrSolver(kern, y), fklab::numeric_error);
}

TEST_CASE("dual and primal minimum-norm predictions coincide") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto eng = fklab::make_engine(300 + s, 0);
    Eigen::MatrixXd Z = fklab::randn_matrix(eng, 8, 30);
    Eigen::VectorXd y = fklab::randn_vector(eng, 8);
    Eigen::VectorXd z_new = fklab::randn_vector(eng, 30);
    const double primal = z_new.dot(fklab::fit_min_norm(Z, y).coefficients);
    const double dual = fklab::min_norm_predict_dual(Z, y, z_new);
    REQUIRE(std::abs(dual - primal) < 1e-9 * std::max(1.0, std::abs(primal)));
  }
}

TEST_CASE("dual prediction at a training row returns its target") {
  auto eng = fklab::make_engine(321, 0);
  Eigen::MatrixXd Z = fklab::randn_matrix(eng, 8, 30);
  Eigen::VectorXd y = fklab::randn_vector(eng, 8);
  REQUIRE_THAT(fklab::min_norm_predict_dual(Z, y, Z.row(3).transpose()), WithinAbs(y[3], 1e-9));
  REQUIRE_THROWS_AS(fklab::min_norm_predict_dual(Z.leftCols(8), y, Eigen::VectorXd::Zero(8)),
                    fklab::input_error);
  REQUIRE_THROWS_AS(fklab::min_norm_predict_dual(Z, y.head(5), Eigen::VectorXd::Zero(30)),
                    fklab::input_error);
  REQUIRE_THROWS_AS(fklab::min_norm_predict_dual(Z, y, Eigen::VectorXd::Zero(31)),
                    fklab::input_error);
}

TEST_CASE("a few hundred synthetic copies land near the kernel limit") {
  const int T = 40, N = 15, k = 2, B = 800;
  auto sim = fklab::simulate_exact_factor_panel(T + 1, N, k, 0.6, 2468);
  fklab::FactorModelFit fit;
  fit.k = k;
  fit.factors = sim.factors;
  fit.loadings = sim.loadings;
  fit.idio_var = Eigen::VectorXd::Constant(N, 0.36);

  auto eng = fklab::make_engine(2469, 0);
  Eigen::VectorXd beta = fklab::randn_vector(eng, k);
  Eigen::VectorXd y = sim.factors.topRows(T) * beta + 0.3 * fklab::randn_vector(eng, T);

  Eigen::MatrixXd Z(T + 1, (B + 1) * N);
  Z.leftCols(N) = sim.X;
  for (int b = 1; b <= B; ++b)
    Z.middleCols(static_cast<Eigen::Index>(b) * N, N) =
        fklab::synthetic_block(sim.factors, sim.loadings, fit.idio_var, 777, b);
  const double y_aug =
      fklab::min_norm_predict_dual(Z.topRows(T), y, Z.row(T).transpose());

  std::vector<Eigen::Index> window;
  for (Eigen::Index t = 0; t < T; ++t) window.push_back(t);
  auto kern = fklab::build_factor_kernel(fit, window);
  const double y_krr = fklab::KrrSolver(kern, y).predict(
      fklab::kernel_cross(kern, fit.factors.row(T).transpose()));

  const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (T - 1));
  REQUIRE(std::abs(y_aug - y_krr) < 0.05 * sd);
}
