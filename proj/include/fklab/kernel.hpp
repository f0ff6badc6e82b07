#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fklab/errors.hpp"
#include "fklab/factors.hpp"
#include "fklab/rng.hpp"

namespace fklab {

// One synthetic copy of the panel at the given factor rows: the common
// component is kept fixed, only the idiosyncratic part is redrawn (Gaussian,
// diagonal covariance idio_var). The block index feeds the seed stream, so
// block b is the same matrix whether or not later blocks ever get generated.
inline Eigen::MatrixXd synthetic_block(const Eigen::MatrixXd& factor_rows,
                                       const Eigen::MatrixXd& loadings,
                                       const Eigen::VectorXd& idio_var,
                                       std::uint64_t seed, int block) {
  if (factor_rows.cols() != loadings.cols()) throw input_error("factor and loading widths differ");
  if (idio_var.size() != loadings.rows()) throw input_error("idio variance length does not match series count");
  auto eng = make_engine(seed, static_cast<std::uint64_t>(block));
  Eigen::MatrixXd noise = randn_matrix(eng, factor_rows.rows(), loadings.rows());
  noise = noise * idio_var.cwiseSqrt().asDiagonal();
  return factor_rows * loadings.transpose() + noise;
}

struct AugmentedDesign {
  Eigen::MatrixXd Z;  // T x (B+1)N, original panel first
  int B = 0;
  std::uint64_t seed = 0;
};

inline AugmentedDesign gen_augmented(const Eigen::MatrixXd& X, const FactorModelFit& fit,
                                     int B, std::uint64_t seed) {
  if (B < 0) throw input_error("copy count must be nonnegative");
  const Eigen::Index T = X.rows(), N = X.cols();
  if (fit.factors.rows() != T || fit.loadings.rows() != N)
    throw input_error("factor fit shape does not match the panel");
  AugmentedDesign d;
  d.B = B;
  d.seed = seed;
  d.Z.resize(T, (B + 1) * N);
  d.Z.leftCols(N) = X;
  for (int b = 1; b <= B; ++b)
    d.Z.middleCols(static_cast<Eigen::Index>(b) * N, N) =
        synthetic_block(fit.factors, fit.loadings, fit.idio_var, seed, b);
  return d;
}

// Exactly `extra` synthetic columns at an arbitrary factor path: whole blocks
// followed by a left-truncated final block, so the columns are a prefix of
// what any larger request with the same seed would produce.
inline Eigen::MatrixXd gen_augmented_cols(const Eigen::MatrixXd& factor_rows,
                                          const Eigen::MatrixXd& loadings,
                                          const Eigen::VectorXd& idio_var,
                                          Eigen::Index extra, std::uint64_t seed) {
  if (extra < 0) throw input_error("column count must be nonnegative");
  const Eigen::Index N = loadings.rows();
  Eigen::MatrixXd out(factor_rows.rows(), extra);
  Eigen::Index done = 0;
  int b = 1;
  while (done < extra) {
    const Eigen::Index take = std::min(N, extra - done);
    out.middleCols(done, take) =
        synthetic_block(factor_rows, loadings, idio_var, seed, b).leftCols(take);
    done += take;
    ++b;
  }
  return out;
}

// Expectation of one synthetic copy's Gram matrix X*X*': rank-k common part
// plus the summed idiosyncratic variance on the diagonal.
inline Eigen::MatrixXd expected_gram(const FactorModelFit& fit) {
  const Eigen::Index T = fit.factors.rows();
  Eigen::MatrixXd g = fit.factors * (fit.loadings.transpose() * fit.loadings) * fit.factors.transpose();
  g.diagonal().array() += fit.idio_var.sum();
  return g;
}

struct GramErrorRow {
  int B = 0;
  double rel_frobenius = 0.0;
};

// Law-of-large-numbers check: relative Frobenius distance between the
// B-averaged synthetic Gram and its expectation, for each B in the grid.
inline std::vector<GramErrorRow> gram_concentration_check(const Eigen::MatrixXd& X,
                                                          const FactorModelFit& fit,
                                                          const std::vector<int>& B_grid,
                                                          std::uint64_t seed) {
  if (fit.factors.rows() != X.rows() || fit.loadings.rows() != X.cols())
    throw input_error("factor fit shape does not match the panel");
  if (B_grid.empty()) throw input_error("empty B grid");
  const Eigen::MatrixXd target = expected_gram(fit);
  const double denom = target.norm();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(target.rows(), target.cols());
  std::vector<GramErrorRow> rows;
  int b = 0;
  for (int B : B_grid) {
    if (B <= b) throw input_error("B grid must be strictly increasing and positive");
    while (b < B) {
      ++b;
      Eigen::MatrixXd zb = synthetic_block(fit.factors, fit.loadings, fit.idio_var, seed, b);
      acc.noalias() += zb * zb.transpose();
    }
    const double num = (acc / static_cast<double>(B) - target).norm();
    rows.push_back({B, denom > 0 ? num / denom : num});
  }
  return rows;
}

// Kernel of the infinite-augmentation limit: K(t,s) = f_t' (L'L) f_s over a
// window of the factor path, with the ridge pinned at trace(Psi) by the same
// limit. Keeping the windowed factors and L'L around lets callers form kernel
// vectors for new points.
struct FactorKernel {
  Eigen::MatrixXd K;               // W x W
  double ridge = 0.0;              // trace of the idiosyncratic covariance
  Eigen::MatrixXd window_factors;  // W x k
  Eigen::MatrixXd loading_gram;    // k x k, L'L
};

inline FactorKernel build_factor_kernel(const FactorModelFit& fit,
                                        const std::vector<Eigen::Index>& window) {
  if (window.empty()) throw input_error("empty kernel window");
  FactorKernel out;
  out.window_factors.resize(static_cast<Eigen::Index>(window.size()), fit.factors.cols());
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (window[i] < 0 || window[i] >= fit.factors.rows())
      throw input_error("kernel window index " + std::to_string(window[i]) + " outside the factor path");
    out.window_factors.row(static_cast<Eigen::Index>(i)) = fit.factors.row(window[i]);
  }
  out.loading_gram = fit.loadings.transpose() * fit.loadings;
  out.K = out.window_factors * out.loading_gram * out.window_factors.transpose();
  out.K = 0.5 * (out.K + out.K.transpose().eval());  // kill asymmetry roundoff
  out.ridge = fit.idio_var.sum();
  return out;
}

// Kernel vector between a new point (given by its projected factors) and the
// window dates.
inline Eigen::VectorXd kernel_cross(const FactorKernel& kernel, const Eigen::VectorXd& f_new) {
  if (f_new.size() != kernel.loading_gram.rows()) throw input_error("factor vector width mismatch");
  return kernel.window_factors * (kernel.loading_gram * f_new);
}

// Factorize (K + ridge I) once; predictions for any kernel vector are then a
// dot product with alpha.
class KrrSolver {
 public:
  KrrSolver(const FactorKernel& kernel, const Eigen::VectorXd& y) {
    if (y.size() != kernel.K.rows()) throw input_error("target length does not match kernel window");
    Eigen::MatrixXd m = kernel.K;
    m.diagonal().array() += kernel.ridge;
    chol_.compute(m);
    if (chol_.info() != Eigen::Success)
      throw numeric_error("kernel system is singular; needs a positive ridge or full-rank kernel");
    alpha_ = chol_.solve(y);
  }
  double predict(const Eigen::VectorXd& k_new) const {
    if (k_new.size() != alpha_.size()) throw input_error("kernel vector length mismatch");
    return k_new.dot(alpha_);
  }
  const Eigen::VectorXd& alpha() const { return alpha_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

inline double krr_predict(const FactorKernel& kernel, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& k_new) {
  return KrrSolver(kernel, y).predict(k_new);
}

// Dual form of the minimum-norm prediction in the overparameterized regime:
// y_hat = k'(ZZ')^{-1}y with k_s = <z_new, z_s>. Identical to predicting with
// the primal minimum-norm coefficients when the Gram is invertible.
inline double min_norm_predict_dual(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& z_new) {
  const Eigen::Index T = Z.rows(), P = Z.cols();
  if (P <= T) throw input_error("dual prediction needs more columns than rows");
  if (y.size() != T || z_new.size() != P) throw input_error("dimension mismatch in dual prediction");
  Eigen::MatrixXd gram = Z * Z.transpose();
  Eigen::LLT<Eigen::MatrixXd> chol(gram);
  if (chol.info() != Eigen::Success) throw numeric_error("singular Gram matrix in dual prediction");
  return (Z * z_new).dot(chol.solve(y));
}

}  // namespace fklab
