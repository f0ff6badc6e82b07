#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace fklab {

// splitmix64 finalizer; decent avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive the seed for work item `stream` from a base seed. Every replication,
// synthetic block, and grid point gets its own stream so results do not depend
// on scheduling order and adding items never perturbs earlier ones.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t base, std::uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(base, stream));
}

inline Eigen::VectorXd randn_vector(std::mt19937_64& eng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(eng);
  return v;
}

inline Eigen::MatrixXd randn_matrix(std::mt19937_64& eng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(eng);
  return m;
}

}  // namespace fklab
