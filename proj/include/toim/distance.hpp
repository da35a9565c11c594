#ifndef TOIM_DISTANCE_HPP_
#define TOIM_DISTANCE_HPP_

#include <cmath>
#include <stdexcept>

#include "toim/types.hpp"

namespace toim {

/// Euclidean (non-squared) distance between two feature vectors.
/// Accepts any Eigen vector expression of matching length.
template <typename DerivedA, typename DerivedB>
double euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                          const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("euclidean_distance: dimension mismatch");
  return (a.derived() - b.derived()).norm();
}

/// Distance matrix between query columns and reference columns:
/// entry (i, j) = euclidean_distance(queries.col(i), refs.col(j)).
/// Computed as the plain per-pair loop so entries match euclidean_distance
/// bit for bit.
Matrix pairwise_distances(const Matrix& queries, const Matrix& refs);

/// ln(1 + e^x) as max(x, 0) + ln(1 + e^-|x|); finite for any finite x.
inline double stable_softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// Logistic sigmoid, evaluated without overflow on either tail.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace toim

#endif  // TOIM_DISTANCE_HPP_
