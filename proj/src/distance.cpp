#include "toim/distance.hpp"

namespace toim {

Matrix pairwise_distances(const Matrix& queries, const Matrix& refs) {
  if (queries.cols() == 0 || refs.cols() == 0)
    throw std::invalid_argument("pairwise_distances: empty input");
  if (queries.rows() != refs.rows())
    throw std::invalid_argument("pairwise_distances: dimension mismatch");

  Matrix out(queries.cols(), refs.cols());
  for (Index i = 0; i < queries.cols(); ++i)
    for (Index j = 0; j < refs.cols(); ++j)
      out(i, j) = euclidean_distance(queries.col(i), refs.col(j));
  return out;
}

}  // namespace toim
