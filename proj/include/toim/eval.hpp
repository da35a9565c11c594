#ifndef TOIM_EVAL_HPP_
#define TOIM_EVAL_HPP_

#include <cstdint>
#include <vector>

#include "toim/types.hpp"

namespace toim {

/// The two CMC protocol variants plus mAP for one query/gallery split.
struct EvalReport {
  std::vector<double> cmc_cuhk03;
  std::vector<double> cmc_market;
  double map = 0.0;
  Index repetitions = 0;
};

/// Single-gallery-shot CMC. Per query, gallery entries sharing the query's
/// camera are removed; each repetition samples one instance per remaining
/// identity, ranks them by distance (ties by gallery index) and records the
/// rank of the query's identity. Rates are averaged over queries and
/// repetitions; deterministic given the seed.
std::vector<double> cmc_cuhk03(const LabeledSet& query, const LabeledSet& gallery,
                               Index max_rank, Index repetitions, std::uint64_t seed);

/// Multi-shot CMC. Per query, gallery entries sharing BOTH its identity and
/// camera are excluded; the hit is the rank of the nearest remaining
/// same-identity entry, so the easiest positive decides.
std::vector<double> cmc_market(const LabeledSet& query, const LabeledSet& gallery,
                               Index max_rank);

/// Mean average precision under the same exclusion rule as cmc_market.
/// AP per query is the mean of precision-at-rank over its positives.
double mean_ap(const LabeledSet& query, const LabeledSet& gallery);

/// Projects columns onto the top-2 principal directions of their covariance.
/// Signs are fixed so each direction's first non-zero loading is positive.
/// Returns a 2 x n matrix of projected points (centered data).
Matrix pca_project(const Matrix& embeddings);

EvalReport evaluate(const LabeledSet& query, const LabeledSet& gallery, Index max_rank,
                    Index repetitions, std::uint64_t seed);

}  // namespace toim

#endif  // TOIM_EVAL_HPP_
