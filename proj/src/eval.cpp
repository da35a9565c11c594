#include "toim/eval.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "toim/distance.hpp"
#include "toim/rng.hpp"

namespace toim {

namespace {

void check_pair(const LabeledSet& query, const LabeledSet& gallery) {
  query.check_aligned();
  gallery.check_aligned();
  if (query.size() == 0 || gallery.size() == 0)
    throw std::invalid_argument("evaluation: empty query or gallery set");
  if (query.dim() != gallery.dim())
    throw std::invalid_argument("evaluation: query/gallery dimension mismatch");
}

// Gallery order sorted by (distance to query q, index); rank of an entry is
// its 1-based position in this order.
std::vector<Index> ranked_order(const Matrix& dist, Index q,
                                const std::vector<Index>& candidates) {
  std::vector<Index> order = candidates;
  std::sort(order.begin(), order.end(), [&dist, q](Index a, Index b) {
    if (dist(q, a) != dist(q, b)) return dist(q, a) < dist(q, b);
    return a < b;
  });
  return order;
}

}  // namespace

std::vector<double> cmc_cuhk03(const LabeledSet& query, const LabeledSet& gallery,
                               Index max_rank, Index repetitions, std::uint64_t seed) {
  check_pair(query, gallery);
  if (max_rank < 1 || repetitions < 1)
    throw std::invalid_argument("cmc_cuhk03: max_rank and repetitions must be >= 1");

  const Matrix dist = pairwise_distances(query.features, gallery.features);

  // Per query: instances of each identity seen from a different camera.
  struct Pool {
    std::vector<int> ids;                        // ascending
    std::map<int, std::vector<Index>> by_id;     // gallery indices
  };
  std::vector<Pool> pools(static_cast<std::size_t>(query.size()));
  for (Index q = 0; q < query.size(); ++q) {
    Pool& pool = pools[static_cast<std::size_t>(q)];
    for (Index g = 0; g < gallery.size(); ++g)
      if (gallery.cameras[g] != query.cameras[q])
        pool.by_id[gallery.identities[g]].push_back(g);
    for (const auto& [id, _] : pool.by_id) pool.ids.push_back(id);
    if (!pool.by_id.contains(query.identities[q]))
      throw std::invalid_argument("cmc_cuhk03: query " + std::to_string(q) +
                                  " identity absent from cross-camera gallery");
  }

  Rng rng(seed);
  std::vector<double> hits(static_cast<std::size_t>(max_rank), 0.0);
  std::vector<std::pair<double, Index>> shot;
  for (Index rep = 0; rep < repetitions; ++rep) {
    for (Index q = 0; q < query.size(); ++q) {
      const Pool& pool = pools[static_cast<std::size_t>(q)];
      shot.clear();
      double target_d = 0.0;
      Index target_g = -1;
      for (int id : pool.ids) {
        const auto& instances = pool.by_id.at(id);
        const Index g = instances[rng.next_below(instances.size())];
        shot.emplace_back(dist(q, g), g);
        if (id == query.identities[q]) {
          target_d = dist(q, g);
          target_g = g;
        }
      }
      Index rank = 1;
      for (const auto& [d, g] : shot)
        if (d < target_d || (d == target_d && g < target_g)) ++rank;
      if (rank <= max_rank) hits[static_cast<std::size_t>(rank - 1)] += 1.0;
    }
  }

  std::vector<double> cmc(static_cast<std::size_t>(max_rank));
  double acc = 0.0;
  const double total = static_cast<double>(repetitions) * static_cast<double>(query.size());
  for (Index k = 0; k < max_rank; ++k) {
    acc += hits[static_cast<std::size_t>(k)];
    cmc[static_cast<std::size_t>(k)] = acc / total;
  }
  return cmc;
}

namespace {

// Ranked gallery after the Market-style exclusion (same identity AND same
// camera as the query removed). Throws, naming the query, when no positive
// survives.
std::vector<Index> market_ranking(const LabeledSet& query, const LabeledSet& gallery,
                                  const Matrix& dist, Index q) {
  std::vector<Index> keep;
  bool has_positive = false;
  for (Index g = 0; g < gallery.size(); ++g) {
    const bool same_id = gallery.identities[g] == query.identities[q];
    if (same_id && gallery.cameras[g] == query.cameras[q]) continue;
    keep.push_back(g);
    has_positive = has_positive || same_id;
  }
  if (!has_positive)
    throw std::invalid_argument("market protocol: query " + std::to_string(q) +
                                " has no positive left after same-camera exclusion");
  return ranked_order(dist, q, keep);
}

}  // namespace

std::vector<double> cmc_market(const LabeledSet& query, const LabeledSet& gallery,
                               Index max_rank) {
  check_pair(query, gallery);
  if (max_rank < 1) throw std::invalid_argument("cmc_market: max_rank must be >= 1");

  const Matrix dist = pairwise_distances(query.features, gallery.features);
  std::vector<double> hits(static_cast<std::size_t>(max_rank), 0.0);
  for (Index q = 0; q < query.size(); ++q) {
    const std::vector<Index> order = market_ranking(query, gallery, dist, q);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (gallery.identities[order[pos]] == query.identities[q]) {
        const Index rank = static_cast<Index>(pos) + 1;
        if (rank <= max_rank) hits[static_cast<std::size_t>(rank - 1)] += 1.0;
        break;
      }
    }
  }

  std::vector<double> cmc(static_cast<std::size_t>(max_rank));
  double acc = 0.0;
  for (Index k = 0; k < max_rank; ++k) {
    acc += hits[static_cast<std::size_t>(k)];
    cmc[static_cast<std::size_t>(k)] = acc / static_cast<double>(query.size());
  }
  return cmc;
}

double mean_ap(const LabeledSet& query, const LabeledSet& gallery) {
  check_pair(query, gallery);

  const Matrix dist = pairwise_distances(query.features, gallery.features);
  double sum_ap = 0.0;
  for (Index q = 0; q < query.size(); ++q) {
    const std::vector<Index> order = market_ranking(query, gallery, dist, q);
    double precision_sum = 0.0;
    Index positives = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (gallery.identities[order[pos]] == query.identities[q]) {
        ++positives;
        precision_sum += static_cast<double>(positives) / static_cast<double>(pos + 1);
      }
    }
    sum_ap += precision_sum / static_cast<double>(positives);
  }
  return sum_ap / static_cast<double>(query.size());
}

Matrix pca_project(const Matrix& embeddings) {
  const Index n = embeddings.cols();
  if (n < 3) throw std::invalid_argument("pca_project: need at least 3 points");
  if (embeddings.rows() < 2) throw std::invalid_argument("pca_project: need dimension >= 2");

  const Vector mean = embeddings.rowwise().mean();
  const Matrix centered = embeddings.colwise() - mean;
  if (centered.squaredNorm() == 0.0)
    throw std::invalid_argument("pca_project: all points identical (rank-0 data)");

  const Matrix cov =
      centered * centered.transpose() / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("pca_project: eigendecomposition failed");

  // Eigenvalues come out ascending; take the last two, largest first.
  Matrix components(embeddings.rows(), 2);
  components.col(0) = solver.eigenvectors().col(embeddings.rows() - 1);
  components.col(1) = solver.eigenvectors().col(embeddings.rows() - 2);
  for (Index c = 0; c < 2; ++c) {
    for (Index i = 0; i < components.rows(); ++i) {
      if (std::abs(components(i, c)) > 1e-12) {
        if (components(i, c) < 0.0) components.col(c) = -components.col(c);
        break;
      }
    }
  }
  return components.transpose() * centered;
}

EvalReport evaluate(const LabeledSet& query, const LabeledSet& gallery, Index max_rank,
                    Index repetitions, std::uint64_t seed) {
  EvalReport report;
  report.cmc_cuhk03 = cmc_cuhk03(query, gallery, max_rank, repetitions, seed);
  report.cmc_market = cmc_market(query, gallery, max_rank);
  report.map = mean_ap(query, gallery);
  report.repetitions = repetitions;
  return report;
}

}  // namespace toim
