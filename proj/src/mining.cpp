#include "toim/mining.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "toim/distance.hpp"
#include "toim/rng.hpp"

namespace toim {

std::vector<Index> select_anchors(std::span<const SlotKey> keys, Index n,
                                  std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("select_anchors: n must be >= 1");

  std::map<int, std::vector<Index>> by_identity;
  for (std::size_t i = 0; i < keys.size(); ++i)
    by_identity[keys[i].identity].push_back(static_cast<Index>(i));
  if (static_cast<Index>(by_identity.size()) < n)
    throw std::invalid_argument("select_anchors: fewer distinct identities than anchors");

  std::vector<int> ids;
  ids.reserve(by_identity.size());
  for (const auto& [id, _] : by_identity) ids.push_back(id);

  Rng rng(seed);
  // Partial Fisher-Yates: the first n entries are a uniform draw without
  // replacement over identities.
  for (Index i = 0; i < n; ++i) {
    const auto j = i + static_cast<Index>(rng.next_below(ids.size() - static_cast<std::size_t>(i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& pool = by_identity[ids[static_cast<std::size_t>(i)]];
    chosen.push_back(pool[rng.next_below(pool.size())]);
  }
  return chosen;
}

MinedSlot select_positive(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                          const PooledTable& pt) {
  Index best_cam = -1;
  double best = -1.0;
  for (Index cam = 0; cam < pt.camera_count(); ++cam) {
    const SlotKey key{anchor_id, static_cast<int>(cam)};
    if (!pt.initialized(key)) continue;
    const double d = euclidean_distance(anchor, pt.slot(key));
    if (d > best) {  // strict: first (lowest) camera wins ties
      best = d;
      best_cam = cam;
    }
  }
  if (best_cam < 0)
    throw std::invalid_argument("select_positive: no initialized slot for identity " +
                                std::to_string(anchor_id));
  const SlotKey key{anchor_id, static_cast<int>(best_cam)};
  return {Vector(pt.slot(key)), key};
}

NegativeResult select_negative_ut(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                                  const UpdateTable& ut, const PooledTable& pt) {
  const auto& entries = ut.entries();
  Index best_pos = -1;
  double best = std::numeric_limits<double>::infinity();
  // Newest-first scan; strict comparison keeps the most recent on ties.
  for (Index pos = static_cast<Index>(entries.size()) - 1; pos >= 0; --pos) {
    const SlotKey key = entries[static_cast<std::size_t>(pos)];
    if (key.identity == anchor_id) continue;
    const double d = euclidean_distance(anchor, pt.slot(key));
    if (d < best) {
      best = d;
      best_pos = pos;
    }
  }
  if (best_pos < 0) {
    MinedSlot fallback = select_negative_pt(anchor, anchor_id, pt);
    return {std::move(fallback.embedding), fallback.key, true};
  }
  const SlotKey key = entries[static_cast<std::size_t>(best_pos)];
  return {Vector(pt.slot(key)), key, false};
}

MinedSlot select_negative_pt(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                             const PooledTable& pt) {
  SlotKey best_key{-1, -1};
  double best = std::numeric_limits<double>::infinity();
  for (Index id = 0; id < pt.identity_count(); ++id) {
    if (static_cast<int>(id) == anchor_id) continue;
    for (Index cam = 0; cam < pt.camera_count(); ++cam) {
      const SlotKey key{static_cast<int>(id), static_cast<int>(cam)};
      if (!pt.initialized(key)) continue;
      const double d = euclidean_distance(anchor, pt.slot(key));
      if (d < best) {  // strict: lowest (identity, camera) wins ties
        best = d;
        best_key = key;
      }
    }
  }
  if (best_key.identity < 0)
    throw std::invalid_argument("select_negative_pt: no initialized different-identity slot");
  return {Vector(pt.slot(best_key)), best_key};
}

BatchResult build_batch(const Matrix& features, std::span<const SlotKey> keys,
                        const PooledTable& pt, const UpdateTable& ut,
                        const MiningConfig& cfg) {
  if (features.cols() != static_cast<Index>(keys.size()))
    throw std::invalid_argument("build_batch: features/keys misaligned");

  const std::vector<Index> anchors =
      select_anchors(keys, cfg.anchors_per_batch, cfg.rng_seed);

  BatchResult result;
  for (Index idx : anchors) {
    const SlotKey anchor_key = keys[static_cast<std::size_t>(idx)];
    const auto anchor = features.col(idx);

    MinedSlot positive;
    try {
      positive = select_positive(anchor, anchor_key.identity, pt);
    } catch (const std::invalid_argument&) {
      ++result.skipped_anchors;  // sparse table early in training
      continue;
    }

    Vector negative;
    SlotKey negative_key;
    try {
      if (cfg.negative_strategy == NegativeStrategy::UpdateTable) {
        NegativeResult neg = select_negative_ut(anchor, anchor_key.identity, ut, pt);
        if (neg.from_fallback) ++result.ut_fallbacks;
        negative = std::move(neg.embedding);
        negative_key = neg.key;
      } else {
        MinedSlot neg = select_negative_pt(anchor, anchor_key.identity, pt);
        negative = std::move(neg.embedding);
        negative_key = neg.key;
      }
    } catch (const std::invalid_argument&) {
      ++result.skipped_anchors;
      continue;
    }

    result.records.push_back({Vector(anchor), std::move(positive.embedding),
                              std::move(negative), anchor_key, positive.key,
                              negative_key});
    result.anchor_indices.push_back(idx);
  }

  if (result.records.empty())
    throw EmptyBatchError("build_batch: zero constructible triplet records");
  return result;
}

std::vector<Index> build_pk_batch(std::span<const SlotKey> keys, Index p, Index k,
                                  std::uint64_t seed) {
  if (p < 2 || k < 2)
    throw std::invalid_argument("build_pk_batch: requires P >= 2 identities and K >= 2 samples");

  std::map<int, std::vector<Index>> by_identity;
  for (std::size_t i = 0; i < keys.size(); ++i)
    by_identity[keys[i].identity].push_back(static_cast<Index>(i));

  std::vector<int> eligible;
  for (const auto& [id, pool] : by_identity)
    if (static_cast<Index>(pool.size()) >= k) eligible.push_back(id);
  if (static_cast<Index>(eligible.size()) < p)
    throw std::invalid_argument(
        "build_pk_batch: need " + std::to_string(p) + " identities with at least " +
        std::to_string(k) + " samples each, found " + std::to_string(eligible.size()));

  Rng rng(seed);
  for (Index i = 0; i < p; ++i) {
    const auto j = i + static_cast<Index>(rng.next_below(eligible.size() - static_cast<std::size_t>(i)));
    std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(j)]);
  }

  std::vector<Index> batch;
  batch.reserve(static_cast<std::size_t>(p * k));
  for (Index i = 0; i < p; ++i) {
    auto pool = by_identity[eligible[static_cast<std::size_t>(i)]];
    for (Index s = 0; s < k; ++s) {
      const auto j = s + static_cast<Index>(rng.next_below(pool.size() - static_cast<std::size_t>(s)));
      std::swap(pool[static_cast<std::size_t>(s)], pool[static_cast<std::size_t>(j)]);
      batch.push_back(pool[static_cast<std::size_t>(s)]);
    }
  }
  return batch;
}

}  // namespace toim
