#ifndef TOIM_MINING_HPP_
#define TOIM_MINING_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "toim/losses.hpp"
#include "toim/memory.hpp"
#include "toim/types.hpp"

namespace toim {

struct MiningConfig {
  Index anchors_per_batch = 15;  // N
  NegativeStrategy negative_strategy = NegativeStrategy::UpdateTable;
  std::uint64_t rng_seed = 0;
};

/// Picks N samples with pairwise-distinct identities: identities drawn
/// uniformly without replacement, then a uniform sample of each. Returns
/// indices into `keys`; deterministic given the seed.
std::vector<Index> select_anchors(std::span<const SlotKey> keys, Index n,
                                  std::uint64_t seed);

struct MinedSlot {
  Vector embedding;
  SlotKey key;
};

/// Farthest initialized same-identity slot; ties break toward the lowest
/// camera index. Throws when the identity has no initialized slot.
MinedSlot select_positive(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                          const PooledTable& pt);

struct NegativeResult {
  Vector embedding;
  SlotKey key;
  bool from_fallback = false;  // update table had no eligible entry
};

/// Nearest different-identity slot among the update-table entries; ties break
/// toward the most recent position. When the table holds no eligible entry
/// the search falls back to the whole pooled table (flagged, not an error).
NegativeResult select_negative_ut(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                                  const UpdateTable& ut, const PooledTable& pt);

/// Nearest initialized different-identity slot in the whole pooled table;
/// ties break toward (lowest identity, lowest camera).
MinedSlot select_negative_pt(const Eigen::Ref<const Vector>& anchor, int anchor_id,
                             const PooledTable& pt);

struct BatchResult {
  std::vector<TripletRecord> records;
  std::vector<Index> anchor_indices;  // index into the input samples, per record
  Index ut_fallbacks = 0;
  Index skipped_anchors = 0;
};

/// Assembles up to N triplet records from the given samples (columns of
/// `features` aligned with `keys`). Anchors without an initialized positive
/// slot, or with no reachable negative, are skipped. Throws EmptyBatchError
/// when nothing is constructible.
BatchResult build_batch(const Matrix& features, std::span<const SlotKey> keys,
                        const PooledTable& pt, const UpdateTable& ut,
                        const MiningConfig& cfg);

/// P*K batch construction for the batch-hard triplet baseline: picks P
/// identities having at least K samples each, then K distinct samples per
/// identity. Throws when fewer than P identities qualify; a batch with one
/// sample per identity can never satisfy K >= 2.
std::vector<Index> build_pk_batch(std::span<const SlotKey> keys, Index p, Index k,
                                  std::uint64_t seed);

}  // namespace toim

#endif  // TOIM_MINING_HPP_
