#ifndef TOIM_MEMORY_HPP_
#define TOIM_MEMORY_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "toim/types.hpp"

namespace toim {

/// Per-identity, per-camera feature slots with exponential moving-average
/// refresh. Slot (identity, camera) lives at column identity * C + camera.
///
/// A slot written for the first time takes the incoming feature verbatim
/// instead of mixing with the zero vector; mixing would shrink early
/// features toward the origin.
class PooledTable {
 public:
  PooledTable() = default;
  PooledTable(Index identities, Index cameras, Index dim);

  Index identity_count() const { return identities_; }
  Index camera_count() const { return cameras_; }
  Index dim() const { return dim_; }
  Index slot_count() const { return identities_ * cameras_; }

  bool initialized(SlotKey key) const { return init_[flat(key)] != 0; }

  /// Stored feature for a slot; zero vector while uninitialized.
  Eigen::Ref<const Vector> slot(SlotKey key) const { return slots_.col(flat(key)); }

  struct Lookup {
    Eigen::Ref<const Vector> embedding;
    bool initialized;
  };
  Lookup lookup(SlotKey key) const { return {slots_.col(flat(key)), initialized(key)}; }

  /// EMA refresh: slot <- gamma * slot + (1 - gamma) * f, coordinate-wise.
  /// First write stores f exactly and marks the slot initialized.
  void update(SlotKey key, const Eigen::Ref<const Vector>& f, double gamma);

  /// Overwrites a slot verbatim and marks it initialized.
  void set_slot(SlotKey key, const Eigen::Ref<const Vector>& f);

  const Matrix& raw_slots() const { return slots_; }
  const std::vector<std::uint8_t>& raw_flags() const { return init_; }

  friend bool operator==(const PooledTable&, const PooledTable&) = default;

 private:
  Index flat(SlotKey key) const;

  Index identities_ = 0;
  Index cameras_ = 0;
  Index dim_ = 0;
  Matrix slots_;  // dim_ x (identities_ * cameras_)
  std::vector<std::uint8_t> init_;
};

/// Fixed-capacity recency queue of slot keys, oldest first. Re-pushing a key
/// already present moves it to the newest position rather than duplicating
/// it, so the queue always names distinct slots.
class UpdateTable {
 public:
  UpdateTable() = default;
  explicit UpdateTable(Index capacity);

  Index capacity() const { return capacity_; }
  Index size() const { return static_cast<Index>(entries_.size()); }
  const std::vector<SlotKey>& entries() const { return entries_; }

  void push(SlotKey key);

  friend bool operator==(const UpdateTable&, const UpdateTable&) = default;

 private:
  Index capacity_ = 0;
  std::vector<SlotKey> entries_;
};

/// Flat binary serialization (little-endian): magic, M, C, D, init flags,
/// then slot data row-major over (identity, camera). Round-trips losslessly.
void save_pooled_table(const PooledTable& table, std::ostream& out);
PooledTable load_pooled_table(std::istream& in);
void save_pooled_table(const PooledTable& table, const std::string& path);
PooledTable load_pooled_table(const std::string& path);

}  // namespace toim

#endif  // TOIM_MEMORY_HPP_
