#ifndef TOIM_TRAIN_HPP_
#define TOIM_TRAIN_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "toim/adadelta.hpp"
#include "toim/losses.hpp"
#include "toim/memory.hpp"
#include "toim/mining.hpp"
#include "toim/mlp.hpp"
#include "toim/types.hpp"

namespace toim {

struct TrainConfig {
  double gamma = 0.4;                // table update rate
  Index anchors_per_batch = 15;      // N
  Index ut_capacity = 20;            // U
  Index feature_dim = 512;           // D
  Index hidden_dim = 64;
  Index epochs = 13;
  double lr = 0.001;
  NegativeStrategy negative_strategy = NegativeStrategy::UpdateTable;
  // Unset: per-loss default (on for OIM, whose scores are cosines; off
  // elsewhere, where raw Euclidean distances carry the signal).
  std::optional<bool> normalize_embeddings;
  std::uint64_t seed = 0;
  LossHyper hyper;
  Index pk_identities = 5;  // P (triplet baseline; P*K matches N by default)
  Index pk_samples = 3;     // K
  double adadelta_rho = 0.9;
  double adadelta_eps = 1e-6;

  void validate() const;
  bool resolve_normalize(LossKind kind) const {
    return normalize_embeddings.value_or(kind == LossKind::Oim);
  }
};

/// All mutable state owned by the training loop. The pooled table doubles as
/// OIM's lookup table (one camera column) when training with that loss.
struct TrainerState {
  MlpModel model;
  AdaDeltaState optimizer;
  PooledTable pooled;
  UpdateTable updates;
  PooledTable centers;               // combined loss only
  std::vector<int> identity_values;  // dense index -> raw label
  std::vector<int> camera_values;
};

struct EpochStats {
  double mean_loss = 0.0;
  Index batches = 0;
  Index batches_with_loss = 0;
  Index ut_fallbacks = 0;
  Index skipped_anchors = 0;
};

TrainerState make_trainer(const LabeledSet& train_set, const TrainConfig& cfg,
                          LossKind kind);

/// One pass over the training set: batch construction per loss kind, forward,
/// loss and gradients, backprop, AdaDelta step, then table refreshes in batch
/// order. Deterministic given (cfg.seed, epoch_index).
EpochStats train_epoch(TrainerState& state, const LabeledSet& train_set,
                       const TrainConfig& cfg, LossKind kind, Index epoch_index);

struct TrainRun {
  TrainerState state;
  std::vector<double> epoch_losses;
};

TrainRun train(const LabeledSet& train_set, const TrainConfig& cfg, LossKind kind);

/// Embeds every column of `features` through the model.
Matrix embed_set(const MlpModel& model, const Matrix& features);

/// Dense re-labeling used by the trainer; exposed for evaluation plumbing.
std::vector<SlotKey> dense_keys(const LabeledSet& set, std::vector<int>& identity_values,
                                std::vector<int>& camera_values);

}  // namespace toim

#endif  // TOIM_TRAIN_HPP_
