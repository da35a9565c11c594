#include "toim/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "toim/rng.hpp"

namespace toim {

namespace {

enum Stream : std::uint64_t {
  kModelInit = 11,
  kAnchorSelection = 12,
  kShuffle = 14,
};

constexpr double kNormFloor = 1e-12;

void check_finite_loss(double value) {
  if (!std::isfinite(value)) throw std::runtime_error("training: non-finite loss");
}

std::vector<Index> shuffled_indices(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

struct EmbeddedBatch {
  Matrix features;  // D x B
  std::vector<ForwardCache> caches;
};

EmbeddedBatch embed_batch(const MlpModel& model, const LabeledSet& set,
                          const std::vector<Index>& indices) {
  EmbeddedBatch batch;
  batch.features.resize(model.shape().output_dim, static_cast<Index>(indices.size()));
  batch.caches.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    batch.features.col(static_cast<Index>(i)) =
        mlp_forward(model, set.features.col(indices[i]), &batch.caches[i]);
  return batch;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TrainConfig: gamma outside [0, 1]");
  if (anchors_per_batch < 1) throw std::invalid_argument("TrainConfig: N must be >= 1");
  if (ut_capacity < 1) throw std::invalid_argument("TrainConfig: U must be >= 1");
  if (feature_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("TrainConfig: dimensions must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epoch count");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (pk_identities < 2 || pk_samples < 2)
    throw std::invalid_argument("TrainConfig: P and K must be >= 2");
  hyper.validate();
}

std::vector<SlotKey> dense_keys(const LabeledSet& set, std::vector<int>& identity_values,
                                std::vector<int>& camera_values) {
  std::map<int, int> id_map;
  std::map<int, int> cam_map;
  for (Index i = 0; i < set.size(); ++i) {
    id_map.emplace(set.identities[i], 0);
    cam_map.emplace(set.cameras[i], 0);
  }
  identity_values.clear();
  camera_values.clear();
  for (auto& [raw, dense] : id_map) {
    dense = static_cast<int>(identity_values.size());
    identity_values.push_back(raw);
  }
  for (auto& [raw, dense] : cam_map) {
    dense = static_cast<int>(camera_values.size());
    camera_values.push_back(raw);
  }
  std::vector<SlotKey> keys(static_cast<std::size_t>(set.size()));
  for (Index i = 0; i < set.size(); ++i)
    keys[static_cast<std::size_t>(i)] = {id_map[set.identities[i]],
                                         cam_map[set.cameras[i]]};
  return keys;
}

TrainerState make_trainer(const LabeledSet& train_set, const TrainConfig& cfg,
                          LossKind kind) {
  cfg.validate();
  train_set.check_aligned();
  if (train_set.size() == 0) throw std::invalid_argument("make_trainer: empty dataset");

  TrainerState state;
  dense_keys(train_set, state.identity_values, state.camera_values);
  const Index identities = static_cast<Index>(state.identity_values.size());
  const Index cameras = static_cast<Index>(state.camera_values.size());

  const bool with_head = kind == LossKind::SoftmaxCe || kind == LossKind::Combined;
  MlpShape shape{train_set.dim(), cfg.hidden_dim, cfg.feature_dim,
                 with_head ? identities : Index{0}, cfg.resolve_normalize(kind)};
  state.model = MlpModel(shape, derive_seed(cfg.seed, kModelInit));
  state.optimizer = AdaDeltaState(state.model.params().size(), cfg.adadelta_rho,
                                  cfg.adadelta_eps, cfg.lr);
  // OIM keeps one class vector per identity; the camera axis collapses.
  state.pooled = PooledTable(identities, kind == LossKind::Oim ? 1 : cameras,
                             cfg.feature_dim);
  state.updates = UpdateTable(cfg.ut_capacity);
  state.centers = PooledTable(identities, 1, cfg.feature_dim);
  return state;
}

namespace {

// TOIM and the combined objective share this: mine triplets against the
// tables, return the loss aligned to the batch anchors.
struct MinedLoss {
  LossOutput aligned;  // gradients scattered onto all B anchors
  double raw_value = 0.0;
  bool any_records = false;
  Index ut_fallbacks = 0;
  Index skipped = 0;
};

MinedLoss mine_and_score(const EmbeddedBatch& batch, const std::vector<SlotKey>& keys,
                         const TrainerState& state, const TrainConfig& cfg,
                         std::uint64_t seed) {
  const Index b = batch.features.cols();
  MinedLoss out;
  out.aligned.value = 0.0;
  out.aligned.anchor_gradients = Matrix::Zero(batch.features.rows(), b);

  MiningConfig mining{b, cfg.negative_strategy, seed};
  BatchResult mined;
  try {
    mined = build_batch(batch.features, keys, state.pooled, state.updates, mining);
  } catch (const EmptyBatchError&) {
    return out;  // nothing constructible yet (sparse table); tables still refresh
  }

  const LossOutput loss = toim_loss(mined.records);
  out.aligned.value = loss.value;
  out.raw_value = loss.value;
  for (std::size_t r = 0; r < mined.records.size(); ++r)
    out.aligned.anchor_gradients.col(mined.anchor_indices[r]) +=
        loss.anchor_gradients.col(static_cast<Index>(r));
  out.any_records = true;
  out.ut_fallbacks = mined.ut_fallbacks;
  out.skipped = mined.skipped_anchors;
  return out;
}

}  // namespace

EpochStats train_epoch(TrainerState& state, const LabeledSet& train_set,
                       const TrainConfig& cfg, LossKind kind, Index epoch_index) {
  cfg.validate();
  train_set.check_aligned();
  const Index n = train_set.size();
  if (n == 0) throw std::invalid_argument("train_epoch: empty dataset");

  std::vector<int> id_values, cam_values;
  const std::vector<SlotKey> keys = dense_keys(train_set, id_values, cam_values);
  if (id_values != state.identity_values || cam_values != state.camera_values)
    throw std::invalid_argument("train_epoch: dataset labels do not match trainer state");

  const std::uint64_t epoch_seed = derive_seed(cfg.seed, kAnchorSelection, epoch_index);
  EpochStats stats;
  double total = 0.0;

  auto finish_batch = [&](double value, bool counted) {
    check_finite_loss(value);
    ++stats.batches;
    if (counted) {
      ++stats.batches_with_loss;
      total += value;
    }
  };

  const bool anchored = kind == LossKind::Toim || kind == LossKind::Combined;
  if (anchored) {
    const Index batches = std::max<Index>(1, n / cfg.anchors_per_batch);
    for (Index b = 0; b < batches; ++b) {
      const std::vector<Index> anchors =
          select_anchors(keys, cfg.anchors_per_batch, derive_seed(epoch_seed, 1, b));
      EmbeddedBatch batch = embed_batch(state.model, train_set, anchors);
      std::vector<SlotKey> anchor_keys;
      anchor_keys.reserve(anchors.size());
      for (Index idx : anchors) anchor_keys.push_back(keys[static_cast<std::size_t>(idx)]);

      MinedLoss mined = mine_and_score(batch, anchor_keys, state, cfg,
                                       derive_seed(epoch_seed, 2, b));
      stats.ut_fallbacks += mined.ut_fallbacks;
      stats.skipped_anchors += mined.skipped;

      Vector grad = Vector::Zero(state.model.params().size());
      double batch_value = 0.0;
      bool counted = false;

      if (kind == LossKind::Toim) {
        if (mined.any_records) {
          for (Index i = 0; i < batch.features.cols(); ++i)
            mlp_backward_accumulate(state.model, batch.caches[static_cast<std::size_t>(i)],
                                    mined.aligned.anchor_gradients.col(i), grad);
          adadelta_step(state.optimizer, state.model.params(), grad);
          batch_value = mined.aligned.value;
          counted = true;
        }
      } else {  // Combined: identity term + TOIM term + weighted centers
        IntVector labels(batch.features.cols());
        for (Index i = 0; i < batch.features.cols(); ++i)
          labels[i] = anchor_keys[static_cast<std::size_t>(i)].identity;

        Matrix logits(state.model.shape().head_classes, batch.features.cols());
        for (Index i = 0; i < batch.features.cols(); ++i)
          logits.col(i) = head_forward(state.model, batch.features.col(i));
        const LossOutput ce = softmax_ce_loss(logits, labels);

        LossOutput ce_embedding;
        ce_embedding.value = ce.value;
        ce_embedding.anchor_gradients.resize(batch.features.rows(), batch.features.cols());
        for (Index i = 0; i < batch.features.cols(); ++i)
          ce_embedding.anchor_gradients.col(i) = head_backward_accumulate(
              state.model, batch.features.col(i), ce.anchor_gradients.col(i), grad);

        // First sight of an identity seeds its center with the live feature.
        for (Index i = 0; i < batch.features.cols(); ++i) {
          const SlotKey ckey{labels[i], 0};
          if (!state.centers.initialized(ckey))
            state.centers.update(ckey, batch.features.col(i), cfg.gamma);
        }
        const LossOutput centers = center_loss(batch.features, labels, state.centers);

        const LossOutput combined =
            combined_loss(ce_embedding, mined.aligned, centers, cfg.hyper.beta);
        for (Index i = 0; i < batch.features.cols(); ++i)
          mlp_backward_accumulate(state.model, batch.caches[static_cast<std::size_t>(i)],
                                  combined.anchor_gradients.col(i), grad);
        adadelta_step(state.optimizer, state.model.params(), grad);
        batch_value = combined.value;
        counted = true;
      }

      // Table refresh in batch order with the pre-step features.
      for (Index i = 0; i < batch.features.cols(); ++i) {
        const SlotKey key = anchor_keys[static_cast<std::size_t>(i)];
        state.pooled.update(key, batch.features.col(i), cfg.gamma);
        state.updates.push(key);
        if (kind == LossKind::Combined)
          state.centers.update({key.identity, 0}, batch.features.col(i), cfg.gamma);
      }
      finish_batch(batch_value, counted);
    }
    stats.mean_loss = stats.batches_with_loss > 0
                          ? total / static_cast<double>(stats.batches_with_loss)
                          : 0.0;
    return stats;
  }

  if (kind == LossKind::Triplet) {
    const Index per_batch = cfg.pk_identities * cfg.pk_samples;
    const Index batches = std::max<Index>(1, n / per_batch);
    for (Index b = 0; b < batches; ++b) {
      const std::vector<Index> chosen =
          build_pk_batch(keys, cfg.pk_identities, cfg.pk_samples, derive_seed(epoch_seed, 1, b));
      EmbeddedBatch batch = embed_batch(state.model, train_set, chosen);
      IntVector labels(batch.features.cols());
      for (Index i = 0; i < batch.features.cols(); ++i)
        labels[i] = keys[static_cast<std::size_t>(chosen[static_cast<std::size_t>(i)])].identity;

      const LossOutput loss =
          triplet_loss_batchhard(batch.features, labels, cfg.hyper.margin);
      Vector grad = Vector::Zero(state.model.params().size());
      for (Index i = 0; i < batch.features.cols(); ++i)
        mlp_backward_accumulate(state.model, batch.caches[static_cast<std::size_t>(i)],
                                loss.anchor_gradients.col(i), grad);
      adadelta_step(state.optimizer, state.model.params(), grad);
      finish_batch(loss.value, true);
    }
    stats.mean_loss = total / static_cast<double>(stats.batches);
    return stats;
  }

  // SoftmaxCe and Oim: one shuffled pass in batches of N.
  const std::vector<Index> order = shuffled_indices(n, derive_seed(epoch_seed, kShuffle));
  const Index batch_size = std::min<Index>(cfg.anchors_per_batch, n);
  for (Index start = 0; start < n; start += batch_size) {
    const Index b = std::min<Index>(batch_size, n - start);
    std::vector<Index> chosen(order.begin() + start, order.begin() + start + b);
    EmbeddedBatch batch = embed_batch(state.model, train_set, chosen);
    IntVector labels(b);
    for (Index i = 0; i < b; ++i)
      labels[i] = keys[static_cast<std::size_t>(chosen[static_cast<std::size_t>(i)])].identity;

    Vector grad = Vector::Zero(state.model.params().size());
    double batch_value = 0.0;

    if (kind == LossKind::SoftmaxCe) {
      Matrix logits(state.model.shape().head_classes, b);
      for (Index i = 0; i < b; ++i)
        logits.col(i) = head_forward(state.model, batch.features.col(i));
      const LossOutput loss = softmax_ce_loss(logits, labels);
      for (Index i = 0; i < b; ++i) {
        const Vector g_emb = head_backward_accumulate(
            state.model, batch.features.col(i), loss.anchor_gradients.col(i), grad);
        mlp_backward_accumulate(state.model, batch.caches[static_cast<std::size_t>(i)],
                                g_emb, grad);
      }
      batch_value = loss.value;
    } else {  // Oim
      const Matrix empty_queue(cfg.feature_dim, 0);
      for (Index i = 0; i < b; ++i) {
        const LossOutput loss = oim_loss(batch.features.col(i), labels[i], state.pooled,
                                         empty_queue, cfg.hyper.tau);
        batch_value += loss.value / static_cast<double>(b);
        mlp_backward_accumulate(state.model, batch.caches[static_cast<std::size_t>(i)],
                                loss.anchor_gradients / static_cast<double>(b), grad);
      }
    }

    adadelta_step(state.optimizer, state.model.params(), grad);

    if (kind == LossKind::Oim) {
      // Lookup-table refresh: EMA then renormalize, keeping rows unit length.
      for (Index i = 0; i < b; ++i) {
        const SlotKey key{labels[i], 0};
        state.pooled.update(key, batch.features.col(i), cfg.gamma);
        const Vector row = state.pooled.slot(key);
        state.pooled.set_slot(key, row / std::fmax(row.norm(), kNormFloor));
      }
    }
    finish_batch(batch_value, true);
  }
  stats.mean_loss = total / static_cast<double>(stats.batches);
  return stats;
}

TrainRun train(const LabeledSet& train_set, const TrainConfig& cfg, LossKind kind) {
  TrainRun run{make_trainer(train_set, cfg, kind), {}};
  run.epoch_losses.reserve(static_cast<std::size_t>(cfg.epochs));
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch)
    run.epoch_losses.push_back(
        train_epoch(run.state, train_set, cfg, kind, epoch).mean_loss);
  return run;
}

Matrix embed_set(const MlpModel& model, const Matrix& features) {
  Matrix out(model.shape().output_dim, features.cols());
  for (Index i = 0; i < features.cols(); ++i)
    out.col(i) = mlp_forward(model, features.col(i));
  return out;
}

}  // namespace toim
