#ifndef TOIM_LOSSES_HPP_
#define TOIM_LOSSES_HPP_

#include <vector>

#include "toim/memory.hpp"
#include "toim/types.hpp"

namespace toim {

/// One mined triplet: a live anchor feature plus positive/negative features
/// taken from the pooled table. Table features act as buffers; gradients
/// flow to the anchor only.
struct TripletRecord {
  Vector anchor;
  Vector positive;
  Vector negative;
  SlotKey anchor_key;
  SlotKey positive_key;
  SlotKey negative_key;
};

/// Loss value plus the gradient of the value w.r.t. each input feature,
/// one column per feature (anchors for triplet-style losses, logits for
/// the cross-entropy).
struct LossOutput {
  double value = 0.0;
  Matrix anchor_gradients;
};

struct LossHyper {
  double margin = 0.3;   // triplet hinge margin
  double tau = 0.1;      // OIM temperature
  double beta = 0.0005;  // center-loss weight in the combined objective
  double gamma = 0.4;    // table update rate

  void validate() const;
};

/// TOIM loss over a mined batch:
///   value = sum_i softplus(d(a_i, p_i) - d(a_i, n_i)),
/// the log-space form of -log(e^{d(a,n)} / (e^{d(a,n)} + e^{d(a,p)})).
/// Per-anchor gradient:
///   sigma(d_ap - d_an) * ((a - p)/d_ap - (a - n)/d_an),
/// with distances in the denominators clamped below at 1e-12 (the value is
/// finite at zero distance but its gradient is not defined there).
LossOutput toim_loss(const std::vector<TripletRecord>& batch);

/// Batch-hard triplet: for each sample as anchor, hardest positive is the
/// farthest same-identity sample in the batch and hardest negative the
/// nearest different-identity sample; value = sum_i max(0, m + d_ap - d_an).
/// Gradients cover every role a sample plays (anchor, mined positive, mined
/// negative); inactive hinges contribute nothing.
LossOutput triplet_loss_batchhard(const Matrix& features, const IntVector& identities,
                                  double margin);

/// Mean cross-entropy over log-softmax of the true class; gradient per
/// sample is (softmax - onehot) / batch_size. Stable under large logits.
LossOutput softmax_ce_loss(const Matrix& logits, const IntVector& labels);

/// OIM loss for one feature against a lookup table of class vectors
/// (a PooledTable with a single camera column) plus an optional queue of
/// unlabeled features. Scores are dot products over tau; feature, table rows
/// and queue columns must be L2-normalized (zero rows are allowed: they are
/// slots not yet written, and contribute e^0 to the partition).
LossOutput oim_loss(const Vector& feature, int label, const PooledTable& lut,
                    const Matrix& circular_queue, double tau);

/// Center loss: value = 1/2 sum_i ||f_i - c_{y_i}||^2 with gradient
/// f_i - c_{y_i}. Centers live in a single-camera PooledTable and are
/// refreshed by the caller.
LossOutput center_loss(const Matrix& features, const IntVector& identities,
                       const PooledTable& centers);

/// Weighted sum of an identity term, a TOIM term and a center term:
/// value = id + toim + beta * center, gradients combined the same way.
/// All gradient blocks must align on the same anchors.
LossOutput combined_loss(const LossOutput& id_term, const LossOutput& toim_term,
                         const LossOutput& center_term, double beta);

}  // namespace toim

#endif  // TOIM_LOSSES_HPP_
