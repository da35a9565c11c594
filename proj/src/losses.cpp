#include "toim/losses.hpp"

#include <cmath>
#include <limits>

#include "toim/distance.hpp"

namespace toim {

namespace {

constexpr double kDistanceFloor = 1e-12;  // gradient denominators only
constexpr double kNormTolerance = 1e-3;   // OIM unit-norm guard

bool near_unit(double norm) { return std::abs(norm - 1.0) <= kNormTolerance; }

}  // namespace

void LossHyper::validate() const {
  if (margin < 0.0) throw std::invalid_argument("LossHyper: margin must be >= 0");
  if (tau <= 0.0) throw std::invalid_argument("LossHyper: tau must be > 0");
  if (beta < 0.0) throw std::invalid_argument("LossHyper: beta must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("LossHyper: gamma outside [0, 1]");
}

LossOutput toim_loss(const std::vector<TripletRecord>& batch) {
  if (batch.empty()) throw std::invalid_argument("toim_loss: empty batch");
  const Index dim = batch.front().anchor.size();

  LossOutput out;
  out.anchor_gradients = Matrix::Zero(dim, static_cast<Index>(batch.size()));

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TripletRecord& rec = batch[i];
    if (rec.anchor.size() != dim || rec.positive.size() != dim ||
        rec.negative.size() != dim)
      throw std::invalid_argument("toim_loss: record dimension mismatch");
    if (!rec.anchor.allFinite() || !rec.positive.allFinite() || !rec.negative.allFinite())
      throw std::invalid_argument("toim_loss: non-finite feature");
    if (rec.positive_key.identity != rec.anchor_key.identity)
      throw std::invalid_argument("toim_loss: positive identity differs from anchor");
    if (rec.negative_key.identity == rec.anchor_key.identity)
      throw std::invalid_argument("toim_loss: negative shares the anchor identity");

    const double d_ap = euclidean_distance(rec.anchor, rec.positive);
    const double d_an = euclidean_distance(rec.anchor, rec.negative);
    out.value += stable_softplus(d_ap - d_an);

    const double s = logistic(d_ap - d_an);
    const double ap = std::fmax(d_ap, kDistanceFloor);
    const double an = std::fmax(d_an, kDistanceFloor);
    out.anchor_gradients.col(static_cast<Index>(i)) =
        s * ((rec.anchor - rec.positive) / ap - (rec.anchor - rec.negative) / an);
  }
  return out;
}

LossOutput triplet_loss_batchhard(const Matrix& features, const IntVector& identities,
                                  double margin) {
  const Index n = features.cols();
  if (n != identities.size())
    throw std::invalid_argument("triplet_loss_batchhard: misaligned labels");
  if (n < 2) throw std::invalid_argument("triplet_loss_batchhard: batch too small");
  if (margin < 0.0) throw std::invalid_argument("triplet_loss_batchhard: negative margin");

  bool multiple_ids = false;
  for (Index i = 1; i < n && !multiple_ids; ++i)
    multiple_ids = identities[i] != identities[0];
  if (!multiple_ids)
    throw std::invalid_argument(
        "triplet_loss_batchhard: batch holds a single identity, no negatives exist");

  const Matrix dist = pairwise_distances(features, features);

  LossOutput out;
  out.anchor_gradients = Matrix::Zero(features.rows(), n);

  for (Index i = 0; i < n; ++i) {
    // Hardest positive: farthest same-identity column (the anchor itself
    // counts at distance zero, so it only wins when it is the sole member).
    Index p = i;
    double d_ap = 0.0;
    Index nneg = -1;
    double d_an = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (identities[j] == identities[i]) {
        if (dist(i, j) > d_ap) {
          d_ap = dist(i, j);
          p = j;
        }
      } else if (dist(i, j) < d_an) {
        d_an = dist(i, j);
        nneg = j;
      }
    }

    const double hinge = margin + d_ap - d_an;
    if (hinge <= 0.0) continue;
    out.value += hinge;

    if (p != i) {
      const double ap = std::fmax(d_ap, kDistanceFloor);
      Vector diff = (features.col(i) - features.col(p)) / ap;
      out.anchor_gradients.col(i) += diff;
      out.anchor_gradients.col(p) -= diff;
    }
    const double an = std::fmax(d_an, kDistanceFloor);
    Vector diff = (features.col(i) - features.col(nneg)) / an;
    out.anchor_gradients.col(i) -= diff;
    out.anchor_gradients.col(nneg) += diff;
  }
  return out;
}

LossOutput softmax_ce_loss(const Matrix& logits, const IntVector& labels) {
  const Index n = logits.cols();
  const Index classes = logits.rows();
  if (n != labels.size())
    throw std::invalid_argument("softmax_ce_loss: misaligned labels");
  if (n == 0) throw std::invalid_argument("softmax_ce_loss: empty batch");
  if (!logits.allFinite()) throw std::invalid_argument("softmax_ce_loss: non-finite logits");

  LossOutput out;
  out.anchor_gradients.resize(classes, n);

  for (Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw std::invalid_argument("softmax_ce_loss: label out of range");
    const double peak = logits.col(i).maxCoeff();
    const Vector shifted = logits.col(i).array() - peak;
    const double lse = std::log(shifted.array().exp().sum());
    out.value += -(shifted[labels[i]] - lse);
    out.anchor_gradients.col(i) = (shifted.array() - lse).exp() / static_cast<double>(n);
    out.anchor_gradients(labels[i], i) -= 1.0 / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

LossOutput oim_loss(const Vector& feature, int label, const PooledTable& lut,
                    const Matrix& circular_queue, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("oim_loss: tau must be > 0");
  if (lut.camera_count() != 1)
    throw std::invalid_argument("oim_loss: lookup table must have one camera column");
  if (feature.size() != lut.dim())
    throw std::invalid_argument("oim_loss: dimension mismatch");
  if (label < 0 || label >= lut.identity_count())
    throw std::invalid_argument("oim_loss: label out of range");
  if (!near_unit(feature.norm()))
    throw std::invalid_argument("oim_loss: feature is not L2-normalized");

  const Index classes = lut.identity_count();
  const Index queued = circular_queue.cols();
  if (queued > 0 && circular_queue.rows() != feature.size())
    throw std::invalid_argument("oim_loss: queue dimension mismatch");

  Vector scores(classes + queued);
  for (Index j = 0; j < classes; ++j) {
    const auto row = lut.slot({static_cast<int>(j), 0});
    const double norm = row.norm();
    if (norm != 0.0 && !near_unit(norm))
      throw std::invalid_argument("oim_loss: table row is not L2-normalized");
    scores[j] = row.dot(feature) / tau;
  }
  for (Index k = 0; k < queued; ++k) {
    if (!near_unit(circular_queue.col(k).norm()))
      throw std::invalid_argument("oim_loss: queue column is not L2-normalized");
    scores[classes + k] = circular_queue.col(k).dot(feature) / tau;
  }

  const double peak = scores.maxCoeff();
  const Vector shifted = scores.array() - peak;
  const double lse = std::log(shifted.array().exp().sum());
  const Vector probs = (shifted.array() - lse).exp();

  LossOutput out;
  out.value = -(shifted[label] - lse);

  Vector grad = Vector::Zero(feature.size());
  for (Index j = 0; j < classes; ++j)
    grad += probs[j] * lut.slot({static_cast<int>(j), 0});
  for (Index k = 0; k < queued; ++k) grad += probs[classes + k] * circular_queue.col(k);
  grad -= lut.slot({label, 0});
  out.anchor_gradients = grad / tau;
  return out;
}

LossOutput center_loss(const Matrix& features, const IntVector& identities,
                       const PooledTable& centers) {
  const Index n = features.cols();
  if (n != identities.size())
    throw std::invalid_argument("center_loss: misaligned labels");
  if (n == 0) throw std::invalid_argument("center_loss: empty batch");
  if (centers.camera_count() != 1)
    throw std::invalid_argument("center_loss: centers must have one camera column");
  if (features.rows() != centers.dim())
    throw std::invalid_argument("center_loss: dimension mismatch");

  LossOutput out;
  out.anchor_gradients.resize(features.rows(), n);
  for (Index i = 0; i < n; ++i) {
    const SlotKey key{identities[i], 0};
    if (identities[i] < 0 || identities[i] >= centers.identity_count() ||
        !centers.initialized(key))
      throw std::invalid_argument("center_loss: missing center for identity " +
                                  std::to_string(identities[i]));
    const Vector diff = features.col(i) - centers.slot(key);
    out.value += 0.5 * diff.squaredNorm();
    out.anchor_gradients.col(i) = diff;
  }
  return out;
}

LossOutput combined_loss(const LossOutput& id_term, const LossOutput& toim_term,
                         const LossOutput& center_term, double beta) {
  if (beta < 0.0) throw std::invalid_argument("combined_loss: beta must be >= 0");
  if (id_term.anchor_gradients.rows() != toim_term.anchor_gradients.rows() ||
      id_term.anchor_gradients.cols() != toim_term.anchor_gradients.cols() ||
      id_term.anchor_gradients.rows() != center_term.anchor_gradients.rows() ||
      id_term.anchor_gradients.cols() != center_term.anchor_gradients.cols())
    throw std::invalid_argument("combined_loss: gradient blocks misaligned");

  LossOutput out;
  out.value = id_term.value + toim_term.value + beta * center_term.value;
  out.anchor_gradients = id_term.anchor_gradients + toim_term.anchor_gradients +
                         beta * center_term.anchor_gradients;
  return out;
}

}  // namespace toim
