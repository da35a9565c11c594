#ifndef TOIM_MLP_HPP_
#define TOIM_MLP_HPP_

#include <cstdint>

#include "toim/types.hpp"

namespace toim {

/// Layout of a two-layer embedding network with an optional linear
/// classifier head, flattened into one parameter vector:
///   [w1 (hidden x input) | b1 | w2 (out x hidden) | b2 | head_w | head_b]
struct MlpShape {
  Index input_dim = 0;
  Index hidden_dim = 0;
  Index output_dim = 0;
  Index head_classes = 0;  // 0: no classifier head
  bool normalize_output = false;

  Index w1_size() const { return hidden_dim * input_dim; }
  Index b1_size() const { return hidden_dim; }
  Index w2_size() const { return output_dim * hidden_dim; }
  Index b2_size() const { return output_dim; }
  Index head_w_size() const { return head_classes * output_dim; }
  Index head_b_size() const { return head_classes; }

  Index w1_offset() const { return 0; }
  Index b1_offset() const { return w1_size(); }
  Index w2_offset() const { return b1_offset() + b1_size(); }
  Index b2_offset() const { return w2_offset() + w2_size(); }
  Index head_w_offset() const { return b2_offset() + b2_size(); }
  Index head_b_offset() const { return head_w_offset() + head_w_size(); }
  Index param_count() const { return head_b_offset() + head_b_size(); }

  void validate() const;
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Embedding network: relu(w1 x + b1) -> w2 h + b2, optionally L2-normalized.
/// Parameters live in one flat vector so the optimizer and gradient checks
/// treat the whole model as a single point in R^P.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(MlpShape shape, std::uint64_t seed);
  MlpModel(MlpShape shape, Vector params);

  const MlpShape& shape() const { return shape_; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  Eigen::Map<const Matrix> w1() const { return block(shape_.w1_offset(), shape_.hidden_dim, shape_.input_dim); }
  Eigen::Map<const Vector> b1() const { return vec(shape_.b1_offset(), shape_.b1_size()); }
  Eigen::Map<const Matrix> w2() const { return block(shape_.w2_offset(), shape_.output_dim, shape_.hidden_dim); }
  Eigen::Map<const Vector> b2() const { return vec(shape_.b2_offset(), shape_.b2_size()); }
  Eigen::Map<const Matrix> head_w() const { return block(shape_.head_w_offset(), shape_.head_classes, shape_.output_dim); }
  Eigen::Map<const Vector> head_b() const { return vec(shape_.head_b_offset(), shape_.head_b_size()); }

 private:
  Eigen::Map<const Matrix> block(Index offset, Index rows, Index cols) const {
    return {params_.data() + offset, rows, cols};
  }
  Eigen::Map<const Vector> vec(Index offset, Index size) const {
    return {params_.data() + offset, size};
  }

  MlpShape shape_;
  Vector params_;
};

/// Activations retained by a forward pass for the matching backward pass.
struct ForwardCache {
  Vector input;
  Vector preact;      // w1 x + b1
  Vector hidden;      // relu(preact)
  Vector raw_output;  // w2 h + b2, before any normalization
  Vector output;
};

/// Embeds one input column; fills `cache` when given.
Vector mlp_forward(const MlpModel& model, const Eigen::Ref<const Vector>& input,
                   ForwardCache* cache = nullptr);

/// Accumulates d(output . grad_output)/d(theta) into `grad` (flat, same
/// layout as the parameters; head blocks untouched). The cache must come
/// from a forward pass of this model.
void mlp_backward_accumulate(const MlpModel& model, const ForwardCache& cache,
                             const Eigen::Ref<const Vector>& grad_output, Vector& grad);

/// Convenience wrapper returning a fresh flat gradient.
Vector mlp_backward(const MlpModel& model, const ForwardCache& cache,
                    const Eigen::Ref<const Vector>& grad_output);

/// Classifier head logits for an embedded feature.
Vector head_forward(const MlpModel& model, const Eigen::Ref<const Vector>& embedding);

/// Accumulates head parameter gradients and returns the gradient w.r.t. the
/// embedding, for chaining into mlp_backward_accumulate.
Vector head_backward_accumulate(const MlpModel& model,
                                const Eigen::Ref<const Vector>& embedding,
                                const Eigen::Ref<const Vector>& grad_logits,
                                Vector& grad);

}  // namespace toim

#endif  // TOIM_MLP_HPP_
