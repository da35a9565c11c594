#include "toim/mlp.hpp"

#include <cmath>

#include "toim/rng.hpp"

namespace toim {

namespace {

constexpr double kNormFloor = 1e-12;

void glorot_fill(Eigen::Map<Matrix> w, Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i)
      w(i, j) = bound * (2.0 * rng.next_double() - 1.0);
}

}  // namespace

void MlpShape::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw std::invalid_argument("MlpShape: dimensions must be >= 1");
  if (head_classes < 0) throw std::invalid_argument("MlpShape: negative head size");
}

MlpModel::MlpModel(MlpShape shape, std::uint64_t seed) : shape_(shape) {
  shape_.validate();
  params_ = Vector::Zero(shape_.param_count());
  Rng rng(seed);
  glorot_fill({params_.data() + shape_.w1_offset(), shape_.hidden_dim, shape_.input_dim},
              shape_.input_dim, shape_.hidden_dim, rng);
  glorot_fill({params_.data() + shape_.w2_offset(), shape_.output_dim, shape_.hidden_dim},
              shape_.hidden_dim, shape_.output_dim, rng);
  if (shape_.head_classes > 0)
    glorot_fill({params_.data() + shape_.head_w_offset(), shape_.head_classes, shape_.output_dim},
                shape_.output_dim, shape_.head_classes, rng);
  // Biases stay zero.
}

MlpModel::MlpModel(MlpShape shape, Vector params)
    : shape_(shape), params_(std::move(params)) {
  shape_.validate();
  if (params_.size() != shape_.param_count())
    throw std::invalid_argument("MlpModel: parameter vector size mismatch");
}

Vector mlp_forward(const MlpModel& model, const Eigen::Ref<const Vector>& input,
                   ForwardCache* cache) {
  const MlpShape& s = model.shape();
  if (input.size() != s.input_dim)
    throw std::invalid_argument("mlp_forward: input dimension mismatch");

  Vector preact = model.w1() * input + model.b1();
  Vector hidden = preact.cwiseMax(0.0);
  Vector raw = model.w2() * hidden + model.b2();
  Vector out = raw;
  if (s.normalize_output) out /= std::fmax(raw.norm(), kNormFloor);

  if (cache) {
    cache->input = input;
    cache->preact = std::move(preact);
    cache->hidden = std::move(hidden);
    cache->raw_output = std::move(raw);
    cache->output = out;
  }
  return out;
}

void mlp_backward_accumulate(const MlpModel& model, const ForwardCache& cache,
                             const Eigen::Ref<const Vector>& grad_output, Vector& grad) {
  const MlpShape& s = model.shape();
  if (cache.input.size() != s.input_dim || cache.hidden.size() != s.hidden_dim ||
      cache.raw_output.size() != s.output_dim)
    throw std::invalid_argument("mlp_backward: cache does not match this model");
  if (grad_output.size() != s.output_dim)
    throw std::invalid_argument("mlp_backward: gradient dimension mismatch");
  if (grad.size() != s.param_count())
    throw std::invalid_argument("mlp_backward: flat gradient size mismatch");

  Vector g_raw = grad_output;
  if (s.normalize_output) {
    const double norm = std::fmax(cache.raw_output.norm(), kNormFloor);
    const Vector unit = cache.raw_output / norm;
    g_raw = (grad_output - unit * unit.dot(grad_output)) / norm;
  }

  Eigen::Map<Matrix> g_w2(grad.data() + s.w2_offset(), s.output_dim, s.hidden_dim);
  Eigen::Map<Vector> g_b2(grad.data() + s.b2_offset(), s.b2_size());
  g_w2.noalias() += g_raw * cache.hidden.transpose();
  g_b2 += g_raw;

  Vector g_hidden = model.w2().transpose() * g_raw;
  for (Index i = 0; i < s.hidden_dim; ++i)
    if (cache.preact[i] <= 0.0) g_hidden[i] = 0.0;

  Eigen::Map<Matrix> g_w1(grad.data() + s.w1_offset(), s.hidden_dim, s.input_dim);
  Eigen::Map<Vector> g_b1(grad.data() + s.b1_offset(), s.b1_size());
  g_w1.noalias() += g_hidden * cache.input.transpose();
  g_b1 += g_hidden;
}

Vector mlp_backward(const MlpModel& model, const ForwardCache& cache,
                    const Eigen::Ref<const Vector>& grad_output) {
  Vector grad = Vector::Zero(model.shape().param_count());
  mlp_backward_accumulate(model, cache, grad_output, grad);
  return grad;
}

Vector head_forward(const MlpModel& model, const Eigen::Ref<const Vector>& embedding) {
  const MlpShape& s = model.shape();
  if (s.head_classes == 0)
    throw std::invalid_argument("head_forward: model has no classifier head");
  if (embedding.size() != s.output_dim)
    throw std::invalid_argument("head_forward: embedding dimension mismatch");
  return model.head_w() * embedding + model.head_b();
}

Vector head_backward_accumulate(const MlpModel& model,
                                const Eigen::Ref<const Vector>& embedding,
                                const Eigen::Ref<const Vector>& grad_logits,
                                Vector& grad) {
  const MlpShape& s = model.shape();
  if (s.head_classes == 0)
    throw std::invalid_argument("head_backward: model has no classifier head");
  if (grad.size() != s.param_count())
    throw std::invalid_argument("head_backward: flat gradient size mismatch");

  Eigen::Map<Matrix> g_w(grad.data() + s.head_w_offset(), s.head_classes, s.output_dim);
  Eigen::Map<Vector> g_b(grad.data() + s.head_b_offset(), s.head_b_size());
  g_w.noalias() += grad_logits * embedding.transpose();
  g_b += grad_logits;
  return model.head_w().transpose() * grad_logits;
}

}  // namespace toim
