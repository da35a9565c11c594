#include "toim/adadelta.hpp"

namespace toim {

AdaDeltaState::AdaDeltaState(Index param_count, double rho, double eps, double lr)
    : rho(rho), eps(eps), lr(lr) {
  if (param_count < 1) throw std::invalid_argument("AdaDeltaState: empty parameter set");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("AdaDeltaState: rho outside (0, 1)");
  if (eps <= 0.0) throw std::invalid_argument("AdaDeltaState: eps must be > 0");
  if (lr <= 0.0) throw std::invalid_argument("AdaDeltaState: lr must be > 0");
  sq_grad_avg = Eigen::ArrayXd::Zero(param_count);
  sq_step_avg = Eigen::ArrayXd::Zero(param_count);
}

void adadelta_step(AdaDeltaState& state, Vector& params, const Vector& grad) {
  if (params.size() != grad.size() || params.size() != state.sq_grad_avg.size())
    throw std::invalid_argument("adadelta_step: shape mismatch");
  if (!grad.allFinite()) throw std::invalid_argument("adadelta_step: non-finite gradient");

  const auto g = grad.array();
  state.sq_grad_avg = state.rho * state.sq_grad_avg + (1.0 - state.rho) * g.square();
  const Eigen::ArrayXd delta =
      -((state.sq_step_avg + state.eps).sqrt() / (state.sq_grad_avg + state.eps).sqrt()) * g;
  state.sq_step_avg = state.rho * state.sq_step_avg + (1.0 - state.rho) * delta.square();
  params.array() += state.lr * delta;
}

}  // namespace toim
