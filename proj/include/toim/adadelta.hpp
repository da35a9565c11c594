#ifndef TOIM_ADADELTA_HPP_
#define TOIM_ADADELTA_HPP_

#include "toim/types.hpp"

namespace toim {

/// AdaDelta accumulators over a flat parameter vector.
///
/// Per step with gradient g:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   delta   =  -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
///   params  += lr * delta
/// The learning rate scales the applied step only; the accumulators track
/// the raw delta.
struct AdaDeltaState {
  double rho = 0.9;
  double eps = 1e-6;
  double lr = 0.001;
  Eigen::ArrayXd sq_grad_avg;
  Eigen::ArrayXd sq_step_avg;

  AdaDeltaState() = default;
  AdaDeltaState(Index param_count, double rho, double eps, double lr);
};

void adadelta_step(AdaDeltaState& state, Vector& params, const Vector& grad);

}  // namespace toim

#endif  // TOIM_ADADELTA_HPP_
