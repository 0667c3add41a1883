// Bias-corrected Adam.
#pragma once

#include <Eigen/Dense>

#include "askin/util.hpp"

namespace askin {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  int step = 0;

  explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

inline void adam_step(AdamState& state, const Eigen::VectorXd& grad, Eigen::VectorXd& params,
                      const AdamConfig& cfg) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    fail("adam_step: state/grad/params size mismatch");
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double c2 = 1.0 - std::pow(cfg.beta2, state.step);
  params -= cfg.lr * ((state.m / c1).array() / ((state.v / c2).array().sqrt() + cfg.epsilon)).matrix();
}

}  // namespace askin
