// Differentiation contract: objectives expose a hand-derived exact gradient,
// and finite_diff is the independent oracle the tests check it against.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "askin/params.hpp"

namespace askin {

struct ParamVector {
  ParamLayout layout;
  Eigen::VectorXd x;
};

struct Gradient {
  double value = 0.0;
  Eigen::VectorXd g;
};

// A differentiable scalar function of a flat parameter vector. Discrete
// choices inside (uv faces, visibility, nearest elements) are frozen at
// construction, so the object represents one smooth piece.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual const char* name() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  // Returns the value and accumulates d(value)/dx into grad (same length as x).
  virtual double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
};

inline Gradient value_and_grad(const Objective& objective, const ParamVector& at) {
  Gradient out;
  out.g = Eigen::VectorXd::Zero(at.x.size());
  out.value = objective.value_and_grad(at.x, out.g);
  if (!std::isfinite(out.value) || !out.g.allFinite())
    fail(std::string("non-finite value or gradient in term '") + objective.name() + "'");
  return out;
}

// Central differences per coordinate: (f(x+he) - f(x-he)) / 2h.
inline Gradient finite_diff(const std::function<double(const Eigen::VectorXd&)>& objective,
                            const ParamVector& at, double step) {
  if (!(step > 0.0)) fail("finite_diff: step must be positive");
  Gradient out;
  out.value = objective(at.x);
  out.g.resize(at.x.size());
  Eigen::VectorXd x = at.x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + step;
    const double fp = objective(x);
    x[i] = xi - step;
    const double fm = objective(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) fail("finite_diff: non-finite evaluation");
    out.g[i] = (fp - fm) / (2.0 * step);
  }
  return out;
}

inline double finite_diff_coord(const std::function<double(const Eigen::VectorXd&)>& objective,
                                const Eigen::VectorXd& at, Eigen::Index i, double step) {
  Eigen::VectorXd x = at;
  x[i] = at[i] + step;
  const double fp = objective(x);
  x[i] = at[i] - step;
  const double fm = objective(x);
  if (!std::isfinite(fp) || !std::isfinite(fm)) fail("finite_diff: non-finite evaluation");
  return (fp - fm) / (2.0 * step);
}

// Exact-by-construction linear combination: gradients of members are
// computed independently and summed in a fixed order.
class WeightedSumObjective : public Objective {
 public:
  WeightedSumObjective(std::string name, std::vector<std::pair<double, const Objective*>> terms)
      : name_(std::move(name)), terms_(std::move(terms)) {}
  const char* name() const override { return name_.c_str(); }
  double value(const Eigen::VectorXd& x) const override {
    double v = 0.0;
    for (const auto& [w, t] : terms_) v += w * t->value(x);
    return v;
  }
  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    double v = 0.0;
    Eigen::VectorXd part(x.size());
    for (const auto& [w, t] : terms_) {
      part.setZero();
      v += w * t->value_and_grad(x, part);
      grad += w * part;
    }
    return v;
  }

 private:
  std::string name_;
  std::vector<std::pair<double, const Objective*>> terms_;
};

}  // namespace askin
