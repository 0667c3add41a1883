// Finite-difference gradient checking shared by the unit and acceptance
// suites. Central differences with h = h_rel * max(1, |x_i|); a coordinate
// whose h and 2h estimates disagree badly sits on (or hugs) a discrete
// boundary and is excluded rather than compared.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

namespace askin::testing {

struct GradCheck {
  int checked = 0;
  int excluded = 0;
  int failed = 0;
  double worst_rel = 0.0;
  int worst_coord = -1;

  bool ok() const { return failed == 0 && checked > 0; }
};

struct GradCheckOptions {
  double h_rel = 1e-5;
  double tol = 1e-4;
  // h/2h estimates disagreeing more than this flags a kink
  double kink_rel = 0.05;
};

inline void check_coordinate(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& grad, int i,
                             double grad_scale, GradCheck& out, const GradCheckOptions& opt = {}) {
  const double h = opt.h_rel * std::max(1.0, std::abs(x0[i]));
  Eigen::VectorXd x = x0;
  auto probe = [&](double step) {
    x[i] = x0[i] + step;
    const double fp = f(x);
    x[i] = x0[i] - step;
    const double fm = f(x);
    x[i] = x0[i];
    return (fp - fm) / (2.0 * step);
  };
  const double fd1 = probe(h);
  const double fd2 = probe(2.0 * h);
  const double fd_half = probe(0.5 * h);
  const double floor = 1e-7 * (1.0 + grad_scale);
  if (std::abs(fd1 - fd2) > opt.kink_rel * std::max({std::abs(fd1), std::abs(fd2), floor})) {
    ++out.excluded;
    return;
  }
  // the central difference must itself be converged at the tolerance level
  // before it can judge the analytic value; refusal to converge marks a
  // nearby derivative discontinuity (bilinear cells, visibility edges)
  if (std::abs(fd_half - fd1) > 0.5 * opt.tol * std::max({std::abs(fd1), std::abs(fd_half), floor})) {
    ++out.excluded;
    return;
  }
  ++out.checked;
  const double rel = std::abs(grad[i] - fd1) / std::max({std::abs(grad[i]), std::abs(fd1), floor});
  if (rel > out.worst_rel) {
    out.worst_rel = rel;
    out.worst_coord = i;
  }
  if (rel > opt.tol) ++out.failed;
}

}  // namespace askin::testing
