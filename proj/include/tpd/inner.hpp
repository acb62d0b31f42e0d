#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "tpd/constants.hpp"
#include "tpd/oracle.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

/// The strongly convex sub-problem objective
///   f~(u) = base(u) + ||u - anchor||^2_{I_V} / (2 alpha),
/// with anchor = u_k - alpha I_V^{-1} shift, so that
///   grad f~(u) = grad base(u) + (I_V u - I_V u_k)/alpha + shift.
/// Its minimizer is the implicit update of the half-implicit schemes; the
/// inexactness measure is ||grad f~||^2 in the I_V dual norm.
class SubproblemObjective {
public:
  SubproblemObjective(ConvexOracle base, SpdForm IV, double alpha, Vector u_k, Vector shift)
      : base_(std::move(base)), IV_(std::move(IV)), alpha_(alpha), u_k_(std::move(u_k)),
        shift_(std::move(shift)) {
    if (!(alpha_ > 0.0)) throw Error("SubproblemObjective: alpha must be positive");
    IV_uk_ = IV_.apply(u_k_);
    anchor_ = u_k_ - alpha_ * IV_.solve(shift_);
  }

  Index dim() const { return base_.dim(); }
  double alpha() const { return alpha_; }
  const ConvexOracle& base() const { return base_; }
  const SpdForm& metric() const { return IV_; }
  const Vector& warm_start() const { return u_k_; }
  const Vector& anchor() const { return anchor_; }

  double value(const Vector& u) const {
    return base_.value(u) + IV_.norm_sq(u - anchor_) / (2.0 * alpha_);
  }

  Vector gradient(const Vector& u) const {
    return base_.gradient(u) + (IV_.apply(u) - IV_uk_) / alpha_ + shift_;
  }

  /// ||grad f~(u)||^2_{I_V^{-1}}, the termination measure of inexact solves.
  double measure(const Vector& u) const { return IV_.dual_sq(gradient(u)); }

  bool has_hessian() const { return base_.has_hessian(); }
  Matrix hessian(const Vector& u) const {
    return base_.hessian(u) + IV_.dense_view() / alpha_;
  }

private:
  ConvexOracle base_;
  SpdForm IV_;
  double alpha_;
  Vector u_k_, shift_, IV_uk_, anchor_;
};

inline std::pair<Vector, double> subproblem_gradient(const SubproblemObjective& obj,
                                                     const Vector& u) {
  Vector g = obj.gradient(u);
  return {g, obj.metric().dual_sq(g)};
}

/// Native proximal solve; the metric must be a scaled identity c I, in which
/// case  argmin f + ||u-w||^2_{cI}/(2 lambda) = prox_{f, lambda/c}(w).
inline Vector prox_solve(const ConvexOracle& oracle, double lambda, const Vector& w,
                         const SpdForm& metric) {
  if (!oracle.has_prox()) throw NotAvailable("prox_solve: oracle has no proximal map");
  if (!metric.is_scaled_identity())
    throw NotAvailable("prox_solve: native prox needs a scaled-identity metric");
  return oracle.prox(lambda / metric.scale(), w);
}

struct InexactResult {
  Vector point;
  double achieved;  // terminal measure
  int iterations;
};

struct InexactOptions {
  double lipschitz = kNaN;  // L of the base in the metric; estimated when NaN
  int max_iterations = 10000;
  double momentum = 0.0;    // heavy-ball acceleration hook; off by default
};

/// Preconditioned gradient descent on f~ with step 1/(L + 1/alpha), warm
/// started at u_k, stopping once the dual-norm measure drops below eps.
inline InexactResult inexact_gradient_solve(const SubproblemObjective& obj, const Vector& u_start,
                                            double eps, const InexactOptions& opts = {}) {
  if (!(eps > 0.0)) throw Error("inexact_gradient_solve: eps must be positive");
  double L = opts.lipschitz;
  if (!std::isfinite(L)) {
    if (obj.base().has_constants())
      L = obj.base().constants().L /
          (obj.metric().is_scaled_identity() ? obj.metric().scale() : 1.0);
    else
      L = 1.0;
  }
  const double step = 1.0 / (L + 1.0 / obj.alpha());
  Vector u = u_start;
  Vector u_prev = u;
  double m = obj.measure(u);
  int it = 0;
  while (m > eps) {
    if (it >= opts.max_iterations)
      throw InnerSolveError("inexact_gradient_solve: iteration cap reached", m);
    Vector u_next = u - step * obj.metric().solve(obj.gradient(u));
    if (opts.momentum > 0.0) u_next += opts.momentum * (u - u_prev);
    u_prev = std::move(u);
    u = std::move(u_next);
    m = obj.measure(u);
    ++it;
  }
  return {std::move(u), m, it};
}

/// Exact minimizer of f~. Quadratic base: one SPD solve. Otherwise Newton on
/// grad f~ = 0 (the objective is strongly convex), falling back to a tight
/// gradient solve when no Hessian is available.
inline Vector exact_subproblem_solve(const SubproblemObjective& obj, double tol = 1e-13) {
  if (obj.base().is_quadratic()) {
    // (F + I_V/alpha) u = I_V anchor / alpha - a
    const Matrix M = obj.base().quadratic_matrix() + obj.metric().dense_view() / obj.alpha();
    const Vector rhs =
        obj.metric().apply(obj.anchor()) / obj.alpha() - obj.base().quadratic_linear();
    return M.llt().solve(rhs);
  }
  Vector u = obj.warm_start();
  if (obj.has_hessian()) {
    for (int it = 0; it < 100; ++it) {
      const Vector g = obj.gradient(u);
      if (obj.metric().dual_sq(g) <= tol * tol) return u;
      const Matrix H = obj.hessian(u);
      u -= H.ldlt().solve(g);
    }
    const double m = obj.measure(u);
    if (m <= 1e-18) return u;
    throw InnerSolveError("exact_subproblem_solve: Newton did not converge", m);
  }
  return inexact_gradient_solve(obj, u, tol * tol).point;
}

enum class TolerancePolicy { Constant, Geometric, TheoremBudget };

/// eps_k schedule for inexact inner solves.
struct ToleranceSchedule {
  TolerancePolicy policy = TolerancePolicy::Constant;
  double eps0 = 1e-10;   // Constant: the value; Geometric: the start
  double ratio = 0.5;    // Geometric only, in (0,1)
  double eps_total = 0;  // TheoremBudget: target accumulated error
};

/// eps_k for step k. The theorem budget eps_k = mu mu_V eps / 2 keeps the
/// rho-weighted accumulation below eps.
inline double schedule_epsilon(const ToleranceSchedule& sched, int k, const ConstantsSheet& sheet) {
  switch (sched.policy) {
    case TolerancePolicy::Constant: return sched.eps0;
    case TolerancePolicy::Geometric: {
      if (!(sched.ratio > 0.0 && sched.ratio < 1.0))
        throw Error("schedule_epsilon: geometric ratio must be in (0,1)");
      return sched.eps0 * std::pow(sched.ratio, k);
    }
    case TolerancePolicy::TheoremBudget: {
      if (!std::isfinite(sheet.mu) || !std::isfinite(sheet.mu_V))
        throw MissingConstants("schedule_epsilon: theorem budget needs mu and mu_V");
      return 0.5 * sheet.mu * sheet.mu_V * sched.eps_total;
    }
  }
  throw Error("schedule_epsilon: unreachable");
}

}  // namespace tpd
