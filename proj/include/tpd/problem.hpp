#pragma once

#include <optional>
#include <utility>

#include "tpd/linear_map.hpp"
#include "tpd/oracle.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

/// A saddle reference point (u*, p*).
struct SaddlePoint {
  Vector u;
  Vector p;
};

/// The saddle-point model L(u,p) = f(u) - h(p) + (Bu, p).
///
/// The affine-constrained program  min f  s.t.  Bu = b  corresponds to
/// h(p) = (b, p); b is then accessible through b().
struct SaddleProblem {
  ConvexOracle f;
  ConvexOracle h;
  LinearMap B;
  std::optional<SaddlePoint> saddle;

  SaddleProblem(ConvexOracle f_, ConvexOracle h_, LinearMap B_,
                std::optional<SaddlePoint> saddle_ = std::nullopt)
      : f(std::move(f_)), h(std::move(h_)), B(std::move(B_)), saddle(std::move(saddle_)) {
    if (f.dim() != B.cols() || h.dim() != B.rows())
      throw DimensionMismatch("SaddleProblem: oracle and operator dimensions disagree");
  }

  Index m() const { return B.cols(); }
  Index n() const { return B.rows(); }
  bool h_affine() const { return h.is_affine(); }
  const Vector& b() const { return h.affine_vector(); }
};

struct LagrangianEval {
  double value;
  Vector grad_u;  // d/du L = grad f(u) + B^T p
  Vector grad_p;  // d/dp L = B u - grad h(p)
};

inline LagrangianEval lagrangian_eval(const SaddleProblem& prob, const Vector& u,
                                      const Vector& p) {
  require_dim(u, prob.m(), "lagrangian_eval: u");
  require_dim(p, prob.n(), "lagrangian_eval: p");
  const Vector Bu = prob.B.apply(u);
  return {prob.f.value(u) - prob.h.value(p) + Bu.dot(p),
          prob.f.gradient(u) + prob.B.adjoint_apply(p), Bu - prob.h.gradient(p)};
}

/// Squared l2 norm of the full Lagrangian gradient; the default stop measure.
inline double grad_norm_sq(const SaddleProblem& prob, const Vector& u, const Vector& p) {
  const LagrangianEval ev = lagrangian_eval(prob, u, p);
  return ev.grad_u.squaredNorm() + ev.grad_p.squaredNorm();
}

/// Transformed coordinates v = u + M^{-1} B^T p and q = p - N^{-1} B u.
struct TransformedState {
  Vector v;
  Vector q;
};

inline TransformedState transformed_state(const SaddleProblem& prob, const SpdForm& M,
                                          const SpdForm& N, const Vector& u, const Vector& p) {
  return {u + M.solve(prob.B.adjoint_apply(p)), p - N.solve(prob.B.apply(u))};
}

}  // namespace tpd
