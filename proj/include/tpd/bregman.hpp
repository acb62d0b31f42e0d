#pragma once

#include <memory>
#include <utility>

#include "tpd/oracle.hpp"
#include "tpd/problem.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

/// Bregman divergence D_f(v, u) = f(v) - f(u) - <grad f(u), v - u>.
inline double bregman(const ConvexOracle& f, const Vector& v, const Vector& u) {
  return f.value(v) - f.value(u) - f.gradient(u).dot(v - u);
}

/// One preconditioned gradient descent step: x - metric^{-1} grad(x).
/// This is the map e(u) (and e_U, e_P for the symmetric transformation).
inline Vector descent_map(const ConvexOracle& oracle, const SpdForm& metric, const Vector& x) {
  if (oracle.dim() != metric.dim())
    throw DimensionMismatch("descent_map: oracle and metric disagree");
  return x - metric.solve(oracle.gradient(x));
}

namespace detail {
// M^{-1} applied to the columns of X.
inline Matrix solve_columns(const SpdForm& M, const Matrix& X) {
  Matrix out(X.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) out.col(j) = M.solve(Vector(X.col(j)));
  return out;
}
}  // namespace detail

/// f_B(u) = f(u) + 0.5 (B^T T_P^{-1} B u, u).
inline ConvexOracle augment_primal(const ConvexOracle& f, const LinearMap& B, const SpdForm& TP) {
  if (TP.dim() != B.rows()) throw DimensionMismatch("augment_primal: T_P is not on the dual space");
  auto base = std::make_shared<const ConvexOracle>(f);
  auto Bc = std::make_shared<const LinearMap>(B);
  ConvexOracle o(
      f.dim(),
      [base, Bc, TP](const Vector& u) {
        const Vector Bu = Bc->apply(u);
        return base->value(u) + 0.5 * Bu.dot(TP.solve(Bu));
      },
      [base, Bc, TP](const Vector& u) {
        return Vector(base->gradient(u) + Bc->adjoint_apply(TP.solve(Bc->apply(u))));
      });
  if (B.has_dense()) {
    const Matrix addend = B.dense().transpose() * detail::solve_columns(TP, B.dense());
    if (f.has_hessian())
      o.with_hessian([base, addend](const Vector& u) { return Matrix(base->hessian(u) + addend); });
    if (f.is_quadratic()) {
      ConvexOracle q = ConvexOracle::quadratic(f.quadratic_matrix() + addend, f.quadratic_linear());
      return q;
    }
  }
  return o;
}

/// h_B(p) = h(p) + 0.5 (B T_U^{-1} B^T p, p).
inline ConvexOracle augment_dual(const ConvexOracle& h, const LinearMap& B, const SpdForm& TU) {
  if (TU.dim() != B.cols()) throw DimensionMismatch("augment_dual: T_U is not on the primal space");
  auto base = std::make_shared<const ConvexOracle>(h);
  auto Bc = std::make_shared<const LinearMap>(B);
  ConvexOracle o(
      h.dim(),
      [base, Bc, TU](const Vector& p) {
        const Vector Btp = Bc->adjoint_apply(p);
        return base->value(p) + 0.5 * Btp.dot(TU.solve(Btp));
      },
      [base, Bc, TU](const Vector& p) {
        return Vector(base->gradient(p) + Bc->apply(TU.solve(Bc->adjoint_apply(p))));
      });
  if (B.has_dense()) {
    const Matrix addend =
        B.dense() * detail::solve_columns(TU, Matrix(B.dense().transpose()));
    if (h.is_quadratic()) {
      ConvexOracle q = ConvexOracle::quadratic(h.quadratic_matrix() + addend, h.quadratic_linear());
      return q;
    }
    if (h.has_hessian())
      o.with_hessian([base, addend](const Vector& p) { return Matrix(base->hessian(p) + addend); });
  }
  return o;
}

struct AugmentedOracles {
  ConvexOracle fB;
  ConvexOracle hB;
};

/// The regularized pair of the change of variables: h_B via T_U, f_B via T_P.
inline AugmentedOracles augmented_oracles(const SaddleProblem& prob, const SpdForm& TU,
                                          const SpdForm& TP) {
  return {augment_primal(prob.f, prob.B, TP), augment_dual(prob.h, prob.B, TU)};
}

}  // namespace tpd
