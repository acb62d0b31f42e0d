#pragma once

#include <optional>
#include <utility>

#include "tpd/bregman.hpp"
#include "tpd/constants.hpp"
#include "tpd/problem.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

enum class FlowKind { PD, TPD, STPD };

/// G^u = -grad_u L, G^p = +grad_p L.
inline std::pair<Vector, Vector> pd_field(const SaddleProblem& prob, const Vector& u,
                                          const Vector& p) {
  const LagrangianEval ev = lagrangian_eval(prob, u, p);
  return {-ev.grad_u, ev.grad_p};
}

/// G^u = -I_V^{-1} grad_u L
/// G^p = I_Q^{-1} (grad_p L - B I_V^{-1} grad_u L)
/// The dual component is evaluated in the computational (inexact-Uzawa) form,
/// which agrees with the h_B/e(u) form identically.
inline std::pair<Vector, Vector> tpd_field(const SaddleProblem& prob, const SpdForm& IV,
                                           const SpdForm& IQ, const Vector& u, const Vector& p) {
  const LagrangianEval ev = lagrangian_eval(prob, u, p);
  const Vector IVinv_gu = IV.solve(ev.grad_u);
  return {-IVinv_gu, IQ.solve(ev.grad_p - prob.B.apply(IVinv_gu))};
}

/// G^u = -I_V^{-1} (grad_u L + B^T T_P^{-1} grad_p L)
/// G^p =  I_Q^{-1} (grad_p L - B T_U^{-1} grad_u L)
inline std::pair<Vector, Vector> stpd_field(const SaddleProblem& prob, const SpdForm& TU,
                                            const SpdForm& TP, const SpdForm& IV,
                                            const SpdForm& IQ, const Vector& u, const Vector& p) {
  const LagrangianEval ev = lagrangian_eval(prob, u, p);
  const Vector gu = ev.grad_u + prob.B.adjoint_apply(TP.solve(ev.grad_p));
  const Vector gp = ev.grad_p - prob.B.apply(TU.solve(ev.grad_u));
  return {-IV.solve(gu), IQ.solve(gp)};
}

/// A flow evaluator bundling the problem with its SPD forms. The field
/// vanishes at the saddle; evaluation is pure and reentrant.
class FlowField {
public:
  FlowField(FlowKind kind, SaddleProblem prob, SpdForm IV, SpdForm IQ,
            std::optional<SpdForm> TU = std::nullopt, std::optional<SpdForm> TP = std::nullopt)
      : kind_(kind), prob_(std::move(prob)), IV_(std::move(IV)), IQ_(std::move(IQ)),
        TU_(std::move(TU)), TP_(std::move(TP)) {
    if (kind_ == FlowKind::STPD && (!TU_ || !TP_))
      throw MissingReference("FlowField: symmetric flow needs T_U and T_P");
  }

  static FlowField pd(SaddleProblem prob) {
    const Index m = prob.m(), n = prob.n();
    return FlowField(FlowKind::PD, std::move(prob), SpdForm::identity(m), SpdForm::identity(n));
  }

  FlowKind kind() const { return kind_; }
  const SaddleProblem& problem() const { return prob_; }
  const SpdForm& IV() const { return IV_; }
  const SpdForm& IQ() const { return IQ_; }
  const SpdForm& TU() const { return *TU_; }
  const SpdForm& TP() const { return *TP_; }

  std::pair<Vector, Vector> operator()(const Vector& u, const Vector& p) const {
    switch (kind_) {
      case FlowKind::PD: return pd_field(prob_, u, p);
      case FlowKind::TPD: return tpd_field(prob_, IV_, IQ_, u, p);
      case FlowKind::STPD: return stpd_field(prob_, *TU_, *TP_, IV_, IQ_, u, p);
    }
    throw Error("FlowField: unreachable");
  }

private:
  FlowKind kind_;
  SaddleProblem prob_;
  SpdForm IV_, IQ_;
  std::optional<SpdForm> TU_, TP_;
};

/// E(u,p) = 0.5 ||u-u*||^2_{I_V} + 0.5 ||p-p*||^2_{I_Q}; zero iff at the saddle.
inline double lyapunov(const Vector& u, const Vector& p, const SaddlePoint& saddle,
                       const SpdForm& IV, const SpdForm& IQ) {
  return 0.5 * IV.norm_sq(u - saddle.u) + 0.5 * IQ.norm_sq(p - saddle.p);
}

inline const SaddlePoint& require_saddle(const SaddleProblem& prob) {
  if (!prob.saddle) throw MissingReference("a saddle reference is required");
  return *prob.saddle;
}

/// -grad E . G - mu E - (flow-specific quadratic extras). Nonnegative within
/// slack wherever the decay theorem's hypotheses hold.
inline double strong_lyapunov_residual(const FlowField& field, const ConstantsSheet& sheet,
                                       const Vector& u, const Vector& p) {
  const SaddleProblem& prob = field.problem();
  const SaddlePoint& star = require_saddle(prob);
  const auto [Gu, Gp] = field(u, p);
  const double dissipation =
      -field.IV().inner(u - star.u, Gu) - field.IQ().inner(p - star.p, Gp);
  const double E = lyapunov(u, p, star, field.IV(), field.IQ());
  double extras = 0.0;
  switch (field.kind()) {
    case FlowKind::PD:
      break;  // no extra quadratic terms; mu taken from the sheet
    case FlowKind::TPD: {
      const Vector dv = (u - star.u) + field.IV().solve(prob.B.adjoint_apply(p - star.p));
      extras = 0.5 * sheet.mu_f * field.IV().norm_sq(dv);
      break;
    }
    case FlowKind::STPD: {
      const Vector dv = (u - star.u) + field.TU().solve(prob.B.adjoint_apply(p - star.p));
      const Vector dq = (p - star.p) - field.TP().solve(prob.B.apply(u - star.u));
      extras = 0.5 * sheet.mu_f * field.TU().norm_sq(dv) + 0.5 * sheet.mu_h * field.TP().norm_sq(dq);
      break;
    }
  }
  return dissipation - sheet.mu * E - extras;
}

}  // namespace tpd
