#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tpd/bregman.hpp"
#include "tpd/constants.hpp"
#include "tpd/csv.hpp"
#include "tpd/flows.hpp"
#include "tpd/inner.hpp"
#include "tpd/problem.hpp"

namespace tpd {

enum class SchemeKind {
  ImplicitTpd,
  ExplicitTpd,
  ImexTpd,
  ExplicitStpd,
  ImexStpd,
  PdExplicit,  // baseline without a contraction guarantee
};

inline const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::ImplicitTpd: return "implicit-tpd";
    case SchemeKind::ExplicitTpd: return "explicit-tpd";
    case SchemeKind::ImexTpd: return "imex-tpd";
    case SchemeKind::ExplicitStpd: return "stpd-explicit";
    case SchemeKind::ImexStpd: return "stpd-imex";
    case SchemeKind::PdExplicit: return "pd-explicit";
  }
  return "?";
}

struct IterateState {
  Vector u;
  Vector p;
  int k = 0;
  double E = kNaN;  // filled when a saddle reference is known
  double grad_u_norm = kNaN;
  double grad_p_norm = kNaN;
};

struct StepResult {
  IterateState state;
  int inner_iters = 0;
  double eps_k = kNaN;
};

inline IterateState make_state(const SaddleProblem& prob, Vector u, Vector p, int k,
                               const SpdForm& IV, const SpdForm& IQ) {
  IterateState s;
  s.u = std::move(u);
  s.p = std::move(p);
  s.k = k;
  const LagrangianEval ev = lagrangian_eval(prob, s.u, s.p);
  s.grad_u_norm = ev.grad_u.norm();
  s.grad_p_norm = ev.grad_p.norm();
  if (prob.saddle) s.E = lyapunov(s.u, s.p, *prob.saddle, IV, IQ);
  return s;
}

// ---------------------------------------------------------------------------
// one-step maps
// ---------------------------------------------------------------------------

/// Forward Euler on the plain primal-dual flow (no transformation).
inline StepResult step_pd_explicit(const SaddleProblem& prob, const IterateState& st,
                                   double alpha) {
  const auto [Gu, Gp] = pd_field(prob, st.u, st.p);
  return {make_state(prob, st.u + alpha * Gu, st.p + alpha * Gp, st.k + 1,
                     SpdForm::identity(prob.m()), SpdForm::identity(prob.n()))};
}

/// Relaxed inexact-Uzawa form of the explicit step:
///   u_half = u_k - I_V^{-1}(grad f(u_k) + B^T p_k)
///   p_new  = p_k - alpha I_Q^{-1}(grad h(p_k) - B u_half)
///   u_new  = (1-alpha) u_k + alpha u_half
/// Identical to forward Euler on the transformed field.
inline StepResult step_explicit(const SaddleProblem& prob, const SpdForm& IV, const SpdForm& IQ,
                                const IterateState& st, double alpha) {
  if (!(alpha > 0.0)) throw Error("step_explicit: alpha must be positive");
  const Vector u_half = st.u - IV.solve(prob.f.gradient(st.u) + prob.B.adjoint_apply(st.p));
  const Vector p_new = st.p - alpha * IQ.solve(prob.h.gradient(st.p) - prob.B.apply(u_half));
  const Vector u_new = (1.0 - alpha) * st.u + alpha * u_half;
  return {make_state(prob, u_new, p_new, st.k + 1, IV, IQ)};
}

enum class InnerKind { Exact, InexactGradient };

struct InnerSolve {
  InnerKind kind = InnerKind::Exact;
  double eps = 1e-16;      // InexactGradient: termination measure
  double lipschitz = kNaN;  // optional L of the base in the metric
};

namespace detail {

inline StepResult finish_imex(const SaddleProblem& prob, const SpdForm& IV, const SpdForm& IQ,
                              const ConvexOracle& base, const Vector& u_k, const Vector& p_new,
                              const Vector& shift, double alpha, const InnerSolve& inner, int k) {
  SubproblemObjective obj(base, IV, alpha, u_k, shift);
  Vector u_new;
  int iters = 0;
  double eps_used = kNaN;
  if (inner.kind == InnerKind::Exact) {
    if (base.has_prox() && IV.is_scaled_identity())
      u_new = prox_solve(base, alpha, obj.anchor(), IV);
    else
      u_new = exact_subproblem_solve(obj);
  } else {
    InexactOptions opts;
    opts.lipschitz = inner.lipschitz;
    InexactResult res = inexact_gradient_solve(obj, u_k, inner.eps, opts);
    u_new = std::move(res.point);
    iters = res.iterations;
    eps_used = inner.eps;
  }
  StepResult out{make_state(prob, std::move(u_new), p_new, k + 1, IV, IQ)};
  out.inner_iters = iters;
  out.eps_k = eps_used;
  return out;
}

}  // namespace detail

/// Half-implicit step: explicit dual update, then the strongly convex
/// u-subproblem  argmin f(u) + ||u - u_k + alpha I_V^{-1} B^T p_new||^2_{I_V} / (2 alpha).
inline StepResult step_imex(const SaddleProblem& prob, const SpdForm& IV, const SpdForm& IQ,
                            const IterateState& st, double alpha,
                            const InnerSolve& inner = {}) {
  if (!(alpha > 0.0)) throw Error("step_imex: alpha must be positive");
  const Vector u_half = st.u - IV.solve(prob.f.gradient(st.u) + prob.B.adjoint_apply(st.p));
  const Vector p_new = st.p - alpha * IQ.solve(prob.h.gradient(st.p) - prob.B.apply(u_half));
  const Vector shift = prob.B.adjoint_apply(p_new);
  return detail::finish_imex(prob, IV, IQ, prob.f, st.u, p_new, shift, alpha, inner, st.k);
}

struct NewtonPolicy {
  double tol = 1e-12;      // residual norm target
  int max_iterations = 50;
  int max_backtracks = 30;  // Armijo on the residual norm, factor 0.5
};

/// Backward Euler on the transformed flow: solves the coupled nonlinear
/// system in (u_{k+1}, p_{k+1}). One linear solve for quadratic f, h; damped
/// Newton with Armijo backtracking otherwise.
inline StepResult step_implicit(const SaddleProblem& prob, const SpdForm& IV, const SpdForm& IQ,
                                const IterateState& st, double alpha,
                                const NewtonPolicy& newton = {}) {
  if (!(alpha > 0.0)) throw Error("step_implicit: alpha must be positive");
  const Index m = prob.m(), n = prob.n();
  if (!prob.B.has_dense())
    throw NotAvailable("step_implicit: needs a dense view of B at desk scale");
  const Matrix& Bd = prob.B.dense();
  Matrix BIVinvBt(n, n), IVinvBt(m, n);
  for (Index j = 0; j < n; ++j) IVinvBt.col(j) = IV.solve(Vector(Bd.transpose().col(j)));
  BIVinvBt = Bd * IVinvBt;

  // residual of the coupled system
  auto residual = [&](const Vector& u, const Vector& p) {
    const Vector gu = prob.f.gradient(u) + prob.B.adjoint_apply(p);
    Vector r(m + n);
    r.head(m) = IV.apply(u - st.u) + alpha * gu;
    r.tail(n) = IQ.apply(p - st.p) +
                alpha * (prob.h.gradient(p) - prob.B.apply(u) + prob.B.apply(IV.solve(gu)));
    return r;
  };

  auto jacobian = [&](const Vector& u, const Vector& p) {
    const Matrix F = prob.f.hessian(u);
    const Matrix Hh = prob.h.hessian(p);
    Matrix IVinvF(m, m);
    for (Index j = 0; j < m; ++j) IVinvF.col(j) = IV.solve(Vector(F.col(j)));
    Matrix J(m + n, m + n);
    J.topLeftCorner(m, m) = IV.dense_view() + alpha * F;
    J.topRightCorner(m, n) = alpha * Bd.transpose();
    J.bottomLeftCorner(n, m) = alpha * (Bd * IVinvF - Bd);
    J.bottomRightCorner(n, n) = IQ.dense_view() + alpha * Hh + alpha * BIVinvBt;
    return J;
  };

  Vector u = st.u, p = st.p;
  Vector r = residual(u, p);
  // Scale-aware target: the residual magnitude grows with alpha.
  const double target = newton.tol * (1.0 + r.norm());
  bool at_floor = false;
  for (int it = 0; it < newton.max_iterations && r.norm() > target; ++it) {
    const Matrix J = jacobian(u, p);
    const Vector d = J.partialPivLu().solve(r);
    double t = 1.0;
    const double r0 = r.squaredNorm();
    Vector u_try, p_try, r_try;
    int bt = 0;
    for (; bt <= newton.max_backtracks; ++bt) {
      u_try = u - t * d.head(m);
      p_try = p - t * d.tail(n);
      r_try = residual(u_try, p_try);
      if (r_try.squaredNorm() <= (1.0 - 1e-4 * t) * r0) break;
      t *= 0.5;
    }
    if (bt > newton.max_backtracks) {
      // No decrease left: the residual evaluation has hit its rounding floor.
      if (std::sqrt(r0) <= 1e4 * target) {
        at_floor = true;
        break;
      }
      throw InnerSolveError("step_implicit: backtracking stalled", std::sqrt(r0));
    }
    u = std::move(u_try);
    p = std::move(p_try);
    r = std::move(r_try);
  }
  if (r.norm() > target && !at_floor)
    throw InnerSolveError("step_implicit: Newton did not reach tolerance", r.norm());
  return {make_state(prob, std::move(u), std::move(p), st.k + 1, IV, IQ)};
}

/// Two half-steps of primal-dual iterations sharing the gradients at
/// (u_k, p_k); forward Euler on the symmetric transformed flow.
inline StepResult step_stpd_explicit(const SaddleProblem& prob, const SpdForm& TU,
                                     const SpdForm& TP, const SpdForm& IV, const SpdForm& IQ,
                                     const IterateState& st, double alpha) {
  if (!(alpha > 0.0)) throw Error("step_stpd_explicit: alpha must be positive");
  const Vector gf = prob.f.gradient(st.u);
  const Vector gh = prob.h.gradient(st.p);
  const Vector u_half = st.u - TU.solve(gf + prob.B.adjoint_apply(st.p));
  const Vector p_half = st.p - TP.solve(gh - prob.B.apply(st.u));
  const Vector u_new = st.u - alpha * IV.solve(gf + prob.B.adjoint_apply(p_half));
  const Vector p_new = st.p - alpha * IQ.solve(gh - prob.B.apply(u_half));
  return {make_state(prob, u_new, p_new, st.k + 1, IV, IQ)};
}

/// Symmetric half-implicit step; the u-subproblem minimizes
///   f_B(u) + ||u - u_k + alpha I_V^{-1} B^T (p_new - T_P^{-1} grad h(p_new))||^2_{I_V}/(2 alpha).
inline StepResult step_stpd_imex(const SaddleProblem& prob, const SpdForm& TU, const SpdForm& TP,
                                 const SpdForm& IV, const SpdForm& IQ, const IterateState& st,
                                 double alpha, const InnerSolve& inner = {}) {
  if (!(alpha > 0.0)) throw Error("step_stpd_imex: alpha must be positive");
  const Vector u_half = st.u - TU.solve(prob.f.gradient(st.u) + prob.B.adjoint_apply(st.p));
  const Vector p_new = st.p - alpha * IQ.solve(prob.h.gradient(st.p) - prob.B.apply(u_half));
  const ConvexOracle fB = augment_primal(prob.f, prob.B, TP);
  const Vector shift = prob.B.adjoint_apply(p_new - TP.solve(prob.h.gradient(p_new)));
  return detail::finish_imex(prob, IV, IQ, fB, st.u, p_new, shift, alpha, inner, st.k);
}

// ---------------------------------------------------------------------------
// step sizes and rate prediction
// ---------------------------------------------------------------------------

struct ConvergencePrediction {
  double alpha = kNaN;
  double rho = kNaN;        // per-step Lyapunov factor
  double delta_k = kNaN;    // explicit schemes: rho = 1 - delta_k
  double mu_k = kNaN;       // half-implicit schemes: rho = 1/(1 + alpha mu_k)
  std::string form;
};

/// Theorem-optimal step size per scheme. The fully implicit scheme contracts
/// for any positive alpha; 1.0 is returned as the neutral default.
inline double select_step_size(const ConstantsSheet& s, SchemeKind kind) {
  switch (kind) {
    case SchemeKind::ExplicitTpd:
    case SchemeKind::ExplicitStpd:
      if (!s.complete_for_explicit())
        throw MissingConstants("select_step_size: sheet incomplete for the explicit scheme");
      return 0.5 * std::min(s.mu_V, s.mu_Q) / std::max({s.LV2, s.LQ2, 2.0});
    case SchemeKind::ImexTpd:
    case SchemeKind::ImexStpd:
      if (!s.complete_for_imex())
        throw MissingConstants("select_step_size: sheet incomplete for the half-implicit scheme");
      return 0.5 * s.mu_Q / s.LSQ2;
    case SchemeKind::ImplicitTpd:
      return 1.0;
    case SchemeKind::PdExplicit:
      throw MissingConstants("select_step_size: no step-size theorem for the plain scheme");
  }
  throw Error("select_step_size: unreachable");
}

inline ConvergencePrediction predict_rate(const ConstantsSheet& s, SchemeKind kind, double alpha) {
  ConvergencePrediction pred;
  pred.alpha = alpha;
  switch (kind) {
    case SchemeKind::ImplicitTpd:
      if (!std::isfinite(s.mu)) throw MissingConstants("predict_rate: sheet lacks mu");
      pred.rho = 1.0 / (1.0 + alpha * s.mu);
      pred.mu_k = s.mu;
      pred.form = "1/(1+alpha*mu)";
      return pred;
    case SchemeKind::ExplicitTpd:
    case SchemeKind::ExplicitStpd: {
      if (!s.complete_for_explicit()) throw MissingConstants("predict_rate: sheet incomplete");
      pred.delta_k =
          std::min(alpha * (s.mu_V - s.LV2 * alpha), alpha * (s.mu_Q - s.LQ2 * alpha));
      pred.rho = 1.0 - pred.delta_k;
      pred.form = "1-delta_k";
      return pred;
    }
    case SchemeKind::ImexTpd:
    case SchemeKind::ImexStpd: {
      if (!s.complete_for_imex()) throw MissingConstants("predict_rate: sheet incomplete");
      pred.mu_k = std::min(s.mu_V, s.mu_Q - alpha * s.LSQ2);
      pred.rho = 1.0 / (1.0 + alpha * pred.mu_k);
      pred.form = "1/(1+alpha*mu_k)";
      return pred;
    }
    case SchemeKind::PdExplicit:
      throw MissingConstants("predict_rate: no contraction theorem for the plain scheme");
  }
  throw Error("predict_rate: unreachable");
}

/// Per-step factor and accumulation constants of the inexact half-implicit
/// analysis: mu_k carries an extra factor 1/2 on the primal side, and at
/// alpha = mu_Q / (2 LSQ^2) the accumulated bound is
///   E_{n+1} <= rho^{n+1} E_0 + (mu_Q / (mu_V LSQ^2)) sum rho^{n-k+1} eps_k,
/// with rho = 1/(1 + mu_Q mu / (4 LSQ^2)).
struct InexactPrediction {
  double alpha;
  double rho_step;    // 1/(1 + alpha mu_k)
  double rho_accum;   // the accumulation weight base
  double sum_weight;  // mu_Q / (mu_V LSQ^2)
};

inline InexactPrediction predict_rate_inexact(const ConstantsSheet& s, double alpha) {
  if (!s.complete_for_imex() || !std::isfinite(s.mu))
    throw MissingConstants("predict_rate_inexact: sheet incomplete");
  InexactPrediction out;
  out.alpha = alpha;
  const double mu_k = std::min(0.5 * s.mu_V, s.mu_Q - alpha * s.LSQ2);
  out.rho_step = 1.0 / (1.0 + alpha * mu_k);
  out.rho_accum = 1.0 / (1.0 + s.mu_Q * s.mu / (4.0 * s.LSQ2));
  out.sum_weight = s.mu_Q / (s.mu_V * s.LSQ2);
  return out;
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

enum class StepPolicy { Fixed, Theorem, Growing };

struct SchemeConfig {
  SchemeKind kind = SchemeKind::ImexTpd;
  StepPolicy step_policy = StepPolicy::Theorem;
  double alpha = kNaN;       // Fixed: the value; Growing: alpha_0
  double alpha_cap = 1e6;    // Growing: cap of alpha_0 * 2^k
  SpdForm IV = SpdForm::identity(1);
  SpdForm IQ = SpdForm::identity(1);
  std::optional<SpdForm> TU, TP;             // symmetric schemes
  std::optional<ConstantsSheet> sheet;       // required by Theorem policy
  InnerKind inner_kind = InnerKind::Exact;
  ToleranceSchedule schedule;                // inexact inner solves
  NewtonPolicy newton;
  int max_iterations = 1000;
  double tol = 1e-10;        // stop once ||grad L|| <= tol
  bool stop_on_E = false;    // benchmark mode: stop on E <= E_tol instead
  double E_tol = 0.0;
  bool strict_contraction = false;  // assert observed factor <= rho + 1e-9
};

struct RunRow {
  int k;
  double E;
  double factor;  // E_k / E_{k-1}; NaN on the first row
  double grad_u_norm, grad_p_norm;
  int inner_iters;
  double eps_k;
};

struct RunRecord {
  std::vector<RunRow> rows;
  Vector u_final, p_final;
  bool converged = false;
  double predicted_rho = kNaN;
  double wall_seconds = 0.0;

  /// Largest observed per-step factor over rows with E above the floor.
  double observed_factor(double floor = 0.0) const {
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (std::isfinite(rows[i].factor) && rows[i - 1].E > floor)
        worst = std::max(worst, rows[i].factor);
    return worst;
  }

  /// CSV columns: k, E, factor, grad_u_norm, grad_p_norm, inner_iters, eps_k.
  /// Wall time is deliberately not a column so identical runs are
  /// byte-identical.
  void to_csv(std::ostream& out) const {
    CsvWriter w(out);
    w.row({"k", "E", "factor", "grad_u_norm", "grad_p_norm", "inner_iters", "eps_k"});
    for (const RunRow& r : rows) {
      w.row({std::to_string(r.k), format_double(r.E),
             std::isfinite(r.factor) ? format_double(r.factor) : std::string(),
             format_double(r.grad_u_norm), format_double(r.grad_p_norm),
             std::to_string(r.inner_iters),
             std::isfinite(r.eps_k) ? format_double(r.eps_k) : std::string()});
    }
  }
};

inline RunRecord run_scheme(const SaddleProblem& prob, const Vector& u0, const Vector& p0,
                            const SchemeConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const bool symmetric =
      cfg.kind == SchemeKind::ExplicitStpd || cfg.kind == SchemeKind::ImexStpd;
  if (symmetric && (!cfg.TU || !cfg.TP))
    throw MissingConstants("run_scheme: symmetric schemes need T_U and T_P");
  if (cfg.step_policy == StepPolicy::Theorem && !cfg.sheet && cfg.kind != SchemeKind::ImplicitTpd)
    throw MissingConstants("run_scheme: theorem step-size policy needs a constants sheet");

  double alpha0 = cfg.alpha;
  if (cfg.step_policy == StepPolicy::Theorem)
    alpha0 = cfg.sheet ? select_step_size(*cfg.sheet, cfg.kind) : 1.0;
  if (!(alpha0 > 0.0)) throw Error("run_scheme: step size must be positive");

  RunRecord rec;
  if (cfg.sheet && cfg.step_policy != StepPolicy::Growing) {
    try {
      rec.predicted_rho = predict_rate(*cfg.sheet, cfg.kind, alpha0).rho;
    } catch (const MissingConstants&) {
    }
  }

  IterateState st = make_state(prob, u0, p0, 0, cfg.IV, cfg.IQ);
  auto push_row = [&rec](const IterateState& s, double prev_E, int inner_iters, double eps_k) {
    RunRow row;
    row.k = s.k;
    row.E = s.E;
    row.factor = (s.k > 0 && prev_E > 0.0 && std::isfinite(s.E)) ? s.E / prev_E : kNaN;
    row.grad_u_norm = s.grad_u_norm;
    row.grad_p_norm = s.grad_p_norm;
    row.inner_iters = inner_iters;
    row.eps_k = eps_k;
    rec.rows.push_back(row);
  };
  push_row(st, kNaN, 0, kNaN);

  auto stop_measure = [&](const IterateState& s) {
    return cfg.stop_on_E ? s.E
                         : s.grad_u_norm * s.grad_u_norm + s.grad_p_norm * s.grad_p_norm;
  };
  auto diverged = [&rec](const IterateState& s) {
    const double cur = std::isfinite(s.E)
                           ? s.E
                           : s.grad_u_norm * s.grad_u_norm + s.grad_p_norm * s.grad_p_norm;
    if (!std::isfinite(cur)) return true;
    if (s.k < 50) return false;
    const RunRow& past = rec.rows[rec.rows.size() - 50];
    const double ref = std::isfinite(past.E)
                           ? past.E
                           : past.grad_u_norm * past.grad_u_norm + past.grad_p_norm * past.grad_p_norm;
    return cur > 10.0 * ref && cur > 1e-280;
  };

  for (int k = 0; k < cfg.max_iterations; ++k) {
    const double stop_tol = cfg.stop_on_E ? cfg.E_tol : cfg.tol * cfg.tol;
    if (stop_measure(st) <= stop_tol) {
      rec.converged = true;
      break;
    }
    double alpha = alpha0;
    if (cfg.step_policy == StepPolicy::Growing)
      alpha = std::min(alpha0 * std::pow(2.0, k), cfg.alpha_cap);

    InnerSolve inner;
    inner.kind = cfg.inner_kind;
    if (cfg.inner_kind == InnerKind::InexactGradient)
      inner.eps = cfg.sheet ? schedule_epsilon(cfg.schedule, k, *cfg.sheet)
                            : schedule_epsilon(cfg.schedule, k, ConstantsSheet{});

    StepResult res;
    switch (cfg.kind) {
      case SchemeKind::PdExplicit: res = step_pd_explicit(prob, st, alpha); break;
      case SchemeKind::ExplicitTpd: res = step_explicit(prob, cfg.IV, cfg.IQ, st, alpha); break;
      case SchemeKind::ImexTpd: res = step_imex(prob, cfg.IV, cfg.IQ, st, alpha, inner); break;
      case SchemeKind::ImplicitTpd:
        res = step_implicit(prob, cfg.IV, cfg.IQ, st, alpha, cfg.newton);
        break;
      case SchemeKind::ExplicitStpd:
        res = step_stpd_explicit(prob, *cfg.TU, *cfg.TP, cfg.IV, cfg.IQ, st, alpha);
        break;
      case SchemeKind::ImexStpd:
        res = step_stpd_imex(prob, *cfg.TU, *cfg.TP, cfg.IV, cfg.IQ, st, alpha, inner);
        break;
    }
    const double prev_E = st.E;
    st = std::move(res.state);
    push_row(st, prev_E, res.inner_iters, res.eps_k);

    if (cfg.strict_contraction && std::isfinite(prev_E)) {
      double rho = rec.predicted_rho;
      if (cfg.step_policy == StepPolicy::Growing && cfg.sheet)
        rho = predict_rate(*cfg.sheet, cfg.kind, alpha).rho;
      if (std::isfinite(rho) && st.E > rho * prev_E + 1e-12)
        throw Error("run_scheme: observed factor exceeds the predicted contraction at step " +
                    std::to_string(st.k));
    }
    if (diverged(st)) throw DivergenceDetected("run_scheme: Lyapunov growth over 50 steps");
  }
  if (!rec.converged && !rec.rows.empty() && stop_measure(st) <= (cfg.stop_on_E ? cfg.E_tol : cfg.tol * cfg.tol))
    rec.converged = true;

  rec.u_final = st.u;
  rec.p_final = st.p;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rec;
}

}  // namespace tpd
