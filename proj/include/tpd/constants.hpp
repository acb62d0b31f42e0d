#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "tpd/bregman.hpp"
#include "tpd/errors.hpp"
#include "tpd/problem.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Derived convexity and Lipschitz constants driving step-size selection and
/// rate prediction. The L_S entry is stored squared; L_S() exposes the root.
struct ConstantsSheet {
  // base constants in the relevant metrics (I_V/I_Q for the plain flow,
  // T_U/T_P for the symmetric one)
  double mu_f = kNaN, L_f = kNaN;
  double mu_h = kNaN, L_h = kNaN;
  // regularized functions
  double mu_fB = kNaN, L_fB = kNaN;  // f_B in I_V (symmetric flow only)
  double mu_hB = kNaN, L_hB = kNaN;  // h_B in I_Q
  // descent maps
  double L_e = kNaN;   // e in I_V
  double L_eU = kNaN;  // e_U in I_V (symmetric flow)
  double L_eP = kNaN;  // e_P in I_Q (symmetric flow)
  // Schur spectrum of I_Q^{-1} B I_V^{-1} B^T
  double mu_S = kNaN, LS2 = kNaN;
  // effective constants
  double mu_V = kNaN, LV2 = kNaN;
  double mu_Q = kNaN, LQ2 = kNaN;
  double LSQ2 = kNaN;
  double kappa_V = kNaN, kappa_Q = kNaN;
  double mu = kNaN;

  double L_S() const { return std::sqrt(LS2); }
  double L_V() const { return std::sqrt(LV2); }
  double L_Q() const { return std::sqrt(LQ2); }

  bool complete_for_explicit() const {
    return std::isfinite(mu_V) && std::isfinite(mu_Q) && std::isfinite(LV2) && std::isfinite(LQ2);
  }
  bool complete_for_imex() const {
    return std::isfinite(mu_V) && std::isfinite(mu_Q) && std::isfinite(LSQ2);
  }
};

/// Inputs for the plain transformed flow: f measured in I_V, h and h_B in I_Q.
struct SheetInputs {
  double mu_f_IV = kNaN, L_f_IV = kNaN;
  double mu_h_IQ = 0.0, L_h_IQ = 0.0;
  double L_e_IV = kNaN;
  double mu_S = kNaN, LS2 = kNaN;
  double mu_hB_IQ = kNaN, L_hB_IQ = kNaN;
};

/// Closed-form sheet for the plain flow:
///   mu_V = mu_{f,IV}
///   mu_Q = (2 - L_{f,IV}) mu_{hB,IQ}
///   LV^2 = 2 L_e^2 (1 + L_S^2)
///   LQ^2 = 2 L_{hB,IQ}^2
///   LSQ^2 = L_{hB,IQ}^2 + L_e^2 L_S^2
/// Pure: identical inputs give identical sheets.
inline ConstantsSheet derive_constants(const SheetInputs& in) {
  if (!(in.L_f_IV > 0.0))
    throw DegenerateAffine("derive_constants: L_{f,IV} = 0 (affine f is excluded)");
  if (in.L_f_IV >= 2.0)
    throw RescalingRequired("derive_constants: L_{f,IV} >= 2; rescale f or I_V");
  ConstantsSheet s;
  s.mu_f = in.mu_f_IV;
  s.L_f = in.L_f_IV;
  s.mu_h = in.mu_h_IQ;
  s.L_h = in.L_h_IQ;
  s.mu_hB = in.mu_hB_IQ;
  s.L_hB = in.L_hB_IQ;
  s.L_e = in.L_e_IV;
  s.mu_S = in.mu_S;
  s.LS2 = in.LS2;
  s.mu_V = in.mu_f_IV;
  s.mu_Q = (2.0 - in.L_f_IV) * in.mu_hB_IQ;
  s.LV2 = 2.0 * (in.L_e_IV * in.L_e_IV * (1.0 + in.LS2));
  s.LQ2 = 2.0 * in.L_hB_IQ * in.L_hB_IQ;
  s.LSQ2 = in.L_hB_IQ * in.L_hB_IQ + in.L_e_IV * in.L_e_IV * in.LS2;
  s.kappa_V = std::max(s.L_V(), 2.0) / s.mu_V;
  s.kappa_Q = s.L_Q() / s.mu_Q;
  s.mu = std::min(s.mu_V, s.mu_Q);
  return s;
}

/// Inputs for the symmetric flow: f in T_U, h in T_P, f_B in I_V, h_B in I_Q.
struct StpdSheetInputs {
  double mu_f_TU = kNaN, L_f_TU = kNaN;
  double mu_h_TP = 0.0, L_h_TP = 0.0;
  double mu_fB_IV = kNaN, L_fB_IV = kNaN;
  double mu_hB_IQ = kNaN, L_hB_IQ = kNaN;
  double L_eU_IV = kNaN, L_eP_IQ = kNaN;
  double mu_S = kNaN, LS2 = kNaN;
};

/// Sheet for the symmetric flow. Requires L_{f,TU} <= 1 and L_{h,TP} <= 1
/// (achievable by scaling T_U, T_P); then
///   mu_V = mu_{fB,IV},  mu_Q = mu_{hB,IQ}
///   LV^2 = 2 (L_{fB,IV}^2 + L_S^2 L_{eP,IQ}^2)
///   LQ^2 = 2 (L_{hB,IQ}^2 + L_S^2 L_{eU,IV}^2)
///   LSQ^2 = L_{hB,IQ}^2 + L_{eU,IV}^2 L_S^2.
inline ConstantsSheet derive_constants_stpd(const StpdSheetInputs& in) {
  if (in.L_f_TU > 1.0 + 1e-12)
    throw RescalingRequired("derive_constants_stpd: L_{f,TU} > 1; rescale T_U");
  if (in.L_h_TP > 1.0 + 1e-12)
    throw RescalingRequired("derive_constants_stpd: L_{h,TP} > 1; rescale T_P");
  ConstantsSheet s;
  s.mu_f = in.mu_f_TU;
  s.L_f = in.L_f_TU;
  s.mu_h = in.mu_h_TP;
  s.L_h = in.L_h_TP;
  s.mu_fB = in.mu_fB_IV;
  s.L_fB = in.L_fB_IV;
  s.mu_hB = in.mu_hB_IQ;
  s.L_hB = in.L_hB_IQ;
  s.L_eU = in.L_eU_IV;
  s.L_eP = in.L_eP_IQ;
  s.mu_S = in.mu_S;
  s.LS2 = in.LS2;
  s.mu_V = in.mu_fB_IV;
  s.mu_Q = in.mu_hB_IQ;
  s.LV2 = 2.0 * (in.L_fB_IV * in.L_fB_IV + in.LS2 * in.L_eP_IQ * in.L_eP_IQ);
  s.LQ2 = 2.0 * (in.L_hB_IQ * in.L_hB_IQ + in.LS2 * in.L_eU_IV * in.L_eU_IV);
  s.LSQ2 = in.L_hB_IQ * in.L_hB_IQ + in.L_eU_IV * in.L_eU_IV * in.LS2;
  s.kappa_V = std::max(s.L_V(), 2.0) / s.mu_V;
  s.kappa_Q = s.L_Q() / s.mu_Q;
  s.mu = std::min(s.mu_V, s.mu_Q);
  return s;
}

struct SchurSpectrum {
  double mu_S;
  double LS2;
};

namespace detail {

// Largest generalized eigenvalue of S y = lambda M y (both SPD-ish) by power
// iteration in the M inner product.
inline double power_extremal(const std::function<Vector(const Vector&)>& S, const SpdForm& M,
                             Index dim, double tol, int max_iter, double* achieved_change) {
  Vector y = Vector::Ones(dim);
  y /= M.norm(y);
  double lambda = 0.0;
  double change = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Vector Sy = S(y);
    const double rayleigh = Sy.dot(y);  // <S y, y>, with ||y||_M = 1
    change = std::abs(rayleigh - lambda) / (1.0 + std::abs(rayleigh));
    lambda = rayleigh;
    if (change <= tol && it > 4) return lambda;
    Vector z = M.solve(Sy);
    const double zn = M.norm(z);
    if (zn <= 0.0) return lambda;
    y = z / zn;
  }
  *achieved_change = change;
  return lambda;
}

}  // namespace detail

/// Extremal eigenvalues of the generalized Schur operator I_Q^{-1} B I_V^{-1} B^T.
/// Dense eigensolve when a dense view exists and n <= 512; shifted power
/// iteration on the matrix-free operator otherwise.
inline SchurSpectrum estimate_schur_spectrum(const LinearMap& B, const SpdForm& IV,
                                             const SpdForm& IQ, double tol = 1e-10,
                                             int max_iterations = 200000) {
  const Index n = B.rows();
  if (B.has_dense() && n <= 512 && IV.kind() != SpdForm::Kind::Operator) {
    Matrix S(n, n);
    {
      Matrix IVinvBt(B.cols(), n);
      for (Index j = 0; j < n; ++j)
        IVinvBt.col(j) = IV.solve(Vector(B.dense().transpose().col(j)));
      S = B.dense() * IVinvBt;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(S, IQ.dense_view(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw SpectrumEstimateFailed("estimate_schur_spectrum: dense eigensolve failed", 0, 0);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
  }
  auto S = [&](const Vector& y) { return B.apply(IV.solve(B.adjoint_apply(y))); };
  double change_hi = 0.0, change_lo = 0.0;
  double hi = detail::power_extremal(S, IQ, n, tol, max_iterations, &change_hi);
  // lambda_min via the shifted operator (hi * I_Q - S).
  auto Sshift = [&](const Vector& y) { return Vector(1.0001 * hi * IQ.apply(y) - S(y)); };
  double lo = 1.0001 * hi - detail::power_extremal(Sshift, IQ, n, tol, max_iterations, &change_lo);
  if (change_hi > tol || change_lo > tol)
    throw SpectrumEstimateFailed("estimate_schur_spectrum: power iteration stalled", lo, hi);
  return {lo, hi};
}

namespace detail {

// Extremal eigenvalues of M^{-1} H for symmetric H, SPD M (generalized
// symmetric problem H x = lambda M x).
inline std::pair<double, double> generalized_extremes(const Matrix& H, const Matrix& M) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(H, M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw RankError("generalized eigensolve failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

// Lipschitz constant of the map x -> (I - M^{-1} H) x in the M norm:
// sqrt(lambda_max(J^T M J, M)) with J = I - M^{-1} H.
inline double descent_map_lipschitz(const Matrix& H, const Matrix& M) {
  // J^T M J = M - 2 H + H M^{-1} H (symmetric).
  const Matrix HMH = H * Matrix(M.llt().solve(H));
  const Matrix JMJ = M - H - H.transpose() + HMH;
  auto [lo, hi] = generalized_extremes(JMJ, M);
  (void)lo;
  return std::sqrt(std::max(0.0, hi));
}

// mu/L of an oracle in a metric: exact by generalized eigensolve for
// quadratics, transformed declared l2 constants for scaled-identity metrics.
inline std::pair<double, double> oracle_constants_in(const ConvexOracle& f, const SpdForm& M) {
  if (f.is_quadratic() && M.kind() != SpdForm::Kind::Operator)
    return generalized_extremes(f.quadratic_matrix(), M.dense_view());
  if (M.is_scaled_identity() && f.has_constants() && f.constants().metric == "l2") {
    const double c = M.scale();
    return {f.constants().mu / c, f.constants().L / c};
  }
  throw MissingConstants("oracle constants in metric: need a quadratic oracle or declared "
                         "l2 constants with a scaled-identity metric");
}

// Lipschitz constant of x - M_inner^{-1} grad f(x) measured in the M_outer norm.
inline double descent_lipschitz_in(const ConvexOracle& f, const SpdForm& M_inner,
                                   const SpdForm& M_outer) {
  if (f.is_quadratic() && M_inner.kind() != SpdForm::Kind::Operator &&
      M_outer.kind() != SpdForm::Kind::Operator) {
    const Matrix H = f.quadratic_matrix();
    const Matrix Mi = M_inner.dense_view();
    const Matrix Mo = M_outer.dense_view();
    const Index d = H.rows();
    const Matrix J = Matrix::Identity(d, d) - Mi.llt().solve(H);
    const Matrix JMJ = J.transpose() * Mo * J;
    auto [lo, hi] = generalized_extremes(Matrix((JMJ + JMJ.transpose()) / 2.0), Mo);
    (void)lo;
    return std::sqrt(std::max(0.0, hi));
  }
  if (M_inner.is_scaled_identity() && M_outer.is_scaled_identity() && f.has_constants() &&
      f.constants().metric == "l2") {
    const double c = M_inner.scale();
    const double lo = 1.0 - f.constants().L / c;
    const double hi = 1.0 - f.constants().mu / c;
    return std::max(std::abs(lo), std::abs(hi));
  }
  throw MissingConstants("descent-map Lipschitz constant: unsupported oracle/metric pair");
}

}  // namespace detail

/// Exact sheet for the plain flow on problems with quadratic (or declared-
/// constant) oracles. All entries come from dense generalized eigensolves.
inline ConstantsSheet compute_sheet_tpd(const SaddleProblem& prob, const SpdForm& IV,
                                        const SpdForm& IQ) {
  SheetInputs in;
  std::tie(in.mu_f_IV, in.L_f_IV) = detail::oracle_constants_in(prob.f, IV);
  std::tie(in.mu_h_IQ, in.L_h_IQ) = detail::oracle_constants_in(prob.h, IQ);
  in.L_e_IV = detail::descent_lipschitz_in(prob.f, IV, IV);
  const SchurSpectrum sp = estimate_schur_spectrum(prob.B, IV, IQ);
  in.mu_S = sp.mu_S;
  in.LS2 = sp.LS2;
  const ConvexOracle hB = augment_dual(prob.h, prob.B, IV);
  std::tie(in.mu_hB_IQ, in.L_hB_IQ) = detail::oracle_constants_in(hB, IQ);
  return derive_constants(in);
}

/// Exact sheet for the symmetric flow.
inline ConstantsSheet compute_sheet_stpd(const SaddleProblem& prob, const SpdForm& TU,
                                         const SpdForm& TP, const SpdForm& IV,
                                         const SpdForm& IQ) {
  StpdSheetInputs in;
  std::tie(in.mu_f_TU, in.L_f_TU) = detail::oracle_constants_in(prob.f, TU);
  std::tie(in.mu_h_TP, in.L_h_TP) = detail::oracle_constants_in(prob.h, TP);
  const AugmentedOracles aug = augmented_oracles(prob, TU, TP);
  std::tie(in.mu_fB_IV, in.L_fB_IV) = detail::oracle_constants_in(aug.fB, IV);
  std::tie(in.mu_hB_IQ, in.L_hB_IQ) = detail::oracle_constants_in(aug.hB, IQ);
  in.L_eU_IV = detail::descent_lipschitz_in(prob.f, TU, IV);
  in.L_eP_IQ = detail::descent_lipschitz_in(prob.h, TP, IQ);
  const SchurSpectrum sp = estimate_schur_spectrum(prob.B, IV, IQ);
  in.mu_S = sp.mu_S;
  in.LS2 = sp.LS2;
  return derive_constants_stpd(in);
}

}  // namespace tpd
