#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "tpd/csv.hpp"
#include "tpd/flows.hpp"

namespace tpd {

/// A continuous-level run: strictly increasing time stamps, states, Lyapunov
/// samples at accepted steps. Produced by exactly one integration and
/// immutable afterwards.
struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> u;
  std::vector<Vector> p;
  std::vector<double> E;

  /// CSV columns: t, E, u-norm-error, p-norm-error (errors in the flow metrics).
  void to_csv(std::ostream& out, const SaddlePoint& star, const SpdForm& IV,
              const SpdForm& IQ) const {
    CsvWriter w(out);
    w.row({"t", "E", "u_err", "p_err"});
    for (std::size_t i = 0; i < t.size(); ++i) {
      w.row({format_double(t[i]), format_double(E[i]), format_double(IV.norm(u[i] - star.u)),
             format_double(IQ.norm(p[i] - star.p))});
    }
  }
};

struct IntegrateOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  long max_steps = 1000000;
  double initial_dt = 1e-3;
};

/// Dormand-Prince 4(5) with PI step-size control. Local error per accepted
/// step bounded by the mixed tolerance; E(t) recorded at accepted steps.
inline Trajectory integrate_flow(const FlowField& field, const Vector& u0, const Vector& p0,
                                 double t_end, const IntegrateOptions& opts = {}) {
  if (!(t_end > 0.0)) throw Error("integrate_flow: t_end must be positive");
  const SaddlePoint& star = require_saddle(field.problem());
  const Index m = u0.size(), n = p0.size();

  auto rhs = [&](const Vector& y) {
    const Vector u = y.head(m), p = y.tail(n);
    const auto [Gu, Gp] = field(u, p);
    Vector dy(m + n);
    dy << Gu, Gp;
    return dy;
  };

  // Dormand-Prince coefficients (autonomous field, so the c nodes drop out).
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  Vector y(m + n);
  y << u0, p0;
  double t = 0.0;
  double dt = std::min(opts.initial_dt, t_end);
  Vector k1 = rhs(y);

  Trajectory traj;
  auto record = [&](double tt, const Vector& yy) {
    traj.t.push_back(tt);
    traj.u.push_back(yy.head(m));
    traj.p.push_back(yy.tail(n));
    traj.E.push_back(lyapunov(yy.head(m), yy.tail(n), star, field.IV(), field.IQ()));
  };
  record(0.0, y);

  double err_prev = 1.0;
  for (long step = 0; step < opts.max_steps && t < t_end; ++step) {
    dt = std::min(dt, t_end - t);
    const Vector k2 = rhs(y + dt * (a21 * k1));
    const Vector k3 = rhs(y + dt * (a31 * k1 + a32 * k2));
    const Vector k4 = rhs(y + dt * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = rhs(y + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 = rhs(y + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vector ynew = y + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = rhs(ynew);
    const Vector errv = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double q = errv[i] / sc;
      err += q * q;
    }
    err = std::sqrt(err / static_cast<double>(y.size()));

    if (err <= 1.0) {
      t += dt;
      y = ynew;
      k1 = k7;  // FSAL
      record(t, y);
      err_prev = std::max(err, 1e-10);
    }
    const double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) *
                       std::pow(err_prev, 0.4 / 5.0);
    dt *= std::clamp(fac, 0.2, 5.0);
    if (dt < 1e-14 * std::max(1.0, t)) throw StiffnessError("integrate_flow: step size underflow");
  }
  if (t < t_end) throw StiffnessError("integrate_flow: max step budget exhausted");
  return traj;
}

}  // namespace tpd
