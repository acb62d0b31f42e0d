#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>

#include "tpd/errors.hpp"
#include "tpd/linear_map.hpp"
#include "tpd/rng.hpp"
#include "tpd/spd_form.hpp"

namespace tpd {

/// Convexity/Lipschitz constants of an oracle, tagged with the metric they
/// were measured in ("l2" or a named SPD form).
struct OracleConstants {
  double mu = 0.0;
  double L = 0.0;
  std::string metric = "l2";
};

/// A smooth convex function given by value/gradient callables, with optional
/// proximal map, dense Hessian, and declared constants. Instances are
/// immutable after construction and safe to share across threads.
class ConvexOracle {
public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;
  using ProxFn = std::function<Vector(double, const Vector&)>;  // (lambda, w)
  using HessFn = std::function<Matrix(const Vector&)>;

  ConvexOracle(Index dim, ValueFn value, GradFn grad)
      : dim_(dim), value_(std::move(value)), grad_(std::move(grad)) {}

  Index dim() const { return dim_; }

  double value(const Vector& x) const {
    require_dim(x, dim_, "ConvexOracle::value");
    return value_(x);
  }

  Vector gradient(const Vector& x) const {
    require_dim(x, dim_, "ConvexOracle::gradient");
    return grad_(x);
  }

  bool has_prox() const { return static_cast<bool>(prox_); }

  /// prox_{f,lambda}(w) = argmin_u f(u) + ||u-w||^2/(2 lambda)
  Vector prox(double lambda, const Vector& w) const {
    if (!prox_) throw NotAvailable("ConvexOracle: no proximal map");
    require_dim(w, dim_, "ConvexOracle::prox");
    return prox_(lambda, w);
  }

  bool has_hessian() const { return static_cast<bool>(hess_); }
  Matrix hessian(const Vector& x) const {
    if (!hess_) throw NotAvailable("ConvexOracle: no Hessian");
    require_dim(x, dim_, "ConvexOracle::hessian");
    return hess_(x);
  }

  bool has_constants() const { return constants_.has_value(); }
  const OracleConstants& constants() const {
    if (!constants_) throw MissingConstants("ConvexOracle: no declared constants");
    return *constants_;
  }

  bool is_affine() const { return affine_.has_value(); }
  /// The vector b of the affine oracle p -> (b, p). Kept exact so the affine
  /// branches of the cross-term checks evaluate to zero without rounding noise.
  const Vector& affine_vector() const {
    if (!affine_) throw NotAvailable("ConvexOracle: not affine");
    return *affine_;
  }

  bool is_quadratic() const { return quadratic_.has_value(); }
  const Matrix& quadratic_matrix() const {
    if (!quadratic_) throw NotAvailable("ConvexOracle: not quadratic");
    return quadratic_->first;
  }
  const Vector& quadratic_linear() const {
    if (!quadratic_) throw NotAvailable("ConvexOracle: not quadratic");
    return quadratic_->second;
  }

  ConvexOracle& with_prox(ProxFn prox) {
    prox_ = std::move(prox);
    return *this;
  }
  ConvexOracle& with_hessian(HessFn hess) {
    hess_ = std::move(hess);
    return *this;
  }
  ConvexOracle& with_constants(OracleConstants c) {
    constants_ = std::move(c);
    return *this;
  }

  // ---- factories ----

  /// f(x) = 0.5 x^T F x + a^T x + c0 with F symmetric PSD.
  static ConvexOracle quadratic(Matrix F, Vector a, double c0 = 0.0) {
    if (F.rows() != F.cols() || F.rows() != a.size())
      throw DimensionMismatch("quadratic oracle: F and a disagree");
    auto Fp = std::make_shared<const Matrix>(std::move(F));
    auto ap = std::make_shared<const Vector>(std::move(a));
    ConvexOracle o(
        Fp->rows(),
        [Fp, ap, c0](const Vector& x) { return 0.5 * x.dot(*Fp * x) + ap->dot(x) + c0; },
        [Fp, ap](const Vector& x) { return Vector(*Fp * x + *ap); });
    o.quadratic_ = {*Fp, *ap};
    o.with_hessian([Fp](const Vector&) { return *Fp; });
    o.with_prox([Fp, ap](double lambda, const Vector& w) {
      const Index d = Fp->rows();
      Matrix M = Matrix::Identity(d, d) + lambda * *Fp;
      return Vector(M.llt().solve(w - lambda * *ap));
    });
    Eigen::SelfAdjointEigenSolver<Matrix> es(*Fp, Eigen::EigenvaluesOnly);
    o.with_constants({std::max(0.0, es.eigenvalues().minCoeff()),
                      std::max(0.0, es.eigenvalues().maxCoeff()), "l2"});
    return o;
  }

  /// h(p) = (b, p). First-class so its gradient is b exactly.
  static ConvexOracle affine(Vector b) {
    auto bp = std::make_shared<const Vector>(std::move(b));
    ConvexOracle o(
        bp->size(), [bp](const Vector& p) { return bp->dot(p); },
        [bp](const Vector&) { return *bp; });
    o.affine_ = *bp;
    o.quadratic_ = {Matrix::Zero(bp->size(), bp->size()), *bp};
    o.with_hessian([d = bp->size()](const Vector&) { return Matrix::Zero(d, d); });
    o.with_prox([bp](double lambda, const Vector& w) { return Vector(w - lambda * *bp); });
    o.with_constants({0.0, 0.0, "l2"});
    return o;
  }

  static ConvexOracle zero(Index dim) { return affine(Vector::Zero(dim)); }

  /// f(x) = log(sum exp x_i) + 0.5 rho ||x||^2; mu = rho, L = 1 + rho in l2.
  static ConvexOracle logsumexp_ridge(Index dim, double rho) {
    auto softmax = [](const Vector& x) {
      const double m = x.maxCoeff();
      Vector e = (x.array() - m).exp();
      return Vector(e / e.sum());
    };
    ConvexOracle o(
        dim,
        [rho](const Vector& x) {
          const double m = x.maxCoeff();
          return m + std::log((x.array() - m).exp().sum()) + 0.5 * rho * x.squaredNorm();
        },
        [rho, softmax](const Vector& x) { return Vector(softmax(x) + rho * x); });
    o.with_hessian([rho, softmax, dim](const Vector& x) {
      const Vector s = softmax(x);
      Matrix H = Matrix(s.asDiagonal()) - s * s.transpose();
      H += rho * Matrix::Identity(dim, dim);
      return H;
    });
    o.with_constants({rho, 1.0 + rho, "l2"});
    return o;
  }

private:
  Index dim_;
  ValueFn value_;
  GradFn grad_;
  ProxFn prox_;
  HessFn hess_;
  std::optional<OracleConstants> constants_;
  std::optional<Vector> affine_;
  std::optional<std::pair<Matrix, Vector>> quadratic_;
};

/// Worst relative error of the oracle gradient against central differences of
/// the value over sampled points.
inline double gradient_check_fd(const ConvexOracle& f, Rng& rng, int points = 10,
                                double step = 1e-6, double box = 2.0) {
  double worst = 0.0;
  for (int s = 0; s < points; ++s) {
    const Vector x = rng.uniform_vector(f.dim(), -box, box);
    const Vector g = f.gradient(x);
    for (Index i = 0; i < f.dim(); ++i) {
      Vector xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      const double fd = (f.value(xp) - f.value(xm)) / (2.0 * step);
      worst = std::max(worst, std::abs(fd - g[i]) / (1.0 + std::abs(g[i])));
    }
  }
  return worst;
}

/// Checks declared mu/L against sampled symmetrized Bregman quotients
/// <grad f(x) - grad f(y), x - y> / ||x-y||^2_metric. Returns the worst
/// violation (0 when consistent).
inline double constants_check(const ConvexOracle& f, const SpdForm& metric, double mu, double L,
                              Rng& rng, int pairs = 200, double box = 5.0) {
  double worst = 0.0;
  for (int s = 0; s < pairs; ++s) {
    const Vector x = rng.uniform_vector(f.dim(), -box, box);
    const Vector y = rng.uniform_vector(f.dim(), -box, box);
    const double dd = metric.norm_sq(x - y);
    if (dd < 1e-20) continue;
    const double q = (f.gradient(x) - f.gradient(y)).dot(x - y) / dd;
    worst = std::max({worst, mu - q, q - L});
  }
  return worst;
}

}  // namespace tpd
