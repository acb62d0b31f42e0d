#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>

#include "tpd/errors.hpp"
#include "tpd/linear_map.hpp"

namespace tpd {

/// Conjugate gradients on an SPD operator given as a callable. Relative
/// residual <= tol on exit; iteration count reported through `iters` when set.
inline Vector spd_solve_cg(const std::function<Vector(const Vector&)>& apply, const Vector& rhs,
                           double tol = 1e-12, int max_iter = 10000, int* iters = nullptr) {
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    if (iters) *iters = 0;
    return Vector::Zero(rhs.size());
  }
  Vector x = Vector::Zero(rhs.size());
  Vector r = rhs;
  Vector d = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol * rhs_norm) {
      if (iters) *iters = it;
      return x;
    }
    const Vector ad = apply(d);
    const double da = d.dot(ad);
    if (da <= 0.0) throw SolverStagnation("spd_solve_cg: operator is not positive definite");
    const double alpha = rr / da;
    x += alpha * d;
    r -= alpha * ad;
    const double rr_new = r.squaredNorm();
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  if (std::sqrt(rr) <= tol * rhs_norm) {
    if (iters) *iters = max_iter;
    return x;
  }
  throw SolverStagnation("spd_solve_cg: no convergence within iteration budget");
}

/// A symmetric positive definite operator defining an inner product: apply,
/// inverse apply, induced norm and dual norm. Houses the I_V / I_Q metrics
/// and the T_U / T_P transformation operators.
class SpdForm {
public:
  enum class Kind { ScaledIdentity, Dense, Composite, Operator };

  static SpdForm identity(Index dim) { return scaled_identity(dim, 1.0); }

  static SpdForm scaled_identity(Index dim, double scale) {
    if (!(scale > 0.0)) throw RankError("SpdForm: scale must be positive");
    SpdForm f;
    f.dim_ = dim;
    f.kind_ = Kind::ScaledIdentity;
    f.scale_ = scale;
    return f;
  }

  /// Dense SPD matrix; factorized once. Throws RankError if not SPD.
  static SpdForm from_dense(Matrix M, Kind tag = Kind::Dense) {
    if (M.rows() != M.cols()) throw DimensionMismatch("SpdForm: matrix must be square");
    if (!M.isApprox(M.transpose(), 1e-12))
      throw RankError("SpdForm: matrix is not symmetric");
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(M);
    if (llt->info() != Eigen::Success)
      throw RankError("SpdForm: matrix is not positive definite");
    SpdForm f;
    f.dim_ = M.rows();
    f.kind_ = tag;
    f.dense_ = std::make_shared<Matrix>(std::move(M));
    f.llt_ = std::move(llt);
    return f;
  }

  /// Matrix-free SPD operator; solves run through CG at the declared tolerance.
  static SpdForm from_operator(Index dim, std::function<Vector(const Vector&)> apply,
                               double solve_tol = 1e-12) {
    SpdForm f;
    f.dim_ = dim;
    f.kind_ = Kind::Operator;
    f.op_ = std::move(apply);
    f.solve_tol_ = solve_tol;
    return f;
  }

  /// The composite A + beta B^T B. Assembled densely at desk scale when B has
  /// a dense view; matrix-free with CG solves otherwise.
  static SpdForm a_beta(const Matrix& A, const LinearMap& B, double beta) {
    if (A.rows() != B.cols()) throw DimensionMismatch("SpdForm::a_beta: A and B disagree");
    if (B.has_dense() && A.rows() <= 512) {
      Matrix M = A + beta * B.dense().transpose() * B.dense();
      return from_dense(std::move(M), Kind::Composite);
    }
    auto Acopy = std::make_shared<const Matrix>(A);
    auto Bcopy = std::make_shared<const LinearMap>(B);
    auto apply = [Acopy, Bcopy, beta](const Vector& x) {
      return Vector(*Acopy * x + beta * Bcopy->adjoint_apply(Bcopy->apply(x)));
    };
    SpdForm f = from_operator(A.rows(), apply);
    f.kind_ = Kind::Composite;
    return f;
  }

  Index dim() const { return dim_; }
  Kind kind() const { return kind_; }
  bool is_scaled_identity() const { return kind_ == Kind::ScaledIdentity; }
  double scale() const {
    if (!is_scaled_identity()) throw NotAvailable("SpdForm: not a scaled identity");
    return scale_;
  }

  Vector apply(const Vector& x) const {
    require_dim(x, dim_, "SpdForm::apply");
    if (kind_ == Kind::ScaledIdentity) return scale_ * x;
    if (dense_) return *dense_ * x;
    return op_(x);
  }

  Vector solve(const Vector& r) const {
    require_dim(r, dim_, "SpdForm::solve");
    if (kind_ == Kind::ScaledIdentity) return r / scale_;
    if (llt_) return llt_->solve(r);
    return spd_solve_cg(op_, r, solve_tol_);
  }

  /// <M x, y>
  double inner(const Vector& x, const Vector& y) const { return apply(x).dot(y); }
  double norm_sq(const Vector& x) const { return inner(x, x); }
  double norm(const Vector& x) const { return std::sqrt(std::max(0.0, norm_sq(x))); }

  /// Dual norm ||l||_{M^{-1}}.
  double dual_sq(const Vector& l) const { return solve(l).dot(l); }
  double dual_norm(const Vector& l) const { return std::sqrt(std::max(0.0, dual_sq(l))); }

  /// Dense assembly (applies to basis vectors for operator forms).
  Matrix dense_view() const {
    if (dense_) return *dense_;
    if (kind_ == Kind::ScaledIdentity)
      return scale_ * Matrix::Identity(dim_, dim_);
    Matrix M(dim_, dim_);
    for (Index j = 0; j < dim_; ++j) M.col(j) = op_(Vector::Unit(dim_, j));
    return M;
  }

private:
  SpdForm() = default;
  Index dim_ = 0;
  Kind kind_ = Kind::ScaledIdentity;
  double scale_ = 1.0;
  std::shared_ptr<const Matrix> dense_;
  std::shared_ptr<Eigen::LLT<Matrix>> llt_;
  std::function<Vector(const Vector&)> op_;
  double solve_tol_ = 1e-12;
};

inline Vector spd_solve_cg(const SpdForm& form, const Vector& rhs, double tol = 1e-12,
                           int max_iter = 10000) {
  return spd_solve_cg([&form](const Vector& x) { return form.apply(x); }, rhs, tol, max_iter);
}

}  // namespace tpd
