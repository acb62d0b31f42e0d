#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <utility>

#include "tpd/errors.hpp"
#include "tpd/rng.hpp"

namespace tpd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline void require_dim(const Vector& v, Index dim, const char* what) {
  if (v.size() != dim) {
    throw DimensionMismatch(std::string(what) + ": got dimension " + std::to_string(v.size()) +
                            ", expected " + std::to_string(dim));
  }
}

/// A (possibly matrix-free) linear operator B : R^m -> R^n together with its
/// adjoint. Instances built from a dense matrix keep the dense view around so
/// small problems can be checked exactly.
class LinearMap {
public:
  using ApplyFn = std::function<Vector(const Vector&)>;

  LinearMap(Index rows, Index cols, ApplyFn apply, ApplyFn adjoint,
            std::optional<Matrix> dense = std::nullopt)
      : rows_(rows), cols_(cols), apply_(std::move(apply)), adjoint_(std::move(adjoint)),
        dense_(std::move(dense)) {
    if (rows_ > cols_) throw RankError("LinearMap: more rows than columns (n <= m required)");
  }

  /// Wraps a dense matrix; asserts full row rank.
  static LinearMap from_dense(Matrix B) {
    const Index n = B.rows(), m = B.cols();
    Eigen::ColPivHouseholderQR<Matrix> qr(B);
    if (qr.rank() < n) throw RankError("LinearMap: matrix is not full row rank");
    Matrix held = B;
    return LinearMap(
        n, m, [held](const Vector& x) { return Vector(held * x); },
        [held](const Vector& y) { return Vector(held.transpose() * y); }, std::move(B));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Vector apply(const Vector& x) const {
    require_dim(x, cols_, "LinearMap::apply");
    return apply_(x);
  }

  Vector adjoint_apply(const Vector& y) const {
    require_dim(y, rows_, "LinearMap::adjoint_apply");
    return adjoint_(y);
  }

  bool has_dense() const { return dense_.has_value(); }
  const Matrix& dense() const {
    if (!dense_) throw NotAvailable("LinearMap: no dense view");
    return *dense_;
  }

private:
  Index rows_, cols_;
  ApplyFn apply_, adjoint_;
  std::optional<Matrix> dense_;
};

/// Samples |<Bx,y> - <x,B^T y>| over random pairs; returns the worst relative
/// defect. Used by tests to enforce adjoint consistency.
inline double adjoint_defect(const LinearMap& B, Rng& rng, int pairs = 100) {
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const Vector x = rng.uniform_vector(B.cols(), -10.0, 10.0);
    const Vector y = rng.uniform_vector(B.rows(), -10.0, 10.0);
    const double lhs = B.apply(x).dot(y);
    const double rhs = x.dot(B.adjoint_apply(y));
    worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
  }
  return worst;
}

}  // namespace tpd
