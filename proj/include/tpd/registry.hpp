#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tpd/problem.hpp"
#include "tpd/rng.hpp"
#include "tpd/verify.hpp"

namespace tpd {

/// Random strongly convex quadratic with an affine constraint. Eigenvalues of
/// the Hessian are geometrically spread over [1, kappa]; the saddle comes
/// from a dense KKT solve.
inline SaddleProblem make_random_quadratic_saddle(std::uint64_t seed, Index m, Index n,
                                                  double kappa) {
  Rng rng(seed);
  Matrix Q = rng.gaussian_matrix(m, m);
  Q = Eigen::HouseholderQR<Matrix>(Q).householderQ();
  Vector eigs(m);
  for (Index i = 0; i < m; ++i)
    eigs[i] = (m == 1) ? 1.0 : std::pow(kappa, static_cast<double>(i) / (m - 1));
  Matrix F = Q * eigs.asDiagonal() * Q.transpose();
  F = (F + F.transpose()) / 2.0;
  const Vector a = rng.gaussian_vector(m);
  Matrix Bd;
  for (;;) {
    Bd = rng.gaussian_matrix(n, m);
    Eigen::JacobiSVD<Matrix> svd(Bd);
    if (svd.singularValues().minCoeff() > 0.1) break;
  }
  const Vector b = Bd * rng.gaussian_vector(m);
  SaddleProblem prob(ConvexOracle::quadratic(F, a), ConvexOracle::affine(b),
                     LinearMap::from_dense(Bd));
  return with_reference(std::move(prob));
}

/// Rank-deficient f (mu_f = 0) whose restriction to ker B is strongly convex:
/// mu_{f_B} > 0 while no full-space convexity is available.
inline SaddleProblem make_affine_constrained_quadratic(std::uint64_t seed, Index m, Index n,
                                                       Index deficiency) {
  Rng rng(seed + 17);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix Q = rng.gaussian_matrix(m, m);
    Q = Eigen::HouseholderQR<Matrix>(Q).householderQ();
    Vector eigs(m);
    for (Index i = 0; i < m; ++i) eigs[i] = (i < deficiency) ? 0.0 : rng.uniform(0.5, 2.0);
    Matrix F = Q * eigs.asDiagonal() * Q.transpose();
    F = (F + F.transpose()) / 2.0;
    Matrix Bd = rng.gaussian_matrix(n, m);
    Eigen::JacobiSVD<Matrix> svd(Bd);
    if (svd.singularValues().minCoeff() < 0.3) continue;
    const Matrix HfB = F + Bd.transpose() * Bd;
    const double mu_fB =
        Eigen::SelfAdjointEigenSolver<Matrix>(HfB, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (mu_fB < 0.05) continue;
    const Vector a = rng.gaussian_vector(m);
    const Vector b = Bd * rng.gaussian_vector(m);
    SaddleProblem prob(ConvexOracle::quadratic(F, a), ConvexOracle::affine(b),
                       LinearMap::from_dense(Bd));
    return with_reference(std::move(prob));
  }
  throw ReferenceFailed("make_affine_constrained_quadratic: no admissible instance found");
}

inline SaddleProblem make_logsumexp_constrained(std::uint64_t seed, Index m, Index n, double rho) {
  Rng rng(seed + 23);
  Matrix Bd;
  for (;;) {
    Bd = rng.gaussian_matrix(n, m);
    Eigen::JacobiSVD<Matrix> svd(Bd);
    if (svd.singularValues().minCoeff() > 0.3) break;
  }
  const Vector b = Bd * (0.3 * rng.gaussian_vector(m));
  SaddleProblem prob(ConvexOracle::logsumexp_ridge(m, rho), ConvexOracle::affine(b),
                     LinearMap::from_dense(Bd));
  return with_reference(std::move(prob), 1e-12);
}

struct ProblemRegistryEntry {
  std::string name;
  std::function<SaddleProblem()> make;
  bool known_saddle;
  std::vector<std::string> tags;
  Vector default_u0;
  Vector default_p0;
};

/// The benchmark problems. Names are unique; every entry carries a reference
/// saddle (exact KKT where available).
inline const std::vector<ProblemRegistryEntry>& problem_registry() {
  static const std::vector<ProblemRegistryEntry> entries = [] {
    std::vector<ProblemRegistryEntry> v;

    // Scalar L(u,p) = u^2/2 + u p: the minimal strongly-convex-in-u model.
    v.push_back({"fig1-toy",
                 [] {
                   SaddleProblem prob(
                       ConvexOracle::quadratic(Matrix::Identity(1, 1), Vector::Zero(1)),
                       ConvexOracle::affine(Vector::Zero(1)),
                       LinearMap::from_dense(Matrix::Identity(1, 1)));
                   prob.saddle = SaddlePoint{Vector::Zero(1), Vector::Zero(1)};
                   return prob;
                 },
                 true,
                 {"toy", "quadratic", "strongly-convex"},
                 Vector::Ones(1),
                 Vector::Ones(1)});

    // min u1^2/2 - u2 subject to u1 = u2: convex but not strongly convex;
    // strongly convex on ker B. Saddle ((1,1), -1).
    v.push_back({"eq1.13",
                 [] {
                   Matrix F(2, 2);
                   F << 1, 0, 0, 0;
                   Vector a(2);
                   a << 0, -1;
                   Matrix Bd(1, 2);
                   Bd << 1, -1;
                   SaddleProblem prob(ConvexOracle::quadratic(F, a),
                                      ConvexOracle::affine(Vector::Zero(1)),
                                      LinearMap::from_dense(Bd));
                   Vector us(2);
                   us << 1, 1;
                   Vector ps(1);
                   ps << -1;
                   prob.saddle = SaddlePoint{us, ps};
                   return prob;
                 },
                 true,
                 {"quadratic", "kerB-convex"},
                 Vector::Zero(2),
                 Vector::Zero(1)});

    v.push_back({"random-quadratic-saddle",
                 [] { return make_random_quadratic_saddle(42, 8, 4, 10.0); },
                 true,
                 {"quadratic", "strongly-convex", "random"},
                 Vector::Zero(8),
                 Vector::Zero(4)});

    v.push_back({"random-quadratic-kappa100",
                 [] { return make_random_quadratic_saddle(7, 8, 4, 100.0); },
                 true,
                 {"quadratic", "strongly-convex", "random", "ill-conditioned"},
                 Vector::Zero(8),
                 Vector::Zero(4)});

    v.push_back({"affine-constrained-quadratic",
                 [] { return make_affine_constrained_quadratic(42, 6, 3, 2); },
                 true,
                 {"quadratic", "kerB-convex", "random"},
                 Vector::Zero(6),
                 Vector::Zero(3)});

    v.push_back({"logsumexp-constrained",
                 [] { return make_logsumexp_constrained(42, 4, 2, 0.5); },
                 false,
                 {"nonquadratic", "strongly-convex"},
                 Vector::Zero(4),
                 Vector::Zero(2)});
    return v;
  }();
  return entries;
}

inline const ProblemRegistryEntry& registry_entry(const std::string& name) {
  for (const auto& e : problem_registry())
    if (e.name == name) return e;
  throw ConfigError("unknown problem '" + name + "'");
}

inline SaddleProblem make_problem(const std::string& name) { return registry_entry(name).make(); }

// ---------------------------------------------------------------------------
// canonical SPD forms per problem
// ---------------------------------------------------------------------------

struct TpdForms {
  SpdForm IV;
  SpdForm IQ;
};

/// The standard plain-flow pair: I_V = L_f I (so L_{f,IV} <= 1) and
/// I_Q = B I_V^{-1} B^T (so the regularized dual function has unit constants).
inline TpdForms make_tpd_forms(const SaddleProblem& prob) {
  const double L_f = prob.f.constants().L;
  SpdForm IV = SpdForm::scaled_identity(prob.m(), std::max(L_f, 1e-12));
  if (!prob.B.has_dense()) throw NotAvailable("make_tpd_forms: needs a dense view of B");
  Matrix S = prob.B.dense() * prob.B.dense().transpose() / std::max(L_f, 1e-12);
  return {std::move(IV), SpdForm::from_dense(std::move(S))};
}

struct StpdForms {
  SpdForm TU;
  SpdForm TP;
  SpdForm IV;
  SpdForm IQ;
};

/// The preconditioned symmetric pair: T_U = L_f I, T_P^{-1} = beta I,
/// I_V = Hessian of f_B (quadratic f), I_Q = B T_U^{-1} B^T.
inline StpdForms make_stpd_forms(const SaddleProblem& prob, double beta) {
  const double L_f = std::max(prob.f.constants().L, 1e-12);
  SpdForm TU = SpdForm::scaled_identity(prob.m(), L_f);
  SpdForm TP = SpdForm::scaled_identity(prob.n(), 1.0 / beta);
  if (!prob.B.has_dense() || !prob.f.has_hessian())
    throw NotAvailable("make_stpd_forms: needs dense views at desk scale");
  const Matrix BtB = prob.B.dense().transpose() * prob.B.dense();
  const Matrix HfB = prob.f.hessian(Vector::Zero(prob.m())) + beta * BtB;
  SpdForm IV = SpdForm::from_dense(HfB);
  SpdForm IQ = SpdForm::from_dense(Matrix(prob.B.dense() * prob.B.dense().transpose() / L_f));
  return {std::move(TU), std::move(TP), std::move(IV), std::move(IQ)};
}

}  // namespace tpd
