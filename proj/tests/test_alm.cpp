#include <catch2/catch_amalgamated.hpp>

#include "tpd/tpd.hpp"

using namespace tpd;

namespace {

Vector vec1(double x) {
  Vector v(1);
  v << x;
  return v;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("augmenting the Lagrangian") {
  const SaddleProblem prob = make_problem("eq1.13");
  SECTION("gradient of f_beta at the origin") {
    const AugmentedProblem ap = augment(prob, 10.0);
    const Vector g = ap.augmented.f.gradient(vec2(0, 0));
    CHECK(g[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(g[1] == Catch::Approx(-1.0).margin(1e-15));
  }
  SECTION("critical points are independent of beta") {
    for (double beta : {0.0, 1.0, 10.0}) {
      const AugmentedProblem ap = augment(prob, beta);
      const LagrangianEval ev =
          lagrangian_eval(ap.augmented, prob.saddle->u, prob.saddle->p);
      INFO("beta = " << beta);
      CHECK(ev.grad_u.norm() <= 1e-12);
      CHECK(ev.grad_p.norm() <= 1e-12);
    }
  }
  SECTION("beta = 0 returns the base objective exactly") {
    const AugmentedProblem ap = augment(prob, 0.0);
    Rng rng(8);
    for (int i = 0; i < 10; ++i) {
      const Vector u = rng.gaussian_vector(2);
      CHECK(ap.augmented.f.value(u) == prob.f.value(u));
      CHECK((ap.augmented.f.gradient(u) - prob.f.gradient(u)).norm() == 0.0);
    }
  }
  SECTION("non-affine h is rejected") {
    SaddleProblem quad_h(prob.f,
                         ConvexOracle::quadratic(Matrix::Identity(1, 1), Vector::Zero(1)),
                         prob.B);
    REQUIRE_THROWS_AS(augment(quad_h, 1.0), NotApplicable);
  }
}

TEST_CASE("schur analysis of the penalized metric") {
  SECTION("worked instance") {
    Matrix A(2, 2);
    A << 1, 0, 0, 4;
    Matrix Bd(1, 2);
    Bd << 1, 1;
    const SchurReport rep = schur_analysis(A, LinearMap::from_dense(Bd), 2.0);
    CHECK(rep.mu_S0 == Catch::Approx(1.25).margin(1e-12));
    REQUIRE(rep.sbeta_eigs.size() == 1);
    CHECK(rep.sbeta_eigs[0] == Catch::Approx(5.0 / 14.0).margin(1e-12));
    CHECK(rep.bracket_lo == Catch::Approx(1.25 / 3.5).margin(1e-12));
    CHECK(rep.bracket_hi == Catch::Approx(0.5).margin(1e-12));
    CHECK(rep.map_defect <= 1e-12);
  }
  SECTION("kappa bound reaches 2 at beta = 1/mu_S0") {
    const SchurReport rep =
        schur_analysis(Matrix::Identity(2, 2), LinearMap::from_dense(Matrix::Identity(2, 2)),
                       1.0);
    CHECK(rep.sbeta_eigs[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(rep.sbeta_eigs[1] == Catch::Approx(0.5).margin(1e-12));
    CHECK(rep.kappa == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.kappa <= rep.kappa_bound + 1e-12);
    CHECK(rep.kappa_bound == Catch::Approx(2.0).margin(1e-12));
  }
  SECTION("small beta recovers the unpenalized spectrum") {
    Rng rng(12);
    Matrix G = rng.gaussian_matrix(4, 4);
    const Matrix A = G * G.transpose() + Matrix::Identity(4, 4);
    const LinearMap B = LinearMap::from_dense(rng.gaussian_matrix(2, 4));
    const SchurReport rep = schur_analysis(A, B, 1e-8);
    for (std::size_t i = 0; i < rep.sbeta_eigs.size(); ++i)
      CHECK(std::abs(rep.sbeta_eigs[i] - rep.s0_eigs[i]) <= 1e-6);
  }
  SECTION("text report carries the fields") {
    const SchurReport rep =
        schur_analysis(Matrix::Identity(2, 2), LinearMap::from_dense(Matrix::Identity(2, 2)),
                       1.0);
    const std::string text = rep.to_text();
    CHECK(text.find("mu_S0:") != std::string::npos);
    CHECK(text.find("kappa_bound:") != std::string::npos);
  }
}

TEST_CASE("spectrum map property over random instances") {
  const SuiteReport rep = run_suite("prop6.2-spectrum", 1000, 2025);
  INFO(rep.to_text());
  REQUIRE(rep.pass);
}

TEST_CASE("strong convexity equivalence of the two regularizations") {
  const SaddleProblem prob = make_problem("eq1.13");
  const FBetaReport rep = check_fB_fbeta_equivalence(prob, 1.0);
  CHECK(rep.mu_fB == Catch::Approx((3.0 - std::sqrt(5.0)) / 2.0).margin(1e-12));
  CHECK(rep.mu_fbeta > 0.0);
  CHECK(rep.sign_match);
  CHECK(rep.ordering_ok);

  const SaddleProblem strong = make_problem("random-quadratic-saddle");
  const FBetaReport rep2 = check_fB_fbeta_equivalence(strong, 0.5);
  CHECK(rep2.mu_fB > 0.0);
  CHECK(rep2.mu_fbeta > 0.0);
  CHECK(rep2.sign_match);
}

TEST_CASE("sign equivalence over random rank-deficient instances") {
  const SuiteReport rep = run_suite("lemma6.1-signs", 1000, 77);
  INFO(rep.to_text());
  REQUIRE(rep.pass);
}

TEST_CASE("penalty iterations match the generic schemes on the augmented problem") {
  const SaddleProblem prob = make_problem("eq1.13");
  const double beta = 4.0;
  const AugmentedProblem ap = augment(prob, beta);
  const SpdForm IV = SpdForm::a_beta(Matrix::Identity(2, 2), prob.B, beta);
  const SpdForm IQ = SpdForm::scaled_identity(1, 1.0 / beta);
  const double alpha = 0.05;

  SECTION("explicit variant") {
    IterateState a = make_state(ap.augmented, vec2(0.3, -0.2), vec1(0.4), 0, IV, IQ);
    IterateState b = a;
    for (int k = 0; k < 20; ++k) {
      a = alm_step_explicit(ap, IV, a, alpha).state;
      b = step_explicit(ap.augmented, IV, IQ, b, alpha).state;
      REQUIRE((a.u - b.u).norm() <= 1e-12 * (1.0 + b.u.norm()));
      REQUIRE((a.p - b.p).norm() <= 1e-12 * (1.0 + b.p.norm()));
    }
  }
  SECTION("half-implicit variant") {
    IterateState a = make_state(ap.augmented, vec2(0.3, -0.2), vec1(0.4), 0, IV, IQ);
    IterateState b = a;
    for (int k = 0; k < 20; ++k) {
      a = alm_step_imex(ap, IV, a, alpha).state;
      b = step_imex(ap.augmented, IV, IQ, b, alpha).state;
      REQUIRE((a.u - b.u).norm() <= 1e-12 * (1.0 + b.u.norm()));
      REQUIRE((a.p - b.p).norm() <= 1e-12 * (1.0 + b.p.norm()));
    }
  }
}

TEST_CASE("penalty iterations fix the saddle") {
  const SaddleProblem prob = make_problem("eq1.13");
  const AugmentedProblem ap = augment(prob, 4.0);
  const SpdForm IV = SpdForm::a_beta(Matrix::Identity(2, 2), prob.B, 4.0);
  const SpdForm IQ = SpdForm::scaled_identity(1, 0.25);
  const IterateState st = make_state(ap.augmented, prob.saddle->u, prob.saddle->p, 0, IV, IQ);
  for (double alpha : {0.05, 0.5}) {
    CHECK((alm_step_explicit(ap, IV, st, alpha).state.u - st.u).norm() <= 1e-12);
    CHECK((alm_step_imex(ap, IV, st, alpha).state.u - st.u).norm() <= 1e-12);
    const StepResult uf = alm_step_imex_ufirst(ap, IV, st, alpha);
    CHECK((uf.state.u - st.u).norm() <= 1e-12);
    CHECK((uf.state.p - st.p).norm() <= 1e-12);
  }
}

TEST_CASE("explicit penalty run on eq1.13 contracts and converges") {
  const SaddleProblem prob = make_problem("eq1.13");
  const double beta = 4.0;
  const AugmentedProblem ap = augment(prob, beta);
  const SpdForm IV = SpdForm::a_beta(Matrix::Identity(2, 2), prob.B, beta);

  AlmRateInputs in;
  {
    const Matrix A1 = Matrix::Identity(2, 2) + prob.B.dense().transpose() * prob.B.dense();
    const Matrix HfB = prob.f.hessian(Vector::Zero(2)) + prob.B.dense().transpose() * prob.B.dense();
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(HfB, A1, Eigen::EigenvaluesOnly);
    in.mu_fB_A1 = es.eigenvalues().minCoeff();
    in.mu_S0 = schur_analysis(Matrix::Identity(2, 2), prob.B, 1.0).mu_S0;
    in.beta = beta;
    in.lam_min = in.lam_max = 1.0;  // exact A_beta solve
  }
  const AlmRate rate = predict_rate_alm(in);

  IterateState st = make_state(ap.augmented, vec2(0, 0), vec1(0), 0, IV,
                               SpdForm::scaled_identity(1, 1.0 / beta));
  const double E0 = st.E;
  double prev = st.E;
  // The theorem step size is conservative: the observed factor ~0.959 beats
  // rho = 1 - mu^2/16 ~ 0.9931 but needs ~450 steps for an 1e-8 reduction.
  for (int k = 0; k < 500; ++k) {
    st = alm_step_explicit(ap, IV, st, rate.alpha).state;
    REQUIRE(st.E <= rate.rho_explicit * prev + 1e-12);
    REQUIRE(st.E <= prev * (1.0 + 1e-12));  // monotone decay
    prev = st.E;
  }
  CHECK(st.E <= 1e-8 * E0);
}

TEST_CASE("u-first variant converges on eq1.13") {
  const SaddleProblem prob = make_problem("eq1.13");
  const double beta = 4.0;
  const AugmentedProblem ap = augment(prob, beta);
  const SpdForm IV = SpdForm::a_beta(Matrix::Identity(2, 2), prob.B, beta);
  IterateState st = make_state(ap.augmented, vec2(0, 0), vec1(0), 0, IV,
                               SpdForm::scaled_identity(1, 1.0 / beta));
  const double E0 = st.E;
  // This variant trades the warm dual update for a plain one and converges
  // more slowly; at alpha = 1 it reaches ~8e-4 E0 in 300 steps.
  for (int k = 0; k < 300; ++k) st = alm_step_imex_ufirst(ap, IV, st, 1.0).state;
  CHECK(st.E <= 1e-2 * E0);
}

TEST_CASE("rate prediction closed forms") {
  SECTION("worked substitution") {
    AlmRateInputs in;
    in.mu_fB_A1 = 0.5;
    in.mu_S0 = 4.0;
    in.beta = 1.0;  // beta*mu_S0 = 4
    in.lam_min = in.lam_max = 1.0;
    const AlmRate rate = predict_rate_alm(in);
    CHECK(rate.mu_V == Catch::Approx(0.5).margin(1e-15));
    CHECK(rate.mu_Q == Catch::Approx(0.8).margin(1e-15));
    CHECK(rate.mu == Catch::Approx(0.5).margin(1e-15));
    CHECK(rate.rho_explicit == Catch::Approx(1.0 - 0.25 / 16.0).margin(1e-15));
    CHECK(rate.rho_explicit == Catch::Approx(0.984375).margin(1e-15));
  }
  SECTION("large-beta limit of mu_Q") {
    AlmRateInputs in;
    in.mu_fB_A1 = 0.5;
    in.mu_S0 = 1.0;
    in.beta = 1e12;
    in.lam_min = 0.9;
    in.lam_max = 1.0;
    CHECK(predict_rate_alm(in).mu_Q == Catch::Approx(0.9).epsilon(1e-9));
  }
  SECTION("beta mu_S0 = 1 halves mu_Q") {
    AlmRateInputs in;
    in.mu_fB_A1 = 10.0;
    in.mu_S0 = 1.0;
    in.beta = 1.0;
    in.lam_min = 0.7;
    in.lam_max = 1.0;
    CHECK(predict_rate_alm(in).mu_Q == Catch::Approx(0.35).margin(1e-15));
  }
  SECTION("missing certificate") {
    AlmRateInputs in;
    in.mu_fB_A1 = 0.5;
    in.mu_S0 = 1.0;
    in.beta = 1.0;
    in.lam_min = 1.0;
    in.lam_max = 1.5;  // not certified
    REQUIRE_THROWS_AS(predict_rate_alm(in), MissingConstants);
  }
}

TEST_CASE("default penalty policy rounds up to a power of two") {
  CHECK(default_beta(2.0) == Catch::Approx(0.5));
  CHECK(default_beta(0.3) == Catch::Approx(4.0));
  CHECK(default_beta(1.0) == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(default_beta(0.0), RankError);
}

TEST_CASE("preset registry") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  SECTION("row: explicit with scaled identity") {
    const AlmPreset p = preset_table2("TPD-Explicit 1", prob);
    CHECK(p.kind == SchemeKind::ExplicitTpd);
    CHECK(p.IV.is_scaled_identity());
    CHECK(p.IV.scale() == Catch::Approx(prob.f.constants().L));
    // I_Q^{-1} = L_f (B B^T)^{-1}
    const Matrix expected = prob.B.dense() * prob.B.dense().transpose() / prob.f.constants().L;
    CHECK(p.IQ.dense_view().isApprox(expected, 1e-12));
    CHECK(p.rate_class == "1-1/kappa^2(f)");
  }
  SECTION("row: penalized half-implicit") {
    const AlmPreset p = preset_table2("TPD-ALM-IMEX", prob, 2.0);
    CHECK(p.kind == SchemeKind::ImexTpd);
    CHECK(p.uses_beta);
    CHECK(p.IQ.is_scaled_identity());
    CHECK(p.IQ.scale() == Catch::Approx(0.5));
    const Matrix expected = prob.f.hessian(Vector::Zero(prob.m())) +
                            2.0 * prob.B.dense().transpose() * prob.B.dense();
    CHECK(p.IV.dense_view().isApprox(expected, 1e-12));
  }
  SECTION("row: prox-based half-implicit uses the native prox") {
    const SaddleProblem toy = make_problem("fig1-toy");
    const AlmPreset p = preset_table2("TPD-IMEX 1", toy);
    const IterateState st = make_state(toy, vec1(1), vec1(1), 0, p.IV, p.IQ);
    const double alpha = 0.5;
    const StepResult res = step_imex(toy, p.IV, p.IQ, st, alpha);
    // manual route: u_{k+1} = prox_{f, alpha/L_f}(u_k - (alpha/L_f) B^T p_{k+1})
    const Vector u_half = st.u - p.IV.solve(toy.f.gradient(st.u) + toy.B.adjoint_apply(st.p));
    const Vector p_new =
        st.p - alpha * p.IQ.solve(toy.h.gradient(st.p) - toy.B.apply(u_half));
    const Vector w = st.u - (alpha / 1.0) * toy.B.adjoint_apply(p_new);
    const Vector u_manual = toy.f.prox(alpha / 1.0, w);
    CHECK((res.state.u - u_manual).norm() <= 1e-14);
  }
  SECTION("all seven rows build on a quadratic problem") {
    for (const std::string& name : preset_table2_names()) {
      INFO(name);
      REQUIRE_NOTHROW(preset_table2(name, prob, 2.0));
    }
  }
  SECTION("unknown names are rejected") {
    REQUIRE_THROWS_AS(preset_table2("TPD-Consensus", prob), UnknownPreset);
  }
}

TEST_CASE("symmetric flow on the Lagrangian vs plain flow on the augmented one") {
  // With T_P^{-1} = beta I and affine h the primal components coincide
  // identically; the dual components share the formula but differ in the
  // descent point they use.
  const SaddleProblem prob = make_problem("eq1.13");
  const double beta = 3.0;
  const AugmentedProblem ap = augment(prob, beta);
  const SpdForm IV = SpdForm::a_beta(Matrix::Identity(2, 2), prob.B, beta);
  const SpdForm IQ = SpdForm::scaled_identity(1, 1.0 / beta);
  const SpdForm TP = SpdForm::scaled_identity(1, 1.0 / beta);
  Rng rng(404);
  for (int s = 0; s < 30; ++s) {
    const Vector u = rng.uniform_vector(2, -10, 10);
    const Vector p = rng.uniform_vector(1, -10, 10);
    const auto stpd = stpd_field(prob, IV, TP, IV, IQ, u, p);  // T_U = I_V
    const auto tpd = tpd_field(ap.augmented, IV, IQ, u, p);
    REQUIRE((stpd.first - tpd.first).norm() <= 1e-12 * (1.0 + tpd.first.norm()));
  }
  // dual updates agree exactly when evaluated at the same intermediate point
  const Vector u = vec2(0.4, -0.7), p = vec1(0.2);
  const Vector u_half = vec2(0.1, 0.3);
  const double alpha = 0.05;
  const Vector pd_a = p - alpha * beta * (prob.b() - prob.B.apply(u_half));
  const Vector pd_b = p - alpha * IQ.solve(ap.augmented.h.gradient(p) - prob.B.apply(u_half));
  CHECK((pd_a - pd_b).norm() <= 1e-14);
  // and at feasible points (Bu = b) the dual components coincide too
  for (int s = 0; s < 30; ++s) {
    const double t = rng.uniform(-5, 5);
    const Vector uf = vec2(t, t);  // ker B direction, b = 0
    const Vector pf = rng.uniform_vector(1, -10, 10);
    const auto stpd = stpd_field(prob, IV, TP, IV, IQ, uf, pf);
    const auto tpd = tpd_field(ap.augmented, IV, IQ, uf, pf);
    REQUIRE((stpd.second - tpd.second).norm() <= 1e-12 * (1.0 + tpd.second.norm()));
  }
}

TEST_CASE("schur analysis rejects a non-SPD base matrix") {
  Matrix A(2, 2);
  A << 1, 0, 0, -1;
  Matrix Bd(1, 2);
  Bd << 1, 1;
  REQUIRE_THROWS_AS(schur_analysis(A, LinearMap::from_dense(Bd), 1.0), RankError);
}

TEST_CASE("schur report exposes the preconditioned extremes") {
  Matrix A(2, 2);
  A << 1, 0, 0, 4;
  Matrix Bd(1, 2);
  Bd << 1, 1;
  const SchurReport rep = schur_analysis(A, LinearMap::from_dense(Bd), 2.0);
  // I_Q^{-1} = beta I by default: L_S^2 = beta * 5/14
  CHECK(rep.LS2 == Catch::Approx(2.0 * 5.0 / 14.0).margin(1e-12));
  CHECK(rep.mu_S == Catch::Approx(rep.LS2).margin(1e-12));  // n = 1
}

TEST_CASE("certificate for lambda(I_V^{-1} A_beta)") {
  const SaddleProblem prob = make_problem("eq1.13");
  const Matrix A = Matrix::Identity(2, 2);
  const double beta = 4.0;
  SECTION("exact solve certifies exactly one") {
    const SpdForm IV = SpdForm::a_beta(A, prob.B, beta);
    const auto [lo, hi] = iv_abeta_certificate(IV, A, prob.B, beta);
    CHECK(lo == Catch::Approx(1.0).margin(1e-12));
    CHECK(hi == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("a scaled-up metric certifies lambda_max below one") {
    const Matrix Abeta = A + beta * prob.B.dense().transpose() * prob.B.dense();
    const SpdForm IV = SpdForm::from_dense(Matrix(2.0 * Abeta));
    const auto [lo, hi] = iv_abeta_certificate(IV, A, prob.B, beta);
    CHECK(hi == Catch::Approx(0.5).margin(1e-12));
    CHECK(lo == Catch::Approx(0.5).margin(1e-12));
    AlmRateInputs in;
    in.mu_fB_A1 = 0.5;
    in.mu_S0 = 2.0;
    in.beta = beta;
    in.lam_min = lo;
    in.lam_max = hi;
    CHECK(predict_rate_alm(in).mu_V == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("A-preconditioned preset rows use the Schur matrix as the dual metric") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const AlmPreset p = preset_table2("TPD-IMEX 2", prob);
  const Matrix A = prob.f.hessian(Vector::Zero(prob.m()));
  const Matrix S = prob.B.dense() * A.llt().solve(Matrix(prob.B.dense().transpose()));
  REQUIRE(p.IQ.dense_view().isApprox(S, 1e-12));
  // With the exact Hessian metric the sheet collapses to unit constants and
  // the half-implicit prediction is 0.8.
  const ConstantsSheet sheet = compute_sheet_tpd(prob, p.IV, p.IQ);
  CHECK(sheet.mu_V == Catch::Approx(1.0).margin(1e-10));
  CHECK(sheet.mu_Q == Catch::Approx(1.0).margin(1e-10));
  CHECK(sheet.LSQ2 == Catch::Approx(1.0).margin(1e-10));
  const double alpha = select_step_size(sheet, SchemeKind::ImexTpd);
  CHECK(predict_rate(sheet, SchemeKind::ImexTpd, alpha).rho ==
        Catch::Approx(0.8).margin(1e-9));
}
