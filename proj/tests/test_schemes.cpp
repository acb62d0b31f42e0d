#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "tpd/tpd.hpp"

using namespace tpd;

namespace {

Vector vec1(double x) {
  Vector v(1);
  v << x;
  return v;
}

IterateState state_of(const SaddleProblem& prob, const Vector& u, const Vector& p,
                      const SpdForm& IV, const SpdForm& IQ) {
  return make_state(prob, u, p, 0, IV, IQ);
}

// Raw forward-Euler reference: x_{k+1} = x_k + alpha G(x_k).
std::pair<Vector, Vector> euler_reference(
    const std::function<std::pair<Vector, Vector>(const Vector&, const Vector&)>& field,
    const Vector& u, const Vector& p, double alpha) {
  const auto [Gu, Gp] = field(u, p);
  return {u + alpha * Gu, p + alpha * Gp};
}

}  // namespace

TEST_CASE("explicit step on the toy, hand-derived") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const SpdForm I1 = SpdForm::identity(1);
  const IterateState st = state_of(prob, vec1(1), vec1(1), I1, I1);
  const StepResult res = step_explicit(prob, I1, I1, st, 0.25);
  CHECK(res.state.u[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(res.state.p[0] == Catch::Approx(0.75).margin(1e-15));
  CHECK(res.state.E == Catch::Approx(0.40625).margin(1e-15));
}

TEST_CASE("explicit step with alpha = 1 is the inexact Uzawa update") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const SpdForm I1 = SpdForm::identity(1);
  const IterateState st = state_of(prob, vec1(0.7), vec1(-0.3), I1, I1);
  const Vector u_half =
      st.u - I1.solve(prob.f.gradient(st.u) + prob.B.adjoint_apply(st.p));
  const StepResult res = step_explicit(prob, I1, I1, st, 1.0);
  CHECK((res.state.u - u_half).norm() == 0.0);
}

TEST_CASE("explicit step equals raw Euler on the transformed field") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const TpdForms f = make_tpd_forms(prob);
  Rng rng(1001);
  IterateState st = state_of(prob, rng.uniform_vector(prob.m(), -5, 5),
                             rng.uniform_vector(prob.n(), -5, 5), f.IV, f.IQ);
  const double alpha = 0.17;
  for (int k = 0; k < 20; ++k) {
    const auto [u_ref, p_ref] = euler_reference(
        [&](const Vector& u, const Vector& p) { return tpd_field(prob, f.IV, f.IQ, u, p); },
        st.u, st.p, alpha);
    st = step_explicit(prob, f.IV, f.IQ, st, alpha).state;
    REQUIRE((st.u - u_ref).norm() <= 1e-12 * (1.0 + u_ref.norm()));
    REQUIRE((st.p - p_ref).norm() <= 1e-12 * (1.0 + p_ref.norm()));
  }
}

TEST_CASE("half-implicit step on the toy, hand-derived") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const SpdForm I1 = SpdForm::identity(1);
  const IterateState st = state_of(prob, vec1(1), vec1(1), I1, I1);
  const StepResult res = step_imex(prob, I1, I1, st, 0.5);
  CHECK(res.state.u[0] == Catch::Approx(0.5).margin(1e-14));
  CHECK(res.state.p[0] == Catch::Approx(0.5).margin(1e-14));
  CHECK(res.state.E == Catch::Approx(0.25).margin(1e-14));
  // factor 0.25 is below the predicted 0.8
  const TpdForms f = make_tpd_forms(prob);
  const ConstantsSheet sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  const ConvergencePrediction pred = predict_rate(sheet, SchemeKind::ImexTpd, 0.5);
  CHECK(pred.rho == Catch::Approx(0.8).margin(1e-14));
  CHECK(res.state.E / 1.0 <= pred.rho);
}

TEST_CASE("scalar prox example") {
  const ConvexOracle f = ConvexOracle::quadratic(Matrix::Identity(1, 1), Vector::Zero(1));
  CHECK(f.prox(1.0, vec1(1.0))[0] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("half-implicit step equals the p-explicit/u-implicit splitting") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const TpdForms f = make_tpd_forms(prob);
  Rng rng(1002);
  IterateState st = state_of(prob, rng.uniform_vector(prob.m(), -5, 5),
                             rng.uniform_vector(prob.n(), -5, 5), f.IV, f.IQ);
  const double alpha = 0.4;
  for (int k = 0; k < 20; ++k) {
    // reference: p_{k+1} = p_k + alpha G^p(u_k, p_k), then the linear
    // stationarity system (F + IV/alpha) u = IV u_k / alpha - a - B^T p_{k+1}
    const auto [Gu, Gp] = tpd_field(prob, f.IV, f.IQ, st.u, st.p);
    const Vector p_ref = st.p + alpha * Gp;
    const Matrix M = prob.f.quadratic_matrix() + f.IV.dense_view() / alpha;
    const Vector rhs = f.IV.apply(st.u) / alpha - prob.f.quadratic_linear() -
                       prob.B.adjoint_apply(p_ref);
    const Vector u_ref = M.llt().solve(rhs);
    st = step_imex(prob, f.IV, f.IQ, st, alpha).state;
    REQUIRE((st.p - p_ref).norm() <= 1e-12 * (1.0 + p_ref.norm()));
    REQUIRE((st.u - u_ref).norm() <= 1e-10 * (1.0 + u_ref.norm()));
    (void)Gu;
  }
}

TEST_CASE("implicit step on the toy solves the coupled linear system") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const SpdForm I1 = SpdForm::identity(1);
  const IterateState st = state_of(prob, vec1(1), vec1(1), I1, I1);
  const StepResult res = step_implicit(prob, I1, I1, st, 1.0);
  // independent dense oracle: [[2,1],[0,2]] x = (1,1)
  Matrix K(2, 2);
  K << 2, 1, 0, 2;
  Vector rhs(2);
  rhs << 1, 1;
  const Vector x = K.fullPivLu().solve(rhs);
  REQUIRE(x[0] == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(x[1] == Catch::Approx(0.5).margin(1e-15));
  CHECK(res.state.u[0] == Catch::Approx(x[0]).margin(1e-12));
  CHECK(res.state.p[0] == Catch::Approx(x[1]).margin(1e-12));
  CHECK(res.state.E == Catch::Approx(0.15625).margin(1e-12));
  CHECK(res.state.E <= 0.5 * lyapunov(st.u, st.p, *prob.saddle, I1, I1));
}

TEST_CASE("implicit step reduces to the explicit one as alpha -> 0") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const TpdForms f = make_tpd_forms(prob);
  Rng rng(1003);
  const IterateState st = state_of(prob, rng.uniform_vector(prob.m(), -3, 3),
                                   rng.uniform_vector(prob.n(), -3, 3), f.IV, f.IQ);
  const double alpha = 1e-4;
  const StepResult imp = step_implicit(prob, f.IV, f.IQ, st, alpha);
  const StepResult exp = step_explicit(prob, f.IV, f.IQ, st, alpha);
  CHECK((imp.state.u - exp.state.u).norm() <= 1e-6);
  CHECK((imp.state.p - exp.state.p).norm() <= 1e-6);
}

TEST_CASE("all schemes fix the saddle point") {
  const SaddleProblem prob = make_problem("eq1.13");
  const StpdForms sf = make_stpd_forms(prob, 10.0);
  const IterateState st = state_of(prob, prob.saddle->u, prob.saddle->p, sf.IV, sf.IQ);
  for (double alpha : {0.1, 1.0, 10.0}) {
    const StepResult a = step_stpd_explicit(prob, sf.TU, sf.TP, sf.IV, sf.IQ, st, alpha);
    CHECK((a.state.u - st.u).norm() <= 1e-12);
    CHECK((a.state.p - st.p).norm() <= 1e-12);
    const StepResult b = step_stpd_imex(prob, sf.TU, sf.TP, sf.IV, sf.IQ, st, alpha);
    CHECK((b.state.u - st.u).norm() <= 1e-12);
    CHECK((b.state.p - st.p).norm() <= 1e-12);
  }
  const SaddleProblem toy = make_problem("fig1-toy");
  const SpdForm I1 = SpdForm::identity(1);
  const IterateState ts = state_of(toy, toy.saddle->u, toy.saddle->p, I1, I1);
  for (double alpha : {1.0, 10.0, 100.0}) {
    CHECK((step_implicit(toy, I1, I1, ts, alpha).state.u - ts.u).norm() <= 1e-12);
    CHECK((step_explicit(toy, I1, I1, ts, alpha).state.u - ts.u).norm() <= 1e-12);
    CHECK((step_imex(toy, I1, I1, ts, alpha).state.u - ts.u).norm() <= 1e-12);
    CHECK((step_pd_explicit(toy, ts, alpha).state.u - ts.u).norm() <= 1e-12);
  }
}

TEST_CASE("symmetric explicit step on eq1.13, hand-derived") {
  const SaddleProblem prob = make_problem("eq1.13");
  const SpdForm I2 = SpdForm::identity(2), I1 = SpdForm::identity(1);
  const IterateState st = state_of(prob, Vector::Zero(2), Vector::Zero(1), I2, I1);
  const StepResult res = step_stpd_explicit(prob, I2, I1, I2, I1, st, 0.1);
  // field value at the origin is ((0,1), -1)
  CHECK(res.state.u[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(res.state.u[1] == Catch::Approx(0.1).margin(1e-15));
  CHECK(res.state.p[0] == Catch::Approx(-0.1).margin(1e-15));
}

TEST_CASE("symmetric explicit step equals raw Euler on the symmetric field") {
  const SaddleProblem prob = make_problem("affine-constrained-quadratic");
  const StpdForms f = make_stpd_forms(prob, 4.0);
  Rng rng(1004);
  IterateState st = state_of(prob, rng.uniform_vector(prob.m(), -5, 5),
                             rng.uniform_vector(prob.n(), -5, 5), f.IV, f.IQ);
  const double alpha = 0.2;
  for (int k = 0; k < 20; ++k) {
    const auto [u_ref, p_ref] = euler_reference(
        [&](const Vector& u, const Vector& p) {
          return stpd_field(prob, f.TU, f.TP, f.IV, f.IQ, u, p);
        },
        st.u, st.p, alpha);
    st = step_stpd_explicit(prob, f.TU, f.TP, f.IV, f.IQ, st, alpha).state;
    REQUIRE((st.u - u_ref).norm() <= 1e-12 * (1.0 + u_ref.norm()));
    REQUIRE((st.p - p_ref).norm() <= 1e-12 * (1.0 + p_ref.norm()));
  }
}

TEST_CASE("symmetric half-implicit shift reduces to p when b = 0 and T_P = I") {
  const SaddleProblem prob = make_problem("eq1.13");  // b = 0
  const SpdForm I1 = SpdForm::identity(1);
  Rng rng(1005);
  const Vector p = rng.gaussian_vector(1);
  const Vector shift = prob.B.adjoint_apply(p - I1.solve(prob.h.gradient(p)));
  CHECK((shift - prob.B.adjoint_apply(p)).norm() == 0.0);
}

TEST_CASE("symmetric half-implicit run converges on eq1.13 at the theorem step size") {
  const SaddleProblem prob = make_problem("eq1.13");
  const StpdForms f = make_stpd_forms(prob, 10.0);
  const ConstantsSheet sheet = compute_sheet_stpd(prob, f.TU, f.TP, f.IV, f.IQ);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ImexStpd;
  cfg.step_policy = StepPolicy::Theorem;
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.TU = f.TU;
  cfg.TP = f.TP;
  cfg.sheet = sheet;
  cfg.max_iterations = 200;
  cfg.tol = 0.0;  // run the full budget
  const RunRecord rec = run_scheme(prob, Vector::Zero(2), Vector::Zero(1), cfg);
  const double E0 = rec.rows.front().E;
  CHECK(rec.rows.back().E <= 1e-10 * E0);
  CHECK((rec.u_final - prob.saddle->u).norm() <= 1e-8);
  CHECK((rec.p_final - prob.saddle->p).norm() <= 1e-8);
}

TEST_CASE("step-size selection and rate prediction on the toy sheet") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const TpdForms f = make_tpd_forms(prob);
  const ConstantsSheet sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  REQUIRE(sheet.mu_V == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(sheet.mu_Q == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(sheet.LV2 == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(sheet.LQ2 == Catch::Approx(2.0).margin(1e-14));
  REQUIRE(sheet.LSQ2 == Catch::Approx(1.0).margin(1e-14));

  SECTION("half-implicit") {
    const double alpha = select_step_size(sheet, SchemeKind::ImexTpd);
    CHECK(alpha == Catch::Approx(0.5).margin(1e-14));
    CHECK(predict_rate(sheet, SchemeKind::ImexTpd, alpha).rho ==
          Catch::Approx(0.8).margin(1e-14));
  }
  SECTION("explicit") {
    const double alpha = select_step_size(sheet, SchemeKind::ExplicitTpd);
    CHECK(alpha == Catch::Approx(0.25).margin(1e-14));
    const ConvergencePrediction pred = predict_rate(sheet, SchemeKind::ExplicitTpd, alpha);
    CHECK(pred.delta_k == Catch::Approx(0.125).margin(1e-14));
  }
  SECTION("implicit for caller-supplied alpha") {
    CHECK(predict_rate(sheet, SchemeKind::ImplicitTpd, 100.0).rho ==
          Catch::Approx(1.0 / 101.0).margin(1e-14));
  }
  SECTION("plain scheme has no theorem") {
    REQUIRE_THROWS_AS(select_step_size(sheet, SchemeKind::PdExplicit), MissingConstants);
  }
}

TEST_CASE("half-implicit run on the toy contracts at 0.8 per step") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const TpdForms f = make_tpd_forms(prob);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ImexTpd;
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  cfg.max_iterations = 50;
  cfg.tol = 0.0;
  cfg.strict_contraction = true;
  const RunRecord rec = run_scheme(prob, vec1(1), vec1(1), cfg);
  const double E0 = rec.rows.front().E;
  CHECK(rec.rows.back().E <= std::pow(0.8, 50) * E0 + 1e-300);
  CHECK(rec.predicted_rho == Catch::Approx(0.8).margin(1e-14));
}

TEST_CASE("zero-iteration run returns the initial state only") {
  const SaddleProblem prob = make_problem("fig1-toy");
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ExplicitTpd;
  cfg.step_policy = StepPolicy::Fixed;
  cfg.alpha = 0.1;
  cfg.IV = SpdForm::identity(1);
  cfg.IQ = SpdForm::identity(1);
  cfg.max_iterations = 0;
  const RunRecord rec = run_scheme(prob, vec1(1), vec1(1), cfg);
  REQUIRE(rec.rows.size() == 1);
  CHECK(rec.rows[0].k == 0);
  CHECK(rec.u_final[0] == 1.0);
}

TEST_CASE("oversized explicit steps are detected as divergence") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const TpdForms f = make_tpd_forms(prob);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ExplicitTpd;
  cfg.step_policy = StepPolicy::Fixed;
  cfg.alpha = 25.0;  // 100x the theorem value
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.max_iterations = 500;
  cfg.tol = 0.0;
  REQUIRE_THROWS_AS(run_scheme(prob, vec1(1), vec1(1), cfg), DivergenceDetected);
}

TEST_CASE("per-step contraction at theorem step sizes across the registry") {
  struct Case {
    std::string problem;
    SchemeKind kind;
  };
  const std::vector<Case> cases = {
      {"fig1-toy", SchemeKind::ExplicitTpd},
      {"fig1-toy", SchemeKind::ImexTpd},
      {"fig1-toy", SchemeKind::ImplicitTpd},
      {"random-quadratic-saddle", SchemeKind::ExplicitTpd},
      {"random-quadratic-saddle", SchemeKind::ImexTpd},
      {"random-quadratic-saddle", SchemeKind::ImplicitTpd},
      {"logsumexp-constrained", SchemeKind::ExplicitTpd},
      {"logsumexp-constrained", SchemeKind::ImexTpd},
      {"fig1-toy", SchemeKind::ExplicitStpd},
      {"fig1-toy", SchemeKind::ImexStpd},
      {"eq1.13", SchemeKind::ExplicitStpd},
      {"eq1.13", SchemeKind::ImexStpd},
      {"affine-constrained-quadratic", SchemeKind::ExplicitStpd},
      {"affine-constrained-quadratic", SchemeKind::ImexStpd},
  };
  for (const Case& c : cases) {
    const auto& entry = registry_entry(c.problem);
    const SaddleProblem prob = entry.make();
    SchemeConfig cfg;
    cfg.kind = c.kind;
    cfg.max_iterations = 200;
    cfg.tol = 0.0;
    cfg.strict_contraction = true;
    const bool symmetric =
        c.kind == SchemeKind::ExplicitStpd || c.kind == SchemeKind::ImexStpd;
    if (symmetric) {
      const StpdForms f = make_stpd_forms(prob, 10.0);
      cfg.IV = f.IV;
      cfg.IQ = f.IQ;
      cfg.TU = f.TU;
      cfg.TP = f.TP;
      cfg.sheet = compute_sheet_stpd(prob, f.TU, f.TP, f.IV, f.IQ);
    } else {
      const TpdForms f = make_tpd_forms(prob);
      cfg.IV = f.IV;
      cfg.IQ = f.IQ;
      cfg.sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
    }
    if (c.kind == SchemeKind::ImplicitTpd) {
      cfg.step_policy = StepPolicy::Fixed;
      cfg.alpha = 1.0;
    }
    INFO(c.problem << " / " << scheme_name(c.kind));
    REQUIRE_NOTHROW(run_scheme(prob, entry.default_u0, entry.default_p0, cfg));
  }
}

TEST_CASE("implicit rate holds for arbitrarily large steps on quadratics") {
  for (const char* name : {"fig1-toy", "random-quadratic-saddle"}) {
    const auto& entry = registry_entry(name);
    const SaddleProblem prob = entry.make();
    const TpdForms f = make_tpd_forms(prob);
    const ConstantsSheet sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
    for (double alpha : {1.0, 10.0, 100.0}) {
      IterateState st = make_state(prob, Vector(entry.default_u0.array() + 1.0),
                                   Vector(entry.default_p0.array() - 1.0), 0, f.IV, f.IQ);
      const double rho = 1.0 / (1.0 + alpha * sheet.mu);
      for (int k = 0; k < 50; ++k) {
        const double prev = st.E;
        st = step_implicit(prob, f.IV, f.IQ, st, alpha).state;
        INFO(name << " alpha=" << alpha << " k=" << k);
        REQUIRE(st.E <= rho * prev + 1e-12);
      }
    }
  }
}

TEST_CASE("growing step sizes converge in far fewer implicit iterations") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const TpdForms f = make_tpd_forms(prob);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ImplicitTpd;
  cfg.step_policy = StepPolicy::Growing;
  cfg.alpha = 1.0;
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  cfg.max_iterations = 40;
  cfg.tol = 1e-12;
  const RunRecord rec = run_scheme(prob, Vector::Ones(prob.m()), Vector::Ones(prob.n()), cfg);
  CHECK(rec.converged);
  CHECK(rec.rows.size() <= 30);
}

TEST_CASE("run record csv shape") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const TpdForms f = make_tpd_forms(prob);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ImexTpd;
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  cfg.max_iterations = 5;
  cfg.tol = 0.0;
  const RunRecord rec = run_scheme(prob, vec1(1), vec1(1), cfg);
  std::ostringstream os;
  rec.to_csv(os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "k,E,factor,grad_u_norm,grad_p_norm,inner_iters,eps_k");
  std::string first;
  std::getline(is, first);
  CHECK(first.substr(0, 4) == "0,1,");  // k=0, E=1, empty factor
}

TEST_CASE("theorem step policy without a sheet is rejected") {
  const SaddleProblem prob = make_problem("fig1-toy");
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ExplicitTpd;
  cfg.step_policy = StepPolicy::Theorem;
  cfg.IV = SpdForm::identity(1);
  cfg.IQ = SpdForm::identity(1);
  Vector one(1);
  one << 1;
  REQUIRE_THROWS_AS(run_scheme(prob, one, one, cfg), MissingConstants);
}

TEST_CASE("symmetric step-level dual update matches the plain one when T = I") {
  const SaddleProblem prob = make_problem("random-quadratic-saddle");
  const TpdForms f = make_tpd_forms(prob);
  const SpdForm TP = SpdForm::identity(prob.n());
  Rng rng(2048);
  const IterateState st = make_state(prob, rng.uniform_vector(prob.m(), -3, 3),
                                     rng.uniform_vector(prob.n(), -3, 3), 0, f.IV, f.IQ);
  const double alpha = 0.2;
  const StepResult s = step_stpd_explicit(prob, f.IV, TP, f.IV, f.IQ, st, alpha);
  const StepResult t = step_explicit(prob, f.IV, f.IQ, st, alpha);
  CHECK((s.state.p - t.state.p).norm() <= 1e-13 * (1.0 + t.state.p.norm()));
}

TEST_CASE("benchmark-mode stopping on the Lyapunov value") {
  const SaddleProblem prob = make_problem("fig1-toy");
  const TpdForms f = make_tpd_forms(prob);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::ImexTpd;
  cfg.IV = f.IV;
  cfg.IQ = f.IQ;
  cfg.sheet = compute_sheet_tpd(prob, f.IV, f.IQ);
  cfg.max_iterations = 500;
  cfg.stop_on_E = true;
  cfg.E_tol = 1e-6;
  Vector one(1);
  one << 1;
  const RunRecord rec = run_scheme(prob, one, one, cfg);
  CHECK(rec.converged);
  CHECK(rec.rows.back().E <= 1e-6);
  CHECK(rec.rows.size() < 40);  // stops early, well before the budget
}
