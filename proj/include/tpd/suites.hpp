#pragma once

#include <string>
#include <vector>

#include "tpd/registry.hpp"
#include "tpd/verify.hpp"

namespace tpd {

/// Named verification suites runnable by tests and the CLI. Each entry runs
/// across the registry problems satisfying its hypotheses and merges to one
/// report; the plain-flow suite that must fail is marked expected-fail.
inline const std::vector<std::string>& suite_catalog() {
  static const std::vector<std::string> names = {
      "lemma2.2",
      "bregman-identity",
      "block-factorization",
      "lemma3.1",
      "lemma5.1",
      "lemma5.2",
      "lemma3.3-lipschitz",
      "lemma5.4-lipschitz",
      "tpd-strong-lyapunov",
      "stpd-strong-lyapunov",
      "pd-strong-lyapunov-expected-fail",
      "prop6.2-spectrum",
      "lemma6.1-signs",
  };
  return names;
}

namespace detail {

inline SuiteReport merge_reports(const std::string& name, std::vector<SuiteReport> parts) {
  SuiteReport out;
  out.name = name;
  out.pass = true;
  out.min_slack = std::numeric_limits<double>::infinity();
  for (const SuiteReport& r : parts) {
    out.pass = out.pass && r.pass;
    out.min_slack = std::min(out.min_slack, r.min_slack);
    out.samples += r.samples;
    out.seed = r.seed;
    out.expected_fail = out.expected_fail || r.expected_fail;
    if (!r.detail.empty()) out.detail += (out.detail.empty() ? "" : "; ") + r.detail;
  }
  return out;
}

// Problems with mu_f > 0 get the plain-flow treatment.
inline std::vector<std::string> tpd_problem_names() {
  return {"fig1-toy", "random-quadratic-saddle", "logsumexp-constrained"};
}

// Problems that need the symmetric transformation (mu_f = 0 but mu_fB > 0),
// plus the toy as a degenerate sanity case.
inline std::vector<std::string> stpd_problem_names() {
  return {"fig1-toy", "eq1.13", "affine-constrained-quadratic"};
}

constexpr double kStpdBeta = 10.0;

}  // namespace detail

inline SuiteReport run_suite(const std::string& name, int samples, std::uint64_t seed) {
  SuiteConfig cfg;
  cfg.samples = samples;
  cfg.seed = seed;

  if (name == "lemma2.2") return suite_descent_contraction(name, cfg);

  if (name == "bregman-identity") {
    std::vector<SuiteReport> parts;
    Rng r(seed);
    Matrix G = r.gaussian_matrix(3, 3);
    const Matrix F = G * G.transpose() + Matrix::Identity(3, 3);
    parts.push_back(
        suite_bregman_identity(name + "/quadratic",
                               ConvexOracle::quadratic(F, r.gaussian_vector(3)), cfg));
    parts.push_back(suite_bregman_identity(name + "/logsumexp",
                                           ConvexOracle::logsumexp_ridge(4, 0.5), cfg));
    return detail::merge_reports(name, std::move(parts));
  }

  if (name == "block-factorization") return suite_block_factorization(name, cfg);

  if (name == "lemma3.1") {
    std::vector<SuiteReport> parts;
    for (const std::string& pname : detail::tpd_problem_names()) {
      const SaddleProblem prob = make_problem(pname);
      const TpdForms forms = make_tpd_forms(prob);
      const ConstantsSheet sheet = compute_sheet_tpd(prob, forms.IV, forms.IQ);
      parts.push_back(
          suite_cross_term_f(name + "/" + pname, prob, forms.IV, sheet.mu_f, sheet.L_f, cfg));
    }
    return detail::merge_reports(name, std::move(parts));
  }

  if (name == "lemma5.1" || name == "lemma5.2") {
    std::vector<SuiteReport> parts;
    for (const std::string& pname : detail::stpd_problem_names()) {
      const SaddleProblem prob = make_problem(pname);
      const StpdForms forms = make_stpd_forms(prob, detail::kStpdBeta);
      const ConstantsSheet sheet =
          compute_sheet_stpd(prob, forms.TU, forms.TP, forms.IV, forms.IQ);
      if (name == "lemma5.1")
        parts.push_back(
            suite_cross_term_f(name + "/" + pname, prob, forms.TU, sheet.mu_f, sheet.L_f, cfg));
      else
        parts.push_back(
            suite_cross_term_h(name + "/" + pname, prob, forms.TP, sheet.mu_h, sheet.L_h, cfg));
    }
    return detail::merge_reports(name, std::move(parts));
  }

  if (name == "lemma3.3-lipschitz" || name == "tpd-strong-lyapunov") {
    std::vector<SuiteReport> parts;
    for (const std::string& pname : detail::tpd_problem_names()) {
      const SaddleProblem prob = make_problem(pname);
      const TpdForms forms = make_tpd_forms(prob);
      const ConstantsSheet sheet = compute_sheet_tpd(prob, forms.IV, forms.IQ);
      FlowField field(FlowKind::TPD, prob, forms.IV, forms.IQ);
      if (name == "lemma3.3-lipschitz")
        parts.push_back(suite_field_lipschitz(name + "/" + pname, field, sheet, cfg));
      else
        parts.push_back(suite_strong_lyapunov(name + "/" + pname, field, sheet, cfg));
    }
    return detail::merge_reports(name, std::move(parts));
  }

  if (name == "lemma5.4-lipschitz" || name == "stpd-strong-lyapunov") {
    std::vector<SuiteReport> parts;
    for (const std::string& pname : detail::stpd_problem_names()) {
      const SaddleProblem prob = make_problem(pname);
      const StpdForms forms = make_stpd_forms(prob, detail::kStpdBeta);
      const ConstantsSheet sheet =
          compute_sheet_stpd(prob, forms.TU, forms.TP, forms.IV, forms.IQ);
      FlowField field(FlowKind::STPD, prob, forms.IV, forms.IQ, forms.TU, forms.TP);
      if (name == "lemma5.4-lipschitz")
        parts.push_back(suite_field_lipschitz(name + "/" + pname, field, sheet, cfg));
      else
        parts.push_back(suite_strong_lyapunov(name + "/" + pname, field, sheet, cfg));
    }
    return detail::merge_reports(name, std::move(parts));
  }

  if (name == "pd-strong-lyapunov-expected-fail") {
    // The plain flow on the toy cannot satisfy the strong property with any
    // mu > 0 once mu_h = 0; mu_f is the rate the transformed flow achieves.
    const SaddleProblem prob = make_problem("fig1-toy");
    FlowField field = FlowField::pd(prob);
    ConstantsSheet sheet;
    sheet.mu = prob.f.constants().mu;
    return suite_strong_lyapunov(name, field, sheet, cfg, /*expect_fail=*/true);
  }

  if (name == "prop6.2-spectrum") return suite_schur_spectrum_map(name, cfg);
  if (name == "lemma6.1-signs") return suite_fB_fbeta_signs(name, cfg);

  throw ConfigError("unknown suite '" + name + "'");
}

inline std::vector<SuiteReport> run_all_suites(int samples, std::uint64_t seed) {
  std::vector<SuiteReport> out;
  for (const std::string& name : suite_catalog()) out.push_back(run_suite(name, samples, seed));
  return out;
}

}  // namespace tpd
