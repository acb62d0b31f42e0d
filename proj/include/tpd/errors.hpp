#pragma once

#include <stdexcept>
#include <string>

namespace tpd {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand dimensions do not match the owning space.
class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// L_{f,IV} >= 2: the descent map is not contractive; rescale f or the metric.
class RescalingRequired : public Error {
public:
  using Error::Error;
};

/// L_f == 0: f is affine and the contraction analysis degenerates.
class DegenerateAffine : public Error {
public:
  using Error::Error;
};

/// Extremal eigenvalue estimation did not converge; carries the best bracket.
class SpectrumEstimateFailed : public Error {
public:
  SpectrumEstimateFailed(const std::string& what, double lo, double hi)
      : Error(what), bracket_lo(lo), bracket_hi(hi) {}
  double bracket_lo;
  double bracket_hi;
};

/// A saddle reference is required but none is available.
class MissingReference : public Error {
public:
  using Error::Error;
};

/// The constants sheet lacks a value the requested formula needs.
class MissingConstants : public Error {
public:
  using Error::Error;
};

/// Inner solve failed to reach its target; carries the best achieved measure.
class InnerSolveError : public Error {
public:
  InnerSolveError(const std::string& what, double achieved)
      : Error(what), achieved_measure(achieved) {}
  double achieved_measure;
};

/// Iterative SPD solve stagnated before reaching the residual target.
class SolverStagnation : public Error {
public:
  using Error::Error;
};

/// Adaptive integrator step size underflowed.
class StiffnessError : public Error {
public:
  using Error::Error;
};

/// Lyapunov value grew 10x over a 50-step window.
class DivergenceDetected : public Error {
public:
  using Error::Error;
};

/// Operation is undefined for this problem (e.g. augmenting non-affine h).
class NotApplicable : public Error {
public:
  using Error::Error;
};

/// Optional capability (e.g. a native prox) is missing; caller should fall back.
class NotAvailable : public Error {
public:
  using Error::Error;
};

class UnknownPreset : public Error {
public:
  using Error::Error;
};

class RankError : public Error {
public:
  using Error::Error;
};

class FitError : public Error {
public:
  using Error::Error;
};

class ReferenceFailed : public Error {
public:
  using Error::Error;
};

/// Invalid benchmark configuration; message names the offending field.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace tpd
