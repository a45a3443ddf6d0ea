#pragma once

#include "switchgain/system.hpp"

#include <functional>
#include <string>
#include <vector>

namespace switchgain {

// One additive term of an LMI constraint: sign * M^T X_var M, where M has
// var_dim rows and constraint_dim columns. Congruences of this form cover
// every constraint in this project (bounded-real blocks, Lyapunov steps,
// variable definiteness).
struct CongruenceTerm {
  int var = -1;
  Mat M;
  double sign = 1.0;
};

enum class ConstraintSense {
  LessEqual,    // expr <= 0  (negative semidefinite)
  GreaterEqual  // expr >= 0
};

// constant + sum of terms, required <= 0 or >= 0. A strict constraint is
// folded to a closed one with margin eps: expr >= eps*I (or <= -eps*I).
// margin <= 0 selects the default 1e-8 * max(1, inf-norm of constant).
struct LmiConstraint {
  Mat constant;
  std::vector<CongruenceTerm> terms;
  ConstraintSense sense = ConstraintSense::LessEqual;
  bool strict = false;
  double margin = -1.0;
  std::string name;
};

struct LmiProblem {
  std::vector<int> var_dims;  // symmetric s x s matrix variables
  std::vector<LmiConstraint> constraints;

  int add_variable(int dim);
  // Adds X_var >= margin*I as a strict constraint (margin <= 0 -> default).
  void require_pos_def(int var, double margin = -1.0, std::string name = "");
  int num_vars() const { return static_cast<int>(var_dims.size()); }

  // Evaluates one constraint expression at a variable assignment.
  Mat evaluate(int constraint, const std::vector<Mat>& witness) const;
  double strict_margin(int constraint) const;  // resolved margin
};

enum class FeasStatus { Feasible, Infeasible, Inconclusive };

struct FeasibilityResult {
  FeasStatus status = FeasStatus::Inconclusive;
  std::vector<Mat> witness;  // per variable, on Feasible
  double residual = 0.0;     // max eigenvalue-checked violation of witness
  std::string reason;        // diagnostics, set on Inconclusive
  int iterations = 0;
};

// Eigenvalue-checks a witness against every constraint. Feasible results
// must pass this independently of the backend that produced them: non-strict
// constraints to violation <= 1e-7 * max(1, constant scale), strict ones
// with margin >= eps/2. Returns max violation (negative means slack).
double verify_witness(const LmiProblem& p, const std::vector<Mat>& witness,
                      bool& ok);

// Pluggable backends. "ipm" (primal-dual interior point) is built in and is
// the default; the SWITCHGAIN_SOLVER environment variable overrides the
// default when no explicit backend is requested.
using SolverBackend = std::function<FeasibilityResult(const LmiProblem&)>;
void register_solver(const std::string& name, SolverBackend backend);
std::vector<std::string> registered_solvers();

// Infeasible is only reported with a verified separating certificate;
// anything unproven is Inconclusive with a reason.
FeasibilityResult solve_feasibility(const LmiProblem& p,
                                    const std::string& backend = "");

}  // namespace switchgain
