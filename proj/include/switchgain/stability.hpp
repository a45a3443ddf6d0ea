#pragma once

#include "switchgain/psd.hpp"
#include "switchgain/system.hpp"

#include <string>
#include <vector>

namespace switchgain {

enum class TriState { Stable, Unstable, Unknown };

std::string to_string(TriState s);

// Quadratic-norm certificate for the constrained joint spectral radius.
// rho_upper is always a valid upper bound: either backed by a verified LMI
// witness (lmi_certified, P nonempty) or the coarse norm bound max ||A_e||_2.
// rho_lower comes from closed walks w of length <= T+2: rho(A_w)^(1/|w|).
struct StabilityCertificate {
  double rho_upper = 0.0;
  double rho_lower = 0.0;
  int T = 1;
  std::vector<Mat> P;  // per-node witness, empty unless lmi_certified
  bool lmi_certified = false;
  // Some bisection probe was Inconclusive; rho_upper may be loose.
  bool solver_inconclusive = false;
};

// Bisects rho over the feasibility of
//   P_v > 0,  A_pi^T P_end(pi) A_pi <= rho^(2T) P_start(pi)  for all |pi| = T,
// between the closed-walk lower bound and the per-edge norm bound. The
// returned rho_upper is the smallest verified-feasible rho within relative
// tolerance tol (40 bisection steps max). Inconclusive probes count as
// not-certified, so rho_upper stays a sound bound.
StabilityCertificate quadratic_cjsr_bound(const SwitchingSystem& sys,
                                          int T = 2, double tol = 1e-3,
                                          const std::string& backend = "");

// Stable if rho_upper < 1 - tol, Unstable if rho_lower > 1 + tol, else
// Unknown. Marginal systems (rho = 1) land in Unknown by construction.
TriState check_internal_stability(const SwitchingSystem& sys, int T = 2,
                                  double tol = 1e-3,
                                  const std::string& backend = "");

TriState classify_stability(const StabilityCertificate& cert, double tol);

}  // namespace switchgain
