#pragma once

#include "switchgain/psd.hpp"
#include "switchgain/realization.hpp"
#include "switchgain/stability.hpp"
#include "switchgain/system.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchgain {

// p for induced-norm lower bounds: 1, 2, or infinity. Anything else is
// rejected (general induced p-norms are not computable here).
inline constexpr double kNormInf = std::numeric_limits<double>::infinity();

class UnstableSystemError : public std::runtime_error {
 public:
  explicit UnstableSystemError(StabilityCertificate cert);
  StabilityCertificate certificate;
};

// Thrown when the doubling search exhausts its budget without a feasible cap.
class NoUpperBoundError : public std::runtime_error {
 public:
  explicit NoUpperBoundError(int K)
      : std::runtime_error("no upper bound certified at horizon K = " +
                           std::to_string(K)) {}
};

// Truncated lower bound: max over all length-K paths of the induced p-norm
// of D_pi. Exact over the path set, nondecreasing in K.
double lower_bound(const SwitchingSystem& sys, int K, double p = 2.0);

// Storage matrix of a fixed path in closed form,
//   G = C^T C + C^T D (gamma^2 I - D^T D)^{-1} D^T C
// with (A,B,C,D) the lifted path operators. Requires gamma > ||D_pi||_2;
// the factorization of gamma^2 I - D^T D is the precondition check.
Mat storage_matrix_direct(const SwitchingSystem& sys, const Path& pi,
                          double gamma);

struct DpStorage {
  Mat G;                   // same quadratic form as the closed form
  std::vector<Mat> gains;  // per-step maximizers w_t = gains[t] * x_t
};

// Backward dynamic program over the path; checks per-step concavity
// (gamma^2 I - D^T D - B^T G B > 0) and names the failing suffix on error.
DpStorage storage_matrix_dp(const SwitchingSystem& sys, const Path& pi,
                            double gamma);

// Max-of-quadratics storage: per node, one PSD matrix per outgoing length-K
// path; evaluation is the max of the quadratic forms.
struct QuadraticStorage {
  double gamma = 0.0;
  int K = 0;
  std::vector<std::vector<Mat>> node_matrices;
  std::vector<std::vector<Path>> node_paths;  // aligned with node_matrices

  double evaluate(int node, const Vec& x) const;
  // Drops matrices dominated by another kept matrix at the same node
  // (G <= G' in the PSD order); exact for max-of-quadratics evaluation.
  QuadraticStorage pruned() const;
  int total_matrices() const;
};

// Requires gamma > lower_bound(sys, K, 2); error names that bound.
QuadraticStorage truncated_storage(const SwitchingSystem& sys, double gamma,
                                   int K);

struct WorstCaseRun {
  Path path;
  Vec x0;
  std::vector<Vec> w;  // disturbances w_0..w_{K-1}
  std::vector<Vec> x;  // states x_0..x_K
  std::vector<Vec> z;  // outputs z_0..z_{K-1}
  std::vector<Mat> gains;
  double attained = 0.0;   // sum ||z||^2 - gamma^2 sum ||w||^2
  double predicted = 0.0;  // x0^T G x0
};

// Replays the DP maximizers along the path; attained == predicted up to
// roundoff is the defining invariant.
WorstCaseRun worst_case_disturbance(const SwitchingSystem& sys,
                                    const Path& pi, double gamma,
                                    const Vec& x0);

struct HorizonCertificate {
  double gamma = 0.0;
  int K = 0;
  std::vector<Path> paths;  // all length-K paths, enumeration order
  std::vector<Mat> X;       // aligned PSD matrices
};

struct HorizonFeasibility {
  FeasStatus status = FeasStatus::Inconclusive;
  HorizonCertificate certificate;  // populated on Feasible
  std::string reason;
};

// One LMI block per length-(K+1) path phi with first edge (A,B,C,D):
//   [A B]^T X_{phi(2:K+1)} [A B] + [C D]^T [C D]
//     <= blkdiag(X_{phi(1:K)}, gamma^2 I_d),
// all X_pi > 0. Feasible certifies gamma >= gain.
HorizonFeasibility horizon_upper_bound_feasible(const SwitchingSystem& sys,
                                                int K, double gamma,
                                                const std::string& backend = "");

struct UpperBoundResult {
  double gamma_hat = 0.0;
  HorizonCertificate certificate;
  bool solver_inconclusive = false;  // some probe Inconclusive; bound loose
};

// Doubling search for a feasible cap from max(1, 2*lower bound), then
// bisection down to absolute tolerance tol. The returned bound is always
// backed by a verified certificate.
UpperBoundResult upper_bound_bisect(const SwitchingSystem& sys, int K,
                                    double tol = 1e-3,
                                    const std::string& backend = "");

struct GainBracket {
  double p = 2.0;
  double lower = 0.0;
  int lower_K = 0;
  double upper = std::numeric_limits<double>::infinity();
  int upper_K = 0;
  bool has_upper = false;
  TriState stability = TriState::Unknown;
  bool was_minimal = false;        // input was already minimal
  std::vector<int> minimized_dims;
  StabilityCertificate stability_certificate;
  HorizonCertificate upper_certificate;
  std::string notes;
};

// minimize, check stability (abort via UnstableSystemError when Unstable,
// note a warning when Unknown), then compute both bounds at horizon K.
GainBracket gain_bracket(const SwitchingSystem& sys, int K, double tol = 1e-3,
                         const std::string& backend = "");

struct ScaledCheckResult {
  bool passed = false;
  FeasStatus scaled_status = FeasStatus::Inconclusive;  // gain(scaled) <= 1
  FeasStatus node_status = FeasStatus::Inconclusive;    // per-node LMI
  std::vector<Mat> node_storage;                        // Q_v when passed
};

// Scales (A,B) by sqrt(n) (uniform node dimension n required), tests the
// scaled gain <= 1 at horizon 1, and on success solves the per-node
// quadratic dissipation LMI on the original system at gamma = 1.
ScaledCheckResult converse_scaled_check(const SwitchingSystem& sys,
                                        const std::string& backend = "");

struct DissipationReport {
  double max_violation = 0.0;  // negative means uniform slack
  bool exact = false;          // eigenvalue-checked, not just sampled
  long samples = 0;
};

// Single quadratic per node: exact eigenvalue check per edge plus samples.
DissipationReport verify_dissipation(const SwitchingSystem& sys,
                                     const std::vector<Mat>& node_quadratics,
                                     double gamma, int samples = 10000,
                                     unsigned seed = 1);

// Max-of-quadratics: random samples plus adversarial directions taken from
// top eigenvectors of per-pair residual quadratics.
DissipationReport verify_dissipation(const SwitchingSystem& sys,
                                     const QuadraticStorage& storage,
                                     double gamma, int samples = 10000,
                                     unsigned seed = 1);

// Groups certificate matrices by path start node, yielding the lifted
// storage F(x) = max_pi x^T X_pi x that satisfies one-step dissipation.
QuadraticStorage storage_from_certificate(const SwitchingSystem& sys,
                                          const HorizonCertificate& cert);

}  // namespace switchgain
