#include "switchgain/stability.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace switchgain {

std::string to_string(TriState s) {
  switch (s) {
    case TriState::Stable:
      return "stable";
    case TriState::Unstable:
      return "unstable";
    default:
      return "unknown";
  }
}

namespace {

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return A.jacobiSvd().singularValues()(0);
}

double spectral_radius(const Mat& A) {
  if (A.rows() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// max over closed walks of length <= max_len of rho(A_w)^(1/|w|); every such
// walk bounds the constrained joint spectral radius from below.
double closed_walk_lower_bound(const SwitchingSystem& sys, int max_len) {
  double best = 0.0;
  for (int len = 1; len <= max_len; ++len) {
    for (int v = 0; v < sys.num_nodes(); ++v) {
      enumerate_paths(sys, len, v, v, [&](const Path& pi) {
        const Mat A = path_matrices(sys, pi).A;
        best = std::max(best, std::pow(spectral_radius(A), 1.0 / len));
        return true;
      });
    }
  }
  return best;
}

}  // namespace

StabilityCertificate quadratic_cjsr_bound(const SwitchingSystem& sys, int T,
                                          double tol,
                                          const std::string& backend) {
  require_valid(sys);
  if (T < 1) throw std::invalid_argument("lift horizon T must be >= 1");
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");

  StabilityCertificate cert;
  cert.T = T;
  cert.rho_lower = closed_walk_lower_bound(sys, T + 2);

  double norm_bound = 0.0;
  for (const auto& e : sys.edges)
    norm_bound = std::max(norm_bound, spectral_norm(e.A));

  if (norm_bound == 0.0) {
    // every path operator vanishes
    cert.rho_upper = 0.0;
    cert.lmi_certified = true;
    for (const auto& n : sys.nodes) cert.P.push_back(Mat::Identity(n.dim, n.dim));
    return cert;
  }

  auto probe = [&](double rho, std::vector<Mat>& witness) {
    LmiProblem p;
    for (const auto& n : sys.nodes) p.add_variable(n.dim);
    // homogeneous in P, so the unit margin is just a normalization
    for (int v = 0; v < sys.num_nodes(); ++v)
      p.require_pos_def(v, 1.0, "P[" + sys.nodes[v].name + "]");
    const double r2t = std::pow(rho, 2.0 * T);
    enumerate_paths(sys, T, std::nullopt, std::nullopt, [&](const Path& pi) {
      const PathMatrices pm = path_matrices(sys, pi);
      const auto seq = pi.node_seq(sys);
      const int vs = seq.front(), ve = seq.back();
      const int ns = sys.nodes[vs].dim;
      LmiConstraint c;
      c.constant = Mat::Zero(ns, ns);
      c.terms.push_back({ve, pm.A, 1.0});
      c.terms.push_back({vs, Mat::Identity(ns, ns), -r2t});
      c.sense = ConstraintSense::LessEqual;
      p.constraints.push_back(std::move(c));
      return true;
    });
    FeasibilityResult r = solve_feasibility(p, backend);
    if (r.status == FeasStatus::Feasible) witness = std::move(r.witness);
    if (r.status == FeasStatus::Inconclusive) cert.solver_inconclusive = true;
    return r.status == FeasStatus::Feasible;
  };

  // A feasible cap: the norm bound is valid, but the closed LMI may need
  // headroom at the boundary, so nudge up and retry a few times if needed.
  double lo = cert.rho_lower;
  double hi = std::max(norm_bound, lo) * (1.0 + 1e-9);
  cert.rho_upper = std::max(norm_bound, lo);  // sound even without a witness
  std::vector<Mat> witness;
  bool have_cap = false;
  for (int attempt = 0; attempt < 6 && !have_cap; ++attempt) {
    have_cap = probe(hi, witness);
    if (!have_cap) hi *= 1.5;
  }
  if (!have_cap) {
    cert.solver_inconclusive = true;
    return cert;  // norm bound only
  }
  cert.rho_upper = hi;
  cert.lmi_certified = true;

  for (int iter = 0; iter < 40 && hi - lo > tol * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    std::vector<Mat> w;
    if (probe(mid, w)) {
      hi = mid;
      witness = std::move(w);
    } else {
      lo = mid;
    }
  }
  cert.rho_upper = hi;
  cert.P = std::move(witness);
  return cert;
}

TriState classify_stability(const StabilityCertificate& cert, double tol) {
  if (cert.rho_upper < 1.0 - tol) return TriState::Stable;
  if (cert.rho_lower > 1.0 + tol) return TriState::Unstable;
  return TriState::Unknown;
}

TriState check_internal_stability(const SwitchingSystem& sys, int T,
                                  double tol, const std::string& backend) {
  return classify_stability(quadratic_cjsr_bound(sys, T, tol, backend), tol);
}

}  // namespace switchgain
