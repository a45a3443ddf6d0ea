#pragma once

#include "switchgain/system.hpp"

namespace switchgain {

enum class SubspaceKind { Unobservable, Reachable };

// Per-node subspace bases. basis[v] is n_v x k_v with orthonormal columns
// (k_v may be 0). For Unobservable it spans C_v, the states at v producing
// zero output along every outgoing path; for Reachable it spans B_v, the
// span of all B_pi images over paths ending at v.
struct SubspaceFamily {
  SubspaceKind kind;
  std::vector<Mat> basis;
  // True when some singular value lay within 10x of the rank tolerance, so
  // a subspace dimension was numerically ambiguous.
  bool ambiguous = false;
};

struct MinimizationReport {
  std::vector<std::vector<int>> dims_per_iteration;  // includes initial dims
  std::vector<int> final_dims;
  std::vector<bool> reached_zero;  // per node
  bool ambiguous = false;          // any ambiguous rank decision on the way
};

// Rank tolerance: tol <= 0 means automatic, max(rows, cols)*eps*sigma_max
// per decision.
SubspaceFamily unobservable_subspaces(const SwitchingSystem& sys,
                                      double tol = 0.0);

// Computed on the dual system: B_v^perp equals the dual's unobservable
// subspace at v; returns the orthonormal complement.
SubspaceFamily reachable_subspaces(const SwitchingSystem& sys,
                                   double tol = 0.0);

// State restriction onto span(basis): edge matrices become
// (L_to^T A L_from, L_to^T B, C L_from, D). Gain preserving.
SwitchingSystem restrict_to_reachable(const SwitchingSystem& sys,
                                      const SubspaceFamily& family);

// State restriction onto the orthogonal complement of the unobservable
// subspaces; preserves the input-output map from x0 = 0.
SwitchingSystem restrict_to_observable(const SwitchingSystem& sys,
                                       const SubspaceFamily& family);

// Alternates reachable and observable restrictions until node dimensions
// stabilize (hard cap: total_dim sweeps). The result is minimal and has the
// same L_p gain as the input.
std::pair<SwitchingSystem, MinimizationReport> minimize(
    const SwitchingSystem& sys, double tol = 0.0);

// True iff all unobservable subspaces are {0} and all reachable subspaces
// are full.
bool is_minimal(const SwitchingSystem& sys, double tol = 0.0);

// Orthonormal basis of the orthogonal complement of span(basis) in R^n.
Mat orthonormal_complement(const Mat& basis, int n);

}  // namespace switchgain
