#include "switchgain/realization.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <limits>
#include <stdexcept>

namespace switchgain {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Kernel basis of a PSD Gram accumulator. Eigenvalues of S are squared
// singular values of the underlying stacked map, so the rank cut uses
// lambda <= (dim * eps * sqrt(lambda_max))^2 scaled back to the Gram scale:
// cut = dim * eps * lambda_max (standard Gram-side tolerance). A dimension
// is flagged ambiguous when a kept eigenvalue sits within one singular-value
// decade of the cut (lambda <= 100 cut); discarded eigenvalues are not
// flagged, since exact zeros round to ~eps * lambda_max, right below the cut.
Mat psd_kernel(const Mat& S, double tol, bool& ambiguous) {
  const int n = static_cast<int>(S.rows());
  if (n == 0) return Mat(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  double cut = tol > 0.0 ? tol * tol * std::max(lmax, 1.0)
                         : static_cast<double>(n) * kEps * lmax;
  if (lmax == 0.0) return Mat::Identity(n, n);  // zero map: full kernel
  int k = 0;
  for (int i = 0; i < n; ++i) {
    const double lam = std::max(es.eigenvalues()(i), 0.0);
    if (lam <= cut) ++k;
    if (lam > cut && lam <= 100.0 * cut) ambiguous = true;
  }
  return es.eigenvectors().leftCols(k);  // ascending eigenvalues
}

std::vector<std::vector<int>> incoming_edges(const SwitchingSystem& sys) {
  std::vector<std::vector<int>> in(sys.nodes.size());
  for (int e = 0; e < sys.num_edges(); ++e) in[sys.edges[e].to].push_back(e);
  return in;
}

}  // namespace

Mat orthonormal_complement(const Mat& basis, int n) {
  if (basis.cols() == 0) return Mat::Identity(n, n);
  if (basis.cols() >= n) return Mat(n, 0);
  Eigen::HouseholderQR<Mat> qr(basis);
  Mat Q = qr.householderQ();  // n x n orthogonal, first cols span basis
  return Q.rightCols(n - basis.cols());
}

SubspaceFamily unobservable_subspaces(const SwitchingSystem& sys, double tol) {
  require_valid(sys);
  const int V = sys.num_nodes();
  const auto out = sys.out_edges();

  // X_{v,1} = sum_out C^T C;  X_{v,k+1} = sum_out A^T X_{to,k} A.
  // C_{v,k} = ker(sum_{t<=k} X_{v,t}). The kernel of a sum of PSD terms is
  // the intersection of their kernels, hence invariant under positive
  // per-term rescaling; each sweep is normalized to keep the accumulators
  // bounded for near-unstable dynamics.
  std::vector<Mat> X(V), acc(V);
  for (int v = 0; v < V; ++v) {
    X[v] = Mat::Zero(sys.nodes[v].dim, sys.nodes[v].dim);
    for (int e : out[v]) {
      const auto& ed = sys.edges[e];
      X[v] += ed.C.transpose() * ed.C;
    }
    acc[v] = X[v];
  }

  SubspaceFamily fam;
  fam.kind = SubspaceKind::Unobservable;
  fam.basis.resize(V);
  std::vector<int> dims(V, -1);

  const int cap = std::max(sys.total_dim(), 1);
  for (int k = 0; k < cap; ++k) {
    bool changed = false;
    for (int v = 0; v < V; ++v) {
      Mat ker = psd_kernel(acc[v], tol, fam.ambiguous);
      int dk = static_cast<int>(ker.cols());
      if (dk != dims[v]) changed = true;
      dims[v] = dk;
      fam.basis[v] = std::move(ker);
    }
    // Kernels are nested decreasing in k, so one sweep with no dimension
    // change at any node is a fixed point.
    if (!changed && k > 0) break;

    std::vector<Mat> Xn(V);
    double scale = 0.0;
    for (int v = 0; v < V; ++v) {
      Xn[v] = Mat::Zero(sys.nodes[v].dim, sys.nodes[v].dim);
      for (int e : out[v]) {
        const auto& ed = sys.edges[e];
        Xn[v] += ed.A.transpose() * X[ed.to] * ed.A;
      }
      if (Xn[v].size() > 0)
        scale = std::max(scale, Xn[v].cwiseAbs().maxCoeff());
    }
    if (scale > 0.0)
      for (auto& M : Xn) M /= scale;
    for (int v = 0; v < V; ++v) {
      X[v] = std::move(Xn[v]);
      acc[v] += X[v];
    }
  }
  return fam;
}

SubspaceFamily reachable_subspaces(const SwitchingSystem& sys, double tol) {
  // B_v^perp is the dual system's unobservable subspace at v.
  SubspaceFamily perp = unobservable_subspaces(dual_system(sys), tol);
  SubspaceFamily fam;
  fam.kind = SubspaceKind::Reachable;
  fam.ambiguous = perp.ambiguous;
  fam.basis.resize(sys.nodes.size());
  for (int v = 0; v < sys.num_nodes(); ++v)
    fam.basis[v] = orthonormal_complement(perp.basis[v], sys.nodes[v].dim);
  return fam;
}

namespace {

SwitchingSystem restrict(const SwitchingSystem& sys,
                         const std::vector<Mat>& L) {
  SwitchingSystem out;
  out.input_dim = sys.input_dim;
  out.output_dim = sys.output_dim;
  out.nodes = sys.nodes;
  for (int v = 0; v < sys.num_nodes(); ++v)
    out.nodes[v].dim = static_cast<int>(L[v].cols());
  out.edges.reserve(sys.edges.size());
  for (const auto& e : sys.edges) {
    EdgeSpec f;
    f.from = e.from;
    f.to = e.to;
    f.label = e.label;
    f.A = L[e.to].transpose() * e.A * L[e.from];
    f.B = L[e.to].transpose() * e.B;
    f.C = e.C * L[e.from];
    f.D = e.D;
    out.edges.push_back(std::move(f));
  }
  return out;
}

void check_family(const SwitchingSystem& sys, const SubspaceFamily& fam,
                  SubspaceKind kind) {
  if (fam.kind != kind)
    throw std::invalid_argument("subspace family has the wrong kind");
  if (fam.basis.size() != sys.nodes.size())
    throw std::invalid_argument("subspace family does not match the system");
  for (int v = 0; v < sys.num_nodes(); ++v)
    if (fam.basis[v].rows() != sys.nodes[v].dim)
      throw std::invalid_argument("basis row count mismatch at node " +
                                  sys.nodes[v].name);
}

}  // namespace

SwitchingSystem restrict_to_reachable(const SwitchingSystem& sys,
                                      const SubspaceFamily& family) {
  check_family(sys, family, SubspaceKind::Reachable);
  return restrict(sys, family.basis);
}

SwitchingSystem restrict_to_observable(const SwitchingSystem& sys,
                                       const SubspaceFamily& family) {
  check_family(sys, family, SubspaceKind::Unobservable);
  std::vector<Mat> K(sys.nodes.size());
  for (int v = 0; v < sys.num_nodes(); ++v)
    K[v] = orthonormal_complement(family.basis[v], sys.nodes[v].dim);
  return restrict(sys, K);
}

std::pair<SwitchingSystem, MinimizationReport> minimize(
    const SwitchingSystem& sys, double tol) {
  require_valid(sys);
  MinimizationReport rep;
  auto dims_of = [](const SwitchingSystem& s) {
    std::vector<int> d;
    d.reserve(s.nodes.size());
    for (const auto& n : s.nodes) d.push_back(n.dim);
    return d;
  };

  SwitchingSystem cur = sys;
  rep.dims_per_iteration.push_back(dims_of(cur));
  const int cap = std::max(sys.total_dim(), 1);
  for (int it = 0; it < cap; ++it) {
    auto reach = reachable_subspaces(cur, tol);
    cur = restrict_to_reachable(cur, reach);
    auto unobs = unobservable_subspaces(cur, tol);
    cur = restrict_to_observable(cur, unobs);
    rep.ambiguous = rep.ambiguous || reach.ambiguous || unobs.ambiguous;
    auto d = dims_of(cur);
    rep.dims_per_iteration.push_back(d);
    if (d == rep.dims_per_iteration[rep.dims_per_iteration.size() - 2]) break;
  }
  rep.final_dims = dims_of(cur);
  rep.reached_zero.resize(rep.final_dims.size());
  for (size_t v = 0; v < rep.final_dims.size(); ++v)
    rep.reached_zero[v] = rep.final_dims[v] == 0;
  return {std::move(cur), std::move(rep)};
}

bool is_minimal(const SwitchingSystem& sys, double tol) {
  auto unobs = unobservable_subspaces(sys, tol);
  for (const auto& b : unobs.basis)
    if (b.cols() != 0) return false;
  auto reach = reachable_subspaces(sys, tol);
  for (int v = 0; v < sys.num_nodes(); ++v)
    if (reach.basis[v].cols() != sys.nodes[v].dim) return false;
  return true;
}

}  // namespace switchgain
