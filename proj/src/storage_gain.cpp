#include "switchgain/storage_gain.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace switchgain {

namespace {

double induced_norm(const Mat& D, double p) {
  if (D.size() == 0) return 0.0;
  if (p == 2.0) return D.jacobiSvd().singularValues()(0);
  if (p == 1.0) return D.cwiseAbs().colwise().sum().maxCoeff();
  return D.cwiseAbs().rowwise().sum().maxCoeff();  // p = inf
}

void check_p(double p) {
  if (p != 1.0 && p != 2.0 && !(std::isinf(p) && p > 0))
    throw std::invalid_argument(
        "induced p-norm is supported only for p in {1, 2, inf}");
}

std::string label_string(const SwitchingSystem& sys, const Path& pi) {
  std::ostringstream os;
  os << "[";
  const auto labels = pi.labels(sys);
  for (size_t i = 0; i < labels.size(); ++i)
    os << (i ? "," : "") << labels[i];
  os << "]";
  return os.str();
}

Mat blkdiag_gamma(int n, int d, double gamma2) {
  Mat M = Mat::Zero(n + d, n + d);
  M.bottomRightCorner(d, d) = gamma2 * Mat::Identity(d, d);
  return M;
}

Mat stack_AB(const EdgeSpec& e) {
  Mat M(e.A.rows(), e.A.cols() + e.B.cols());
  M << e.A, e.B;
  return M;
}

Mat stack_CD(const EdgeSpec& e) {
  Mat M(e.C.rows(), e.C.cols() + e.D.cols());
  M << e.C, e.D;
  return M;
}

Mat eye_pad(int n, int d) {  // [I_n 0_{n x d}]
  Mat M = Mat::Zero(n, n + d);
  M.topLeftCorner(n, n) = Mat::Identity(n, n);
  return M;
}

double max_eig(const Mat& S) {
  if (S.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Vec top_eigvec(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  Eigen::Index best;
  es.eigenvalues().maxCoeff(&best);
  return es.eigenvectors().col(best);
}

}  // namespace

UnstableSystemError::UnstableSystemError(StabilityCertificate cert)
    : std::runtime_error(
          "system is internally unstable: a closed walk certifies spectral "
          "radius " +
          std::to_string(cert.rho_lower) + " > 1"),
      certificate(std::move(cert)) {}

double lower_bound(const SwitchingSystem& sys, int K, double p) {
  require_valid(sys);
  if (K < 1) throw std::invalid_argument("horizon K must be >= 1");
  check_p(p);
  double best = 0.0;
  enumerate_paths(sys, K, std::nullopt, std::nullopt, [&](const Path& pi) {
    best = std::max(best, induced_norm(path_matrices(sys, pi).D, p));
    return true;
  });
  return best;
}

Mat storage_matrix_direct(const SwitchingSystem& sys, const Path& pi,
                          double gamma) {
  if (pi.length() < 1) throw std::invalid_argument("path must be nonempty");
  const PathMatrices pm = path_matrices(sys, pi);
  const double dn = induced_norm(pm.D, 2.0);
  if (!(gamma > dn)) {
    std::ostringstream os;
    os << "gamma = " << gamma << " must exceed ||D_pi||_2 = " << dn
       << " on path " << label_string(sys, pi);
    throw std::invalid_argument(os.str());
  }
  Mat G = pm.C.transpose() * pm.C;
  const int dt = static_cast<int>(pm.D.cols());
  if (dt > 0) {
    Mat H = gamma * gamma * Mat::Identity(dt, dt) -
            pm.D.transpose() * pm.D;
    Eigen::LLT<Mat> llt(0.5 * (H + H.transpose()));
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "gamma = " << gamma << " too close to ||D_pi||_2 = " << dn
         << ": gamma^2 I - D^T D is not positive definite";
      throw std::invalid_argument(os.str());
    }
    const Mat DtC = pm.D.transpose() * pm.C;
    G += DtC.transpose() * llt.solve(DtC);
  }
  return 0.5 * (G + G.transpose());
}

DpStorage storage_matrix_dp(const SwitchingSystem& sys, const Path& pi,
                            double gamma) {
  if (pi.length() < 1) throw std::invalid_argument("path must be nonempty");
  const int K = pi.length();
  const int d = sys.input_dim;
  DpStorage out;
  out.gains.resize(K);
  const auto seq = pi.node_seq(sys);
  Mat G = Mat::Zero(sys.nodes[seq.back()].dim, sys.nodes[seq.back()].dim);
  for (int t = K - 1; t >= 0; --t) {
    const EdgeSpec& e = sys.edges[pi.edge_ids[t]];
    const int n_from = static_cast<int>(e.A.cols());
    if (d == 0) {
      out.gains[t] = Mat::Zero(0, n_from);
      G = e.C.transpose() * e.C + e.A.transpose() * G * e.A;
      G = 0.5 * (G + G.transpose());
      continue;
    }
    Mat H = gamma * gamma * Mat::Identity(d, d) - e.D.transpose() * e.D -
            e.B.transpose() * G * e.B;
    Eigen::LLT<Mat> llt(0.5 * (H + H.transpose()));
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "per-step maximization is not concave at step " << t
         << ": gamma = " << gamma << " <= ||D||_2 of the suffix pi(" << t + 1
         << ":" << K << "), labels "
         << label_string(sys, subpath(pi, t + 1, K));
      throw std::invalid_argument(os.str());
    }
    const Mat L = e.D.transpose() * e.C + e.B.transpose() * G * e.A;
    out.gains[t] = llt.solve(L);  // w_t = Phi_t x_t
    G = e.C.transpose() * e.C + e.A.transpose() * G * e.A +
        L.transpose() * out.gains[t];
    G = 0.5 * (G + G.transpose());
  }
  out.G = G;
  return out;
}

double QuadraticStorage::evaluate(int node, const Vec& x) const {
  const auto& list = node_matrices.at(node);
  double best = 0.0;
  bool first = true;
  for (const auto& G : list) {
    const double v = x.dot(G * x);
    if (first || v > best) best = v;
    first = false;
  }
  return best;
}

int QuadraticStorage::total_matrices() const {
  int n = 0;
  for (const auto& l : node_matrices) n += static_cast<int>(l.size());
  return n;
}

QuadraticStorage QuadraticStorage::pruned() const {
  QuadraticStorage out;
  out.gamma = gamma;
  out.K = K;
  out.node_matrices.resize(node_matrices.size());
  out.node_paths.resize(node_matrices.size());
  auto dominates = [](const Mat& Ga, const Mat& Gb) {
    // Ga >= Gb in the PSD order
    Mat R = Ga - Gb;
    const double scale =
        std::max(1.0, std::max(Ga.cwiseAbs().maxCoeff(),
                               Gb.cwiseAbs().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (R + R.transpose()),
                                          Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12 * scale;
  };
  for (size_t v = 0; v < node_matrices.size(); ++v) {
    const auto& list = node_matrices[v];
    std::vector<bool> drop(list.size(), false);
    for (size_t i = 0; i < list.size(); ++i) {
      if (drop[i]) continue;
      for (size_t j = 0; j < i; ++j) {
        if (drop[j]) continue;
        if (dominates(list[j], list[i])) {
          drop[i] = true;
          break;
        }
        if (dominates(list[i], list[j])) drop[j] = true;
      }
    }
    for (size_t i = 0; i < list.size(); ++i)
      if (!drop[i]) {
        out.node_matrices[v].push_back(list[i]);
        if (v < node_paths.size() && i < node_paths[v].size())
          out.node_paths[v].push_back(node_paths[v][i]);
      }
  }
  return out;
}

QuadraticStorage truncated_storage(const SwitchingSystem& sys, double gamma,
                                   int K) {
  require_valid(sys);
  if (K < 1) throw std::invalid_argument("horizon K must be >= 1");
  const double floor = lower_bound(sys, K, 2.0);
  if (!(gamma > floor)) {
    std::ostringstream os;
    os << "gamma = " << gamma
       << " must exceed the truncated lower bound at K = " << K << ", which is "
       << floor;
    throw std::invalid_argument(os.str());
  }
  QuadraticStorage st;
  st.gamma = gamma;
  st.K = K;
  st.node_matrices.resize(sys.num_nodes());
  st.node_paths.resize(sys.num_nodes());
  for (int v = 0; v < sys.num_nodes(); ++v) {
    enumerate_paths(sys, K, v, std::nullopt, [&](const Path& pi) {
      st.node_matrices[v].push_back(storage_matrix_direct(sys, pi, gamma));
      st.node_paths[v].push_back(pi);
      return true;
    });
  }
  return st;
}

WorstCaseRun worst_case_disturbance(const SwitchingSystem& sys,
                                    const Path& pi, double gamma,
                                    const Vec& x0) {
  DpStorage dp = storage_matrix_dp(sys, pi, gamma);
  const auto seq = pi.node_seq(sys);
  if (x0.size() != sys.nodes[seq.front()].dim)
    throw std::invalid_argument("x0 dimension does not match the start node");
  WorstCaseRun run;
  run.path = pi;
  run.x0 = x0;
  run.gains = dp.gains;
  run.predicted = x0.dot(dp.G * x0);
  Vec x = x0;
  double obj = 0.0;
  for (int t = 0; t < pi.length(); ++t) {
    const EdgeSpec& e = sys.edges[pi.edge_ids[t]];
    run.x.push_back(x);
    Vec w = dp.gains[t] * x;
    Vec z = e.C * x + e.D * w;
    obj += z.squaredNorm() - gamma * gamma * w.squaredNorm();
    x = e.A * x + e.B * w;
    run.w.push_back(std::move(w));
    run.z.push_back(std::move(z));
  }
  run.x.push_back(x);
  run.attained = obj;
  return run;
}

HorizonFeasibility horizon_upper_bound_feasible(const SwitchingSystem& sys,
                                                int K, double gamma,
                                                const std::string& backend) {
  require_valid(sys);
  if (K < 1) throw std::invalid_argument("horizon K must be >= 1");
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");

  const std::vector<Path> paths = all_paths(sys, K);
  std::map<std::vector<int>, int> var_of;
  LmiProblem p;
  for (size_t i = 0; i < paths.size(); ++i) {
    const auto seq = paths[i].node_seq(sys);
    var_of[paths[i].edge_ids] = p.add_variable(sys.nodes[seq.front()].dim);
  }
  for (size_t i = 0; i < paths.size(); ++i)
    p.require_pos_def(static_cast<int>(i), -1.0,
                      "X" + label_string(sys, paths[i]));

  const int d = sys.input_dim;
  enumerate_paths(sys, K + 1, std::nullopt, std::nullopt,
                  [&](const Path& phi) {
                    const Path pi1 = subpath(phi, 1, K);
                    const Path pi2 = subpath(phi, 2, K + 1);
                    const EdgeSpec& e = sys.edges[phi.edge_ids[0]];
                    const int n1 = static_cast<int>(e.A.cols());
                    LmiConstraint c;
                    const Mat M2 = stack_CD(e);
                    c.constant =
                        M2.transpose() * M2 - blkdiag_gamma(n1, d, gamma * gamma);
                    c.terms.push_back({var_of.at(pi2.edge_ids), stack_AB(e), 1.0});
                    c.terms.push_back(
                        {var_of.at(pi1.edge_ids), eye_pad(n1, d), -1.0});
                    c.sense = ConstraintSense::LessEqual;
                    p.constraints.push_back(std::move(c));
                    return true;
                  });

  FeasibilityResult r = solve_feasibility(p, backend);
  HorizonFeasibility out;
  out.status = r.status;
  out.reason = r.reason;
  if (r.status == FeasStatus::Feasible) {
    out.certificate.gamma = gamma;
    out.certificate.K = K;
    out.certificate.paths = paths;
    out.certificate.X = std::move(r.witness);
  }
  return out;
}

UpperBoundResult upper_bound_bisect(const SwitchingSystem& sys, int K,
                                    double tol, const std::string& backend) {
  require_valid(sys);
  if (K < 1) throw std::invalid_argument("horizon K must be >= 1");
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");

  UpperBoundResult out;
  double lo = lower_bound(sys, K, 2.0);
  double cap = std::max(1.0, 2.0 * lo);
  bool found = false;
  for (int i = 0; i < 60 && !found; ++i) {
    HorizonFeasibility r = horizon_upper_bound_feasible(sys, K, cap, backend);
    if (r.status == FeasStatus::Feasible) {
      out.certificate = std::move(r.certificate);
      found = true;
      break;
    }
    if (r.status == FeasStatus::Inconclusive) out.solver_inconclusive = true;
    cap *= 2.0;
  }
  if (!found) throw NoUpperBoundError(K);
  double hi = cap;
  for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
    const double mid = 0.5 * (lo + hi);
    HorizonFeasibility r = horizon_upper_bound_feasible(sys, K, mid, backend);
    if (r.status == FeasStatus::Feasible) {
      hi = mid;
      out.certificate = std::move(r.certificate);
    } else {
      if (r.status == FeasStatus::Inconclusive) out.solver_inconclusive = true;
      lo = mid;
    }
  }
  out.gamma_hat = hi;
  return out;
}

GainBracket gain_bracket(const SwitchingSystem& sys, int K, double tol,
                         const std::string& backend) {
  require_valid(sys);
  auto [minsys, report] = minimize(sys);
  GainBracket br;
  br.minimized_dims = report.final_dims;
  br.was_minimal = true;
  for (int v = 0; v < sys.num_nodes(); ++v)
    if (sys.nodes[v].dim != report.final_dims[v]) br.was_minimal = false;

  br.stability_certificate = quadratic_cjsr_bound(minsys, 2, 1e-3, backend);
  br.stability = classify_stability(br.stability_certificate, 1e-3);
  if (br.stability == TriState::Unstable)
    throw UnstableSystemError(br.stability_certificate);
  if (br.stability == TriState::Unknown)
    br.notes += "stability unknown (rho in [" +
                std::to_string(br.stability_certificate.rho_lower) + ", " +
                std::to_string(br.stability_certificate.rho_upper) +
                "]); the gain may be unbounded. ";

  br.lower = lower_bound(minsys, K, 2.0);
  br.lower_K = K;
  try {
    UpperBoundResult ub = upper_bound_bisect(minsys, K, tol, backend);
    br.upper = ub.gamma_hat;
    br.upper_K = K;
    br.has_upper = true;
    br.upper_certificate = std::move(ub.certificate);
    if (ub.solver_inconclusive)
      br.notes += "some upper-bound probes were inconclusive. ";
  } catch (const NoUpperBoundError& e) {
    br.notes += e.what();
  }
  return br;
}

ScaledCheckResult converse_scaled_check(const SwitchingSystem& sys,
                                        const std::string& backend) {
  require_valid(sys);
  const int n = sys.nodes.front().dim;
  for (const auto& node : sys.nodes)
    if (node.dim != n)
      throw std::invalid_argument(
          "the converse check requires uniform node dimension");

  SwitchingSystem scaled = sys;
  const double s = std::sqrt(static_cast<double>(n));
  for (auto& e : scaled.edges) {
    e.A *= s;
    e.B *= s;
  }

  ScaledCheckResult out;
  HorizonFeasibility r1 = horizon_upper_bound_feasible(scaled, 1, 1.0, backend);
  out.scaled_status = r1.status;
  if (r1.status != FeasStatus::Feasible) return out;

  LmiProblem p;
  for (const auto& node : sys.nodes) p.add_variable(node.dim);
  for (int v = 0; v < sys.num_nodes(); ++v)
    p.require_pos_def(v, -1.0, "Q[" + sys.nodes[v].name + "]");
  const int d = sys.input_dim;
  for (const auto& e : sys.edges) {
    LmiConstraint c;
    const Mat M2 = stack_CD(e);
    c.constant = M2.transpose() * M2 - blkdiag_gamma(n, d, 1.0);
    c.terms.push_back({e.to, stack_AB(e), 1.0});
    c.terms.push_back({e.from, eye_pad(n, d), -1.0});
    c.sense = ConstraintSense::LessEqual;
    p.constraints.push_back(std::move(c));
  }
  FeasibilityResult r2 = solve_feasibility(p, backend);
  out.node_status = r2.status;
  if (r2.status == FeasStatus::Feasible) {
    out.passed = true;
    out.node_storage = std::move(r2.witness);
  }
  return out;
}

namespace {

// shared sampling loop; eval(node, x) is the storage evaluation
template <typename EvalFn>
double sample_violations(const SwitchingSystem& sys, const EvalFn& eval,
                         double gamma, int samples, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  double worst = -std::numeric_limits<double>::infinity();
  const int d = sys.input_dim;
  std::uniform_int_distribution<int> pick_edge(0, sys.num_edges() - 1);
  for (int s = 0; s < samples; ++s) {
    const EdgeSpec& e = sys.edges[pick_edge(rng)];
    const int n = static_cast<int>(e.A.cols());
    Vec xw(n + d);
    for (int i = 0; i < n + d; ++i) xw(i) = gauss(rng);
    const double nrm = xw.norm();
    if (nrm == 0) continue;
    xw /= nrm;
    const Vec x = xw.head(n), w = xw.tail(d);
    const Vec xn = e.A * x + e.B * w;
    const Vec z = e.C * x + e.D * w;
    const double viol = eval(e.to, xn) + z.squaredNorm() - eval(e.from, x) -
                        gamma * gamma * w.squaredNorm();
    worst = std::max(worst, viol);
  }
  return worst;
}

}  // namespace

DissipationReport verify_dissipation(const SwitchingSystem& sys,
                                     const std::vector<Mat>& node_quadratics,
                                     double gamma, int samples,
                                     unsigned seed) {
  require_valid(sys);
  if (static_cast<int>(node_quadratics.size()) != sys.num_nodes())
    throw std::invalid_argument("one quadratic per node required");
  DissipationReport rep;
  rep.exact = true;
  // exact eigenvalue check of every edge's dissipation residual
  double worst = -std::numeric_limits<double>::infinity();
  const int d = sys.input_dim;
  for (const auto& e : sys.edges) {
    const int n = static_cast<int>(e.A.cols());
    const Mat M1 = stack_AB(e), M2 = stack_CD(e);
    Mat R = M1.transpose() * node_quadratics[e.to] * M1 +
            M2.transpose() * M2 - blkdiag_gamma(n, d, gamma * gamma);
    R.topLeftCorner(n, n) -= node_quadratics[e.from];
    worst = std::max(worst, max_eig(R));
  }
  auto eval = [&](int v, const Vec& x) {
    return x.dot(node_quadratics[v] * x);
  };
  if (samples > 0) {
    std::mt19937_64 rng(seed);
    worst = std::max(worst, sample_violations(sys, eval, gamma, samples, rng));
    rep.samples = samples;
  }
  rep.max_violation = worst;
  return rep;
}

DissipationReport verify_dissipation(const SwitchingSystem& sys,
                                     const QuadraticStorage& storage,
                                     double gamma, int samples,
                                     unsigned seed) {
  require_valid(sys);
  if (static_cast<int>(storage.node_matrices.size()) != sys.num_nodes())
    throw std::invalid_argument("storage does not match the system's nodes");
  DissipationReport rep;
  std::mt19937_64 rng(seed);
  auto eval = [&](int v, const Vec& x) { return storage.evaluate(v, x); };
  double worst = sample_violations(sys, eval, gamma, samples, rng);
  long count = samples;

  // adversarial directions: top eigenvectors of residual quadratics for
  // (edge, G_to, G_from) triples, subsampled when the pair count is large
  const int d = sys.input_dim;
  const long cap = 20000;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long pairs = 0;
  for (const auto& e : sys.edges)
    pairs += static_cast<long>(storage.node_matrices[e.to].size()) *
             static_cast<long>(storage.node_matrices[e.from].size());
  const double keep = pairs <= cap ? 1.0 : static_cast<double>(cap) / pairs;
  for (const auto& e : sys.edges) {
    const int n = static_cast<int>(e.A.cols());
    const Mat M1 = stack_AB(e), M2 = stack_CD(e);
    const Mat out_part = M2.transpose() * M2 - blkdiag_gamma(n, d, gamma * gamma);
    for (const auto& Gto : storage.node_matrices[e.to])
      for (const auto& Gfrom : storage.node_matrices[e.from]) {
        if (keep < 1.0 && unit(rng) > keep) continue;
        Mat R = M1.transpose() * Gto * M1 + out_part;
        R.topLeftCorner(n, n) -= Gfrom;
        const Vec xw = top_eigvec(R);
        const Vec x = xw.head(n), w = xw.tail(d);
        const Vec xn = e.A * x + e.B * w;
        const Vec z = e.C * x + e.D * w;
        const double viol = eval(e.to, xn) + z.squaredNorm() -
                            eval(e.from, x) -
                            gamma * gamma * w.squaredNorm();
        worst = std::max(worst, viol);
        ++count;
      }
  }
  rep.max_violation = worst;
  rep.samples = count;
  return rep;
}

QuadraticStorage storage_from_certificate(const SwitchingSystem& sys,
                                          const HorizonCertificate& cert) {
  QuadraticStorage st;
  st.gamma = cert.gamma;
  st.K = cert.K;
  st.node_matrices.resize(sys.num_nodes());
  st.node_paths.resize(sys.num_nodes());
  for (size_t i = 0; i < cert.paths.size(); ++i) {
    const int v = cert.paths[i].node_seq(sys).front();
    st.node_matrices[v].push_back(cert.X[i]);
    st.node_paths[v].push_back(cert.paths[i]);
  }
  return st;
}

}  // namespace switchgain
