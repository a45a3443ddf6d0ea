#include "switchgain/psd.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace switchgain {

int LmiProblem::add_variable(int dim) {
  if (dim < 0) throw std::invalid_argument("variable dim must be >= 0");
  var_dims.push_back(dim);
  return static_cast<int>(var_dims.size()) - 1;
}

void LmiProblem::require_pos_def(int var, double margin, std::string name) {
  LmiConstraint c;
  const int s = var_dims.at(var);
  c.constant = Mat::Zero(s, s);
  c.terms.push_back({var, Mat::Identity(s, s), 1.0});
  c.sense = ConstraintSense::GreaterEqual;
  c.strict = true;
  c.margin = margin;
  c.name = name.empty() ? "variable " + std::to_string(var) + " pos def"
                        : std::move(name);
  constraints.push_back(std::move(c));
}

Mat LmiProblem::evaluate(int constraint, const std::vector<Mat>& w) const {
  const auto& c = constraints.at(constraint);
  Mat expr = c.constant;
  for (const auto& t : c.terms)
    expr += t.sign * t.M.transpose() * w.at(t.var) * t.M;
  return expr;
}

double LmiProblem::strict_margin(int constraint) const {
  const auto& c = constraints.at(constraint);
  if (c.margin > 0.0) return c.margin;
  double scale = c.constant.size() > 0 ? c.constant.cwiseAbs().maxCoeff() : 0.0;
  return 1e-8 * std::max(1.0, scale);
}

double verify_witness(const LmiProblem& p, const std::vector<Mat>& witness,
                      bool& ok) {
  ok = true;
  double worst = 0.0;
  for (size_t ci = 0; ci < p.constraints.size(); ++ci) {
    const auto& c = p.constraints[ci];
    if (c.constant.rows() == 0) continue;
    Mat expr = p.evaluate(static_cast<int>(ci), witness);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (expr + expr.transpose()),
                                          Eigen::EigenvaluesOnly);
    // violation > 0 fails: non-strict constraints get an absolute 1e-7 band
    // (scale-relative bands would swallow genuine violations when the
    // constants are large), strict ones retain half their fold margin.
    double violation;
    if (c.sense == ConstraintSense::LessEqual) {
      const double bound =
          c.strict ? -p.strict_margin(static_cast<int>(ci)) / 2 : 1e-7;
      violation = es.eigenvalues().maxCoeff() - bound;
    } else {
      const double bound =
          c.strict ? p.strict_margin(static_cast<int>(ci)) / 2 : -1e-7;
      violation = bound - es.eigenvalues().minCoeff();
    }
    worst = std::max(worst, violation);
    if (violation > 0) ok = false;
  }
  return worst;
}

namespace {

// ---------- canonical form ----------
// Each constraint becomes one block G(y) = G0 + sum_c y_c G_c required PSD.
// Strict constraints fold their margin into G0; every block is rescaled by
// max(1, |constant|_inf). Terms stay factored: a term contributes
// sign * M^T X M with sqrt of the magnitude absorbed into M, so the
// per-coordinate matrices are the rank-two forms
//   G_c = sign * f_c * (m_p m_q^T + m_q m_p^T),  f_c = 1/2 if p == q else 1,
// with m_p the p-th row of M. All Schur-complement entries reduce to Gram
// lookups G(a,b) = (M W M'^T)(a,b), never materializing any G_c.

struct CanonTerm {
  int var = -1;
  double sign = 1.0;
  Mat M;  // var_dim x r
};

struct CanonBlock {
  int constraint = -1;
  int r = 0;
  Mat G0;
  std::vector<CanonTerm> terms;
};

struct VarLayout {
  std::vector<int> offset;
  int total = 0;
};

VarLayout layout_vars(const LmiProblem& p) {
  VarLayout L;
  L.offset.resize(p.var_dims.size());
  for (size_t v = 0; v < p.var_dims.size(); ++v) {
    L.offset[v] = L.total;
    L.total += p.var_dims[v] * (p.var_dims[v] + 1) / 2;
  }
  return L;
}

// coordinate of entry (p,q), p <= q, of variable var
inline int coord_of(const VarLayout& L, int var, int p, int q) {
  return L.offset[var] + q * (q + 1) / 2 + p;
}

Mat sym_from_vector(const VarLayout& L, const LmiProblem& prob, int var,
                    const Eigen::VectorXd& y) {
  const int s = prob.var_dims[var];
  Mat X(s, s);
  for (int q = 0; q < s; ++q)
    for (int p = 0; p <= q; ++p) {
      const double v = y(coord_of(L, var, p, q));
      X(p, q) = v;
      X(q, p) = v;
    }
  return X;
}

std::vector<CanonBlock> canonicalize(const LmiProblem& p) {
  std::vector<CanonBlock> blocks;
  for (size_t ci = 0; ci < p.constraints.size(); ++ci) {
    const auto& c = p.constraints[ci];
    const int r = static_cast<int>(c.constant.rows());
    if (r == 0) continue;
    if (c.constant.cols() != r)
      throw std::invalid_argument("constraint constant is not square");
    const double flip = c.sense == ConstraintSense::GreaterEqual ? 1.0 : -1.0;
    const double scale = std::max(1.0, c.constant.cwiseAbs().maxCoeff());
    CanonBlock b;
    b.constraint = static_cast<int>(ci);
    b.r = r;
    Mat g0 = flip * 0.5 * (c.constant + c.constant.transpose());
    if (c.strict)
      g0 -= p.strict_margin(static_cast<int>(ci)) * Mat::Identity(r, r);
    b.G0 = g0 / scale;
    for (const auto& t : c.terms) {
      if (t.M.rows() != p.var_dims.at(t.var) || t.M.cols() != r)
        throw std::invalid_argument("congruence term shape mismatch");
      if (p.var_dims[t.var] == 0 || t.sign == 0.0) continue;
      const double coeff = flip * t.sign / scale;
      CanonTerm ct;
      ct.var = t.var;
      ct.sign = coeff < 0 ? -1.0 : 1.0;
      ct.M = std::sqrt(std::abs(coeff)) * t.M;
      b.terms.push_back(std::move(ct));
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

// ---------- interior point backend ----------
// Phase-one margin problem: minimize t subject to G_b(y) + t I >= 0 for all
// blocks and t >= -1 (a scalar box keeping the dual bounded). The iterate
// stays exactly dual feasible, so the moment t < 0 the current y is a strict
// interior point of the original system. Infeasibility is certified by a
// separating matrix (normalized primal iterate) that is verified explicitly.

Mat spd_sqrt(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Largest step alpha <= cap keeping X + alpha dX psd.
double psd_step(const Mat& X, const Mat& dX, double cap) {
  if (X.rows() == 0) return cap;
  Eigen::LLT<Mat> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  Mat Li = llt.matrixL().solve(Mat::Identity(X.rows(), X.rows()));
  Mat T = Li * dX * Li.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (T + T.transpose()),
                                        Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return cap;
  return std::min(cap, -1.0 / lmin);
}

FeasibilityResult ipm_solve(const LmiProblem& prob) {
  FeasibilityResult res;
  const VarLayout L = layout_vars(prob);
  const std::vector<CanonBlock> blocks = canonicalize(prob);
  const int NC = L.total;
  const int N = NC + 1;  // + phase-one margin t
  const int NB = static_cast<int>(blocks.size());

  auto make_witness = [&](const Eigen::VectorXd& y) {
    std::vector<Mat> wit(prob.var_dims.size());
    for (size_t v = 0; v < prob.var_dims.size(); ++v)
      wit[v] = sym_from_vector(L, prob, static_cast<int>(v), y);
    return wit;
  };

  if (NB == 0) {
    res.status = FeasStatus::Feasible;
    res.witness = make_witness(Eigen::VectorXd::Zero(NC));
    return res;
  }
  if (NC == 0) {
    // constant problem: classify directly by eigenvalues
    std::vector<Mat> wit = make_witness(Eigen::VectorXd());
    bool ok = false;
    res.residual = verify_witness(prob, wit, ok);
    res.status = ok ? FeasStatus::Feasible : FeasStatus::Infeasible;
    if (ok) res.witness = std::move(wit);
    return res;
  }

  Eigen::VectorXd y = Eigen::VectorXd::Zero(NC);
  double t = 1.0;
  for (const auto& b : blocks) {
    Eigen::SelfAdjointEigenSolver<Mat> es(b.G0, Eigen::EigenvaluesOnly);
    t = std::max(t, -es.eigenvalues().minCoeff() + 1.0);
  }

  double nu = 1.0;
  for (const auto& b : blocks) nu += b.r;

  std::vector<Mat> S(NB), Z(NB), W(NB), Sinv(NB);
  double s_box = 0.0, z_box = 1.0 / nu, w_box = 0.0;
  for (int bi = 0; bi < NB; ++bi)
    Z[bi] = Mat::Identity(blocks[bi].r, blocks[bi].r) / nu;

  auto refresh_S = [&]() {
    for (int bi = 0; bi < NB; ++bi) {
      const auto& b = blocks[bi];
      Mat Sb = b.G0 + t * Mat::Identity(b.r, b.r);
      for (const auto& ct : b.terms)
        Sb += ct.sign * ct.M.transpose() *
              sym_from_vector(L, prob, ct.var, y) * ct.M;
      S[bi] = 0.5 * (Sb + Sb.transpose());
    }
    s_box = 1.0 + t;
  };
  refresh_S();

  Eigen::SparseMatrix<double> Mschur(N, N);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
  bool analyzed = false;

  auto try_witness = [&]() {
    std::vector<Mat> wit = make_witness(y);
    bool ok = false;
    const double resid = verify_witness(prob, wit, ok);
    if (ok) {
      res.status = FeasStatus::Feasible;
      res.witness = std::move(wit);
      res.residual = resid;
      return true;
    }
    return false;
  };

  // <G_c, Z> accumulated over blocks, and <G0, Z>; shared by the primal
  // residual and the separation certificate.
  auto primal_inner = [&](Eigen::VectorXd& gz, double& g0z, double& trace) {
    gz.setZero(NC);
    g0z = 0.0;
    trace = z_box;
    for (int bi = 0; bi < NB; ++bi) {
      const auto& b = blocks[bi];
      trace += Z[bi].trace();
      g0z += (b.G0.array() * Z[bi].array()).sum();
      for (const auto& ct : b.terms) {
        Mat P = ct.M * Z[bi] * ct.M.transpose();
        const int s = static_cast<int>(P.rows());
        for (int q = 0; q < s; ++q)
          for (int p = 0; p <= q; ++p)
            gz(coord_of(L, ct.var, p, q)) +=
                ct.sign * (p == q ? 1.0 : 2.0) * P(p, q);
      }
    }
  };

  double mu_prev = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int iter = 0; iter < 120; ++iter) {
    res.iterations = iter + 1;
    if (t < -1e-12 && try_witness()) return res;

    double mu = z_box * s_box;
    for (int bi = 0; bi < NB; ++bi)
      mu += (Z[bi].array() * S[bi].array()).sum();
    mu /= nu;

    Eigen::VectorXd gz;
    double g0z = 0.0, trz = 0.0;
    primal_inner(gz, g0z, trz);
    const double rp = std::max(gz.cwiseAbs().maxCoeff(), std::abs(trz - 1.0));

    auto farkas_verified = [&]() {
      if (trz <= 0) return false;
      const double negval = g0z / trz;
      const double eta = gz.cwiseAbs().maxCoeff() / trz;
      return negval <= -1e-7 && eta <= 1e-7 * std::abs(negval);
    };

    if (t > 1e-9 && rp < 1e-7 && mu < 1e-7 * (1.0 + t) && farkas_verified()) {
      res.status = FeasStatus::Infeasible;
      return res;
    }
    if (mu < 1e-13 && rp < 1e-10) {
      if (try_witness()) return res;
      if (farkas_verified()) {
        res.status = FeasStatus::Infeasible;
        return res;
      }
      std::ostringstream os;
      os << "converged with marginal phase-one margin t=" << t;
      res.status = FeasStatus::Inconclusive;
      res.reason = os.str();
      return res;
    }
    if (mu > 0.98 * mu_prev) {
      if (++stall > 12) {
        if (try_witness()) return res;
        res.status = FeasStatus::Inconclusive;
        res.reason = "stalled at mu=" + std::to_string(mu);
        return res;
      }
    } else {
      stall = 0;
    }
    mu_prev = mu;

    for (int bi = 0; bi < NB; ++bi) {
      Eigen::LLT<Mat> llt(S[bi]);
      if (llt.info() != Eigen::Success) {
        res.status = FeasStatus::Inconclusive;
        res.reason = "dual block lost definiteness";
        return res;
      }
      Mat Shalf = spd_sqrt(S[bi]);
      Mat inner = spd_sqrt(Shalf * Z[bi] * Shalf);
      Mat Sih = Shalf.inverse();
      W[bi] = Sih * inner * Sih;
      W[bi] = 0.5 * (W[bi] + W[bi].transpose());
      Sinv[bi] = llt.solve(Mat::Identity(blocks[bi].r, blocks[bi].r));
    }
    w_box = std::sqrt(z_box / s_box);

    // Schur matrix M_ij = sum_b <G_i, W G_j W> (t treated as coordinate NC
    // with G_t = I), and asinv_i = sum_b <G_i, S^-1>.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(N) * 16);
    Eigen::VectorXd asinv = Eigen::VectorXd::Zero(N);
    asinv(NC) = 1.0 / s_box;
    std::vector<double> trow(NC, 0.0);
    double m_tt = w_box * w_box;

    for (int bi = 0; bi < NB; ++bi) {
      const auto& b = blocks[bi];
      const Mat& Wb = W[bi];
      const Mat W2 = Wb * Wb;
      asinv(NC) += Sinv[bi].trace();
      m_tt += W2.trace();
      const int nt = static_cast<int>(b.terms.size());
      std::vector<Mat> PW2(nt), PSinv(nt);
      for (int a = 0; a < nt; ++a) {
        PW2[a] = b.terms[a].M * W2 * b.terms[a].M.transpose();
        PSinv[a] = b.terms[a].M * Sinv[bi] * b.terms[a].M.transpose();
      }
      for (int a = 0; a < nt; ++a) {
        const auto& ta = b.terms[a];
        const int sa = static_cast<int>(ta.M.rows());
        for (int q = 0; q < sa; ++q)
          for (int p = 0; p <= q; ++p) {
            const int c = coord_of(L, ta.var, p, q);
            const double f = p == q ? 1.0 : 2.0;
            asinv(c) += ta.sign * f * PSinv[a](p, q);
            trow[c] += ta.sign * f * PW2[a](p, q);
          }
        for (int a2 = a; a2 < nt; ++a2) {
          const auto& tb = b.terms[a2];
          const int sb = static_cast<int>(tb.M.rows());
          const Mat G = ta.M * Wb * tb.M.transpose();  // sa x sb Gram
          const double ss = ta.sign * tb.sign;
          for (int q1 = 0; q1 < sa; ++q1)
            for (int p1 = 0; p1 <= q1; ++p1) {
              const int c1 = coord_of(L, ta.var, p1, q1);
              const double f1 = p1 == q1 ? 1.0 : 2.0;  // 2*f_c
              for (int q2 = 0; q2 < sb; ++q2)
                for (int p2 = 0; p2 <= q2; ++p2) {
                  const int c2 = coord_of(L, tb.var, p2, q2);
                  if (a2 == a && c2 < c1) continue;
                  const double f2 = p2 == q2 ? 1.0 : 2.0;
                  double val = ss * 0.5 * f1 * f2 *
                               (G(p1, p2) * G(q1, q2) + G(p1, q2) * G(q1, p2));
                  // distinct terms hitting the same coordinate pair need the
                  // ordered-pair double count on the diagonal slot
                  if (a2 != a && c1 == c2) val *= 2.0;
                  trips.emplace_back(std::max(c1, c2), std::min(c1, c2), val);
                }
            }
        }
      }
    }
    for (int c = 0; c < NC; ++c)
      if (trow[c] != 0.0) trips.emplace_back(NC, c, trow[c]);
    trips.emplace_back(NC, NC, m_tt);
    for (int c = 0; c < N; ++c) trips.emplace_back(c, c, 1e-12);

    Mschur.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(Mschur);
      analyzed = true;
    }
    ldlt.factorize(Mschur);
    if (ldlt.info() != Eigen::Success) {
      res.status = FeasStatus::Inconclusive;
      res.reason = "Schur factorization failed";
      return res;
    }

    Eigen::VectorXd bvec = Eigen::VectorXd::Zero(N);
    bvec(NC) = -1.0;

    Eigen::VectorXd du;
    std::vector<Mat> dS(NB), dZ(NB);
    double ds_box = 0.0, dz_box = 0.0;
    auto direction = [&](double sigmamu) {
      du = ldlt.solve(bvec + sigmamu * asinv);
      for (int bi = 0; bi < NB; ++bi) {
        const auto& b = blocks[bi];
        Mat dSb = du(NC) * Mat::Identity(b.r, b.r);
        for (const auto& ct : b.terms)
          dSb += ct.sign * ct.M.transpose() *
                 sym_from_vector(L, prob, ct.var, du) * ct.M;
        dS[bi] = 0.5 * (dSb + dSb.transpose());
        Mat dZb = sigmamu * Sinv[bi] - Z[bi] - W[bi] * dS[bi] * W[bi];
        dZ[bi] = 0.5 * (dZb + dZb.transpose());
      }
      ds_box = du(NC);
      dz_box = sigmamu / s_box - z_box - w_box * w_box * ds_box;
    };

    // predictor: pure affine step to gauge the centering weight
    direction(0.0);
    double ap = 1.0, ad = 1.0;
    for (int bi = 0; bi < NB; ++bi) {
      ap = std::min(ap, psd_step(Z[bi], dZ[bi], 1.0));
      ad = std::min(ad, psd_step(S[bi], dS[bi], 1.0));
    }
    if (dz_box < 0) ap = std::min(ap, -z_box / dz_box);
    if (ds_box < 0) ad = std::min(ad, -s_box / ds_box);
    double mu_aff = (z_box + ap * dz_box) * (s_box + ad * ds_box);
    for (int bi = 0; bi < NB; ++bi)
      mu_aff +=
          ((Z[bi] + ap * dZ[bi]).array() * (S[bi] + ad * dS[bi]).array())
              .sum();
    mu_aff /= nu;
    double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
    sigma = std::min(std::max(sigma, 1e-8), 0.99);

    // corrector reuses the factorization
    direction(sigma * mu);
    ap = ad = 1.0;
    for (int bi = 0; bi < NB; ++bi) {
      ap = std::min(ap, 0.98 * psd_step(Z[bi], dZ[bi], 1.0 / 0.98));
      ad = std::min(ad, 0.98 * psd_step(S[bi], dS[bi], 1.0 / 0.98));
    }
    if (dz_box < 0) ap = std::min(ap, -0.98 * z_box / dz_box);
    if (ds_box < 0) ad = std::min(ad, -0.98 * s_box / ds_box);

    for (int bi = 0; bi < NB; ++bi) Z[bi] += ap * dZ[bi];
    z_box += ap * dz_box;
    y += ad * du.head(NC);
    t += ad * du(NC);
    refresh_S();
  }

  if (try_witness()) return res;
  res.status = FeasStatus::Inconclusive;
  res.reason = "iteration limit reached";
  return res;
}

// ---------- registry ----------

std::map<std::string, SolverBackend>& registry() {
  static std::map<std::string, SolverBackend> reg{{"ipm", ipm_solve}};
  return reg;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_solver(const std::string& name, SolverBackend backend) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(backend);
}

std::vector<std::string> registered_solvers() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [k, v] : registry()) names.push_back(k);
  return names;
}

FeasibilityResult solve_feasibility(const LmiProblem& p,
                                    const std::string& backend) {
  std::string name = backend;
  if (name.empty()) {
    const char* env = std::getenv("SWITCHGAIN_SOLVER");
    name = env && *env ? env : "ipm";
  }
  SolverBackend fn;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end())
      throw std::invalid_argument("unknown PSD backend '" + name + "'");
    fn = it->second;
  }
  FeasibilityResult res = fn(p);
  if (res.status == FeasStatus::Feasible) {
    // witness verification is independent of the backend
    bool ok = false;
    res.residual = verify_witness(p, res.witness, ok);
    if (!ok) {
      res.status = FeasStatus::Inconclusive;
      res.reason = "backend witness failed verification";
      res.witness.clear();
    }
  }
  return res;
}

}  // namespace switchgain
