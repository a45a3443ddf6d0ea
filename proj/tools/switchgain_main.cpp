#include <CLI11.hpp>
#include <json.hpp>

#include "switchgain/io.hpp"
#include "switchgain/realization.hpp"
#include "switchgain/stability.hpp"
#include "switchgain/storage_gain.hpp"
#include "switchgain/system.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

namespace {

using nlohmann::json;
using namespace switchgain;

// exit codes: 0 success, 1 validation/usage error, 2 unstable or infeasible,
// 3 inconclusive (no certificate either way)
constexpr int kOk = 0, kInvalid = 1, kNegative = 2, kInconclusive = 3;

json mat_json(const Mat& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open '" + out + "' for writing");
  f << j.dump(2) << "\n";
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_doubles(s)) out.push_back(static_cast<int>(v));
  return out;
}

double parse_p(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return kNormInf;
  if (s == "1") return 1.0;
  if (s == "2") return 2.0;
  throw std::invalid_argument("--p must be 1, 2, or inf");
}

json stability_json(const StabilityCertificate& c) {
  return {{"rho_upper", c.rho_upper},
          {"rho_lower", c.rho_lower},
          {"horizon", c.T},
          {"lmi_certified", c.lmi_certified},
          {"solver_inconclusive", c.solver_inconclusive}};
}

json certificate_json(const SwitchingSystem& sys, const HorizonCertificate& c,
                      bool full) {
  json j{{"gamma", c.gamma}, {"horizon", c.K},
         {"num_paths", c.paths.size()}};
  if (full) {
    json items = json::array();
    for (size_t i = 0; i < c.paths.size(); ++i)
      items.push_back({{"labels", c.paths[i].labels(sys)},
                       {"X", mat_json(c.X[i])}});
    j["X"] = std::move(items);
  }
  return j;
}

// trace a label sequence from a start node; returns edge ids or empty
bool trace_labels(const SwitchingSystem& sys, int start,
                  const std::vector<int>& labels, std::vector<int>& ids) {
  ids.clear();
  const auto out = sys.out_edges();
  int v = start;
  for (int lab : labels) {
    int found = -1;
    for (int eid : out[v])
      if (sys.edges[eid].label == lab) {
        found = eid;
        break;
      }
    if (found < 0) return false;
    ids.push_back(found);
    v = sys.edges[found].to;
  }
  return true;
}

int cmd_validate(const std::string& file) {
  std::ifstream in(file);
  if (!in) {
    std::cerr << "error: cannot open '" << file << "'\n";
    return kInvalid;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  SwitchingSystem sys;
  try {
    sys = system_from_json_text(buf.str(), "'" + file + "'");
  } catch (const std::exception& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kInvalid;
  }
  json dims = json::array();
  for (const auto& n : sys.nodes) dims.push_back({{"name", n.name}, {"dim", n.dim}});
  emit({{"valid", true},
        {"nodes", dims},
        {"num_edges", sys.num_edges()},
        {"input_dim", sys.input_dim},
        {"output_dim", sys.output_dim},
        {"minimal", is_minimal(sys)}},
       "");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "switchgain: certified L2-gain brackets, storage functions and "
      "minimal realizations for linear systems switching on a graph"};
  app.require_subcommand(1);

  std::string file, out, solver, node, p_str = "2", path_str, x0_str, start;
  std::string report_file;
  int K = 1, T = 2, resolution = 256, verify_samples = 0;
  unsigned seed = 1;
  double tol = 1e-3, gamma = 0.0, rank_tol = 0.0;
  bool prune = false, full = false;

  auto add_common = [&](CLI::App* sub, bool needs_file = true) {
    if (needs_file)
      sub->add_option("file", file, "system JSON file")->required();
    sub->add_option("--out", out, "write the result here instead of stdout");
    sub->add_option("--solver", solver,
                    "PSD feasibility backend (default: SWITCHGAIN_SOLVER "
                    "env var or 'ipm')");
  };

  auto* v = app.add_subcommand("validate", "check a system file");
  add_common(v);

  auto* mn = app.add_subcommand("minimize", "compute a minimal realization");
  add_common(mn);
  mn->add_option("--tol", rank_tol, "rank tolerance (default: automatic)");
  mn->add_option("--report", report_file, "write the reduction report here");

  auto* st = app.add_subcommand("stability",
                                "quadratic bound on the joint spectral radius");
  add_common(st);
  st->add_option("--horizon", T, "lift horizon T (default 2)");
  st->add_option("--tol", tol, "bisection tolerance (default 1e-3)");

  auto* lo = app.add_subcommand("lower", "truncated lower bound on the gain");
  add_common(lo);
  lo->add_option("--horizon", K, "path length K")->required();
  lo->add_option("--p", p_str, "norm: 1, 2 or inf (default 2)");

  auto* up = app.add_subcommand("upper", "certified upper bound on the gain");
  add_common(up);
  up->add_option("--horizon", K, "path length K")->required();
  up->add_option("--tol", tol, "bisection tolerance (default 1e-3)");
  up->add_flag("--full", full, "embed certificate matrices in the output");
  up->add_option("--verify-samples", verify_samples,
                 "sample count for dissipation re-verification (default 0)");
  up->add_option("--seed", seed, "seed for sampled verification");

  auto* br = app.add_subcommand("bracket", "lower and upper gain bounds");
  add_common(br);
  br->add_option("--horizon", K, "path length K")->required();
  br->add_option("--tol", tol, "bisection tolerance (default 1e-3)");
  br->add_option("--verify-samples", verify_samples,
                 "sample count for dissipation re-verification (default 0)");
  br->add_option("--seed", seed, "seed for sampled verification");

  auto* sg = app.add_subcommand("storage",
                                "truncated storage function and level sets");
  add_common(sg);
  sg->add_option("--gamma", gamma, "gamma > truncated lower bound")->required();
  sg->add_option("--horizon", K, "path length K")->required();
  sg->add_option("--node", node, "node for level-set emission (dim 2 or 3)");
  sg->add_option("--resolution", resolution, "directions per section");
  sg->add_flag("--prune", prune, "drop dominated quadratics");

  auto* wc = app.add_subcommand("worst-case",
                                "worst-case disturbance along a path");
  add_common(wc);
  wc->add_option("--path", path_str, "comma-separated edge labels")->required();
  wc->add_option("--gamma", gamma, "gamma > ||D_pi||_2")->required();
  wc->add_option("--x0", x0_str, "comma-separated initial state")->required();
  wc->add_option("--start", start, "start node (when the labels are ambiguous)");

  auto* ex = app.add_subcommand("example-pendulum",
                                "emit the delayed-LQR pendulum system");
  add_common(ex, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (v->parsed()) return cmd_validate(file);

    if (ex->parsed()) {
      const PendulumModel m = pendulum_default_model();
      const SwitchingSystem sys = pendulum_example();
      if (!out.empty()) {
        save_system(sys, out);
        emit({{"written", out},
              {"A", mat_json(m.A)},
              {"B", mat_json(m.B)},
              {"K", mat_json(m.K)}},
             "");
      } else {
        std::cout << system_to_json_text(sys) << "\n";
      }
      return kOk;
    }

    const SwitchingSystem sys = load_system(file);

    if (mn->parsed()) {
      auto [minsys, report] = minimize(sys, rank_tol);
      json rep{{"dims_per_iteration", report.dims_per_iteration},
               {"final_dims", report.final_dims},
               {"reached_zero", report.reached_zero},
               {"ambiguous", report.ambiguous}};
      if (!report_file.empty()) emit(rep, report_file);
      if (!out.empty()) {
        save_system(minsys, out);
        rep["written"] = out;
        emit(rep, "");
      } else {
        std::cout << system_to_json_text(minsys) << "\n";
      }
      return kOk;
    }

    if (st->parsed()) {
      const StabilityCertificate cert = quadratic_cjsr_bound(sys, T, tol, solver);
      const TriState s = classify_stability(cert, tol);
      json j = stability_json(cert);
      j["status"] = to_string(s);
      emit(j, out);
      if (s == TriState::Stable) return kOk;
      return s == TriState::Unstable ? kNegative : kInconclusive;
    }

    if (lo->parsed()) {
      const double p = parse_p(p_str);
      const double val = lower_bound(sys, K, p);
      emit({{"gamma_check", val}, {"horizon", K}, {"p", p_str}}, out);
      return kOk;
    }

    if (up->parsed()) {
      const UpperBoundResult ub = upper_bound_bisect(sys, K, tol, solver);
      json j{{"gamma_hat", ub.gamma_hat},
             {"horizon", K},
             {"tol", tol},
             {"solver_inconclusive", ub.solver_inconclusive},
             {"certificate", certificate_json(sys, ub.certificate, full)}};
      if (verify_samples > 0) {
        const auto rep = verify_dissipation(
            sys, storage_from_certificate(sys, ub.certificate),
            ub.certificate.gamma, verify_samples, seed);
        j["verification"] = {{"max_violation", rep.max_violation},
                             {"samples", rep.samples}};
      }
      emit(j, out);
      return kOk;
    }

    if (br->parsed()) {
      const GainBracket b = gain_bracket(sys, K, tol, solver);
      if (!b.notes.empty()) std::cerr << "warning: " << b.notes << "\n";
      json j{{"p", 2},
             {"lower", b.lower},
             {"lower_K", b.lower_K},
             {"has_upper", b.has_upper},
             {"stability", to_string(b.stability)},
             {"was_minimal", b.was_minimal},
             {"minimized_dims", b.minimized_dims},
             {"stability_certificate", stability_json(b.stability_certificate)},
             {"notes", b.notes}};
      if (b.has_upper) {
        j["upper"] = b.upper;
        j["upper_K"] = b.upper_K;
        if (verify_samples > 0) {
          const auto rep = verify_dissipation(
              sys, storage_from_certificate(sys, b.upper_certificate),
              b.upper_certificate.gamma, verify_samples, seed);
          j["verification"] = {{"max_violation", rep.max_violation},
                               {"samples", rep.samples}};
        }
      }
      emit(j, out);
      return b.has_upper ? kOk : kInconclusive;
    }

    if (sg->parsed()) {
      QuadraticStorage storage = truncated_storage(sys, gamma, K);
      if (prune) storage = storage.pruned();
      json per_node = json::array();
      for (int vi = 0; vi < sys.num_nodes(); ++vi)
        per_node.push_back({{"name", sys.nodes[vi].name},
                            {"matrices", storage.node_matrices[vi].size()}});
      json j{{"gamma", gamma}, {"horizon", K}, {"nodes", per_node}};
      if (!node.empty()) {
        const LevelSetData data = emit_level_sets(sys, storage, node, resolution);
        if (!out.empty()) {
          write_level_set_csv(data, out);
          j["level_set_csv"] = out;
          emit(j, "");
        } else {
          json secs = json::array();
          for (size_t s = 0; s < data.polylines.size(); ++s) {
            json pts = json::array();
            for (const auto& q : data.polylines[s]) {
              json pt = json::array();
              for (int c = 0; c < q.size(); ++c) pt.push_back(q(c));
              pts.push_back(std::move(pt));
            }
            secs.push_back({{"section", data.section_names[s]},
                            {"points", std::move(pts)}});
          }
          j["level_sets"] = std::move(secs);
          emit(j, "");
        }
      } else {
        emit(j, out);
      }
      return kOk;
    }

    if (wc->parsed()) {
      const std::vector<int> labels = parse_ints(path_str);
      if (labels.empty()) throw std::invalid_argument("--path is empty");
      std::vector<int> ids;
      int start_node = -1;
      if (!start.empty()) {
        start_node = sys.node_index(start);
        if (start_node < 0)
          throw std::invalid_argument("unknown start node '" + start + "'");
        if (!trace_labels(sys, start_node, labels, ids))
          throw std::invalid_argument(
              "the label sequence is not a path from node '" + start + "'");
      } else {
        int hits = 0;
        std::vector<int> tmp;
        for (int cand = 0; cand < sys.num_nodes(); ++cand)
          if (trace_labels(sys, cand, labels, tmp)) {
            ++hits;
            start_node = cand;
            ids = tmp;
          }
        if (hits == 0)
          throw std::invalid_argument(
              "the label sequence is not a path from any node");
        if (hits > 1)
          throw std::invalid_argument(
              "the label sequence starts at multiple nodes; pass --start");
      }
      Path pi{ids};
      const std::vector<double> x0v = parse_doubles(x0_str);
      Vec x0(x0v.size());
      for (size_t i = 0; i < x0v.size(); ++i) x0(i) = x0v[i];
      const WorstCaseRun run = worst_case_disturbance(sys, pi, gamma, x0);
      auto vecs_json = [](const std::vector<Vec>& vs) {
        json arr = json::array();
        for (const auto& q : vs) {
          json one = json::array();
          for (int c = 0; c < q.size(); ++c) one.push_back(q(c));
          arr.push_back(std::move(one));
        }
        return arr;
      };
      json gains = json::array();
      for (const auto& g : run.gains) gains.push_back(mat_json(g));
      emit({{"start", sys.nodes[start_node].name},
            {"labels", labels},
            {"gamma", gamma},
            {"predicted", run.predicted},
            {"attained", run.attained},
            {"w", vecs_json(run.w)},
            {"x", vecs_json(run.x)},
            {"z", vecs_json(run.z)},
            {"gains", gains}},
           out);
      return kOk;
    }
  } catch (const UnstableSystemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNegative;
  } catch (const NoUpperBoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInconclusive;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}
