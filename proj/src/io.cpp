#include "switchgain/io.hpp"

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace switchgain {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

const json& need(const json& j, const char* field, const std::string& ctx) {
  if (!j.is_object()) fail(ctx + " must be a JSON object");
  auto it = j.find(field);
  if (it == j.end()) fail("missing field '" + std::string(field) + "' in " + ctx);
  return *it;
}

int need_int(const json& j, const char* field, const std::string& ctx) {
  const json& v = need(j, field, ctx);
  if (!v.is_number_integer())
    fail("field '" + std::string(field) + "' in " + ctx + " must be an integer");
  return v.get<int>();
}

std::string need_str(const json& j, const char* field, const std::string& ctx) {
  const json& v = need(j, field, ctx);
  if (!v.is_string())
    fail("field '" + std::string(field) + "' in " + ctx + " must be a string");
  return v.get<std::string>();
}

// rows x cols from nested arrays; [] is accepted as an empty matrix whose
// shape is taken from the expected dims (shape information is not
// representable for zero-row matrices).
Mat matrix_from_json(const json& v, const std::string& ctx, int expect_rows,
                     int expect_cols) {
  if (!v.is_array()) fail(ctx + " must be an array of rows");
  const int rows = static_cast<int>(v.size());
  if (rows == 0) return Mat::Zero(std::max(expect_rows, 0), std::max(expect_cols, 0));
  if (!v[0].is_array()) fail(ctx + " rows must be arrays");
  const int cols = static_cast<int>(v[0].size());
  Mat M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (!v[r].is_array() || static_cast<int>(v[r].size()) != cols)
      fail(ctx + " rows have inconsistent lengths");
    for (int c = 0; c < cols; ++c) {
      if (!v[r][c].is_number()) fail(ctx + " entries must be numbers");
      M(r, c) = v[r][c].get<double>();
    }
  }
  return M;
}

json matrix_to_json(const Mat& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

SwitchingSystem system_from_json(const json& j, const std::string& ctx) {
  SwitchingSystem sys;
  sys.input_dim = need_int(j, "input_dim", ctx);
  sys.output_dim = need_int(j, "output_dim", ctx);

  const json& jnodes = need(j, "nodes", ctx);
  if (!jnodes.is_array()) fail("'nodes' in " + ctx + " must be an array");
  for (size_t i = 0; i < jnodes.size(); ++i) {
    const std::string nctx = ctx + ", node " + std::to_string(i);
    NodeSpec n;
    n.name = need_str(jnodes[i], "name", nctx);
    n.dim = need_int(jnodes[i], "dim", nctx);
    sys.nodes.push_back(std::move(n));
  }

  const json* modes = nullptr;
  if (j.contains("modes")) {
    if (!j["modes"].is_object()) fail("'modes' in " + ctx + " must be an object");
    modes = &j["modes"];
  }

  const json& jedges = need(j, "edges", ctx);
  if (!jedges.is_array()) fail("'edges' in " + ctx + " must be an array");
  for (size_t i = 0; i < jedges.size(); ++i) {
    const json& je = jedges[i];
    const std::string ectx = ctx + ", edge " + std::to_string(i);
    EdgeSpec e;
    e.from = sys.node_index(need_str(je, "from", ectx));
    e.to = sys.node_index(need_str(je, "to", ectx));
    if (e.from < 0) fail("unknown 'from' node in " + ectx);
    if (e.to < 0) fail("unknown 'to' node in " + ectx);
    const int n_from = sys.nodes[e.from].dim;
    const int n_to = sys.nodes[e.to].dim;
    const json* src = &je;
    if (je.contains("mode")) {
      if (!je["mode"].is_number_integer())
        fail("field 'mode' in " + ectx + " must be an integer");
      const int mode = je["mode"].get<int>();
      if (!modes) fail(ectx + " references a mode but no 'modes' table exists");
      const std::string key = std::to_string(mode);
      if (!modes->contains(key))
        fail(ectx + " references undefined mode " + key);
      src = &(*modes)[key];
      // 0 marks "assign a fresh label after all explicit ones are known"
      e.label = je.contains("label") ? need_int(je, "label", ectx) : 0;
    } else {
      e.label = need_int(je, "label", ectx);
    }
    e.A = matrix_from_json(need(*src, "A", ectx), ectx + " matrix A", n_to, n_from);
    e.B = matrix_from_json(need(*src, "B", ectx), ectx + " matrix B", n_to,
                           sys.input_dim);
    e.C = matrix_from_json(need(*src, "C", ectx), ectx + " matrix C",
                           sys.output_dim, n_from);
    e.D = matrix_from_json(need(*src, "D", ectx), ectx + " matrix D",
                           sys.output_dim, sys.input_dim);
    sys.edges.push_back(std::move(e));
  }
  // mode-referencing edges without an explicit label receive the smallest
  // positive integers not used by any explicit label, in edge order
  std::set<int> used;
  for (const auto& e : sys.edges)
    if (e.label > 0) used.insert(e.label);
  int next = 1;
  for (auto& e : sys.edges)
    if (e.label == 0) {
      while (used.count(next)) ++next;
      e.label = next;
      used.insert(next++);
    }
  return sys;
}

json system_to_json(const SwitchingSystem& sys) {
  json j;
  j["input_dim"] = sys.input_dim;
  j["output_dim"] = sys.output_dim;
  j["nodes"] = json::array();
  for (const auto& n : sys.nodes)
    j["nodes"].push_back({{"name", n.name}, {"dim", n.dim}});
  j["edges"] = json::array();
  for (const auto& e : sys.edges) {
    json je;
    je["from"] = sys.nodes[e.from].name;
    je["to"] = sys.nodes[e.to].name;
    je["label"] = e.label;
    je["A"] = matrix_to_json(e.A);
    je["B"] = matrix_to_json(e.B);
    je["C"] = matrix_to_json(e.C);
    je["D"] = matrix_to_json(e.D);
    j["edges"].push_back(std::move(je));
  }
  return j;
}

}  // namespace

SwitchingSystem system_from_json_text(const std::string& text,
                                      const std::string& context) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("JSON parse error in " + context + ": " + e.what());
  }
  SwitchingSystem sys = system_from_json(j, context);
  require_valid(sys);
  return sys;
}

std::string system_to_json_text(const SwitchingSystem& sys, int indent) {
  return system_to_json(sys).dump(indent);
}

SwitchingSystem load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  return system_from_json_text(buf.str(), "'" + path + "'");
}

void save_system(const SwitchingSystem& sys, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out << system_to_json_text(sys) << "\n";
  if (!out) fail("failed writing '" + path + "'");
}

std::vector<std::tuple<std::string, std::string, int>> default_failure_graph() {
  return {{"a", "a", 1}, {"a", "b", 2}, {"b", "a", 1}, {"b", "c", 2},
          {"c", "a", 1}};
}

SwitchingSystem build_delayed_control_example(
    const Mat& A, const Mat& B, const Mat& K_gain,
    const std::vector<std::tuple<std::string, std::string, int>>& edge_list) {
  const int n = static_cast<int>(A.rows());
  const int q = static_cast<int>(B.cols());
  if (A.cols() != n) throw std::invalid_argument("A must be square");
  if (B.rows() != n) throw std::invalid_argument("B must have as many rows as A");
  if (K_gain.rows() != q || K_gain.cols() != n)
    throw std::invalid_argument("K_gain must be input_dim x state_dim");

  const Mat BK = B * K_gain;
  Mat A1 = Mat::Zero(2 * n, 2 * n);
  A1.topLeftCorner(n, n) = A + BK;
  A1.bottomLeftCorner(n, n) = Mat::Identity(n, n);
  Mat A2 = Mat::Zero(2 * n, 2 * n);
  A2.topLeftCorner(n, n) = A;
  A2.topRightCorner(n, n) = BK;
  A2.bottomRightCorner(n, n) = Mat::Identity(n, n);
  Mat B1 = Mat::Zero(2 * n, q);
  Mat B2 = Mat::Zero(2 * n, q);
  B2.topRows(n) = B;
  Mat C = Mat::Zero(n, 2 * n);
  C.leftCols(n) = Mat::Identity(n, n);
  const Mat D = Mat::Zero(n, q);

  SwitchingSystem sys;
  sys.input_dim = q;
  sys.output_dim = n;
  auto node_id = [&](const std::string& name) {
    int id = sys.node_index(name);
    if (id < 0) {
      sys.nodes.push_back({name, 2 * n});
      id = sys.num_nodes() - 1;
    }
    return id;
  };
  int next_label = 1;
  for (const auto& [from, to, mode] : edge_list) {
    if (mode != 1 && mode != 2)
      throw std::invalid_argument("edge mode must be 1 or 2");
    EdgeSpec e;
    e.from = node_id(from);
    e.to = node_id(to);
    e.label = next_label++;
    e.A = mode == 1 ? A1 : A2;
    e.B = mode == 1 ? B1 : B2;
    e.C = C;
    e.D = D;
    sys.edges.push_back(std::move(e));
  }
  require_valid(sys);
  return sys;
}

PendulumModel pendulum_default_model() {
  PendulumModel m;
  Mat Ac(2, 2), Bc(2, 1);
  Ac << 0.0, 1.0, m.gravity / m.length, 0.0;
  Bc << 0.0, 1.0 / (m.mass * m.length * m.length);
  // zero-order hold: exp of the stacked (Ac, Bc) generator
  Mat gen = Mat::Zero(3, 3);
  gen.topLeftCorner(2, 2) = Ac;
  gen.topRightCorner(2, 1) = Bc;
  const Mat expd = (gen * m.dt).exp();
  m.A = expd.topLeftCorner(2, 2);
  m.B = expd.topRightCorner(2, 1);

  // fixed-point Riccati iteration for the discrete LQR
  const Mat Q = m.state_weight * Mat::Identity(2, 2);
  const Mat R = m.input_weight * Mat::Identity(1, 1);
  Mat P = Q;
  for (int i = 0; i < 1000000; ++i) {
    const Mat BtP = m.B.transpose() * P;
    const Mat G = (R + BtP * m.B).llt().solve(BtP * m.A);
    const Mat Pn = Q + m.A.transpose() * P * m.A -
                   (BtP * m.A).transpose() * G;
    const double delta = (Pn - P).cwiseAbs().maxCoeff();
    P = 0.5 * (Pn + Pn.transpose());
    if (delta <= 1e-14 * P.cwiseAbs().maxCoeff()) break;
  }
  const Mat BtP = m.B.transpose() * P;
  m.K = -(R + BtP * m.B).llt().solve(BtP * m.A);
  return m;
}

SwitchingSystem pendulum_example() {
  const PendulumModel m = pendulum_default_model();
  return build_delayed_control_example(m.A, m.B, m.K);
}

LevelSetData emit_level_sets(const SwitchingSystem& sys,
                             const QuadraticStorage& storage,
                             const std::string& node, int resolution) {
  const int v = sys.node_index(node);
  if (v < 0) throw std::invalid_argument("unknown node '" + node + "'");
  const int dim = sys.nodes[v].dim;
  if (dim != 2 && dim != 3)
    throw std::invalid_argument("level sets are emitted for dim 2 or 3 nodes");
  if (resolution < 4) throw std::invalid_argument("resolution must be >= 4");
  if (static_cast<int>(storage.node_matrices.size()) <= v)
    throw std::invalid_argument("storage does not cover node '" + node + "'");

  LevelSetData data;
  data.node = node;
  data.dimension = dim;
  std::vector<std::pair<int, int>> planes;
  if (dim == 2) {
    planes = {{0, 1}};
    data.section_names = {"x0x1"};
  } else {
    planes = {{0, 1}, {0, 2}, {1, 2}};
    data.section_names = {"x0x1", "x0x2", "x1x2"};
  }
  for (const auto& [i, j] : planes) {
    std::vector<Vec> dirs;
    std::vector<double> vals;
    dirs.reserve(resolution);
    vals.reserve(resolution);
    static const double two_pi = 2.0 * std::acos(-1.0);
    double vmax = 0.0;
    for (int k = 0; k < resolution; ++k) {
      const double th = two_pi * k / resolution;
      Vec u = Vec::Zero(dim);
      u(i) = std::cos(th);
      u(j) = std::sin(th);
      vals.push_back(storage.evaluate(v, u));
      vmax = std::max(vmax, vals.back());
      dirs.push_back(std::move(u));
    }
    std::vector<Vec> line;
    line.reserve(resolution + 1);
    for (int k = 0; k < resolution; ++k) {
      // a direction with F(u) tiny relative to the section's largest value
      // has no finite boundary point: the level set is unbounded there
      if (!(vals[k] > 1e-12 * vmax))
        throw std::runtime_error(
            "storage is not positive definite along a sampled direction at "
            "node '" + node + "'");
      line.push_back(dirs[k] / std::sqrt(vals[k]));
    }
    line.push_back(line.front());  // closed polyline
    data.polylines.push_back(std::move(line));
  }
  return data;
}

void write_level_set_csv(const LevelSetData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "node,section,index";
  for (int c = 0; c < data.dimension; ++c) out << ",x" << c;
  out << "\n";
  for (size_t s = 0; s < data.polylines.size(); ++s)
    for (size_t i = 0; i < data.polylines[s].size(); ++i) {
      out << data.node << "," << data.section_names[s] << "," << i;
      for (int c = 0; c < data.dimension; ++c)
        out << "," << data.polylines[s][i](c);
      out << "\n";
    }
  if (!out) fail("failed writing '" + path + "'");
}

}  // namespace switchgain
