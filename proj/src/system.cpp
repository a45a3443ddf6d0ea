#include "switchgain/system.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace switchgain {

int SwitchingSystem::node_index(const std::string& name) const {
  for (int i = 0; i < num_nodes(); ++i)
    if (nodes[i].name == name) return i;
  return -1;
}

int SwitchingSystem::total_dim() const {
  int s = 0;
  for (const auto& n : nodes) s += n.dim;
  return s;
}

std::vector<std::vector<int>> SwitchingSystem::out_edges() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (int e = 0; e < num_edges(); ++e) {
    if (edges[e].from >= 0 && edges[e].from < num_nodes())
      out[edges[e].from].push_back(e);
  }
  for (auto& lst : out)
    std::sort(lst.begin(), lst.end(), [&](int a, int b) {
      return edges[a].label < edges[b].label;
    });
  return out;
}

std::vector<int> Path::node_seq(const SwitchingSystem& sys) const {
  std::vector<int> seq;
  seq.reserve(edge_ids.size() + 1);
  if (edge_ids.empty()) return seq;
  seq.push_back(sys.edges[edge_ids.front()].from);
  for (int e : edge_ids) seq.push_back(sys.edges[e].to);
  return seq;
}

std::vector<int> Path::labels(const SwitchingSystem& sys) const {
  std::vector<int> out;
  out.reserve(edge_ids.size());
  for (int e : edge_ids) out.push_back(sys.edges[e].label);
  return out;
}

namespace {

// Strong connectivity by forward + backward reachability from node 0.
// Zero-dimensional nodes still participate in the graph.
bool strongly_connected(const SwitchingSystem& sys) {
  const int n = sys.num_nodes();
  if (n <= 1) return n == 1;
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (const auto& e : sys.edges) {
        int a = forward ? e.from : e.to;
        int b = forward ? e.to : e.from;
        if (a == v && b >= 0 && b < n && !seen[b]) {
          seen[b] = 1;
          q.push(b);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

}  // namespace

ValidationReport validate_system(const SwitchingSystem& sys) {
  ValidationReport rep;
  auto issue = [&rep](const std::string& s) { rep.issues.push_back(s); };

  if (sys.nodes.empty()) issue("system has no nodes");
  if (sys.input_dim < 0) issue("input_dim is negative");
  if (sys.output_dim < 0) issue("output_dim is negative");

  std::set<std::string> names;
  for (const auto& n : sys.nodes) {
    if (n.dim < 0) issue("node '" + n.name + "' has negative dim");
    if (!names.insert(n.name).second)
      issue("duplicate node name '" + n.name + "'");
  }

  std::set<int> labels;
  std::vector<int> outdeg(sys.nodes.size(), 0), indeg(sys.nodes.size(), 0);
  for (const auto& e : sys.edges) {
    std::ostringstream id;
    id << "edge label " << e.label;
    if (e.label <= 0) issue(id.str() + ": label must be positive");
    if (!labels.insert(e.label).second) issue(id.str() + ": duplicate label");
    if (e.from < 0 || e.from >= sys.num_nodes() || e.to < 0 ||
        e.to >= sys.num_nodes()) {
      issue(id.str() + ": endpoint out of range");
      continue;
    }
    ++outdeg[e.from];
    ++indeg[e.to];
    const int nf = sys.nodes[e.from].dim, nt = sys.nodes[e.to].dim;
    auto shape = [&](const Mat& M, const char* name, int r, int c) {
      if (M.rows() != r || M.cols() != c) {
        std::ostringstream os;
        os << id.str() << ": " << name << " is " << M.rows() << "x" << M.cols()
           << ", expected " << r << "x" << c;
        issue(os.str());
      }
    };
    shape(e.A, "A", nt, nf);
    shape(e.B, "B", nt, sys.input_dim);
    shape(e.C, "C", sys.output_dim, nf);
    shape(e.D, "D", sys.output_dim, sys.input_dim);
  }

  for (int v = 0; v < sys.num_nodes(); ++v) {
    if (outdeg[v] == 0)
      issue("node '" + sys.nodes[v].name + "' has no outgoing edge");
    if (indeg[v] == 0)
      issue("node '" + sys.nodes[v].name + "' has no incoming edge");
  }

  if (!sys.nodes.empty() && !strongly_connected(sys))
    issue("graph is not strongly connected");

  return rep;
}

void require_valid(const SwitchingSystem& sys) {
  auto rep = validate_system(sys);
  if (rep.ok()) return;
  std::ostringstream os;
  os << "invalid system:";
  for (const auto& s : rep.issues) os << "\n  - " << s;
  throw std::invalid_argument(os.str());
}

SwitchingSystem lift_to_rectangular(
    const std::vector<std::string>& node_names,
    const std::vector<std::array<Mat, 4>>& modes,
    const std::vector<std::tuple<std::string, std::string, int>>& edge_list) {
  if (modes.empty()) throw std::invalid_argument("no modes given");
  const int n = static_cast<int>(modes[0][0].rows());
  const int d = static_cast<int>(modes[0][1].cols());
  const int m = static_cast<int>(modes[0][2].rows());
  for (const auto& md : modes) {
    if (md[0].rows() != n || md[0].cols() != n || md[1].rows() != n ||
        md[1].cols() != d || md[2].rows() != m || md[2].cols() != n ||
        md[3].rows() != m || md[3].cols() != d)
      throw std::invalid_argument("mode matrices must share square n and d, m");
  }

  SwitchingSystem sys;
  sys.input_dim = d;
  sys.output_dim = m;
  for (const auto& name : node_names) sys.nodes.push_back({name, n});

  int next_label = 1;
  for (const auto& [u, v, mode] : edge_list) {
    if (mode < 1 || mode > static_cast<int>(modes.size()))
      throw std::invalid_argument("mode index out of range: " +
                                  std::to_string(mode));
    EdgeSpec e;
    e.from = sys.node_index(u);
    e.to = sys.node_index(v);
    if (e.from < 0 || e.to < 0)
      throw std::invalid_argument("edge references unknown node");
    e.label = next_label++;
    const auto& md = modes[mode - 1];
    e.A = md[0];
    e.B = md[1];
    e.C = md[2];
    e.D = md[3];
    sys.edges.push_back(std::move(e));
  }
  return sys;
}

void enumerate_paths(const SwitchingSystem& sys, int length,
                     std::optional<int> start, std::optional<int> end,
                     const std::function<bool(const Path&)>& visit) {
  if (length < 1) throw std::invalid_argument("path length must be >= 1");
  const auto out = sys.out_edges();
  Path cur;
  cur.edge_ids.reserve(length);
  bool stop = false;

  std::function<void(int, int)> dfs = [&](int v, int depth) {
    if (stop) return;
    if (depth == length) {
      if (!end || *end == v)
        if (!visit(cur)) stop = true;
      return;
    }
    for (int e : out[v]) {
      cur.edge_ids.push_back(e);
      dfs(sys.edges[e].to, depth + 1);
      cur.edge_ids.pop_back();
      if (stop) return;
    }
  };

  if (start) {
    dfs(*start, 0);
  } else {
    for (int v = 0; v < sys.num_nodes() && !stop; ++v) dfs(v, 0);
  }
}

std::vector<Path> all_paths(const SwitchingSystem& sys, int length,
                            std::optional<int> start, std::optional<int> end) {
  std::vector<Path> out;
  enumerate_paths(sys, length, start, end, [&](const Path& p) {
    out.push_back(p);
    return true;
  });
  return out;
}

namespace {

// Appends edge e to (A,B,C,D) of a prefix of length k.
void extend(const SwitchingSystem& sys, int e, int k, PathMatrices& pm) {
  const auto& ed = sys.edges[e];
  const int d = sys.input_dim, m = sys.output_dim;
  if (k == 0) {
    pm.A = ed.A;
    pm.B = ed.B;
    pm.C = ed.C;
    pm.D = ed.D;
    return;
  }
  Mat B2(ed.A.rows(), (k + 1) * d);
  B2 << ed.A * pm.B, ed.B;
  Mat C2(static_cast<Eigen::Index>(k + 1) * m, pm.C.cols());
  C2 << pm.C, ed.C * pm.A;
  Mat D2 = Mat::Zero(static_cast<Eigen::Index>(k + 1) * m,
                     static_cast<Eigen::Index>(k + 1) * d);
  D2.topLeftCorner(k * m, k * d) = pm.D;
  D2.block(k * m, 0, m, k * d) = ed.C * pm.B;
  D2.block(k * m, k * d, m, d) = ed.D;
  pm.A = ed.A * pm.A;
  pm.B = std::move(B2);
  pm.C = std::move(C2);
  pm.D = std::move(D2);
}

void check_chained(const SwitchingSystem& sys, const Path& pi) {
  if (pi.edge_ids.empty()) throw std::invalid_argument("empty path");
  for (size_t t = 0; t < pi.edge_ids.size(); ++t) {
    int e = pi.edge_ids[t];
    if (e < 0 || e >= sys.num_edges())
      throw std::invalid_argument("path references unknown edge");
    if (t > 0 && sys.edges[pi.edge_ids[t - 1]].to != sys.edges[e].from)
      throw std::invalid_argument("path edges do not chain at step " +
                                  std::to_string(t));
  }
}

}  // namespace

PathMatrices path_matrices(const SwitchingSystem& sys, const Path& pi) {
  check_chained(sys, pi);
  PathMatrices pm;
  for (int k = 0; k < pi.length(); ++k) extend(sys, pi.edge_ids[k], k, pm);
  return pm;
}

void path_matrices_scan(
    const SwitchingSystem& sys, const Path& pi,
    const std::function<void(int, const PathMatrices&)>& visit) {
  check_chained(sys, pi);
  PathMatrices pm;
  for (int k = 0; k < pi.length(); ++k) {
    extend(sys, pi.edge_ids[k], k, pm);
    visit(k + 1, pm);
  }
}

Path subpath(const Path& pi, int i, int j) {
  if (i < 1 || j < i || j > pi.length())
    throw std::out_of_range("subpath indices out of range");
  Path out;
  out.edge_ids.assign(pi.edge_ids.begin() + (i - 1), pi.edge_ids.begin() + j);
  return out;
}

SwitchingSystem dual_system(const SwitchingSystem& sys) {
  SwitchingSystem dual;
  dual.nodes = sys.nodes;
  dual.input_dim = sys.output_dim;
  dual.output_dim = sys.input_dim;
  dual.edges.reserve(sys.edges.size());
  for (const auto& e : sys.edges) {
    EdgeSpec f;
    f.from = e.to;
    f.to = e.from;
    f.label = e.label;
    f.A = e.A.transpose();
    f.B = e.C.transpose();
    f.C = e.B.transpose();
    f.D = e.D.transpose();
    dual.edges.push_back(std::move(f));
  }
  return dual;
}

}  // namespace switchgain
