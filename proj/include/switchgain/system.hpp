#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace switchgain {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// One edge of a constrained switching system. Matrices map the source node's
// state (dim n_from) to the destination node's state (dim n_to):
//   x+ = A x + B w,  z = C x + D w
// with A: n_to x n_from, B: n_to x d, C: m x n_from, D: m x d.
struct EdgeSpec {
  int from = -1;
  int to = -1;
  int label = 0;  // unique positive label
  Mat A, B, C, D;
};

struct NodeSpec {
  std::string name;
  int dim = 0;  // n_v >= 0; zero-dimensional nodes are legal
};

// Graph-constrained linear switching system in rectangular form.
// Every edge carries its own matrices; per-node state dimensions may differ.
struct SwitchingSystem {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  int input_dim = 0;   // d
  int output_dim = 0;  // m

  int node_index(const std::string& name) const;  // -1 if absent
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int total_dim() const;  // sum of node dims

  // Outgoing edge ids of v, sorted by edge label (deterministic path order).
  std::vector<std::vector<int>> out_edges() const;
};

// A path is a chained edge sequence. Time indices are 0-based:
// sigma(0) .. sigma(length-1); node_seq has length+1 entries.
struct Path {
  std::vector<int> edge_ids;  // indices into SwitchingSystem::edges

  int length() const { return static_cast<int>(edge_ids.size()); }
  std::vector<int> node_seq(const SwitchingSystem& sys) const;
  std::vector<int> labels(const SwitchingSystem& sys) const;
};

// Lifted path operators. With k = |pi|:
//   A: n_end x n_start         product of the edge A's
//   B: n_end x (k*d)           columns ordered oldest input first
//   C: (k*m) x n_start         rows ordered earliest output first
//   D: (k*m) x (k*d)           lower block triangular (causal)
struct PathMatrices {
  Mat A, B, C, D;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

// Lists every violation of the rectangular-system invariants: matrix shape
// mismatches, duplicate or nonpositive labels, bad endpoints, nodes missing
// an in- or out-edge, and failure of strong connectivity.
ValidationReport validate_system(const SwitchingSystem& sys);

// Throws std::invalid_argument with the full issue list if validation fails.
void require_valid(const SwitchingSystem& sys);

// Builds a rectangular system from a graph whose edges share a finite set of
// modes (square n x n systems with common d, m). All node dims become n and
// edges get fresh labels 1..|E| in the given order.
SwitchingSystem lift_to_rectangular(
    const std::vector<std::string>& node_names,
    const std::vector<std::array<Mat, 4>>& modes,  // (A,B,C,D) per mode
    const std::vector<std::tuple<std::string, std::string, int>>& edge_list);

// Streams all chained edge sequences of the given length, in lexicographic
// order of edge labels, optionally filtered by start/end node. The visitor
// returns false to stop enumeration early.
void enumerate_paths(const SwitchingSystem& sys, int length,
                     std::optional<int> start, std::optional<int> end,
                     const std::function<bool(const Path&)>& visit);

// Convenience collector for small instances and tests.
std::vector<Path> all_paths(const SwitchingSystem& sys, int length,
                            std::optional<int> start = std::nullopt,
                            std::optional<int> end = std::nullopt);

// Lifted operators of a path, built by the incremental recurrences
//   A' = A_e A,  B' = [A_e B, B_e],  C' = [C; C_e A],  D' = [D 0; C_e B, D_e].
PathMatrices path_matrices(const SwitchingSystem& sys, const Path& pi);

// Incremental scan: calls visit(prefix, ops) for every prefix pi(1:k) of pi,
// k = 1..|pi|, reusing the growing operators. Used by per-path reductions
// that need all prefixes without recomputing products.
void path_matrices_scan(
    const SwitchingSystem& sys, const Path& pi,
    const std::function<void(int prefix_len, const PathMatrices&)>& visit);

// 1-based inclusive slice pi(i:j), matching the slicing convention used
// throughout: subpath(pi, 1, |pi|) == pi. Throws std::out_of_range on bad indices.
Path subpath(const Path& pi, int i, int j);

// Reverses every edge and maps (A,B,C,D) -> (A^T, C^T, B^T, D^T); input and
// output dimensions swap. Involution: dual(dual(sys)) == sys.
SwitchingSystem dual_system(const SwitchingSystem& sys);

}  // namespace switchgain
