#pragma once

#include "switchgain/storage_gain.hpp"
#include "switchgain/system.hpp"

#include <string>
#include <tuple>
#include <vector>

namespace switchgain {

// JSON schema:
//   { "input_dim": d, "output_dim": m,
//     "nodes": [ {"name": "a", "dim": 4}, ... ],
//     "edges": [ {"from": "a", "to": "b", "label": 2,
//                 "A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]}], ... ],
//     "modes": { "1": {"A": ..., "B": ..., "C": ..., "D": ...}, ... } }
// Matrices are row-major nested arrays. An edge may reference a shared mode
// ("mode": 1) instead of carrying inline matrices; such edges may omit
// "label", in which case the smallest unused positive integers are assigned
// in edge order (labels must be unique across all edges). Serialization uses
// shortest round-trip decimals, so save/load reproduces every entry
// bit-exactly.
SwitchingSystem load_system(const std::string& path);
void save_system(const SwitchingSystem& sys, const std::string& path);

// Parse/serialize without touching the filesystem. context names the source
// in error messages. Parsing validates the result (throws listing issues).
SwitchingSystem system_from_json_text(const std::string& text,
                                      const std::string& context = "input");
std::string system_to_json_text(const SwitchingSystem& sys, int indent = 2);

// Two-mode delayed-feedback plant over a failure graph: mode 1 applies the
// feedback computed from the current state and refreshes the memory, mode 2
// reuses the memorized state (actuator failure) and takes the disturbance
// through the actuator channel. States are (x_t, memory), all nodes 2n-dim.
//   mode 1: x' = (A + B K) x,            memory' = x,      no disturbance
//   mode 2: x' = A x + B K memory + B w, memory' = memory
// The graph encodes "at most two failures in a row" (modes in parens):
//   a->a (1), a->b (2), b->a (1), b->c (2), c->a (1).
// Edges receive fresh labels 1..5 in that order.
std::vector<std::tuple<std::string, std::string, int>> default_failure_graph();

SwitchingSystem build_delayed_control_example(
    const Mat& A, const Mat& B, const Mat& K_gain,
    const std::vector<std::tuple<std::string, std::string, int>>& edge_list =
        default_failure_graph());

// Our instantiation of the inverted pendulum behind the worked example:
// mass 2 kg, length 0.5 m, gravity 9.81 m/s^2, zero damping, zero-order-hold
// discretization at 100 Hz, LQR weights Q = I, R = 10. The linearized
// upright dynamics are theta'' = (g/l) theta + u / (m l^2).
struct PendulumModel {
  double mass = 2.0;
  double length = 0.5;
  double gravity = 9.81;
  double dt = 0.01;
  double state_weight = 1.0;
  double input_weight = 10.0;
  Mat A;  // 2x2 discretized dynamics, state (theta, theta_dot)
  Mat B;  // 2x1 discretized input map
  Mat K;  // 1x2 LQR feedback, u = K x
};

PendulumModel pendulum_default_model();

// build_delayed_control_example applied to the default pendulum model.
SwitchingSystem pendulum_example();

// Unit level set of F^(1/2) at one node: boundary points u / F(u)^(1/2) over
// sampled directions (exact by quadratic homogeneity). Dim-2 nodes produce
// one closed polyline, dim-3 nodes one closed polyline per coordinate-plane
// section. Points carry full node coordinates.
struct LevelSetData {
  std::string node;
  int dimension = 0;
  std::vector<std::string> section_names;
  std::vector<std::vector<Vec>> polylines;  // closed: first point repeated
};

LevelSetData emit_level_sets(const SwitchingSystem& sys,
                             const QuadraticStorage& storage,
                             const std::string& node, int resolution = 256);

// CSV columns: node,section,index,x0,...,x{dim-1} (17 significant digits).
void write_level_set_csv(const LevelSetData& data, const std::string& path);

}  // namespace switchgain
