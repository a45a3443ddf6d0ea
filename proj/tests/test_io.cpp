#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "switchgain/io.hpp"
#include "switchgain/realization.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace switchgain;
using testutil::gaussian;
using testutil::random_system;
using testutil::single_node_lti;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

template <typename Fn>
std::string capture_error(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

void check_same(const SwitchingSystem& a, const SwitchingSystem& b) {
  REQUIRE(a.num_nodes() == b.num_nodes());
  REQUIRE(a.num_edges() == b.num_edges());
  CHECK(a.input_dim == b.input_dim);
  CHECK(a.output_dim == b.output_dim);
  for (int v = 0; v < a.num_nodes(); ++v) {
    CHECK(a.nodes[v].name == b.nodes[v].name);
    CHECK(a.nodes[v].dim == b.nodes[v].dim);
  }
  for (int k = 0; k < a.num_edges(); ++k) {
    CHECK(a.edges[k].from == b.edges[k].from);
    CHECK(a.edges[k].to == b.edges[k].to);
    CHECK(a.edges[k].label == b.edges[k].label);
    // bit-exact: serialization must preserve every double
    CHECK((a.edges[k].A - b.edges[k].A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.edges[k].B - b.edges[k].B).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.edges[k].C - b.edges[k].C).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.edges[k].D - b.edges[k].D).cwiseAbs().maxCoeff() == 0.0);
  }
}

QuadraticStorage storage_of(const Mat& G) {
  QuadraticStorage st;
  st.gamma = 1.0;
  st.K = 1;
  st.node_matrices = {{G}};
  st.node_paths = {{Path{{0}}}};
  return st;
}

}  // namespace

TEST_CASE("serialization round-trips bit-exactly") {
  std::mt19937_64 rng(2024);
  const auto sys = random_system(rng, 3, 3, 2);
  check_same(sys, system_from_json_text(system_to_json_text(sys)));

  const std::string path = temp_path("switchgain_roundtrip.json");
  save_system(sys, path);
  check_same(sys, load_system(path));
  std::remove(path.c_str());
}

TEST_CASE("mode table sugar expands to inline matrices") {
  const std::string text = R"({
    "input_dim": 1, "output_dim": 1,
    "nodes": [{"name": "a", "dim": 1}, {"name": "b", "dim": 1}],
    "modes": {
      "1": {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]]},
      "2": {"A": [[0.25]], "B": [[0.0]], "C": [[2.0]], "D": [[0.5]]}
    },
    "edges": [
      {"from": "a", "to": "b", "mode": 1},
      {"from": "b", "to": "a", "mode": 2},
      {"from": "a", "to": "a", "mode": 2, "label": 7}
    ]})";
  const auto sys = system_from_json_text(text);
  REQUIRE(sys.num_edges() == 3);
  CHECK(sys.edges[0].label == 1);  // smallest unused, assigned in edge order
  CHECK(sys.edges[1].label == 2);
  CHECK(sys.edges[2].label == 7);  // explicit label kept verbatim
  CHECK(sys.edges[0].A(0, 0) == 0.5);
  CHECK(sys.edges[2].D(0, 0) == 0.5);

  const std::string inline_text = R"({
    "input_dim": 1, "output_dim": 1,
    "nodes": [{"name": "a", "dim": 1}, {"name": "b", "dim": 1}],
    "edges": [
      {"from": "a", "to": "b", "label": 1,
       "A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]]},
      {"from": "b", "to": "a", "label": 2,
       "A": [[0.25]], "B": [[0.0]], "C": [[2.0]], "D": [[0.5]]},
      {"from": "a", "to": "a", "label": 7,
       "A": [[0.25]], "B": [[0.0]], "C": [[2.0]], "D": [[0.5]]}
    ]})";
  check_same(sys, system_from_json_text(inline_text));
}

TEST_CASE("parse errors name the missing field and the source") {
  CHECK(capture_error([] {
          system_from_json_text(R"({"output_dim": 1})", "cfg.json");
        }).find("missing field 'input_dim'") != std::string::npos);
  CHECK(capture_error([] {
          system_from_json_text(R"({"output_dim": 1})", "cfg.json");
        }).find("cfg.json") != std::string::npos);
  CHECK(capture_error([] { system_from_json_text("not json at all"); })
            .find("parse error") != std::string::npos);
  CHECK(capture_error([] { load_system("/no/such/file.json"); })
            .find("cannot open") != std::string::npos);

  const std::string bad_mode = R"({
    "input_dim": 1, "output_dim": 1,
    "nodes": [{"name": "a", "dim": 1}],
    "edges": [{"from": "a", "to": "a", "mode": 3}],
    "modes": {"1": {"A": [[1]], "B": [[1]], "C": [[1]], "D": [[0]]}}})";
  CHECK(capture_error([&] { system_from_json_text(bad_mode); })
            .find("undefined mode") != std::string::npos);

  const std::string bad_node = R"({
    "input_dim": 1, "output_dim": 1,
    "nodes": [{"name": "a", "dim": 1}],
    "edges": [{"from": "a", "to": "zz", "label": 1,
               "A": [[1]], "B": [[1]], "C": [[1]], "D": [[0]]}]})";
  CHECK(capture_error([&] { system_from_json_text(bad_node); })
            .find("unknown 'to' node") != std::string::npos);
}

TEST_CASE("parsed systems are validated") {
  // well-formed JSON, but node b is unreachable from a: must be rejected
  const std::string text = R"({
    "input_dim": 1, "output_dim": 1,
    "nodes": [{"name": "a", "dim": 1}, {"name": "b", "dim": 1}],
    "edges": [
      {"from": "a", "to": "a", "label": 1,
       "A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]]},
      {"from": "b", "to": "a", "label": 1,
       "A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]]},
      {"from": "b", "to": "b", "label": 2,
       "A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]]}
    ]})";
  CHECK_THROWS_AS(system_from_json_text(text), std::invalid_argument);
}

TEST_CASE("delayed-feedback builder assembles the documented blocks") {
  std::mt19937_64 rng(7);
  const Mat A = gaussian(rng, 2, 2);
  const Mat B = gaussian(rng, 2, 1);
  const Mat K = gaussian(rng, 1, 2);
  const auto sys = build_delayed_control_example(A, B, K);
  REQUIRE(validate_system(sys).ok());
  REQUIRE(sys.num_nodes() == 3);
  REQUIRE(sys.num_edges() == 5);
  CHECK(sys.input_dim == 1);
  CHECK(sys.output_dim == 2);
  for (const auto& n : sys.nodes) CHECK(n.dim == 4);

  Mat A1(4, 4), A2(4, 4), B2(4, 1), C(2, 4);
  A1.setZero();
  A1.topLeftCorner(2, 2) = A + B * K;
  A1.bottomLeftCorner(2, 2) = Mat::Identity(2, 2);
  A2.setZero();
  A2.topLeftCorner(2, 2) = A;
  A2.topRightCorner(2, 2) = B * K;
  A2.bottomRightCorner(2, 2) = Mat::Identity(2, 2);
  B2.setZero();
  B2.topRows(2) = B;
  C.setZero();
  C.leftCols(2) = Mat::Identity(2, 2);

  // edges follow default_failure_graph() order with fresh labels 1..5
  const auto graph = default_failure_graph();
  REQUIRE(sys.num_edges() == static_cast<int>(graph.size()));
  for (int i = 0; i < sys.num_edges(); ++i) {
    const auto& e = sys.edges[i];
    const auto& [from, to, mode] = graph[i];
    CHECK(sys.nodes[e.from].name == from);
    CHECK(sys.nodes[e.to].name == to);
    CHECK(e.label == i + 1);
    CHECK((e.C - C).cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.D.cwiseAbs().maxCoeff() == 0.0);
    if (mode == 1) {
      CHECK((e.A - A1).cwiseAbs().maxCoeff() == 0.0);
      CHECK(e.B.cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK((e.A - A2).cwiseAbs().maxCoeff() == 0.0);
      CHECK((e.B - B2).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  auto edge = [&](const std::string& f, const std::string& t) -> const EdgeSpec* {
    for (const auto& e : sys.edges)
      if (sys.nodes[e.from].name == f && sys.nodes[e.to].name == t) return &e;
    return nullptr;
  };
  CHECK(!edge("c", "b"));
  CHECK(!edge("b", "b"));
}

TEST_CASE("discretization matches the hyperbolic closed form") {
  const auto mdl = pendulum_default_model();
  const double w = std::sqrt(mdl.gravity / mdl.length);
  const double h = mdl.dt;
  const double ch = std::cosh(w * h), sh = std::sinh(w * h);
  Mat Ad(2, 2), Bd(2, 1);
  Ad << ch, sh / w, w * sh, ch;
  const double gain = 1.0 / (mdl.mass * mdl.length * mdl.length);
  Bd << gain * (ch - 1.0) / (w * w), gain * sh / w;
  CHECK((mdl.A - Ad).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((mdl.B - Bd).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("feedback gain satisfies the policy-iteration fixed point") {
  const auto mdl = pendulum_default_model();
  REQUIRE(mdl.K.rows() == 1);

  // frozen regression values
  CHECK(mdl.K(0, 0) == doctest::Approx(-19.198717).epsilon(1e-5));
  CHECK(mdl.K(0, 1) == doctest::Approx(-4.344343).epsilon(1e-5));

  // evaluate the policy: P solves the closed-loop Lyapunov equation
  const Mat CL = mdl.A + mdl.B * mdl.K;
  Eigen::EigenSolver<Mat> es(CL, false);
  const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
  CHECK(rho == doctest::Approx(0.9595).epsilon(2e-3));

  const Mat Q = mdl.state_weight * Mat::Identity(2, 2);
  const Mat R = mdl.input_weight * Mat::Identity(1, 1);
  const Mat M = Q + mdl.K.transpose() * R * mdl.K;
  Mat P = Mat::Zero(2, 2);
  Mat T = Mat::Identity(2, 2);
  for (int k = 0; k < 4000; ++k) {
    P += T.transpose() * M * T;
    T = CL * T;
  }
  // improving on the policy returns the same gain: optimality
  const Mat Kimp =
      -(R + mdl.B.transpose() * P * mdl.B)
           .llt()
           .solve(mdl.B.transpose() * P * mdl.A);
  CHECK((Kimp - mdl.K).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("pendulum example minimizes to heterogeneous dimensions") {
  const auto sys = pendulum_example();
  CHECK(validate_system(sys).ok());
  const auto [msys, rep] = minimize(sys);
  CHECK(rep.final_dims == std::vector<int>{2, 3, 2});
}

TEST_CASE("level set of the identity quadratic is the unit circle") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1),
                                   Mat::Identity(2, 2), Mat::Zero(2, 1));
  const auto data = emit_level_sets(sys, storage_of(Mat::Identity(2, 2)), "v",
                                    128);
  CHECK(data.node == "v");
  CHECK(data.dimension == 2);
  REQUIRE(data.section_names == std::vector<std::string>{"x0x1"});
  REQUIRE(data.polylines.size() == 1);
  const auto& poly = data.polylines[0];
  REQUIRE(static_cast<int>(poly.size()) == 129);  // closed: first repeated
  CHECK((poly.front() - poly.back()).norm() <= 1e-15);
  for (const auto& pt : poly) {
    REQUIRE(pt.size() == 2);
    CHECK(std::abs(pt.norm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("anisotropic quadratic gives the right semi-axes") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1),
                                   Mat::Identity(2, 2), Mat::Zero(2, 1));
  Mat G = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  const auto data = emit_level_sets(sys, storage_of(G), "v", 4);
  // directions 0, 90, 180, 270 degrees in order
  const auto& poly = data.polylines[0];
  CHECK(poly[0](0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(poly[0](1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(poly[1](1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("max-of-quadratics level sets sit on the unit level") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1),
                                   Mat::Identity(2, 2), Mat::Zero(2, 1));
  QuadraticStorage st;
  st.gamma = 1.0;
  st.K = 2;
  st.node_matrices = {{Eigen::Vector2d(4.0, 1.0).asDiagonal().toDenseMatrix(),
                       Eigen::Vector2d(1.0, 4.0).asDiagonal().toDenseMatrix()}};
  st.node_paths = {{Path{{0}}, Path{{0}}}};
  const auto data = emit_level_sets(sys, st, "v", 256);
  for (const auto& pt : data.polylines[0])
    CHECK(std::abs(st.evaluate(0, pt) - 1.0) <= 1e-6);
}

TEST_CASE("three-dimensional nodes produce three plane sections") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(3, 3), Mat::Zero(3, 1),
                                   Mat::Identity(3, 3), Mat::Zero(3, 1));
  const auto data =
      emit_level_sets(sys, storage_of(Mat::Identity(3, 3)), "v", 64);
  CHECK(data.dimension == 3);
  REQUIRE(data.section_names ==
          std::vector<std::string>{"x0x1", "x0x2", "x1x2"});
  REQUIRE(data.polylines.size() == 3);
  // x0x2 section: second coordinate stays zero
  for (const auto& pt : data.polylines[1]) {
    REQUIRE(pt.size() == 3);
    CHECK(pt(1) == 0.0);
    CHECK(std::abs(pt.norm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("degenerate storage directions are rejected") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1),
                                   Mat::Identity(2, 2), Mat::Zero(2, 1));
  Mat G = Eigen::Vector2d(1.0, 0.0).asDiagonal();
  CHECK(capture_error([&] { emit_level_sets(sys, storage_of(G), "v", 16); })
            .find("not positive definite") != std::string::npos);
  CHECK_THROWS_AS(
      emit_level_sets(sys, storage_of(Mat::Identity(2, 2)), "nope", 16),
      std::invalid_argument);
}

TEST_CASE("level set CSV has one row per point plus a header") {
  const auto sys = single_node_lti(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1),
                                   Mat::Identity(2, 2), Mat::Zero(2, 1));
  const auto data =
      emit_level_sets(sys, storage_of(Mat::Identity(2, 2)), "v", 8);
  const std::string path = temp_path("switchgain_levelset.csv");
  write_level_set_csv(data, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "node,section,index,x0,x1");
  long rows = 0;
  double first_x0 = 0.0;
  while (std::getline(in, line)) {
    if (rows == 0) {
      // node,section,index,x0,x1
      const auto p1 = line.rfind(',');
      const auto p0 = line.rfind(',', p1 - 1);
      first_x0 = std::stod(line.substr(p0 + 1, p1 - p0 - 1));
    }
    ++rows;
  }
  CHECK(rows == 9);
  CHECK(first_x0 == doctest::Approx(1.0).epsilon(1e-15));
  std::remove(path.c_str());
}
