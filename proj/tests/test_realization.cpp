#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "switchgain/io.hpp"
#include "switchgain/realization.hpp"

using namespace switchgain;
using testutil::gaussian;
using testutil::make_embedded;
using testutil::random_system;
using testutil::single_node_lti;

namespace {

// max |D_pi| discrepancy between two systems with identical graphs, over all
// paths up to the given length (paths enumerate in the same label order)
double max_io_gap(const SwitchingSystem& s1, const SwitchingSystem& s2,
                  int max_len) {
  double worst = 0.0;
  for (int k = 1; k <= max_len; ++k) {
    const auto p1 = all_paths(s1, k);
    const auto p2 = all_paths(s2, k);
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) {
      REQUIRE(p1[i].labels(s1) == p2[i].labels(s2));
      const Mat d1 = path_matrices(s1, p1[i]).D;
      const Mat d2 = path_matrices(s2, p2[i]).D;
      worst = std::max(worst, (d1 - d2).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("unobservable and reachable subspaces of a decoupled mode") {
  Mat A(2, 2), B(2, 1), C(1, 2), D(1, 1);
  A << 0.5, 0.0, 0.0, 0.4;
  B << 1.0, 1.0;
  C << 1.0, 0.0;  // second state never reaches the output
  D << 0.0;
  const auto sys = single_node_lti(A, B, C, D);

  const auto unobs = unobservable_subspaces(sys);
  REQUIRE(unobs.basis.size() == 1);
  REQUIRE(unobs.basis[0].cols() == 1);
  CHECK(std::abs(std::abs(unobs.basis[0](1, 0)) - 1.0) <= 1e-12);
  CHECK(std::abs(unobs.basis[0](0, 0)) <= 1e-12);

  const auto reach = reachable_subspaces(sys);
  CHECK(reach.basis[0].cols() == 2);  // (B, AB) has full rank

  const auto [msys, rep] = minimize(sys);
  CHECK(rep.final_dims == std::vector<int>{1});
  CHECK(is_minimal(msys));
  CHECK_FALSE(is_minimal(sys));
  // the surviving state is the a = 0.5 strand: impulse response preserved
  CHECK(max_io_gap(sys, msys, 4) <= 1e-12);
}

TEST_CASE("restriction onto identity bases is the identity") {
  std::mt19937_64 rng(21);
  const auto sys = random_system(rng, 3, 3, 2);
  SubspaceFamily fam;
  fam.kind = SubspaceKind::Reachable;
  for (const auto& nd : sys.nodes)
    fam.basis.push_back(Mat::Identity(nd.dim, nd.dim));
  const auto same = restrict_to_reachable(sys, fam);
  for (int k = 0; k < sys.num_edges(); ++k) {
    CHECK((same.edges[k].A - sys.edges[k].A).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((same.edges[k].B - sys.edges[k].B).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((same.edges[k].C - sys.edges[k].C).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((same.edges[k].D - sys.edges[k].D).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("orthonormal_complement spans the missing directions") {
  std::mt19937_64 rng(4);
  const Mat Q = testutil::random_orthogonal(rng, 5);
  const Mat basis = Q.leftCols(2);
  const Mat comp = orthonormal_complement(basis, 5);
  REQUIRE(comp.cols() == 3);
  CHECK((comp.transpose() * comp - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <=
        1e-12);
  CHECK((basis.transpose() * comp).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK(orthonormal_complement(Q, 5).cols() == 0);
  const Mat empty(5, 0);
  const Mat full = orthonormal_complement(empty, 5);
  REQUIRE(full.cols() == 5);
  CHECK((full.transpose() * full - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("delayed-observation plant reduces to heterogeneous dimensions") {
  const auto sys = pendulum_example();
  CHECK_FALSE(is_minimal(sys));

  const auto unobs = unobservable_subspaces(sys);
  std::vector<int> udims;
  for (const auto& b : unobs.basis) udims.push_back(static_cast<int>(b.cols()));
  CHECK(udims == std::vector<int>{1, 1, 2});

  const auto [msys, rep] = minimize(sys);
  CHECK(rep.final_dims == std::vector<int>{2, 3, 2});
  CHECK(is_minimal(msys));
  CHECK_FALSE(rep.ambiguous);
  REQUIRE(!rep.dims_per_iteration.empty());
  CHECK(rep.dims_per_iteration.front() == std::vector<int>{4, 4, 4});

  CHECK(max_io_gap(sys, msys, 5) <= 1e-9);

  // minimizing a minimal system changes nothing
  const auto [again, rep2] = minimize(msys);
  CHECK(rep2.final_dims == rep.final_dims);
}

TEST_CASE("embedded junk states are stripped exactly") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    const auto base = minimize(random_system(rng, 3, 3, 2)).first;
    if (!is_minimal(base)) continue;  // pathological draw, skip
    std::vector<int> base_dims;
    for (const auto& nd : base.nodes) base_dims.push_back(nd.dim);

    const auto fat = make_embedded(rng, base, 3);
    CHECK_FALSE(is_minimal(fat));
    CHECK(max_io_gap(base, fat, 4) <= 1e-10);

    const auto [rec, rep] = minimize(fat);
    CHECK(rep.final_dims == base_dims);
    CHECK(max_io_gap(base, rec, 4) <= 1e-9);
  }
}

TEST_CASE("output-free systems collapse to dimension zero") {
  std::mt19937_64 rng(8);
  auto sys = random_system(rng, 2, 2, 1);
  for (auto& e : sys.edges) e.C.setZero();
  const auto [msys, rep] = minimize(sys);
  CHECK(rep.final_dims == std::vector<int>(sys.num_nodes(), 0));
  for (bool z : rep.reached_zero) CHECK(z);
  CHECK(validate_system(msys).ok());
  CHECK(is_minimal(msys));
}

TEST_CASE("explicit tolerance matches automatic on a clean system") {
  const auto sys = pendulum_example();
  const auto a = unobservable_subspaces(sys);
  const auto b = unobservable_subspaces(sys, 1e-9);
  REQUIRE(a.basis.size() == b.basis.size());
  for (size_t v = 0; v < a.basis.size(); ++v)
    CHECK(a.basis[v].cols() == b.basis[v].cols());
}
