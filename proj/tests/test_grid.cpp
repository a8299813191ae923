#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cgnnse/errors.hpp"
#include "cgnnse/grid.hpp"
#include "cgnnse/rng.hpp"
#include "oracles.hpp"

using namespace cgnnse;
using grid::GridGraph;
using numerics::Matrix;

namespace {

std::string case_path(const std::string& name) {
  return std::string(CGNNSE_SOURCE_DIR) + "/data/cases/" + name;
}

// two buses joined by one line
const char* kTwoBus = R"(case twobus
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 10 5 0 0 0 1 0
gen 1
1 10 0 1 1
branch 1
1 2 0.01 0.1 0 0 1
end
)";

// dense eigendecomposition reference for the spectral norm
double eigen_spectral_norm(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      e(static_cast<long>(i), static_cast<long>(j)) = m(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()(0);
}

}  // namespace

TEST_CASE("parse_case: bundled 14-bus counts and round trip") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  CHECK(g.bus_count() == 14);
  CHECK(g.branches.size() == 20);
  CHECK(g.gens.size() == 5);
  CHECK(g.slack_bus == 1);

  const std::string text = g.serialize();
  const GridGraph again = grid::parse_case(text);
  CHECK(again.serialize() == text);  // byte-stable round trip
  CHECK(again.content_hash() == g.content_hash());
}

TEST_CASE("parse_case: diagnostics carry line numbers") {
  // branch endpoint 99 unknown (line 8 of this payload)
  const char* dangling = R"(case bad
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 0 0 0 0 0 1 0
gen 0
branch 1
1 99 0.01 0.1 0 0 1
end
)";
  try {
    grid::parse_case(dangling);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("99") != std::string::npos);
    CHECK(msg.find("line 8") != std::string::npos);
  }

  const char* no_branches = R"(case empty
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 0 0 0 0 0 1 0
gen 0
branch 0
end
)";
  CHECK_THROWS_WITH_AS(grid::parse_case(no_branches),
                       doctest::Contains("not connected"), InputError);

  const char* duplicate = R"(case dup
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
1 1 0 0 0 0 0 1 0
gen 0
branch 0
end
)";
  CHECK_THROWS_WITH_AS(grid::parse_case(duplicate), doctest::Contains("duplicate bus id"),
                       InputError);

  const char* zero_z = R"(case zz
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 0 0 0 0 0 1 0
gen 0
branch 1
1 2 0 0 0 0 1
end
)";
  CHECK_THROWS_WITH_AS(grid::parse_case(zero_z), doctest::Contains("zero-impedance"),
                       InputError);

  const char* malformed = R"(case mf
basemva 100
bus 1
1 3 0 0 0 0 0 1
gen 0
branch 0
end
)";
  CHECK_THROWS_WITH_AS(grid::parse_case(malformed), doctest::Contains("9 fields"),
                       InputError);
}

TEST_CASE("build_adjacency: tiny closed forms") {
  const GridGraph two = grid::parse_case(kTwoBus);
  const grid::AdjacencyPack pack = grid::build_adjacency(two);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(pack.a_norm(i, j) == doctest::Approx(0.5));

  const char* isolated = R"(case one
basemva 100
bus 1
1 3 0 0 0 0 0 1 0
gen 0
branch 0
end
)";
  const grid::AdjacencyPack single = grid::build_adjacency(grid::parse_case(isolated));
  CHECK(single.a_norm(0, 0) == 1.0);
}

TEST_CASE("build_adjacency: 14-bus against direct recomputation") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const grid::AdjacencyPack pack = grid::build_adjacency(g);
  const std::size_t n = g.bus_count();
  // brute-force D^{-1/2} (A+I) D^{-1/2}
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += pack.a_hat(i, j);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0, want = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_sum += pack.a_norm(i, j);
      want += pack.a_hat(i, j) / std::sqrt(deg[i] * deg[j]);
    }
    CHECK(row_sum == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(grid::spectral_norm(pack.a_norm) <= 1.0 + 1e-9);
  // symmetry, zero diagonal of A
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(pack.a(i, i) == 0.0);
    for (std::size_t j = 0; j < n; ++j) CHECK(pack.a(i, j) == pack.a(j, i));
  }
}

TEST_CASE("perturb_topology: islanding, parallel pairs, unknown ids") {
  const char* chain = R"(case chain
basemva 100
bus 3
1 3 0 0 0 0 0 1 0
2 1 5 1 0 0 0 1 0
3 1 5 1 0 0 0 1 0
gen 0
branch 2
1 2 0.01 0.1 0 0 1
2 3 0.01 0.1 0 0 1
end
)";
  const GridGraph g = grid::parse_case(chain);
  try {
    grid::perturb_topology(g, {1});  // removes 2-3, islanding bus 3
    FAIL("expected islanding error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("{3}") != std::string::npos);
  }
  CHECK_THROWS_AS(grid::perturb_topology(g, {17}), InputError);

  const char* parallel = R"(case par
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 5 1 0 0 0 1 0
gen 0
branch 2
1 2 0.01 0.1 0 0 1
1 2 0.02 0.2 0 0 1
end
)";
  const GridGraph p = grid::parse_case(parallel);
  const GridGraph pert = grid::perturb_topology(p, {0});
  CHECK(pert.branches[0].in_service == false);
  CHECK(p.branches[0].in_service == true);  // original untouched
  const grid::AdjacencyPack a0 = grid::build_adjacency(p);
  const grid::AdjacencyPack a1 = grid::build_adjacency(pert);
  CHECK(grid::adjacency_distance(a0, a1) == 0.0);  // collapsed parallel edges
}

TEST_CASE("adjacency_distance: closed forms and an eigensolver oracle") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const grid::AdjacencyPack base = grid::build_adjacency(g);
  CHECK(grid::adjacency_distance(base, base) == 0.0);

  const grid::AdjacencyPack one =
      grid::build_adjacency(grid::perturb_topology(g, {0}));
  CHECK(grid::adjacency_distance(base, one) == doctest::Approx(1.0).epsilon(1e-10));

  // two disjoint edges removed: branch 0 is 1-2, branch 15 is 9-10
  const grid::AdjacencyPack two =
      grid::build_adjacency(grid::perturb_topology(g, {0, 15}));
  const double got = grid::adjacency_distance(base, two);
  const double want = eigen_spectral_norm(numerics::sub(base.a, two.a));
  CHECK(got == doctest::Approx(want).epsilon(1e-8));
  CHECK(got == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(
      grid::adjacency_distance(base, grid::build_adjacency(grid::parse_case(kTwoBus))),
      InputError);
}

TEST_CASE("118-bus: structure, the (8,5) opening, highest-voltage placement") {
  const GridGraph g = grid::load_case_file(case_path("ieee118.case"));
  CHECK(g.bus_count() == 118);
  CHECK(g.branches.size() == 186);

  const std::size_t line85 = g.branch_index(8, 5);
  const GridGraph pert = grid::perturb_topology(g, {line85});
  const grid::AdjacencyPack base = grid::build_adjacency(g);
  const grid::AdjacencyPack after = grid::build_adjacency(pert);
  const double dist = grid::adjacency_distance(base, after);
  CHECK(dist > 0.0);
  CHECK(dist ==
        doctest::Approx(eigen_spectral_norm(numerics::sub(base.a, after.a))).epsilon(1e-8));

  const std::vector<int> pmus = grid::highest_voltage_buses(g);
  CHECK(pmus == std::vector<int>{8, 9, 10, 26, 30, 38, 63, 64, 65, 68, 81});
}

TEST_CASE("build_adjacency: permutation equivariance") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const grid::AdjacencyPack base = grid::build_adjacency(g);

  // relabel by reversing the bus table order
  GridGraph permuted = g;
  std::reverse(permuted.buses.begin(), permuted.buses.end());
  const grid::AdjacencyPack pp = grid::build_adjacency(permuted);
  const std::size_t n = g.bus_count();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(pp.a_norm(i, j) ==
            doctest::Approx(base.a_norm(n - 1 - i, n - 1 - j)).epsilon(1e-15));
    }
}

TEST_CASE("spectral_norm: zero matrix and random oracle comparison") {
  CHECK(grid::spectral_norm(Matrix(4, 4)) == 0.0);
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix m(6, 6);
    for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
    CHECK(grid::spectral_norm(m) ==
          doctest::Approx(eigen_spectral_norm(m)).epsilon(1e-8));
  }
}
