#include <doctest.h>

#include <cmath>

#include "cgnnse/errors.hpp"
#include "cgnnse/grid.hpp"
#include "cgnnse/powerflow.hpp"
#include "oracles.hpp"

using namespace cgnnse;
using grid::GridGraph;

namespace {

std::string case_path(const std::string& name) {
  return std::string(CGNNSE_SOURCE_DIR) + "/data/cases/" + name;
}

const char* kTwoBusLoad = R"(case twobus
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 100 0 0 0 0 1 0
gen 1
1 0 0 1 1
branch 1
1 2 0 0.1 0 0 1
end
)";

}  // namespace

TEST_CASE("build_ybus: single branch closed form") {
  const GridGraph g = grid::parse_case(kTwoBusLoad);
  const powerflow::Ybus y = powerflow::build_ybus(g);
  CHECK(y.g(0, 0) == 0.0);
  CHECK(y.b(0, 0) == doctest::Approx(-10.0).epsilon(1e-14));
  CHECK(y.b(0, 1) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(y.b(1, 0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(y.b(1, 1) == doctest::Approx(-10.0).epsilon(1e-14));
}

TEST_CASE("build_ybus: shunt-only contribution is diagonal") {
  const char* shunt = R"(case sh
basemva 100
bus 2
1 3 0 0 0 0 0 1 0
2 1 0 0 5 19 0 1 0
gen 0
branch 1
1 2 0.01 0.1 0 0 1
end
)";
  const GridGraph g = grid::parse_case(shunt);
  const powerflow::Ybus with = powerflow::build_ybus(g);
  GridGraph no_shunt = g;
  no_shunt.buses[1].gs_mw = 0.0;
  no_shunt.buses[1].bs_mvar = 0.0;
  const powerflow::Ybus base = powerflow::build_ybus(no_shunt);
  CHECK(with.g(1, 1) - base.g(1, 1) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(with.b(1, 1) - base.b(1, 1) == doctest::Approx(0.19).epsilon(1e-14));
  CHECK(with.g(0, 1) == base.g(0, 1));
  CHECK(with.b(1, 0) == base.b(1, 0));
}

TEST_CASE("build_ybus: 14-bus against the stamping oracle") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const powerflow::Ybus y = powerflow::build_ybus(g);
  const auto [gm, bm] = oracles::ybus_stamping_oracle(g);
  for (std::size_t i = 0; i < g.bus_count(); ++i)
    for (std::size_t j = 0; j < g.bus_count(); ++j) {
      CHECK(std::fabs(y.g(i, j) - gm(i, j)) < 1e-12);
      CHECK(std::fabs(y.b(i, j) - bm(i, j)) < 1e-12);
    }
}

TEST_CASE("build_ybus: zero-impedance branch rejected") {
  GridGraph g = grid::parse_case(kTwoBusLoad);
  g.branches[0].r = 0.0;
  g.branches[0].x = 0.0;
  CHECK_THROWS_AS(powerflow::build_ybus(g), InputError);
}

TEST_CASE("solve: flat start is the solution of the unloaded network") {
  const char* idle = R"(case idle
basemva 100
bus 3
1 3 0 0 0 0 0 1 0
2 1 0 0 0 0 0 1 0
3 1 0 0 0 0 0 1 0
gen 1
1 0 0 1 1
branch 2
1 2 0.01 0.1 0 0 1
2 3 0.01 0.1 0 0 1
end
)";
  const powerflow::Solution sol = powerflow::solve(grid::parse_case(idle));
  CHECK(sol.iterations <= 1);
  for (double v : sol.vm) CHECK(v == 1.0);
  for (double a : sol.va) CHECK(a == 0.0);
}

TEST_CASE("solve: two-bus load satisfies the line power equation") {
  const GridGraph g = grid::parse_case(kTwoBusLoad);
  const powerflow::Solution sol = powerflow::solve(g);
  // P received at bus 2 equals V1 V2 sin(th1 - th2) / x = 1.0 p.u.
  const double p = sol.vm[0] * sol.vm[1] * std::sin(sol.va[0] - sol.va[1]) / 0.1;
  CHECK(std::fabs(p - 1.0) < 1e-8);
  CHECK(sol.va[0] == 0.0);  // slack pinned
  CHECK(sol.vm[0] == 1.0);
}

TEST_CASE("solve: 14-bus converges fast and self-verifies") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const powerflow::Solution sol = powerflow::solve(g);
  CHECK(sol.iterations <= 10);
  CHECK(sol.max_mismatch < 1e-8);

  std::vector<double> pd(g.bus_count()), qd(g.bus_count());
  for (std::size_t i = 0; i < g.bus_count(); ++i) {
    pd[i] = g.buses[i].pd_mw;
    qd[i] = g.buses[i].qd_mvar;
  }
  CHECK(powerflow::max_power_mismatch(g, sol.vm, sol.va, pd, qd) < 1e-8);
  // independent first-principles residual
  CHECK(oracles::power_balance_residual(g, sol.vm, sol.va, pd, qd) < 1e-8);

  // determinism
  const powerflow::Solution again = powerflow::solve(g);
  for (std::size_t i = 0; i < g.bus_count(); ++i) {
    CHECK(sol.vm[i] == again.vm[i]);
    CHECK(sol.va[i] == again.va[i]);
  }
  // plausible magnitudes for the standard case
  for (double v : sol.vm) {
    CHECK(v > 0.9);
    CHECK(v < 1.12);
  }
}

TEST_CASE("solve: zeroed loads recover the flat profile") {
  GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  for (auto& b : g.buses) {
    b.pd_mw = 0.0;
    b.qd_mvar = 0.0;
    b.bs_mvar = 0.0;
    b.gs_mw = 0.0;
  }
  for (auto& gen : g.gens) {
    gen.pg_mw = 0.0;
    gen.vset = 1.0;
  }
  for (auto& br : g.branches) br.b = 0.0;
  const powerflow::Solution sol = powerflow::solve(g);
  for (double v : sol.vm) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (double a : sol.va) CHECK(std::fabs(a) < 1e-12);
}

TEST_CASE("solve: hopeless loading reports the worst mismatch") {
  GridGraph g = grid::parse_case(kTwoBusLoad);
  g.buses[1].pd_mw = 1e6;
  CHECK_THROWS_WITH_AS(powerflow::solve(g), doctest::Contains("did not converge"),
                       NumericalError);
}

TEST_CASE("solve: 30-bus and 118-bus cases converge") {
  for (const char* name : {"ieee30.case", "ieee118.case"}) {
    const GridGraph g = grid::load_case_file(case_path(name));
    const powerflow::Solution sol = powerflow::solve(g);
    CHECK(sol.max_mismatch < 1e-8);
    CHECK(sol.iterations <= 12);
    for (double v : sol.vm) {
      CHECK(v > 0.85);
      CHECK(v < 1.15);
    }
  }
}

TEST_CASE("branch_flow_mva: flows are positive and the heaviest is plausible") {
  const GridGraph g = grid::load_case_file(case_path("ieee14.case"));
  const powerflow::Solution sol = powerflow::solve(g);
  const std::vector<double> flows = powerflow::branch_flow_mva(g, sol);
  CHECK(flows.size() == g.branches.size());
  // line 1-2 carries the largest flow in the base case
  std::size_t argmax = 0;
  for (std::size_t k = 1; k < flows.size(); ++k) {
    if (flows[k] > flows[argmax]) argmax = k;
  }
  CHECK(g.branches[argmax].from_bus == 1);
  CHECK(g.branches[argmax].to_bus == 2);
  CHECK(flows[argmax] > 100.0);
}
