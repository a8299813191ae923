#pragma once

#include <span>
#include <vector>

#include "cgnnse/grid.hpp"
#include "cgnnse/matrix.hpp"

namespace cgnnse::powerflow {

/// Bus admittance matrix Y = G + jB as paired real matrices.
struct Ybus {
  numerics::Matrix g;
  numerics::Matrix b;
};

/// Standard assembly with off-nominal taps, line charging and bus shunts.
/// Throws InputError on an in-service zero-impedance branch.
Ybus build_ybus(const grid::GridGraph& g);

struct Solution {
  std::vector<double> vm;  // p.u.
  std::vector<double> va;  // radians; exactly 0 at the slack bus
  int iterations = 0;
  double max_mismatch = 0.0;  // p.u.
};

struct SolveOptions {
  double tolerance = 1e-8;  // p.u. power mismatch
  int max_iter = 30;
};

/// Full Newton-Raphson AC power flow in polar coordinates from a flat start.
/// Pure function of its inputs; deterministic. Throws NumericalError on
/// non-convergence (reporting the worst mismatch) or a singular Jacobian.
Solution solve(const grid::GridGraph& g, const SolveOptions& opt = {});

/// Same solver with the bus load tables replaced (MW / MVAr, bus order).
Solution solve_with_loads(const grid::GridGraph& g, std::span<const double> pd_mw,
                          std::span<const double> qd_mvar, const SolveOptions& opt = {});

/// Largest absolute active/reactive power-balance residual (p.u.) of a
/// candidate state; the self-verification hook for solved snapshots.
double max_power_mismatch(const grid::GridGraph& g, std::span<const double> vm,
                          std::span<const double> va, std::span<const double> pd_mw,
                          std::span<const double> qd_mvar);

/// Apparent power |S| (MVA) at the from end of every in-service branch;
/// out-of-service entries are 0. Used to rank outage candidates by flow.
std::vector<double> branch_flow_mva(const grid::GridGraph& g, const Solution& sol);

}  // namespace cgnnse::powerflow
