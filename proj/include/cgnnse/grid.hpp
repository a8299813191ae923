#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cgnnse/matrix.hpp"

namespace cgnnse::grid {

enum class BusType { kPq = 1, kPv = 2, kSlack = 3 };

struct Bus {
  int id = 0;
  BusType type = BusType::kPq;
  double pd_mw = 0.0;
  double qd_mvar = 0.0;
  double gs_mw = 0.0;    // shunt conductance at V=1 p.u.
  double bs_mvar = 0.0;  // shunt susceptance at V=1 p.u.
  double base_kv = 0.0;
  double vm_init = 1.0;
  double va_init_deg = 0.0;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;    // series resistance, p.u.
  double x = 0.0;    // series reactance, p.u.
  double b = 0.0;    // total line charging susceptance, p.u.
  double tap = 0.0;  // off-nominal turns ratio at from end; 0 means none
  bool in_service = true;
};

struct Gen {
  int bus = 0;
  double pg_mw = 0.0;
  double qg_mvar = 0.0;
  double vset = 1.0;  // voltage setpoint, p.u.
  bool in_service = true;
};

/// Power-grid graph model parsed from the plain-text case format documented
/// in docs/case-format.md. Immutable after construction.
struct GridGraph {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Gen> gens;
  int slack_bus = 0;

  std::size_t bus_count() const { return buses.size(); }
  /// Dense index of a bus id; throws InputError for unknown ids.
  std::size_t bus_index(int id) const;
  /// 0-based index of the first in-service branch joining the two buses
  /// (either orientation); throws InputError if absent.
  std::size_t branch_index(int from, int to) const;

  std::string serialize() const;
  std::uint64_t content_hash() const;
};

/// Parses the documented case format. Diagnostics carry 1-based line numbers.
GridGraph parse_case(std::string_view text);

GridGraph load_case_file(const std::string& path);

/// Returns a copy with the listed branches (0-based indices into
/// `g.branches`) switched out of service. Throws InputError for unknown ids
/// and when the outage would split the grid (the message lists one of the
/// resulting islands).
GridGraph perturb_topology(const GridGraph& g, const std::vector<std::size_t>& outages);

/// A = binary adjacency over in-service branches, A_hat = A + I,
/// degree = row sums of A_hat, a_norm = D^{-1/2} A_hat D^{-1/2}, and
/// a_norm_sq = a_norm elementwise squared (used by variance propagation).
struct AdjacencyPack {
  numerics::Matrix a;
  numerics::Matrix a_hat;
  numerics::Matrix degree;
  numerics::Matrix a_norm;
  numerics::Matrix a_norm_sq;
};

AdjacencyPack build_adjacency(const GridGraph& g);

/// Rebuilds a full pack from a stored binary adjacency matrix.
AdjacencyPack build_adjacency_from_matrix(const numerics::Matrix& a);

/// Operator 2-norm by power iteration on M^T M, to 1e-10 relative tolerance.
double spectral_norm(const numerics::Matrix& m, double rel_tol = 1e-10,
                     std::size_t max_iter = 10000);

/// Spectral norm of A - A' (the raw binary adjacencies).
double adjacency_distance(const AdjacencyPack& a, const AdjacencyPack& b);

/// Buses whose base kV equals the case maximum (the placement policy used
/// when a PMU spec says `highest-voltage`).
std::vector<int> highest_voltage_buses(const GridGraph& g);

}  // namespace cgnnse::grid
