#include "cgnnse/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cgnnse/errors.hpp"
#include "cgnnse/hash.hpp"
#include "cgnnse/rng.hpp"

namespace cgnnse::grid {

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& message) {
  throw InputError("case parse error at line " + std::to_string(line_no) + ": " + message);
}

struct Cursor {
  std::vector<std::string> lines;
  std::size_t next = 0;

  // Returns the next non-empty, non-comment line, or nullptr at end.
  const std::string* take(std::size_t* line_no) {
    while (next < lines.size()) {
      const std::string& l = lines[next];
      ++next;
      std::size_t i = l.find_first_not_of(" \t\r");
      if (i == std::string::npos || l[i] == '#') continue;
      *line_no = next;  // 1-based
      return &l;
    }
    return nullptr;
  }
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_real(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last) parse_fail(line_no, "bad number '" + tok + "'");
  if (!std::isfinite(v)) parse_fail(line_no, "non-finite number '" + tok + "'");
  return v;
}

long parse_int(const std::string& tok, std::size_t line_no) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    parse_fail(line_no, "bad integer '" + tok + "'");
  }
  return v;
}

// Shortest round-trip decimal text for a double; keeps serialization
// byte-stable and lossless.
std::string format_real(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::vector<std::vector<std::size_t>> neighbor_lists(const GridGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.bus_count());
  for (const Branch& br : g.branches) {
    if (!br.in_service) continue;
    const std::size_t f = g.bus_index(br.from_bus);
    const std::size_t t = g.bus_index(br.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  return adj;
}

// Buses reachable from bus 0 over in-service branches.
std::vector<bool> reachable_from_first(const GridGraph& g) {
  std::vector<bool> seen(g.bus_count(), false);
  if (g.bus_count() == 0) return seen;
  const auto adj = neighbor_lists(g);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

void require_connected(const GridGraph& g, const char* context) {
  const auto seen = reachable_from_first(g);
  std::vector<int> island;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) island.push_back(g.buses[i].id);
  }
  if (island.empty()) return;
  std::string msg = std::string(context) + ": grid is not connected; island {";
  for (std::size_t i = 0; i < island.size(); ++i) {
    if (i) msg += ",";
    msg += std::to_string(island[i]);
  }
  msg += "}";
  throw InputError(msg);
}

}  // namespace

std::size_t GridGraph::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw InputError("unknown bus id " + std::to_string(id));
}

std::size_t GridGraph::branch_index(int from, int to) const {
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Branch& br = branches[i];
    if (!br.in_service) continue;
    if ((br.from_bus == from && br.to_bus == to) ||
        (br.from_bus == to && br.to_bus == from)) {
      return i;
    }
  }
  throw InputError("no in-service branch between buses " + std::to_string(from) +
                   " and " + std::to_string(to));
}

GridGraph parse_case(std::string_view text) {
  Cursor cur;
  {
    std::string current;
    for (char c : text) {
      if (c == '\n') {
        cur.lines.push_back(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) cur.lines.push_back(current);
  }

  GridGraph g;
  std::size_t ln = 0;
  const std::string* line = cur.take(&ln);
  if (!line) parse_fail(1, "empty file");
  {
    auto f = split_fields(*line);
    if (f.size() != 2 || f[0] != "case") parse_fail(ln, "expected 'case <name>'");
    g.name = f[1];
  }
  line = cur.take(&ln);
  if (!line) parse_fail(ln, "expected 'basemva <value>'");
  {
    auto f = split_fields(*line);
    if (f.size() != 2 || f[0] != "basemva") parse_fail(ln, "expected 'basemva <value>'");
    g.base_mva = parse_real(f[1], ln);
    if (g.base_mva <= 0.0) parse_fail(ln, "basemva must be positive");
  }

  // bus table
  line = cur.take(&ln);
  if (!line) parse_fail(ln, "expected 'bus <count>'");
  {
    auto f = split_fields(*line);
    if (f.size() != 2 || f[0] != "bus") parse_fail(ln, "expected 'bus <count>'");
    const long count = parse_int(f[1], ln);
    if (count <= 0) parse_fail(ln, "bus count must be positive");
    int slack_count = 0;
    for (long k = 0; k < count; ++k) {
      line = cur.take(&ln);
      if (!line) parse_fail(cur.lines.size(), "bus table truncated");
      auto bf = split_fields(*line);
      if (bf.size() != 9) parse_fail(ln, "bus row needs 9 fields: id type Pd Qd Gs Bs baseKV Vm Va");
      Bus b;
      b.id = static_cast<int>(parse_int(bf[0], ln));
      const long type = parse_int(bf[1], ln);
      if (type < 1 || type > 3) parse_fail(ln, "bus type must be 1 (PQ), 2 (PV) or 3 (slack)");
      b.type = static_cast<BusType>(type);
      b.pd_mw = parse_real(bf[2], ln);
      b.qd_mvar = parse_real(bf[3], ln);
      b.gs_mw = parse_real(bf[4], ln);
      b.bs_mvar = parse_real(bf[5], ln);
      b.base_kv = parse_real(bf[6], ln);
      b.vm_init = parse_real(bf[7], ln);
      b.va_init_deg = parse_real(bf[8], ln);
      for (const Bus& prev : g.buses) {
        if (prev.id == b.id) parse_fail(ln, "duplicate bus id " + std::to_string(b.id));
      }
      if (b.type == BusType::kSlack) {
        ++slack_count;
        g.slack_bus = b.id;
      }
      g.buses.push_back(b);
    }
    if (slack_count != 1) {
      parse_fail(ln, "case must declare exactly one slack bus, found " +
                         std::to_string(slack_count));
    }
  }

  // gen table
  line = cur.take(&ln);
  if (!line) parse_fail(ln, "expected 'gen <count>'");
  {
    auto f = split_fields(*line);
    if (f.size() != 2 || f[0] != "gen") parse_fail(ln, "expected 'gen <count>'");
    const long count = parse_int(f[1], ln);
    for (long k = 0; k < count; ++k) {
      line = cur.take(&ln);
      if (!line) parse_fail(cur.lines.size(), "gen table truncated");
      auto gf = split_fields(*line);
      if (gf.size() != 5) parse_fail(ln, "gen row needs 5 fields: bus Pg Qg Vset status");
      Gen gen;
      gen.bus = static_cast<int>(parse_int(gf[0], ln));
      gen.pg_mw = parse_real(gf[1], ln);
      gen.qg_mvar = parse_real(gf[2], ln);
      gen.vset = parse_real(gf[3], ln);
      gen.in_service = parse_int(gf[4], ln) != 0;
      bool known = false;
      for (const Bus& b : g.buses) known |= b.id == gen.bus;
      if (!known) parse_fail(ln, "gen references unknown bus " + std::to_string(gen.bus));
      g.gens.push_back(gen);
    }
  }

  // branch table
  line = cur.take(&ln);
  if (!line) parse_fail(ln, "expected 'branch <count>'");
  {
    auto f = split_fields(*line);
    if (f.size() != 2 || f[0] != "branch") parse_fail(ln, "expected 'branch <count>'");
    const long count = parse_int(f[1], ln);
    for (long k = 0; k < count; ++k) {
      line = cur.take(&ln);
      if (!line) parse_fail(cur.lines.size(), "branch table truncated");
      auto bf = split_fields(*line);
      if (bf.size() != 7) parse_fail(ln, "branch row needs 7 fields: from to r x b tap status");
      Branch br;
      br.from_bus = static_cast<int>(parse_int(bf[0], ln));
      br.to_bus = static_cast<int>(parse_int(bf[1], ln));
      br.r = parse_real(bf[2], ln);
      br.x = parse_real(bf[3], ln);
      br.b = parse_real(bf[4], ln);
      br.tap = parse_real(bf[5], ln);
      br.in_service = parse_int(bf[6], ln) != 0;
      bool from_known = false, to_known = false;
      for (const Bus& b : g.buses) {
        from_known |= b.id == br.from_bus;
        to_known |= b.id == br.to_bus;
      }
      if (!from_known || !to_known) {
        parse_fail(ln, "branch endpoint references unknown bus " +
                           std::to_string(from_known ? br.to_bus : br.from_bus));
      }
      if (br.from_bus == br.to_bus) parse_fail(ln, "branch endpoints coincide");
      if (br.in_service && br.r == 0.0 && br.x == 0.0) {
        parse_fail(ln, "zero-impedance branch " + std::to_string(br.from_bus) + "-" +
                           std::to_string(br.to_bus));
      }
      g.branches.push_back(br);
    }
  }

  line = cur.take(&ln);
  if (!line || split_fields(*line)[0] != "end") {
    parse_fail(line ? ln : cur.lines.size(), "expected 'end'");
  }

  require_connected(g, "case parse");
  return g;
}

std::string GridGraph::serialize() const {
  std::string out;
  out += "case " + name + "\n";
  out += "basemva " + format_real(base_mva) + "\n";
  out += "bus " + std::to_string(buses.size()) + "\n";
  for (const Bus& b : buses) {
    out += std::to_string(b.id) + " " + std::to_string(static_cast<int>(b.type)) + " " +
           format_real(b.pd_mw) + " " + format_real(b.qd_mvar) + " " +
           format_real(b.gs_mw) + " " + format_real(b.bs_mvar) + " " +
           format_real(b.base_kv) + " " + format_real(b.vm_init) + " " +
           format_real(b.va_init_deg) + "\n";
  }
  out += "gen " + std::to_string(gens.size()) + "\n";
  for (const Gen& gen : gens) {
    out += std::to_string(gen.bus) + " " + format_real(gen.pg_mw) + " " +
           format_real(gen.qg_mvar) + " " + format_real(gen.vset) + " " +
           std::string(gen.in_service ? "1" : "0") + "\n";
  }
  out += "branch " + std::to_string(branches.size()) + "\n";
  for (const Branch& br : branches) {
    out += std::to_string(br.from_bus) + " " + std::to_string(br.to_bus) + " " +
           format_real(br.r) + " " + format_real(br.x) + " " + format_real(br.b) + " " +
           format_real(br.tap) + " " + std::string(br.in_service ? "1" : "0") + "\n";
  }
  out += "end\n";
  return out;
}

std::uint64_t GridGraph::content_hash() const { return fnv1a64(serialize()); }

GridGraph load_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open case file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_case(buffer.str());
}

GridGraph perturb_topology(const GridGraph& g, const std::vector<std::size_t>& outages) {
  GridGraph out = g;
  for (std::size_t idx : outages) {
    if (idx >= out.branches.size()) {
      throw InputError("unknown branch id " + std::to_string(idx));
    }
    out.branches[idx].in_service = false;
  }
  require_connected(out, "topology perturbation");
  return out;
}

AdjacencyPack build_adjacency(const GridGraph& g) {
  const std::size_t n = g.bus_count();
  numerics::Matrix a(n, n);
  for (const Branch& br : g.branches) {
    if (!br.in_service) continue;
    const std::size_t f = g.bus_index(br.from_bus);
    const std::size_t t = g.bus_index(br.to_bus);
    // parallel branches collapse to a single binary entry
    a(f, t) = 1.0;
    a(t, f) = 1.0;
  }
  return build_adjacency_from_matrix(a);
}

AdjacencyPack build_adjacency_from_matrix(const numerics::Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw InputError("adjacency must be square");
  AdjacencyPack pack;
  pack.a = a;
  pack.a_hat = pack.a;
  for (std::size_t i = 0; i < n; ++i) pack.a_hat(i, i) = 1.0;
  pack.degree = numerics::Matrix(n, n);
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += pack.a_hat(i, j);
    pack.degree(i, i) = deg;
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  pack.a_norm = numerics::Matrix(n, n);
  pack.a_norm_sq = numerics::Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = inv_sqrt_deg[i] * pack.a_hat(i, j) * inv_sqrt_deg[j];
      pack.a_norm(i, j) = v;
      pack.a_norm_sq(i, j) = v * v;
    }
  }
  const double norm = spectral_norm(pack.a_norm);
  if (norm > 1.0 + 1e-9) {
    throw NumericalError("normalized adjacency spectral norm " + std::to_string(norm) +
                         " exceeds 1");
  }
  return pack;
}

double spectral_norm(const numerics::Matrix& m, double rel_tol, std::size_t max_iter) {
  const std::size_t n = m.cols();
  if (n == 0 || m.rows() == 0) return 0.0;
  // Power iteration on M^T M with a fixed pseudo-random start.
  Rng rng(0x5eed5eed);
  std::vector<double> v(n);
  double norm0 = 0.0;
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm0 += x * x;
  }
  norm0 = std::sqrt(norm0);
  for (double& x : v) x /= norm0;

  std::vector<double> mv(m.rows()), w(n);
  double lambda_prev = 0.0;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += m(i, j) * v[j];
      mv[i] = s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * mv[i];
      w[j] = s;
    }
    double lambda = 0.0;
    for (std::size_t j = 0; j < n; ++j) lambda += v[j] * w[j];  // Rayleigh quotient
    double wnorm = 0.0;
    for (double x : w) wnorm += x * x;
    wnorm = std::sqrt(wnorm);
    if (wnorm == 0.0) return 0.0;
    for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / wnorm;
    if (iter > 0 && std::fabs(lambda - lambda_prev) <= rel_tol * std::fabs(lambda)) {
      return std::sqrt(std::max(0.0, lambda));
    }
    lambda_prev = lambda;
  }
  return std::sqrt(std::max(0.0, lambda_prev));
}

double adjacency_distance(const AdjacencyPack& a, const AdjacencyPack& b) {
  if (!a.a.same_shape(b.a)) {
    throw InputError("adjacency_distance: dimensions " + numerics::shape_string(a.a) +
                     " and " + numerics::shape_string(b.a) + " differ");
  }
  return spectral_norm(numerics::sub(a.a, b.a));
}

std::vector<int> highest_voltage_buses(const GridGraph& g) {
  double max_kv = 0.0;
  for (const Bus& b : g.buses) max_kv = std::max(max_kv, b.base_kv);
  std::vector<int> out;
  for (const Bus& b : g.buses) {
    if (b.base_kv == max_kv) out.push_back(b.id);
  }
  return out;
}

}  // namespace cgnnse::grid
