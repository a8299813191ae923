#include "cgnnse/powerflow.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "cgnnse/errors.hpp"

namespace cgnnse::powerflow {

namespace {

using Complex = std::complex<double>;

struct BusSetup {
  std::vector<double> p_spec;   // p.u. net injection targets
  std::vector<double> q_spec;   // p.u., PQ buses only meaningful
  std::vector<double> v_set;    // setpoints for slack/PV
  std::vector<int> pv_or_pq;    // dense indices of non-slack buses
  std::vector<int> pq;          // dense indices of PQ buses
  std::size_t slack = 0;
};

BusSetup make_setup(const grid::GridGraph& g, std::span<const double> pd_mw,
                    std::span<const double> qd_mvar) {
  const std::size_t n = g.bus_count();
  BusSetup s;
  s.p_spec.assign(n, 0.0);
  s.q_spec.assign(n, 0.0);
  s.v_set.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.p_spec[i] = -pd_mw[i] / g.base_mva;
    s.q_spec[i] = -qd_mvar[i] / g.base_mva;
    s.v_set[i] = g.buses[i].vm_init != 0.0 ? g.buses[i].vm_init : 1.0;
  }
  for (const grid::Gen& gen : g.gens) {
    if (!gen.in_service) continue;
    const std::size_t i = g.bus_index(gen.bus);
    s.p_spec[i] += gen.pg_mw / g.base_mva;
    s.v_set[i] = gen.vset;
  }
  for (std::size_t i = 0; i < n; ++i) {
    switch (g.buses[i].type) {
      case grid::BusType::kSlack:
        s.slack = i;
        break;
      case grid::BusType::kPv:
        s.pv_or_pq.push_back(static_cast<int>(i));
        break;
      case grid::BusType::kPq:
        s.pv_or_pq.push_back(static_cast<int>(i));
        s.pq.push_back(static_cast<int>(i));
        break;
    }
  }
  return s;
}

// Net injected P and Q at every bus for the candidate state.
void injections(const Ybus& y, const std::vector<double>& vm, const std::vector<double>& va,
                std::vector<double>& p, std::vector<double>& q) {
  const std::size_t n = vm.size();
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double gik = y.g(i, k);
      const double bik = y.b(i, k);
      if (gik == 0.0 && bik == 0.0) continue;
      const double d = va[i] - va[k];
      const double c = std::cos(d), sn = std::sin(d);
      pi += vm[k] * (gik * c + bik * sn);
      qi += vm[k] * (gik * sn - bik * c);
    }
    p[i] = vm[i] * pi;
    q[i] = vm[i] * qi;
  }
}

Solution solve_impl(const grid::GridGraph& g, std::span<const double> pd_mw,
                    std::span<const double> qd_mvar, const SolveOptions& opt) {
  const std::size_t n = g.bus_count();
  const Ybus y = build_ybus(g);
  const BusSetup setup = make_setup(g, pd_mw, qd_mvar);

  Solution sol;
  sol.vm.assign(n, 1.0);
  sol.va.assign(n, 0.0);
  // flat start with magnitudes pinned at slack/PV setpoints
  sol.vm[setup.slack] = setup.v_set[setup.slack];
  for (std::size_t i = 0; i < n; ++i) {
    if (g.buses[i].type == grid::BusType::kPv) sol.vm[i] = setup.v_set[i];
  }

  const std::size_t n_ang = setup.pv_or_pq.size();
  const std::size_t n_mag = setup.pq.size();
  const std::size_t dim = n_ang + n_mag;

  std::vector<double> p, q;
  Eigen::VectorXd f(dim);
  Eigen::MatrixXd jac(dim, dim);

  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    injections(y, sol.vm, sol.va, p, q);
    double worst = 0.0;
    for (std::size_t r = 0; r < n_ang; ++r) {
      const int i = setup.pv_or_pq[r];
      f(static_cast<Eigen::Index>(r)) = setup.p_spec[i] - p[i];
      worst = std::max(worst, std::fabs(f(static_cast<Eigen::Index>(r))));
    }
    for (std::size_t r = 0; r < n_mag; ++r) {
      const int i = setup.pq[r];
      f(static_cast<Eigen::Index>(n_ang + r)) = setup.q_spec[i] - q[i];
      worst = std::max(worst, std::fabs(f(static_cast<Eigen::Index>(n_ang + r))));
    }
    sol.max_mismatch = worst;
    if (worst < opt.tolerance) {
      sol.iterations = iter;
      return sol;
    }
    if (iter == opt.max_iter) break;

    jac.setZero();
    // rows: dP for pv_or_pq then dQ for pq; cols: d theta then d V
    for (std::size_t r = 0; r < n_ang; ++r) {
      const int i = setup.pv_or_pq[r];
      for (std::size_t c = 0; c < n_ang; ++c) {
        const int k = setup.pv_or_pq[c];
        double v;
        if (i == k) {
          v = -q[i] - y.b(i, i) * sol.vm[i] * sol.vm[i];
        } else {
          const double d = sol.va[i] - sol.va[k];
          v = sol.vm[i] * sol.vm[k] * (y.g(i, k) * std::sin(d) - y.b(i, k) * std::cos(d));
        }
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
      for (std::size_t c = 0; c < n_mag; ++c) {
        const int k = setup.pq[c];
        double v;
        if (i == k) {
          v = p[i] / sol.vm[i] + y.g(i, i) * sol.vm[i];
        } else {
          const double d = sol.va[i] - sol.va[k];
          v = sol.vm[i] * (y.g(i, k) * std::cos(d) + y.b(i, k) * std::sin(d));
        }
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n_ang + c)) = v;
      }
    }
    for (std::size_t r = 0; r < n_mag; ++r) {
      const int i = setup.pq[r];
      for (std::size_t c = 0; c < n_ang; ++c) {
        const int k = setup.pv_or_pq[c];
        double v;
        if (i == k) {
          v = p[i] - y.g(i, i) * sol.vm[i] * sol.vm[i];
        } else {
          const double d = sol.va[i] - sol.va[k];
          v = -sol.vm[i] * sol.vm[k] * (y.g(i, k) * std::cos(d) + y.b(i, k) * std::sin(d));
        }
        jac(static_cast<Eigen::Index>(n_ang + r), static_cast<Eigen::Index>(c)) = v;
      }
      for (std::size_t c = 0; c < n_mag; ++c) {
        const int k = setup.pq[c];
        double v;
        if (i == k) {
          v = q[i] / sol.vm[i] - y.b(i, i) * sol.vm[i];
        } else {
          const double d = sol.va[i] - sol.va[k];
          v = sol.vm[i] * (y.g(i, k) * std::sin(d) - y.b(i, k) * std::cos(d));
        }
        jac(static_cast<Eigen::Index>(n_ang + r), static_cast<Eigen::Index>(n_ang + c)) = v;
      }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) {
      throw NumericalError("power flow: singular Jacobian at iteration " +
                           std::to_string(iter));
    }
    const Eigen::VectorXd dx = lu.solve(f);
    for (std::size_t c = 0; c < n_ang; ++c) {
      sol.va[static_cast<std::size_t>(setup.pv_or_pq[c])] += dx(static_cast<Eigen::Index>(c));
    }
    for (std::size_t c = 0; c < n_mag; ++c) {
      sol.vm[static_cast<std::size_t>(setup.pq[c])] += dx(static_cast<Eigen::Index>(n_ang + c));
    }
  }
  throw NumericalError("power flow did not converge in " + std::to_string(opt.max_iter) +
                       " iterations; worst mismatch " + std::to_string(sol.max_mismatch) +
                       " p.u.");
}

}  // namespace

Ybus build_ybus(const grid::GridGraph& g) {
  const std::size_t n = g.bus_count();
  numerics::Matrix gm(n, n), bm(n, n);
  for (const grid::Branch& br : g.branches) {
    if (!br.in_service) continue;
    if (br.r == 0.0 && br.x == 0.0) {
      throw InputError("zero-impedance branch " + std::to_string(br.from_bus) + "-" +
                       std::to_string(br.to_bus));
    }
    const std::size_t f = g.bus_index(br.from_bus);
    const std::size_t t = g.bus_index(br.to_bus);
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b / 2.0);
    const double tap = br.tap == 0.0 ? 1.0 : br.tap;
    const Complex yff = (ys + ysh) / (tap * tap);
    const Complex ytt = ys + ysh;
    const Complex yft = -ys / tap;
    gm(f, f) += yff.real();
    bm(f, f) += yff.imag();
    gm(t, t) += ytt.real();
    bm(t, t) += ytt.imag();
    gm(f, t) += yft.real();
    bm(f, t) += yft.imag();
    gm(t, f) += yft.real();
    bm(t, f) += yft.imag();
  }
  for (std::size_t i = 0; i < n; ++i) {
    gm(i, i) += g.buses[i].gs_mw / g.base_mva;
    bm(i, i) += g.buses[i].bs_mvar / g.base_mva;
  }
  return Ybus{std::move(gm), std::move(bm)};
}

Solution solve(const grid::GridGraph& g, const SolveOptions& opt) {
  std::vector<double> pd(g.bus_count()), qd(g.bus_count());
  for (std::size_t i = 0; i < g.bus_count(); ++i) {
    pd[i] = g.buses[i].pd_mw;
    qd[i] = g.buses[i].qd_mvar;
  }
  return solve_impl(g, pd, qd, opt);
}

Solution solve_with_loads(const grid::GridGraph& g, std::span<const double> pd_mw,
                          std::span<const double> qd_mvar, const SolveOptions& opt) {
  if (pd_mw.size() != g.bus_count() || qd_mvar.size() != g.bus_count()) {
    throw InputError("solve_with_loads: load vectors must match bus count");
  }
  return solve_impl(g, pd_mw, qd_mvar, opt);
}

double max_power_mismatch(const grid::GridGraph& g, std::span<const double> vm,
                          std::span<const double> va, std::span<const double> pd_mw,
                          std::span<const double> qd_mvar) {
  const Ybus y = build_ybus(g);
  const BusSetup setup = make_setup(g, pd_mw, qd_mvar);
  std::vector<double> p, q;
  std::vector<double> vmv(vm.begin(), vm.end());
  std::vector<double> vav(va.begin(), va.end());
  injections(y, vmv, vav, p, q);
  double worst = 0.0;
  for (int i : setup.pv_or_pq) worst = std::max(worst, std::fabs(setup.p_spec[i] - p[i]));
  for (int i : setup.pq) worst = std::max(worst, std::fabs(setup.q_spec[i] - q[i]));
  return worst;
}

std::vector<double> branch_flow_mva(const grid::GridGraph& g, const Solution& sol) {
  std::vector<double> out(g.branches.size(), 0.0);
  for (std::size_t k = 0; k < g.branches.size(); ++k) {
    const grid::Branch& br = g.branches[k];
    if (!br.in_service) continue;
    const std::size_t f = g.bus_index(br.from_bus);
    const std::size_t t = g.bus_index(br.to_bus);
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b / 2.0);
    const double tap = br.tap == 0.0 ? 1.0 : br.tap;
    const Complex vf = std::polar(sol.vm[f], sol.va[f]);
    const Complex vt = std::polar(sol.vm[t], sol.va[t]);
    const Complex i_from = (ys + ysh) / (tap * tap) * vf - ys / tap * vt;
    const Complex s_from = vf * std::conj(i_from);
    out[k] = std::abs(s_from) * g.base_mva;
  }
  return out;
}

}  // namespace cgnnse::powerflow
