// Independent reference implementations used only by tests. Everything here
// is deliberately written from the definitions (naive loops, series
// expansions, per-node summations, Monte-Carlo estimates) rather than
// through the library kernels it checks.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cgnnse/grid.hpp"
#include "cgnnse/matrix.hpp"
#include "cgnnse/rng.hpp"

namespace oracles {

using cgnnse::Rng;
using cgnnse::numerics::Matrix;

// Plain triple-loop product, no zero skipping.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// Maclaurin series of the error function; converges fast for |z| <= 1.
inline double erf_series(double z, int terms = 30) {
  double sum = 0.0;
  double term = z;        // z^(2n+1)/n!
  for (int n = 0; n < terms; ++n) {
    sum += term / (2.0 * n + 1.0);
    term *= -z * z / (n + 1.0);
  }
  return sum * 2.0 / std::sqrt(3.14159265358979323846);
}

// Node-by-node propagation of the mean-aggregation layer: for every node,
// sum W x_j / sqrt(d_i d_j) over the closed neighborhood (degrees counted
// with the self-loop), then clamp at zero.
inline Matrix gcn_node_oracle(const Matrix& w, const Matrix& a_hat, const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t f_out = w.rows();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a_hat(i, j);
  Matrix out(n, f_out);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < f_out; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (a_hat(i, j) == 0.0) continue;
        double wx = 0.0;
        for (std::size_t f = 0; f < x.cols(); ++f) wx += w(o, f) * x(j, f);
        s += wx / std::sqrt(deg[i] * deg[j]);
      }
      out(i, o) = s > 0.0 ? s : 0.0;
    }
  }
  return out;
}

// Scalar per-edge attention oracle for one head: raw score from the
// concatenated transform, softmax over the closed neighborhood, aggregate,
// clamp at zero.
inline Matrix gat_head_oracle(const Matrix& w, const Matrix& a_src, const Matrix& a_dst,
                              const Matrix& a_hat, const Matrix& x, double slope,
                              Matrix* alpha_out = nullptr) {
  const std::size_t n = x.rows();
  const std::size_t f_out = w.rows();
  Matrix h(n, f_out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < f_out; ++o) {
      double s = 0.0;
      for (std::size_t f = 0; f < x.cols(); ++f) s += w(o, f) * x(i, f);
      h(i, o) = s;
    }
  Matrix alpha(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -HUGE_VAL;
    std::vector<double> raw(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (a_hat(i, j) == 0.0) continue;
      double e = 0.0;
      for (std::size_t o = 0; o < f_out; ++o) {
        e += a_src(o, 0) * h(i, o) + a_dst(o, 0) * h(j, o);
      }
      raw[j] = e > 0.0 ? e : slope * e;
      mx = std::max(mx, raw[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a_hat(i, j) == 0.0) continue;
      total += std::exp(raw[j] - mx);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (a_hat(i, j) != 0.0) alpha(i, j) = std::exp(raw[j] - mx) / total;
    }
  }
  if (alpha_out) *alpha_out = alpha;
  Matrix out(n, f_out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < f_out; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += alpha(i, j) * h(j, o);
      out(i, o) = s > 0.0 ? s : 0.0;
    }
  return out;
}

// Bus mixture description for the expected-activation sampling oracle.
struct BusMixture {
  std::vector<double> weights;            // C
  std::vector<std::vector<double>> mean;  // C x f
  std::vector<std::vector<double>> var;   // C x f
};

struct McEstimate {
  Matrix value;
  Matrix stderr_;
};

// Monte-Carlo estimate of E[relu((A X W^T)_{ij})] where the rows of X are
// drawn from per-bus mixtures with a shared component index: for component
// c, every unobserved bus draws from its own c-th Gaussian while observed
// buses keep their measured row, so conditioned on c the propagated entry
// is exactly Gaussian. Per-component means are then mixed with the row's
// weights (entries are independent across buses, diagonal covariances).
inline McEstimate expected_activation_mc(const Matrix& a, const Matrix& w,
                                         const std::vector<BusMixture>& mixtures,
                                         const std::vector<bool>& mask, const Matrix& x_obs,
                                         std::size_t samples_per_component, Rng& rng) {
  const std::size_t n = a.rows();
  const std::size_t f_in = w.cols();
  const std::size_t f_out = w.rows();
  const std::size_t c_count = mixtures[0].weights.size();

  std::vector<Matrix> mean_c(c_count, Matrix(n, f_out));
  std::vector<Matrix> m2_c(c_count, Matrix(n, f_out));

  Matrix x(n, f_in);
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t s = 0; s < samples_per_component; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < f_in; ++f) {
          x(i, f) = mask[i] ? x_obs(i, f)
                            : rng.normal(mixtures[i].mean[c][f],
                                         std::sqrt(mixtures[i].var[c][f]));
        }
      }
      // relu((A x) W^T) entrywise, streaming mean/M2
      for (std::size_t i = 0; i < n; ++i) {
        double ax[8];  // f_in is tiny in these tests
        for (std::size_t f = 0; f < f_in; ++f) {
          double s2 = 0.0;
          for (std::size_t k = 0; k < n; ++k) s2 += a(i, k) * x(k, f);
          ax[f] = s2;
        }
        for (std::size_t o = 0; o < f_out; ++o) {
          double v = 0.0;
          for (std::size_t f = 0; f < f_in; ++f) v += ax[f] * w(o, f);
          v = v > 0.0 ? v : 0.0;
          const double delta = v - mean_c[c](i, o);
          mean_c[c](i, o) += delta / static_cast<double>(s + 1);
          m2_c[c](i, o) += delta * (v - mean_c[c](i, o));
        }
      }
    }
  }

  McEstimate est{Matrix(n, f_out), Matrix(n, f_out)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < f_out; ++o) {
      double value = 0.0, var = 0.0;
      for (std::size_t c = 0; c < c_count; ++c) {
        const double pi_ic = mixtures[i].weights[c];
        value += pi_ic * mean_c[c](i, o);
        const double sample_var =
            m2_c[c](i, o) / static_cast<double>(samples_per_component - 1);
        var += pi_ic * pi_ic * sample_var / static_cast<double>(samples_per_component);
      }
      est.value(i, o) = value;
      est.stderr_(i, o) = std::sqrt(var);
    }
  }
  return est;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::max(0.0, std::min(1.0, p));
}

// Independent per-branch admittance stamping (the assembly-by-definition
// oracle): returns the dense complex matrix as (G, B) pairs.
inline std::pair<Matrix, Matrix> ybus_stamping_oracle(const cgnnse::grid::GridGraph& g) {
  const std::size_t n = g.bus_count();
  Matrix gm(n, n), bm(n, n);
  for (const auto& br : g.branches) {
    if (!br.in_service) continue;
    const std::size_t f = g.bus_index(br.from_bus);
    const std::size_t t = g.bus_index(br.to_bus);
    const double denom = br.r * br.r + br.x * br.x;
    const double gs = br.r / denom, bs = -br.x / denom;
    const double tap = br.tap == 0.0 ? 1.0 : br.tap;
    // from-from
    gm(f, f) += gs / (tap * tap);
    bm(f, f) += (bs + br.b / 2.0) / (tap * tap);
    // to-to
    gm(t, t) += gs;
    bm(t, t) += bs + br.b / 2.0;
    // off-diagonals
    gm(f, t) += -gs / tap;
    bm(f, t) += -bs / tap;
    gm(t, f) += -gs / tap;
    bm(t, f) += -bs / tap;
  }
  for (std::size_t i = 0; i < n; ++i) {
    gm(i, i) += g.buses[i].gs_mw / g.base_mva;
    bm(i, i) += g.buses[i].bs_mvar / g.base_mva;
  }
  return {gm, bm};
}

// Power-balance residual evaluated from first principles (independent of
// the solver's internals): max |S_spec - S_calc| over the buses where the
// balance is constrained.
inline double power_balance_residual(const cgnnse::grid::GridGraph& g,
                                     const std::vector<double>& vm,
                                     const std::vector<double>& va,
                                     const std::vector<double>& pd_mw,
                                     const std::vector<double>& qd_mvar) {
  const auto [gm, bm] = ybus_stamping_oracle(g);
  const std::size_t n = g.bus_count();
  std::vector<double> p_spec(n, 0.0), q_spec(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p_spec[i] = -pd_mw[i] / g.base_mva;
    q_spec[i] = -qd_mvar[i] / g.base_mva;
  }
  for (const auto& gen : g.gens) {
    if (gen.in_service) p_spec[g.bus_index(gen.bus)] += gen.pg_mw / g.base_mva;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.buses[i].type == cgnnse::grid::BusType::kSlack) continue;
    double p = 0.0, q = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = va[i] - va[k];
      p += vm[k] * (gm(i, k) * std::cos(d) + bm(i, k) * std::sin(d));
      q += vm[k] * (gm(i, k) * std::sin(d) - bm(i, k) * std::cos(d));
    }
    p *= vm[i];
    q *= vm[i];
    worst = std::max(worst, std::fabs(p_spec[i] - p));
    if (g.buses[i].type == cgnnse::grid::BusType::kPq) {
      worst = std::max(worst, std::fabs(q_spec[i] - q));
    }
  }
  return worst;
}

}  // namespace oracles
