#include "cgnnse/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgnnse/errors.hpp"
#include "cgnnse/rng.hpp"

namespace cgnnse::datagen {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kCollapseThreshold = 1e-10;

struct FitResult {
  GmmPrior prior;
  bool collapsed = false;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

// Natural log of sum(exp(v)) with the usual max shift.
double log_sum_exp(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::vector<double> channel_variances(const numerics::Matrix& samples) {
  const std::size_t n = samples.rows(), f = samples.cols();
  std::vector<double> out(f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += samples(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = samples(i, j) - mean;
      var += d * d;
    }
    out[j] = var / static_cast<double>(n);
  }
  return out;
}

FitResult run_em(const numerics::Matrix& samples, std::size_t c, Rng rng,
                 const EmOptions& opt, const std::vector<double>& data_var) {
  const std::size_t n = samples.rows(), f = samples.cols();
  FitResult res;
  GmmPrior& p = res.prior;
  p.weights.assign(c, 1.0 / static_cast<double>(c));
  p.means = numerics::Matrix(c, f);
  p.vars = numerics::Matrix(c, f);

  // init: means at distinct random samples, variances at the data variance
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < f; ++j) {
      p.means(k, j) = samples(order[k], j);
      p.vars(k, j) = std::max(data_var[j], opt.var_floor);
    }
  }

  numerics::Matrix resp(n, c);
  std::vector<double> log_terms(c);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    // E step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        double lt = std::log(p.weights[k]);
        for (std::size_t j = 0; j < f; ++j) {
          const double d = samples(i, j) - p.means(k, j);
          lt += -0.5 * (kLog2Pi + std::log(p.vars(k, j)) + d * d / p.vars(k, j));
        }
        log_terms[k] = lt;
      }
      const double lse = log_sum_exp(log_terms);
      ll += lse;
      for (std::size_t k = 0; k < c; ++k) resp(i, k) = std::exp(log_terms[k] - lse);
    }
    if (!std::isfinite(ll)) throw NumericalError("gmm em: non-finite log-likelihood");
    if (iter > 0 && ll < prev_ll - 1e-9 * std::fabs(prev_ll) - 1e-12) {
      throw NumericalError("gmm em: log-likelihood decreased from " +
                           std::to_string(prev_ll) + " to " + std::to_string(ll));
    }
    const bool converged =
        iter > 0 && ll - prev_ll < opt.tol * (std::fabs(prev_ll) + 1.0);
    prev_ll = ll;

    // M step
    for (std::size_t k = 0; k < c; ++k) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, k);
      if (nk < 1e-12) {
        res.collapsed = true;
        return res;
      }
      p.weights[k] = nk / static_cast<double>(n);
      for (std::size_t j = 0; j < f; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += resp(i, k) * samples(i, j);
        mean /= nk;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = samples(i, j) - mean;
          var += resp(i, k) * d * d;
        }
        var /= nk;
        if (var < kCollapseThreshold && data_var[j] > 1e-8) {
          // collapsed onto a point of a varying channel
          res.collapsed = true;
          return res;
        }
        p.means(k, j) = mean;
        p.vars(k, j) = std::max(var, opt.var_floor);
      }
    }
    if (converged) break;
  }
  res.log_likelihood = prev_ll;
  return res;
}

}  // namespace

GmmPrior fit_gmm_em(const numerics::Matrix& samples, std::size_t components,
                    std::uint64_t seed, const EmOptions& opt) {
  if (components < 1) throw InputError("fit_gmm_em: need at least one component");
  if (samples.rows() < 10 * components) {
    throw InputError("fit_gmm_em: need at least " + std::to_string(10 * components) +
                     " samples for " + std::to_string(components) + " components, got " +
                     std::to_string(samples.rows()));
  }
  const auto data_var = channel_variances(samples);
  for (int attempt = 0; attempt <= opt.max_restarts; ++attempt) {
    FitResult res = run_em(samples, components,
                           Rng::stream(seed, static_cast<std::uint64_t>(attempt)), opt,
                           data_var);
    if (!res.collapsed) return res.prior;
  }
  throw NumericalError("fit_gmm_em: component variance collapsed below 1e-10 in all " +
                       std::to_string(opt.max_restarts + 1) + " attempts");
}

double gmm_log_likelihood(const GmmPrior& prior, const numerics::Matrix& samples) {
  const std::size_t n = samples.rows(), f = samples.cols();
  const std::size_t c = prior.weights.size();
  std::vector<double> log_terms(c);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      double lt = std::log(prior.weights[k]);
      for (std::size_t j = 0; j < f; ++j) {
        const double d = samples(i, j) - prior.means(k, j);
        lt += -0.5 * (kLog2Pi + std::log(prior.vars(k, j)) + d * d / prior.vars(k, j));
      }
      log_terms[k] = lt;
    }
    ll += log_sum_exp(log_terms);
  }
  return ll;
}

}  // namespace cgnnse::datagen
