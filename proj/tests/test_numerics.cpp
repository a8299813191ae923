#include <doctest.h>

#include <cmath>

#include "cgnnse/errors.hpp"
#include "cgnnse/matrix.hpp"
#include "cgnnse/rng.hpp"
#include "cgnnse/special.hpp"
#include "cgnnse/tape.hpp"
#include "oracles.hpp"

using namespace cgnnse;
using numerics::Matrix;
using numerics::NodeId;
using numerics::Tape;

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kSqrt2 = 1.4142135623730950488016887;

double phi(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double cdf(double z) { return 0.5 * (1.0 + numerics::erf(z / kSqrt2)); }
}  // namespace

TEST_CASE("erf: reference values and symmetry") {
  CHECK(numerics::erf(0.0) == 0.0);
  CHECK(std::fabs(numerics::erf(6.0) - 1.0) < 1e-15);
  // independent series oracle near the origin
  for (double z : {0.05, 0.1, 0.25, 0.5, 0.75, 1.0}) {
    CHECK(std::fabs(numerics::erf(z) - oracles::erf_series(z)) < 1e-12);
  }
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double z = rng.uniform(-10.0, 10.0);
    CHECK(numerics::erf(-z) == -numerics::erf(z));  // exact odd symmetry
    CHECK(std::fabs(numerics::erf(z) - std::erf(z)) < 1e-13);  // platform cross-check
    CHECK(std::fabs(numerics::erfc(z) - std::erfc(z)) < 1e-13);
  }
}

TEST_CASE("nr: closed-form checkpoints") {
  CHECK(std::fabs(numerics::nr(0.0) - kInvSqrt2Pi) < 1e-15);
  CHECK(numerics::nr(8.0) - 8.0 < 1e-12);
  CHECK(numerics::nr(8.0) >= 8.0);
  CHECK(numerics::nr(-40.0) == 0.0);
}

TEST_CASE("nr: Monte-Carlo expectation of a clipped unit Gaussian") {
  // E[max(g,0)], g ~ N(1,1): sd of max(g,0) is ~0.867
  Rng rng(123456);
  const std::size_t n = 10'000'000;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::max(0.0, 1.0 + rng.normal());
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  CHECK(std::fabs(numerics::nr(1.0) - mean) < 3.0 * se);
}

TEST_CASE("nr: identity against normal pdf/cdf on random points") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const double z = rng.uniform(-10.0, 10.0);
    CHECK(std::fabs(numerics::nr(z) - (z * cdf(z) + phi(z))) < 1e-12);
    CHECK(numerics::nr(z) >= std::max(z, 0.0) - 1e-15);
  }
}

TEST_CASE("expected_relu: zero-variance limit continuity") {
  for (double m = -2.0; m <= 2.0; m += 0.01) {
    const double at_eps = std::sqrt(1e-12) * numerics::nr(m / std::sqrt(1e-12));
    const double limit = std::max(m, 0.0);
    CHECK(std::fabs(at_eps - limit) < 1e-6);
    CHECK(numerics::expected_relu(m, 0.5e-12) == limit);
  }
}

TEST_CASE("std_normal_upper_quantile: round trip and a textbook value") {
  CHECK(std::fabs(numerics::std_normal_upper_quantile(0.025) - 1.959963984540054) < 1e-9);
  for (double p : {0.2, 0.05, 0.01, 0.005, 1e-4}) {
    const double y = numerics::std_normal_upper_quantile(p);
    CHECK(std::fabs(0.5 * numerics::erfc(y / kSqrt2) - p) < 1e-12);
  }
  CHECK_THROWS_AS(numerics::std_normal_upper_quantile(0.0), InputError);
  CHECK_THROWS_AS(numerics::std_normal_upper_quantile(1.0), InputError);
}

TEST_CASE("matmul: identity, scalar and naive-loop oracle") {
  Rng rng(5);
  Matrix m(3, 3);
  for (double& x : m.data()) x = rng.uniform(-2.0, 2.0);
  const Matrix im = numerics::matmul(Matrix::identity(3), m);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(im.data()[i] == m.data()[i]);

  Matrix a(1, 1), b(1, 1);
  a(0, 0) = 2.0;
  b(0, 0) = 3.0;
  CHECK(numerics::matmul(a, b)(0, 0) == 6.0);

  Matrix p(5, 4), q(4, 3);
  for (double& x : p.data()) x = rng.uniform(-1.0, 1.0);
  for (double& x : q.data()) x = rng.uniform(-1.0, 1.0);
  const Matrix got = numerics::matmul(p, q);
  const Matrix want = oracles::naive_matmul(p, q);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::fabs(got.data()[i] - want.data()[i]) < 1e-12);
  }
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  try {
    numerics::matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul: associativity on random conforming triples") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(4, 6), b(6, 3), c(3, 5);
    for (double& x : a.data()) x = rng.uniform(-1.0, 1.0);
    for (double& x : b.data()) x = rng.uniform(-1.0, 1.0);
    for (double& x : c.data()) x = rng.uniform(-1.0, 1.0);
    const Matrix left = numerics::matmul(numerics::matmul(a, b), c);
    const Matrix right = numerics::matmul(a, numerics::matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::fabs(left.data()[i] - right.data()[i]) < 1e-9);
    }
  }
}

TEST_CASE("elementwise kernels") {
  const Matrix r = numerics::relu(Matrix::from_rows({{-1.0, 0.0, 2.0}}));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 2.0);

  const Matrix s = numerics::softmax_rows(Matrix::from_rows({{0.0, 0.0}}));
  CHECK(s(0, 0) == 0.5);
  CHECK(s(0, 1) == 0.5);

  const Matrix l = numerics::leaky_relu(Matrix::from_rows({{-1.0}}), 0.2);
  CHECK(l(0, 0) == doctest::Approx(-0.2).epsilon(1e-15));

  Rng rng(31);
  Matrix big(7, 9);
  for (double& x : big.data()) x = rng.uniform(-30.0, 30.0);
  const Matrix sm = numerics::softmax_rows(big);
  for (std::size_t i = 0; i < sm.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < sm.cols(); ++j) total += sm(i, j);
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("matrix ops reject non-finite results") {
  Matrix inf(1, 1);
  inf(0, 0) = HUGE_VAL;
  CHECK_THROWS_AS(numerics::matmul(inf, Matrix::identity(1)), NumericalError);
}

TEST_CASE("tape: scalar examples") {
  {
    Tape t;
    const NodeId x = t.param(Matrix::from_rows({{3.0}}));
    const NodeId loss = t.sum(t.hadamard(x, x));
    t.backward(loss);
    CHECK(std::fabs(t.adjoint(x)(0, 0) - 6.0) < 1e-10);
  }
  {
    Tape t;
    const NodeId x = t.param(Matrix::from_rows({{0.0}}));
    const NodeId loss = t.sum(t.nr(x));
    t.backward(loss);
    CHECK(std::fabs(t.adjoint(x)(0, 0) - 0.5) < 1e-10);
    // finite-difference cross-check of the same derivative
    const double fd = oracles::central_diff(
        [](double z) { return numerics::nr(z); }, 0.0, 1e-6);
    CHECK(std::fabs(t.adjoint(x)(0, 0) - fd) < 1e-10);
  }
  {
    Tape t;
    const NodeId v = t.param(Matrix::from_rows({{0.3, -1.2, 2.0}}));
    const NodeId loss = t.sum(t.softmax_rows(v));
    t.backward(loss);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(t.adjoint(v)(0, j)) < 1e-10);
  }
}

TEST_CASE("tape: non-scalar loss rejected, unused leaves stay zero") {
  Tape t;
  const NodeId x = t.param(Matrix::from_rows({{1.0, 2.0}}));
  const NodeId unused = t.param(Matrix::from_rows({{5.0}}));
  CHECK_THROWS_AS(t.backward(x), InputError);
  const NodeId loss = t.sum(x);
  t.backward(loss);
  CHECK(t.adjoint(unused)(0, 0) == 0.0);
}

namespace {

// Generic gradient check: builds the op twice, once on the tape and once as
// a value function for central differences over every input entry.
using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

void check_gradients(const std::string& name, const Builder& build,
                     std::vector<Matrix> inputs, Rng& rng, double tol = 1e-5) {
  Tape t;
  std::vector<NodeId> ids;
  for (const Matrix& m : inputs) ids.push_back(t.param(m));
  const NodeId out = build(t, ids);
  Matrix weights(t.value(out).rows(), t.value(out).cols());
  for (double& x : weights.data()) x = rng.uniform(-1.0, 1.0);
  const NodeId loss = t.sum(t.hadamard(out, t.input(weights)));
  t.backward(loss);

  auto loss_at = [&](const std::vector<Matrix>& pts) {
    Tape t2;
    std::vector<NodeId> ids2;
    for (const Matrix& m : pts) ids2.push_back(t2.param(m));
    const NodeId out2 = build(t2, ids2);
    return t2.value(t2.sum(t2.hadamard(out2, t2.input(weights))))(0, 0);
  };

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double h = 1e-6;
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
      const double ad = t.adjoint(ids[k])(i / inputs[k].cols(), i % inputs[k].cols());
      const double rel = std::fabs(ad - fd) / std::max({1.0, std::fabs(fd), std::fabs(ad)});
      if (rel >= tol) {
        CAPTURE(name);
        CAPTURE(k);
        CAPTURE(i);
        CAPTURE(ad);
        CAPTURE(fd);
      }
      REQUIRE(rel < tol);
    }
  }
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi,
                     double keep_away = 0.0) {
  Matrix m(r, c);
  for (double& x : m.data()) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::fabs(x) <= keep_away);
  }
  return m;
}

}  // namespace

TEST_CASE("tape: every primitive matches central finite differences") {
  Rng rng(2024);
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    // binary elementwise + matmul + structure ops
    check_gradients("add", [](Tape& t, const auto& in) { return t.add(in[0], in[1]); },
                    {random_matrix(rng, 3, 3, -2, 2), random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("sub", [](Tape& t, const auto& in) { return t.sub(in[0], in[1]); },
                    {random_matrix(rng, 3, 3, -2, 2), random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("hadamard",
                    [](Tape& t, const auto& in) { return t.hadamard(in[0], in[1]); },
                    {random_matrix(rng, 3, 3, -2, 2), random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("matmul", [](Tape& t, const auto& in) { return t.matmul(in[0], in[1]); },
                    {random_matrix(rng, 3, 4, -2, 2), random_matrix(rng, 4, 2, -2, 2)}, rng);
    check_gradients("transpose", [](Tape& t, const auto& in) { return t.transpose(in[0]); },
                    {random_matrix(rng, 3, 4, -2, 2)}, rng);
    check_gradients("scale", [](Tape& t, const auto& in) { return t.scale(in[0], -1.7); },
                    {random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("add_row_vector",
                    [](Tape& t, const auto& in) { return t.add_row_vector(in[0], in[1]); },
                    {random_matrix(rng, 3, 4, -2, 2), random_matrix(rng, 1, 4, -2, 2)}, rng);
    // activations away from their kinks
    check_gradients("relu", [](Tape& t, const auto& in) { return t.relu(in[0]); },
                    {random_matrix(rng, 3, 3, -2, 2, 1e-3)}, rng);
    check_gradients("leaky_relu",
                    [](Tape& t, const auto& in) { return t.leaky_relu(in[0], 0.2); },
                    {random_matrix(rng, 3, 3, -2, 2, 1e-3)}, rng);
    check_gradients("exp", [](Tape& t, const auto& in) { return t.exp(in[0]); },
                    {random_matrix(rng, 3, 3, -1.5, 1.5)}, rng);
    check_gradients("erf", [](Tape& t, const auto& in) { return t.erf(in[0]); },
                    {random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("nr", [](Tape& t, const auto& in) { return t.nr(in[0]); },
                    {random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients("expected_relu",
                    [](Tape& t, const auto& in) { return t.expected_relu(in[0], in[1]); },
                    {random_matrix(rng, 3, 3, -2, 2), random_matrix(rng, 3, 3, 0.05, 2.0)},
                    rng);
    check_gradients("softmax_rows",
                    [](Tape& t, const auto& in) { return t.softmax_rows(in[0]); },
                    {random_matrix(rng, 3, 4, -2, 2)}, rng);
    {
      Matrix mask(3, 3);
      mask(0, 0) = mask(0, 1) = mask(1, 1) = mask(1, 2) = mask(2, 0) = mask(2, 2) = 1.0;
      check_gradients(
          "masked_softmax_rows",
          [mask](Tape& t, const auto& in) { return t.masked_softmax_rows(in[0], mask); },
          {random_matrix(rng, 3, 3, -2, 2)}, rng);
      check_gradients(
          "blend_rows",
          [](Tape& t, const auto& in) {
            Matrix m(3, 1);
            m(0, 0) = 1.0;
            m(2, 0) = 1.0;
            return t.blend_rows(m, in[0], in[1]);
          },
          {random_matrix(rng, 3, 2, -2, 2), random_matrix(rng, 3, 2, -2, 2)}, rng);
    }
    check_gradients("scale_rows",
                    [](Tape& t, const auto& in) { return t.scale_rows(in[0], in[1]); },
                    {random_matrix(rng, 3, 4, -2, 2), random_matrix(rng, 3, 1, -2, 2)}, rng);
    check_gradients(
        "scatter_rows",
        [](Tape& t, const auto& in) { return t.scatter_rows(in[0], {3, 0, 2}, 5); },
        {random_matrix(rng, 3, 2, -2, 2)}, rng);
    check_gradients("slice_col",
                    [](Tape& t, const auto& in) { return t.slice_col(in[0], 1); },
                    {random_matrix(rng, 4, 3, -2, 2)}, rng);
    check_gradients(
        "concat_cols",
        [](Tape& t, const auto& in) {
          return t.concat_cols(std::vector<NodeId>{in[0], in[1]});
        },
        {random_matrix(rng, 3, 2, -2, 2), random_matrix(rng, 3, 3, -2, 2)}, rng);
    check_gradients(
        "broadcast_sum_outer",
        [](Tape& t, const auto& in) { return t.broadcast_sum_outer(in[0], in[1]); },
        {random_matrix(rng, 4, 1, -2, 2), random_matrix(rng, 4, 1, -2, 2)}, rng);
    if (trial >= 4) break;  // five full sweeps of the structural ops
  }
  // the elementwise special functions get the full 100-point treatment
  for (int trial = 0; trial < trials; ++trial) {
    check_gradients("erf_pointwise", [](Tape& t, const auto& in) { return t.erf(in[0]); },
                    {random_matrix(rng, 1, 1, -4, 4)}, rng);
    check_gradients("nr_pointwise", [](Tape& t, const auto& in) { return t.nr(in[0]); },
                    {random_matrix(rng, 1, 1, -4, 4)}, rng);
    check_gradients("expected_relu_pointwise",
                    [](Tape& t, const auto& in) { return t.expected_relu(in[0], in[1]); },
                    {random_matrix(rng, 1, 1, -3, 3), random_matrix(rng, 1, 1, 0.05, 3.0)},
                    rng);
    check_gradients("exp_pointwise", [](Tape& t, const auto& in) { return t.exp(in[0]); },
                    {random_matrix(rng, 1, 1, -2, 2)}, rng);
    check_gradients("softmax_pointwise",
                    [](Tape& t, const auto& in) { return t.softmax_rows(in[0]); },
                    {random_matrix(rng, 1, 4, -3, 3)}, rng);
  }
}
