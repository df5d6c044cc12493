// Dense math and reverse-mode gradients, checked against independent oracles:
// a naive triple-loop matrix product and central finite differences.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "fedldr/autodiff.hpp"
#include "fedldr/rng.hpp"
#include "fedldr/tensor.hpp"

using fedldr::ContractError;
using fedldr::ShapeError;
using fedldr::num::GradTape;
using fedldr::num::Rng;
using fedldr::num::Tensor;
using fedldr::num::Var;

namespace {

// Reference product, written as plainly as possible.
Tensor oracle_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.extent(0), b.extent(1)});
  for (std::size_t i = 0; i < a.extent(0); ++i)
    for (std::size_t j = 0; j < b.extent(1); ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < a.extent(1); ++t) acc += a(i, t) * b(t, j);
      c(i, j) = acc;
    }
  return c;
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor m({r, c});
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// Central finite difference of scalar_fn at each coordinate of x.
Tensor numeric_grad(const std::function<double(const Tensor&)>& scalar_fn, Tensor x,
                    double h = 1e-5) {
  Tensor g = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = scalar_fn(x);
    x[i] = saved - h;
    const double down = scalar_fn(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rel = std::abs(a[i] - b[i]) / std::max({1e-6, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul matches hand values and the triple-loop oracle") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  CHECK(fedldr::num::max_abs_diff(fedldr::num::matmul(eye, b), b) == 0.0);

  const Tensor dot =
      fedldr::num::matmul(Tensor::matrix({{1, 2}}), Tensor({2, 1}, {3, 4}));
  CHECK(dot(0, 0) == 11.0);

  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.next_u64() % 8;
    const std::size_t k = 1 + rng.next_u64() % 8;
    const std::size_t n = 1 + rng.next_u64() % 8;
    const Tensor a = random_matrix(rng, m, k);
    const Tensor c = random_matrix(rng, k, n);
    CHECK(fedldr::num::max_abs_diff(fedldr::num::matmul(a, c), oracle_matmul(a, c)) < 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
  const Tensor a({2, 3});
  const Tensor b({4, 2});
  try {
    fedldr::num::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("matmul is pure: identical inputs give bit-identical outputs") {
  Rng rng(7);
  const Tensor a = random_matrix(rng, 5, 4);
  const Tensor b = random_matrix(rng, 4, 6);
  const Tensor c1 = fedldr::num::matmul(a, b);
  const Tensor c2 = fedldr::num::matmul(a, b);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == c2[i]);
}

TEST_CASE("relu sign cases and idempotence") {
  const Tensor m = Tensor::matrix({{-1, 0}, {2, -3}});
  const Tensor r = fedldr::num::relu(m);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(1, 0) == 2.0);
  CHECK(r(1, 1) == 0.0);

  Rng rng(3);
  const Tensor pos = random_matrix(rng, 3, 3, 0.1, 2.0);
  CHECK(fedldr::num::max_abs_diff(fedldr::num::relu(pos), pos) == 0.0);

  const Tensor any = random_matrix(rng, 4, 4);
  const Tensor once = fedldr::num::relu(any);
  CHECK(fedldr::num::max_abs_diff(fedldr::num::relu(once), once) == 0.0);
}

TEST_CASE("row_softmax values, stability, and row sums") {
  const Tensor uniform = fedldr::num::row_softmax(Tensor::matrix({{0, 0, 0}}));
  for (std::size_t j = 0; j < 3; ++j) CHECK(uniform(0, j) == Catch::Approx(1.0 / 3).margin(1e-15));

  // exp(1)/(exp(1)+1) and 1/(exp(1)+1), evaluated to full double precision.
  const Tensor pair = fedldr::num::row_softmax(Tensor::matrix({{1, 0}}));
  CHECK(pair(0, 0) == Catch::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(pair(0, 1) == Catch::Approx(0.2689414213699951).epsilon(1e-14));

  const Tensor big = fedldr::num::row_softmax(Tensor::matrix({{1000, 1000}}));
  CHECK(big(0, 0) == 0.5);
  CHECK(big(0, 1) == 0.5);
  CHECK(big.all_finite());

  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.next_u64() % 6;
    const std::size_t c = 1 + rng.next_u64() % 6;
    const Tensor s = fedldr::num::row_softmax(random_matrix(rng, r, c, -50.0, 50.0));
    for (std::size_t i = 0; i < r; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(s(i, j) > 0.0);
        CHECK(s(i, j) <= 1.0);
        sum += s(i, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("backward: linear map adjoint is all-ones") {
  GradTape tape;
  const Var a = tape.leaf(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var b = tape.leaf(Tensor::matrix({{2, 3}, {4, 5}}));
  const Var loss = tape.sum(tape.matmul(a, b));
  tape.backward(loss);
  const Tensor& db = tape.grad(b);
  for (std::size_t i = 0; i < db.size(); ++i) CHECK(db[i] == 1.0);
}

TEST_CASE("backward: softmax row sums are conserved, so sum's gradient vanishes") {
  Rng rng(5);
  GradTape tape;
  const Var x = tape.leaf(random_matrix(rng, 3, 4));
  const Var loss = tape.sum(tape.row_softmax(x));
  tape.backward(loss);
  const Tensor& dx = tape.grad(x);
  for (std::size_t i = 0; i < dx.size(); ++i) CHECK(std::abs(dx[i]) < 1e-12);
}

TEST_CASE("backward rejects non-scalar loss") {
  GradTape tape;
  const Var x = tape.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("adjoint of an unused leaf is exactly zero") {
  GradTape tape;
  const Var used = tape.leaf(Tensor::matrix({{1, 2}}));
  const Var unused = tape.leaf(Tensor::matrix({{5, 6}, {7, 8}}));
  const Var loss = tape.sum(used);
  tape.backward(loss);
  const Tensor& g = tape.grad(unused);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("gradient of a doubled occurrence accumulates both contributions") {
  // loss = sum(E * E^T); d/dE = (E + E) pulled through both argument slots.
  Rng rng(13);
  Tensor e0 = random_matrix(rng, 3, 2);
  GradTape tape;
  const Var e = tape.leaf(e0);
  const Var loss = tape.sum(tape.matmul(e, tape.transpose(e)));
  tape.backward(loss);

  const auto fn = [](const Tensor& m) {
    return fedldr::num::sum(fedldr::num::matmul(m, fedldr::num::transpose(m)));
  };
  CHECK(max_rel_err(tape.grad(e), numeric_grad(fn, e0)) < 1e-4);
}

TEST_CASE("every primitive matches central finite differences on random inputs") {
  // 100 seeded trials across the primitive set, h = 1e-5, rel tol 1e-4.
  // Kinked ops (relu, mean_abs_error) are sampled away from their kinks,
  // where the two-sided difference is meaningless.
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 3;
    const std::size_t m = 2 + rng.next_u64() % 3;
    INFO("trial " << trial);

    {  // matmul, left argument
      const Tensor a0 = random_matrix(rng, n, m);
      const Tensor b0 = random_matrix(rng, m, n);
      GradTape tape;
      const Var a = tape.leaf(a0);
      const Var loss = tape.sum_squares(tape.matmul(a, tape.leaf(b0)));
      tape.backward(loss);
      const auto fn = [&](const Tensor& x) {
        return fedldr::num::sum_squares(fedldr::num::matmul(x, b0));
      };
      CHECK(max_rel_err(tape.grad(a), numeric_grad(fn, a0)) < 1e-4);
    }
    {  // relu, inputs kept away from 0
      Tensor x0 = random_matrix(rng, n, m);
      for (double& v : x0.data())
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
      GradTape tape;
      const Var x = tape.leaf(x0);
      const Var loss = tape.sum_squares(tape.relu(x));
      tape.backward(loss);
      const auto fn = [](const Tensor& t) { return fedldr::num::sum_squares(fedldr::num::relu(t)); };
      CHECK(max_rel_err(tape.grad(x), numeric_grad(fn, x0)) < 1e-4);
    }
    {  // row_softmax (weighted so the gradient is nonzero)
      const Tensor x0 = random_matrix(rng, n, m);
      const Tensor w0 = random_matrix(rng, n, m);
      GradTape tape;
      const Var x = tape.leaf(x0);
      const Var loss = tape.sum_squares(tape.sub(tape.row_softmax(x), tape.leaf(w0)));
      tape.backward(loss);
      const auto fn = [&](const Tensor& t) {
        return fedldr::num::sum_squares(fedldr::num::sub(fedldr::num::row_softmax(t), w0));
      };
      CHECK(max_rel_err(tape.grad(x), numeric_grad(fn, x0)) < 1e-4);
    }
    {  // transpose / add / sub / scale chained
      const Tensor a0 = random_matrix(rng, n, m);
      const Tensor b0 = random_matrix(rng, m, n);
      const Tensor c0 = random_matrix(rng, m, n);
      GradTape tape;
      const Var a = tape.leaf(a0);
      const Var expr = tape.scale(tape.add(tape.transpose(a), tape.leaf(b0)), 0.7);
      const Var loss = tape.sum_squares(tape.sub(expr, tape.leaf(c0)));
      tape.backward(loss);
      const auto fn = [&](const Tensor& x) {
        const Tensor expr2 =
            fedldr::num::scale(fedldr::num::add(fedldr::num::transpose(x), b0), 0.7);
        return fedldr::num::sum_squares(fedldr::num::sub(expr2, c0));
      };
      CHECK(max_rel_err(tape.grad(a), numeric_grad(fn, a0)) < 1e-4);
    }
    {  // embed pool contraction + per-node application
      const std::size_t d = 2 + rng.next_u64() % 2;
      const std::size_t c = 2 + rng.next_u64() % 2;
      const std::size_t f = 1 + rng.next_u64() % 2;
      const Tensor e0 = random_matrix(rng, n, d);
      Tensor w0({d, c, f});
      for (double& v : w0.data()) v = rng.uniform(-1.0, 1.0);
      const Tensor h0 = random_matrix(rng, n, c);

      GradTape tape;
      const Var e = tape.leaf(e0);
      const Var w = tape.leaf(w0);
      const Var h = tape.leaf(h0);
      const Var z = tape.per_node_apply(h, tape.embed_pool_contract(e, w));
      const Var loss = tape.sum_squares(z);
      tape.backward(loss);

      // oracle: Z[i,f] = sum_c H[i,c] * (sum_k E[i,k] W[k,c,f])
      const auto objective = [&](const Tensor& et, const Tensor& wt, const Tensor& ht) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ff = 0; ff < f; ++ff) {
            double zif = 0.0;
            for (std::size_t cc = 0; cc < c; ++cc) {
              double theta = 0.0;
              for (std::size_t k = 0; k < d; ++k) theta += et(i, k) * wt(k, cc, ff);
              zif += ht(i, cc) * theta;
            }
            acc += zif * zif;
          }
        return acc;
      };
      CHECK(max_rel_err(tape.grad(e),
                        numeric_grad([&](const Tensor& t) { return objective(t, w0, h0); }, e0)) <
            1e-4);
      CHECK(max_rel_err(tape.grad(w),
                        numeric_grad([&](const Tensor& t) { return objective(e0, t, h0); }, w0)) <
            1e-4);
      CHECK(max_rel_err(tape.grad(h),
                        numeric_grad([&](const Tensor& t) { return objective(e0, w0, t); }, h0)) <
            1e-4);
    }
    {  // mean_abs_error, ties excluded
      Tensor p0 = random_matrix(rng, n, m);
      Tensor t0 = random_matrix(rng, n, m);
      for (std::size_t i = 0; i < p0.size(); ++i)
        if (std::abs(p0[i] - t0[i]) < 0.05) p0[i] += 0.1;
      GradTape tape;
      const Var p = tape.leaf(p0);
      const Var loss = tape.mean_abs_error(p, tape.leaf(t0));
      tape.backward(loss);
      const auto fn = [&](const Tensor& x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - t0[i]);
        return acc / static_cast<double>(x.size());
      };
      CHECK(max_rel_err(tape.grad(p), numeric_grad(fn, p0)) < 1e-4);
    }
  }
}
