#include "doctest.h"

#include "sfsir/kernels.hpp"
#include "sfsir/simd.hpp"
#include "sfsir/smoothing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace sfsir;

namespace {

SmootherData random_problem(int dims, std::size_t n, std::mt19937_64& rng, auto target)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SmootherData d;
  d.dims = dims;
  for (std::size_t i = 0; i < n; ++i) {
    double x[3] = { unit(rng), unit(rng), unit(rng) };
    d.push(std::span<const double>(x, static_cast<std::size_t>(dims)), target(x), 0.2 + unit(rng));
  }
  return d;
}

// Brute-force weighted least squares: full-pivot LU on (X^T W X) b = X^T W y.
struct Oracle
{
  Eigen::VectorXd coef;
  bool usable = false;
};

Oracle dense_wls(const SmootherData& d, KernelSpec kernel, const Point& at, const std::array<double, 3>& h)
{
  const int p = d.dims + 1;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  int positive = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double w = d.weights[i];
    Eigen::VectorXd z(p);
    z(0) = 1.0;
    for (int k = 0; k < d.dims; ++k) {
      w *= scaled_kernel(kernel, d.covariates[k][i] - at[k], h[k]);
      z(k + 1) = d.covariates[k][i] - at[k];
    }
    if (w > 0.0)
      ++positive;
    xtx += w * z * z.transpose();
    xty += w * z * d.targets[i];
  }
  Oracle o;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(xtx);
  const double cond = svd.singularValues()(0) / svd.singularValues()(p - 1);
  o.usable = positive >= 2 * p && lu.isInvertible() && cond < 1e6;
  if (o.usable)
    o.coef = lu.solve(xty);
  return o;
}

} // namespace

TEST_CASE("affine reproduction in 1, 2 and 3 dimensions on a 101-point grid")
{
  std::mt19937_64 rng(7);
  for (int dims = 1; dims <= 3; ++dims) {
    auto data = random_problem(dims, 400 * static_cast<std::size_t>(dims), rng, [&](const double* x) {
      double y = 1.5 - 2.0 * x[0];
      if (dims > 1)
        y += 0.7 * x[1];
      if (dims > 2)
        y += 3.0 * x[2];
      return y;
    });
    const LocalLinearSmoother s(std::move(data));
    std::vector<Point> grid;
    for (int k = 0; k <= 100; ++k) {
      const double t = k / 100.0;
      grid.push_back({ t, 1.0 - t, 0.5 });
    }
    const auto out = smooth_on_grid(s, grid, { 0.3, 0.3, 0.3 });
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      double truth = 1.5 - 2.0 * grid[k][0];
      if (dims > 1)
        truth += 0.7 * grid[k][1];
      if (dims > 2)
        truth += 3.0 * grid[k][2];
      worst = std::max(worst, std::fabs(out.values[k] - truth));
    }
    CAPTURE(dims);
    CHECK(worst < 1e-9);
    CHECK(out.degenerate_count == 0);
  }
}

TEST_CASE("constant targets give the constant and zero slopes")
{
  std::mt19937_64 rng(3);
  auto data = random_problem(2, 200, rng, [](const double*) { return 4.25; });
  const LocalLinearSmoother s(std::move(data));
  const auto fit = s.fit({ 0.4, 0.6, 0.0 }, { 0.2, 0.2, 1.0 });
  CHECK(fit.intercept == doctest::Approx(4.25).epsilon(1e-12));
  CHECK(std::fabs(fit.slopes[0]) < 1e-9);
  CHECK(std::fabs(fit.slopes[1]) < 1e-9);
  CHECK_FALSE(fit.degenerate);
}

TEST_CASE("slopes of a line")
{
  SmootherData d;
  d.dims = 1;
  for (int i = 0; i < 20; ++i) {
    const double x[1] = { i / 19.0 };
    d.push(x, 2.0 + 5.0 * x[0], 1.0);
  }
  const auto fit = local_linear_fit({ d, {}, { 0.25, 1.0, 1.0 }, { 0.3, 0.0, 0.0 } });
  CHECK(fit.intercept == doctest::Approx(3.5).epsilon(1e-10));
  CHECK(fit.slopes[0] == doctest::Approx(5.0).epsilon(1e-10));
  CHECK(fit.status == FitStatus::Linear);
}

TEST_CASE("oracle equivalence with a dense weighted least squares solve")
{
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  for (int dims = 1; dims <= 3; ++dims)
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t n = 12 + static_cast<std::size_t>(rep % 9);
      auto data = random_problem(dims, n, rng, [&](const double* x) { return std::sin(3 * x[0]) + x[1] * x[2] + unit(rng); });
      const Point at{ 0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng) };
      const std::array<double, 3> h{ 0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng) };
      const KernelSpec kernel{ rep % 2 ? KernelFamily::Quartic : KernelFamily::Epanechnikov };
      const auto oracle = dense_wls(data, kernel, at, h);
      if (!oracle.usable)
        continue;
      const LocalLinearSmoother s(data, kernel);
      const auto fit = s.fit(at, h);
      REQUIRE(fit.status == FitStatus::Linear);
      const double denom = std::max(1.0, std::fabs(oracle.coef(0)));
      CHECK(std::fabs(fit.intercept - oracle.coef(0)) / denom < 1e-8);
      for (int k = 0; k < dims; ++k)
        CHECK(std::fabs(fit.slopes[k] - oracle.coef(k + 1)) / std::max(1.0, std::fabs(oracle.coef(k + 1))) < 1e-8);
      ++checked;
    }
  CHECK(checked >= 140);
}

TEST_CASE("scalar and vector dispatch give the same fits")
{
  std::mt19937_64 rng(5);
  auto data = random_problem(3, 3000, rng, [](const double* x) { return x[0] * x[1] - x[2]; });
  const LocalLinearSmoother s(std::move(data));
  std::vector<Point> grid;
  for (int k = 0; k < 50; ++k)
    grid.push_back({ k / 49.0, 0.5, 0.3 });
  const auto before = simd::active_level();
  simd::set_level(simd::Level::Scalar);
  const auto scalar = smooth_on_grid(s, grid, { 0.2, 0.3, 0.3 });
  simd::set_level(simd::Level::Avx2);
  const auto vec = smooth_on_grid(s, grid, { 0.2, 0.3, 0.3 });
  simd::set_level(before);
  for (std::size_t k = 0; k < grid.size(); ++k)
    CHECK(std::fabs(scalar.values[k] - vec.values[k]) < 1e-10);
}

TEST_CASE("permutation invariance and weight scaling")
{
  std::mt19937_64 rng(11);
  auto data = random_problem(2, 300, rng, [](const double* x) { return std::cos(4 * x[0]) + x[1]; });
  SmootherData shuffled = data, scaled = data;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (int k = 0; k < 2; ++k)
      shuffled.covariates[k][i] = data.covariates[k][order[i]];
    shuffled.targets[i] = data.targets[order[i]];
    shuffled.weights[i] = data.weights[order[i]];
  }
  for (auto& w : scaled.weights)
    w *= 37.5;
  const LocalLinearSmoother a(data), b(shuffled), c(scaled);
  for (double t : { 0.1, 0.45, 0.8 }) {
    const Point at{ t, 0.5, 0.0 };
    const std::array<double, 3> h{ 0.15, 0.2, 1.0 };
    CHECK(std::fabs(a.fit(at, h).intercept - b.fit(at, h).intercept) < 1e-12);
    CHECK(std::fabs(a.fit(at, h).intercept - c.fit(at, h).intercept) < 1e-10);
  }
}

TEST_CASE("degenerate neighborhoods")
{
  SmootherData d;
  d.dims = 1;
  for (double x : { 0.0, 0.01, 0.5, 0.9 }) {
    const double xs[1] = { x };
    d.push(xs, 10.0 * x, 1.0);
  }
  const LocalLinearSmoother s(d);

  SUBCASE("single in-window point falls back to local constant")
  {
    const auto fit = s.fit({ 0.5, 0, 0 }, { 0.05, 1, 1 });
    CHECK(fit.status == FitStatus::LocalConstant);
    CHECK(fit.degenerate);
    CHECK(fit.intercept == doctest::Approx(5.0));
  }
  SUBCASE("empty window widens the bandwidth")
  {
    const auto fit = s.fit({ 0.7, 0, 0 }, { 0.15, 1, 1 });
    CHECK(fit.degenerate);
    CHECK(fit.bandwidth_scale > 1.0);
    CHECK(std::isfinite(fit.intercept));
  }
  SUBCASE("hopeless window is missing")
  {
    const auto fit = s.fit({ 0.3, 0, 0 }, { 0.01, 1, 1 });
    CHECK(fit.status == FitStatus::Missing);
    CHECK(std::isnan(fit.intercept));
  }
  SUBCASE("degeneracy is local to the grid point")
  {
    std::vector<Point> grid{ { 0.005, 0, 0 }, { 0.3, 0, 0 } };
    const auto out = smooth_on_grid(s, grid, { 0.02, 1, 1 });
    CHECK_FALSE(out.fits[0].degenerate);
    CHECK(out.fits[1].degenerate);
    CHECK(out.degenerate_count == 1);
  }
  SUBCASE("one-point grid equals a single fit")
  {
    std::vector<Point> grid{ { 0.45, 0, 0 } };
    const auto out = smooth_on_grid(s, grid, { 0.5, 1, 1 });
    CHECK(out.values[0] == s.fit(grid[0], { 0.5, 1, 1 }).intercept);
  }
}

TEST_CASE("invalid input")
{
  SmootherData d;
  d.dims = 1;
  const double x[1] = { 0.5 };
  d.push(x, 1.0, -1.0);
  CHECK_THROWS_AS(LocalLinearSmoother{ d }, std::invalid_argument);
  SmootherData ok;
  ok.dims = 1;
  ok.push(x, 1.0, 1.0);
  const LocalLinearSmoother s(ok);
  CHECK_THROWS_AS(s.fit({ 0.5, 0, 0 }, { 0.0, 1, 1 }), std::invalid_argument);
  CHECK_THROWS(smooth_on_grid(s, {}, { 0.1, 1, 1 }));
}
