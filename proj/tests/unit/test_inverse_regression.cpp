#include "doctest.h"

#include "sfsir/error.hpp"
#include "sfsir/inverse_regression.hpp"
#include "sfsir/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace sfsir;

namespace {

SpatialFunctionalDataset linear_dataset(std::size_t n, double a, double b, double c, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(3, 7);
  std::vector<Subject> subjects;
  for (std::size_t i = 0; i < n; ++i) {
    Subject s{ "s" + std::to_string(i), { unit(rng), unit(rng) }, {}, {}, 4.0 * unit(rng) - 1.0 };
    const auto N = count(rng);
    for (std::size_t j = 0; j < N; ++j) {
      const double t = unit(rng);
      s.times.push_back(t);
      s.values.push_back(a + b * t + c * s.response);
    }
    subjects.push_back(s);
  }
  return SpatialFunctionalDataset(std::move(subjects));
}

InverseRegressionSurface surface_from(const Eigen::MatrixXd& values)
{
  InverseRegressionSurface m;
  m.grid = TimeGrid(static_cast<std::size_t>(values.rows()));
  m.values = values;
  m.y_values.assign(static_cast<std::size_t>(values.cols()), 0.0);
  m.degenerate.setConstant(values.rows(), values.cols(), false);
  m.h_t = m.h_y = 0.1;
  return m;
}

// Mean over grid times of the variance of m(t, .) across the response columns.
double column_variation(const InverseRegressionSurface& m)
{
  double total = 0.0;
  for (Eigen::Index k = 0; k < m.values.rows(); ++k) {
    const Eigen::VectorXd row = m.values.row(k).transpose();
    total += (row.array() - row.mean()).square().mean();
  }
  return total / static_cast<double>(m.values.rows());
}

} // namespace

TEST_CASE("inverse regression reproduces a bilinear target")
{
  std::mt19937_64 rng(2);
  const auto d = linear_dataset(60, 0.5, -1.25, 2.0, rng);
  const TimeGrid grid(51);
  for (const auto& scheme : { WeightScheme::subj(), WeightScheme::obs() }) {
    const auto m = estimate_m(d, scheme, 0.15, 0.8, grid);
    REQUIRE(m.values.cols() == 60);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      for (Eigen::Index k = 0; k < m.values.rows(); ++k) {
        const double want = 0.5 - 1.25 * grid[static_cast<std::size_t>(k)] + 2.0 * m.y_values[static_cast<std::size_t>(c)];
        CHECK(std::fabs(m.values(k, c) - want) < 1e-9);
      }
  }
}

TEST_CASE("inverse regression of a constant is that constant")
{
  std::mt19937_64 rng(3);
  const auto d = linear_dataset(30, -2.5, 0.0, 0.0, rng);
  const auto m = estimate_m(d, WeightScheme::subj(), 0.2, 1.0, TimeGrid(21), std::vector<double>{ -1.0, 0.0, 2.5 });
  CHECK(m.values.cols() == 3);
  CHECK((m.values.array() + 2.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("unreachable response abscissa is an error with a bandwidth hint")
{
  std::mt19937_64 rng(4);
  const auto d = linear_dataset(20, 1.0, 1.0, 1.0, rng);
  try {
    estimate_m(d, WeightScheme::subj(), 0.2, 0.1, TimeGrid(11), std::vector<double>{ 1e6 });
    FAIL("expected ComputationError");
  } catch (const ComputationError& e) {
    CHECK(std::string(e.what()).find("h_y") != std::string::npos);
  }
  CHECK_THROWS_AS(estimate_m(d, WeightScheme::subj(), 0.0, 0.1, TimeGrid(11)), std::invalid_argument);
}

TEST_CASE("independent responses give no more variation than shuffled ones")
{
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> z;
  std::vector<Subject> subjects;
  for (int i = 0; i < 200; ++i) {
    Subject s{ "s" + std::to_string(i), { unit(rng), unit(rng) }, {}, {}, z(rng) };
    for (int j = 0; j < 5; ++j) {
      const double t = unit(rng);
      s.times.push_back(t);
      s.values.push_back(std::sin(2 * 3.141592653589793 * t) + z(rng));
    }
    subjects.push_back(s);
  }
  const TimeGrid grid(21);
  // central responses only; the sparse tails are dominated by edge effects
  std::vector<double> central;
  for (int k = 0; k <= 20; ++k)
    central.push_back(-1.0 + 0.1 * k);
  auto variation = [&](const std::vector<Subject>& s) {
    return column_variation(estimate_m(SpatialFunctionalDataset(s), WeightScheme::subj(), 0.15, 0.8, grid, central));
  };
  const double observed = variation(subjects);

  std::vector<double> responses;
  for (const auto& s : subjects)
    responses.push_back(s.response);
  std::vector<double> floor;
  for (int perm = 0; perm < 30; ++perm) {
    std::shuffle(responses.begin(), responses.end(), rng);
    auto shuffled = subjects;
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      shuffled[i].response = responses[i];
    floor.push_back(variation(shuffled));
  }
  const double mean = std::accumulate(floor.begin(), floor.end(), 0.0) / static_cast<double>(floor.size());
  double var = 0.0;
  for (double f : floor)
    var += (f - mean) * (f - mean);
  const double sd = std::sqrt(var / static_cast<double>(floor.size() - 1));
  MESSAGE("variation " << observed << ", shuffled floor " << mean << " +/- " << sd);
  CHECK(observed < mean + 3.0 * sd);
}

TEST_CASE("identical columns give a zero surface")
{
  Eigen::MatrixXd v(7, 6);
  for (Eigen::Index k = 0; k < 7; ++k)
    v.row(k).setConstant(std::cos(static_cast<double>(k)));
  const std::vector<double> y{ 1, 2, 3, 4, 5, 6 };
  const auto re = estimate_re(surface_from(v), y, { 0.0 });
  CHECK(re.values.cwiseAbs().maxCoeff() < 1e-15);
  CHECK(re.kind == SurfaceKind::ConditionalRe);
}

TEST_CASE("rank-one closed form on five subjects")
{
  const std::vector<double> A{ 0.7, -1.3, 2.1, 0.05, -0.4 };
  const std::vector<double> y{ 0.3, 1.9, -0.2, 4.4, 2.2 };
  const TimeGrid grid(31);
  Eigen::VectorXd g(31);
  for (std::size_t k = 0; k < 31; ++k)
    g(static_cast<Eigen::Index>(k)) = 1.0 + grid[k] * grid[k] - std::sin(5.0 * grid[k]);
  Eigen::MatrixXd v(31, 5);
  for (Eigen::Index i = 0; i < 5; ++i)
    v.col(i) = A[static_cast<std::size_t>(i)] * g;
  double mean = 0.0, sq = 0.0;
  for (double a : A) {
    mean += a / 5.0;
    sq += a * a / 5.0;
  }
  const double vhat = sq - mean * mean;
  const auto re = estimate_re(surface_from(v), y, { 0.0 });
  const Eigen::MatrixXd want = vhat * g * g.transpose();
  CHECK((re.values - want).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two subjects give a rank-one surface")
{
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(9, 2);
  const std::vector<double> y{ 1.0, 2.0 };
  const auto re = estimate_re(surface_from(v), y, { 0.0 });
  const Eigen::VectorXd diff = v.col(0) - v.col(1);
  CHECK((re.values - 0.25 * diff * diff.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

// With the full-count divisor the trimmed subjects enter as zero columns, so
// keeping 2 of n > 2 subjects gives rank at most 2.
TEST_CASE("keeping two tied central subjects gives rank at most two")
{
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(9, 4);
  const std::vector<double> y{ 0.0, 1.0, 1.0, 2.0 };
  const auto re = estimate_re(surface_from(v), y, { 0.5 - 1e-9 });
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(re.values);
  const auto& ev = eig.eigenvalues();
  CHECK(std::fabs(ev(6)) < 1e-12 * ev(8));
  CHECK(ev(7) > 1e-6 * ev(8));
  CHECK_THROWS_AS(estimate_re(surface_from(v), std::vector<double>{ 0.0, 1.0, 2.0, 3.0 }, { 0.5 - 1e-9 }),
                  ComputationError);
}

TEST_CASE("surface is positive semidefinite on simulated data")
{
  SimulationConfig cfg;
  cfg.n = 60;
  for (std::uint64_t seed : { 1u, 2u, 3u }) {
    cfg.seed = seed;
    const auto sim = simulate_dataset(cfg);
    const TimeGrid grid(51);
    const auto m = estimate_m(sim.dataset, WeightScheme::subj(), 0.12, 0.3, grid);
    const auto re = estimate_re(m, sim.dataset.responses(), { 0.05 });
    CHECK(re.values == re.values.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(re.values);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().maxCoeff());
  }
}

TEST_CASE("adding a constant to every column leaves the untrimmed surface unchanged")
{
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(11, 8);
  std::vector<double> y(8);
  std::iota(y.begin(), y.end(), 0.0);
  const auto a = estimate_re(surface_from(v), y, { 0.0 });
  const auto b = estimate_re(surface_from(v.array() + 3.5), y, { 0.0 });
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("trimming drops extreme subjects")
{
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3, 10);
  v.col(9).setConstant(100.0); // the largest response carries all the variation
  std::vector<double> y(10);
  std::iota(y.begin(), y.end(), 0.0);
  CHECK(estimate_re(surface_from(v), y, { 0.0 }).values.maxCoeff() > 1.0);
  CHECK(estimate_re(surface_from(v), y, { 0.05 }).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("missing values inside the trim interval are rejected")
{
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(3, 4);
  v(1, 2) = std::nan("");
  CHECK_THROWS_AS(estimate_re(surface_from(v), std::vector<double>{ 0, 1, 2, 3 }, { 0.0 }), ComputationError);
  CHECK_THROWS_AS(estimate_re(surface_from(v), std::vector<double>{ 0, 1, 2 }, { 0.0 }), std::invalid_argument);
}
