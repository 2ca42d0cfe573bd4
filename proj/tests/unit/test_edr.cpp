#include "doctest.h"
#include "support.hpp"

#include "sfsir/edr.hpp"
#include "sfsir/error.hpp"
#include "sfsir/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace sfsir;

namespace {

constexpr double kPi = std::numbers::pi;

CovarianceSurface surface(const TimeGrid& grid, const Eigen::MatrixXd& values, SurfaceKind kind = SurfaceKind::Gamma)
{
  CovarianceSurface s;
  s.grid = grid;
  s.values = values;
  s.kind = kind;
  return s;
}

Eigen::VectorXd sample(const TimeGrid& grid, const auto& f)
{
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = f(grid[k]);
  return v;
}

// Orthonormal basis sqrt(2) cos(2 pi t), sqrt(2) sin(2 pi t), sqrt(2) cos(4 pi t).
Eigen::MatrixXd orthonormal_basis(const TimeGrid& grid)
{
  Eigen::MatrixXd b(static_cast<Eigen::Index>(grid.size()), 3);
  b.col(0) = sample(grid, [](double t) { return std::sqrt(2.0) * std::cos(2 * kPi * t); });
  b.col(1) = sample(grid, [](double t) { return std::sqrt(2.0) * std::sin(2 * kPi * t); });
  b.col(2) = sample(grid, [](double t) { return std::sqrt(2.0) * std::cos(4 * kPi * t); });
  return b;
}

// Operator with kernel diag(1 / w_k): the identity under trapezoid quadrature.
Eigen::MatrixXd identity_kernel(const TimeGrid& grid)
{
  return grid.weights().cwiseInverse().asDiagonal();
}

double quad_form(const TimeGrid& grid, const Eigen::VectorXd& a, const Eigen::MatrixXd& K, const Eigen::VectorXd& b)
{
  const Eigen::VectorXd& w = grid.weights();
  return a.cwiseProduct(w).dot(K * b.cwiseProduct(w));
}

double rel(double a, double b)
{
  return std::fabs(a - b) / std::fabs(b);
}

} // namespace

TEST_CASE("rank-one surface")
{
  const TimeGrid grid(101);
  const Eigen::VectorXd g = normalize_l2(sample(grid, [](double t) { return 1.0 + t - 3.0 * t * t; }), grid);
  const auto e = eigendecompose_surface(surface(grid, g * g.transpose()));
  CHECK(rel(e.eigenvalues[0], 1.0) < 1e-3);
  CHECK(std::fabs(e.eigenvalues[1]) < 1e-12);
  CHECK(angle_degrees(e.eigenvectors.col(0), g, grid) < 1e-6);
  CHECK(grid.inner(Eigen::VectorXd(e.eigenvectors.col(0)), Eigen::VectorXd(e.eigenvectors.col(0))) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity operator has a flat spectrum")
{
  const TimeGrid grid(41);
  const auto e = eigendecompose_surface(surface(grid, identity_kernel(grid)));
  for (double xi : e.eigenvalues)
    CHECK(xi == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model covariance recovers its eigenvalues")
{
  const SimulationConfig cfg;
  const auto truth = make_truth(cfg);
  const auto e = eigendecompose_surface(surface(truth.grid, truth.r0, SurfaceKind::RSpatial));
  // V_j ||pi_j||^2 with ||cos 2 pi t||^2 = 1/2
  CHECK(rel(e.eigenvalues[0], 0.75) < 1e-3);
  CHECK(rel(e.eigenvalues[1], 0.5) < 1e-3);
  CHECK(rel(e.eigenvalues[2], 0.5) < 1e-3);
  CHECK(std::fabs(e.eigenvalues[3]) < 1e-10);
}

// min(s, t) has eigenvalues 1 / ((k - 1/2)^2 pi^2); its kink on the diagonal
// makes the quadrature error visible.
TEST_CASE("eigenvalues converge under grid refinement")
{
  double previous_error = 1.0;
  for (std::size_t p : { 26u, 51u, 101u, 201u }) {
    const TimeGrid grid(p);
    Eigen::MatrixXd r(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::min(grid[i], grid[j]);
    const auto e = eigendecompose_surface(surface(grid, r));
    double err = 0.0;
    for (int k = 1; k <= 3; ++k)
      err = std::max(err, rel(e.eigenvalues[static_cast<std::size_t>(k - 1)], 1.0 / ((k - 0.5) * (k - 0.5) * kPi * kPi)));
    CHECK(err < previous_error);
    previous_error = err;
  }
  CHECK(previous_error < 1e-3);
}

TEST_CASE("non-finite surfaces are rejected")
{
  const TimeGrid grid(5);
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(5, 5);
  v(1, 2) = std::nan("");
  CHECK_THROWS_AS(eigendecompose_surface(surface(grid, v)), ComputationError);
}

TEST_CASE("truncation rules")
{
  CHECK(select_truncation({ 0.7, 0.2, 0.06, 0.04 }, TruncationRule::fve(0.95)) == 3);
  CHECK(select_truncation({ 0.7, 0.2, 0.06, 0.04 }, TruncationRule::fve(0.85)) == 2);
  CHECK(select_truncation({ 4.0, 1.0, 1e-15 }, TruncationRule::fixed(5)) == 2);
  CHECK(select_truncation({ 4.0, 1.0, -0.5 }, TruncationRule::fixed(3)) == 2);
  CHECK_THROWS_AS(select_truncation({ -1.0, -2.0 }, TruncationRule::fve(0.95)), ComputationError);
  CHECK_THROWS_AS(select_truncation({ 1.0 }, TruncationRule::fve(1.5)), std::invalid_argument);
}

TEST_CASE("truncated inverse square root")
{
  const TimeGrid grid(101);
  const Eigen::MatrixXd b = orthonormal_basis(grid);

  SUBCASE("rank one with unit eigenvalue is its own inverse square root")
  {
    const Eigen::VectorXd g = normalize_l2(b.col(1), grid);
    const auto inv = truncated_inv_sqrt(eigendecompose_surface(surface(grid, g * g.transpose())), TruncationRule::fve(0.95));
    CHECK(inv.L == 1);
    const Eigen::MatrixXd gg = g * g.transpose();
    CHECK((inv.kernel - gg).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("spectral mapping with L = 2")
  {
    const Eigen::MatrixXd r = 4.0 * b.col(0) * b.col(0).transpose() + 1.0 * b.col(1) * b.col(1).transpose() +
                              1e-14 * b.col(2) * b.col(2).transpose();
    const auto inv = truncated_inv_sqrt(eigendecompose_surface(surface(grid, r)), TruncationRule::fixed(2));
    CHECK(inv.L == 2);
    const auto e = eigendecompose_surface(surface(grid, inv.kernel));
    CHECK(rel(e.eigenvalues[0], 1.0) < 1e-3);
    CHECK(rel(e.eigenvalues[1], 0.5) < 1e-3);
    CHECK(std::fabs(e.eigenvalues[2]) < 1e-9);
    // apply() is the quadrature of the kernel
    const Eigen::VectorXd f = b.col(0) + 3.0 * b.col(1);
    const Eigen::VectorXd out = inv.apply(f);
    const Eigen::VectorXd want = 0.5 * b.col(0) + 3.0 * b.col(1);
    CHECK((out - want).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((inv.reconstruction() - (4.0 * b.col(0) * b.col(0).transpose() + b.col(1) * b.col(1).transpose()))
            .cwiseAbs()
            .maxCoeff() < 1e-6);
  }
}

TEST_CASE("identity whitening returns the conditional covariance direction")
{
  const TimeGrid grid(51);
  const Eigen::VectorXd g = sample(grid, [](double t) { return t * t - 0.2; });
  const auto r = edr_directions(surface(grid, identity_kernel(grid)), surface(grid, g * g.transpose()), 1,
                                TruncationRule::fixed(51));
  CHECK(angle_degrees(r.directions.col(0), g, grid) < 1e-6);
  CHECK(r.eigenvalues[0] == doctest::Approx(grid.inner(g, g)).epsilon(1e-10));
  CHECK(r.directions.col(0).sum() >= 0.0);
}

TEST_CASE("zero conditional covariance is flagged")
{
  const TimeGrid grid(31);
  const auto r =
    edr_directions(surface(grid, identity_kernel(grid)), surface(grid, Eigen::MatrixXd::Zero(31, 31)), 2, TruncationRule::fixed(5));
  CHECK(r.degenerate);
  CHECK_FALSE(r.warning.empty());
  for (double l : r.eigenvalues)
    CHECK(std::fabs(l) < 1e-12);
}

TEST_CASE("K must not exceed L")
{
  const TimeGrid grid(31);
  const Eigen::MatrixXd b = orthonormal_basis(grid);
  const Eigen::MatrixXd r = b.col(0) * b.col(0).transpose() + 0.5 * b.col(1) * b.col(1).transpose();
  CHECK_THROWS_AS(edr_directions(surface(grid, r), surface(grid, r), 3, TruncationRule::fixed(2)), std::invalid_argument);
  CHECK_THROWS_AS(edr_directions(surface(grid, r), surface(grid, r), 0, TruncationRule::fixed(2)), std::invalid_argument);
}

// With the model covariance and a single-index conditional covariance
// R_e = (R beta)(R beta)^T, the direction is the part of beta that the
// covariance can see: its projection onto the eigenfunctions.
TEST_CASE("population inputs recover the identifiable projection")
{
  const SimulationConfig cfg;
  const auto truth = make_truth(cfg);
  const TimeGrid& grid = truth.grid;
  const Eigen::VectorXd r_beta = truth.r0 * grid.weights().cwiseProduct(truth.beta);
  const auto r = edr_directions(surface(grid, truth.r0), surface(grid, r_beta * r_beta.transpose()), 1,
                                TruncationRule::fve(0.95));
  CHECK(r.L == 3);
  CHECK(angle_degrees(r.directions.col(0), truth.beta_projection, grid) < 0.05);
}

TEST_CASE("identifiable projection sits 24.2 degrees from beta")
{
  const auto truth = make_truth(SimulationConfig{});
  const double floor = angle_degrees(truth.beta, truth.beta_projection, truth.grid);
  CHECK(floor == doctest::Approx(24.2).epsilon(0.005));
}

TEST_CASE("directions are R_L-orthonormal, scale invariant and match the dual route")
{
  const TimeGrid grid(101);
  SimulationConfig cfg;
  const auto truth = make_truth(cfg);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  // a noisy symmetric covariance and a rank-3 conditional covariance
  Eigen::MatrixXd noise(101, 101);
  for (Eigen::Index i = 0; i < 101; ++i)
    for (Eigen::Index j = 0; j < 101; ++j)
      noise(i, j) = 0.01 * z(rng);
  const Eigen::MatrixXd r = truth.r0 + 0.5 * (noise + noise.transpose());
  const Eigen::MatrixXd b = orthonormal_basis(grid);
  Eigen::MatrixXd mix = Eigen::MatrixXd::Random(3, 3);
  const Eigen::MatrixXd re = b * mix * mix.transpose() * b.transpose() * 0.3;

  const auto res = edr_directions(surface(grid, r), surface(grid, re), 2, TruncationRule::fve(0.95));
  const auto inv = truncated_inv_sqrt(eigendecompose_surface(surface(grid, r)), TruncationRule::fve(0.95));
  const Eigen::MatrixXd rl = inv.reconstruction();
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      CHECK(std::fabs(quad_form(grid, res.directions.col(j), rl, res.directions.col(k)) - (j == k ? 1.0 : 0.0)) < 1e-6);

  const auto scaled = edr_directions(surface(grid, r), surface(grid, 7.5 * re), 2, TruncationRule::fve(0.95));
  CHECK((scaled.directions - res.directions).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(scaled.eigenvalues[0] == doctest::Approx(7.5 * res.eigenvalues[0]).epsilon(1e-10));

  // dual route: eigenvalues of the kernel R_L^{-1/2} R_e R_L^{-1/2} on the full grid
  const Eigen::MatrixXd& W = grid.weights().asDiagonal().toDenseMatrix();
  const Eigen::MatrixXd op = inv.kernel * W * re * W * inv.kernel;
  const auto dual = eigendecompose_surface(surface(grid, op));
  CHECK(rel(dual.eigenvalues[0], res.eigenvalues[0]) < 1e-8);
  CHECK(rel(dual.eigenvalues[1], res.eigenvalues[1]) < 1e-8);
}

TEST_CASE("sign alignment and angles")
{
  const TimeGrid grid(101);
  const Eigen::VectorXd ref = sample(grid, [](double t) { return std::sin(kPi * t); });
  CHECK(align_sign(-ref, ref, grid) == ref);
  CHECK(align_sign(ref, ref, grid) == ref);
  const Eigen::VectorXd orth = sample(grid, [](double t) { return std::cos(2 * kPi * t); });
  const Eigen::VectorXd other = sample(grid, [](double t) { return std::cos(kPi * t); });
  CHECK(align_sign(other, Eigen::VectorXd::Zero(101), grid) == other);
  CHECK(angle_degrees(ref, -ref, grid) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(angle_degrees(ref, 2.0 * ref, grid) < 1e-6);
  const Eigen::VectorXd a = sample(grid, [](double t) { return std::sqrt(2.0) * std::cos(2 * kPi * t); });
  const Eigen::VectorXd c = sample(grid, [](double t) { return std::sqrt(2.0) * std::sin(2 * kPi * t); });
  CHECK(angle_degrees(a, c, grid) == doctest::Approx(90.0).epsilon(1e-9));
  (void)orth;
  CHECK(grid.inner(normalize_l2(ref, grid), normalize_l2(ref, grid)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(normalize_l2(Eigen::VectorXd::Zero(101), grid), ComputationError);
}

TEST_CASE("link estimate reproduces a linear response")
{
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Subject> subjects;
  for (int i = 0; i < 40; ++i) {
    Subject s{ "s" + std::to_string(i), { unit(rng), unit(rng) }, {}, {}, 0.0 };
    const double a = 2.0 * unit(rng) - 1.0;
    for (int j = 0; j < 12; ++j) {
      const double t = unit(rng);
      s.times.push_back(t);
      s.values.push_back(a * std::cos(2 * kPi * t));
    }
    subjects.push_back(s);
  }
  MeanCurve mean;
  mean.grid = TimeGrid(101);
  mean.values.assign(101, 0.0);
  mean.degenerate.assign(101, false);
  const Eigen::VectorXd direction = sample(mean.grid, [](double t) { return std::cos(2 * kPi * t); });

  const auto idx = subject_indices(SpatialFunctionalDataset(subjects), mean, direction);
  for (std::size_t i = 0; i < subjects.size(); ++i)
    subjects[i].response = 2.0 * idx[i] + 1.0;
  const SpatialFunctionalDataset d(subjects);
  const auto lo = *std::min_element(idx.begin(), idx.end()), hi = *std::max_element(idx.begin(), idx.end());
  std::vector<double> eval;
  for (int k = 0; k <= 10; ++k)
    eval.push_back(lo + (hi - lo) * k / 10.0);
  const auto link = estimate_link(d, mean, direction, 0.3 * (hi - lo), eval);
  for (std::size_t k = 0; k < eval.size(); ++k)
    CHECK(std::fabs(link.values[k] - (2.0 * eval[k] + 1.0)) < 1e-8);

  for (auto& s : subjects)
    s.response = -0.75;
  const auto flat = estimate_link(SpatialFunctionalDataset(subjects), mean, direction, 0.3 * (hi - lo), eval);
  for (double v : flat.values)
    CHECK(v == doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("link estimate tracks the model link on a dense design")
{
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.density = Density::Dense;
  cfg.nugget.reset();
  cfg.noise_sd = 0.01;
  cfg.response_noise_sd = 0.01;
  cfg.seed = 5;
  const auto sim = simulate_dataset(cfg);
  const auto& truth = sim.truth;
  MeanCurve mean;
  mean.grid = truth.grid;
  mean.values.assign(truth.mean.data(), truth.mean.data() + truth.mean.size());
  mean.degenerate.assign(truth.grid.size(), false);

  auto idx = subject_indices(sim.dataset, mean, truth.beta);
  std::sort(idx.begin(), idx.end());
  const double lo = idx[idx.size() / 10], hi = idx[idx.size() * 9 / 10];
  std::vector<double> eval;
  for (int k = 0; k <= 20; ++k)
    eval.push_back(lo + (hi - lo) * k / 20.0);
  const auto link = estimate_link(sim.dataset, mean, truth.beta, 0.15 * (idx.back() - idx.front()), eval);
  double worst = 0.0;
  for (std::size_t k = 0; k < eval.size(); ++k)
    worst = std::max(worst, std::fabs(link.values[k] - (3.0 + true_link(eval[k] + truth.beta_inner_mu))));
  MESSAGE("sup error on the central 80% of indices: " << worst);
  CHECK(worst < 0.1);
}

TEST_CASE("directions csv")
{
  sfsir::test::TempDir dir;
  const TimeGrid grid(3);
  EdrResult r;
  r.grid = grid;
  r.K = 2;
  r.directions = Eigen::MatrixXd::Ones(3, 2);
  r.directions(1, 1) = 0.5;
  write_directions_csv(r, dir / "d.csv");
  CHECK(sfsir::test::read_file(dir / "d.csv") == "t,beta_1,beta_2\n0,1,1\n0.5,1,0.5\n1,1,1\n");
}
