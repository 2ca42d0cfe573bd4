#include "sfsir/smoothing.hpp"
#include "sfsir/parallel.hpp"
#include "sfsir/simd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sfsir {

void SmootherData::reserve(std::size_t n)
{
  for (int k = 0; k < dims; ++k)
    covariates[k].reserve(n);
  targets.reserve(n);
  weights.reserve(n);
}

void SmootherData::push(std::span<const double> x, double y, double w)
{
  for (int k = 0; k < dims; ++k)
    covariates[k].push_back(x[k]);
  targets.push_back(y);
  weights.push_back(w);
}

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr int kMaxWidenings = 3;
constexpr double kWidenFactor = 1.5;

SmootherData sorted_and_pruned(SmootherData in)
{
  if (in.dims < 1 || in.dims > 3)
    throw std::invalid_argument("local linear smoother supports 1 to 3 covariate dimensions");
  const std::size_t n = in.targets.size();
  if (in.weights.size() != n)
    throw std::invalid_argument("smoother data: weights and targets differ in length");
  for (int k = 0; k < in.dims; ++k)
    if (in.covariates[k].size() != n)
      throw std::invalid_argument("smoother data: covariates and targets differ in length");

  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (in.weights[i] < 0.0 || !std::isfinite(in.weights[i]))
      throw std::invalid_argument("smoother data: observation weights must be finite and nonnegative");
    if (in.weights[i] > 0.0)
      order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return in.covariates[0][a] < in.covariates[0][b];
  });

  SmootherData out;
  out.dims = in.dims;
  out.reserve(order.size());
  for (std::size_t i : order) {
    for (int k = 0; k < in.dims; ++k)
      out.covariates[k].push_back(in.covariates[k][i]);
    out.targets.push_back(in.targets[i]);
    out.weights.push_back(in.weights[i]);
  }
  return out;
}

} // namespace

LocalLinearSmoother::LocalLinearSmoother(SmootherData data, KernelSpec kernel)
  : data_(sorted_and_pruned(std::move(data)))
  , kernel_(kernel)
{}

LocalLinearFit LocalLinearSmoother::fit_window(const Point& at, const std::array<double, 3>& bandwidths, double scale) const
{
  const int d = data_.dims;
  simd::MomentQuery query;
  query.family = kernel_.family;
  double kernel_scale = 1.0;
  for (int k = 0; k < d; ++k) {
    const double h = bandwidths[k] * scale;
    query.center[k] = at[k];
    query.inv_h[k] = 1.0 / h;
    kernel_scale /= h;
  }

  // window on the sorted first covariate
  const auto& x0 = data_.covariates[0];
  const double h0 = bandwidths[0] * scale;
  const auto lo = std::lower_bound(x0.begin(), x0.end(), at[0] - h0);
  const auto hi = std::upper_bound(lo, x0.end(), at[0] + h0);
  const auto begin = static_cast<std::size_t>(lo - x0.begin());
  const auto count = static_cast<std::size_t>(hi - lo);

  simd::MomentBlock block;
  block.dims = d;
  for (int k = 0; k < d; ++k)
    block.x[k] = data_.covariates[k].data() + begin;
  block.y = data_.targets.data() + begin;
  block.w = data_.weights.data() + begin;
  block.count = count;

  simd::MomentSums sums;
  simd::accumulate(block, query, sums);

  LocalLinearFit fit;
  fit.effective_points = sums.positive;
  fit.bandwidth_scale = scale;
  if (sums.positive == 0) {
    fit.status = FitStatus::Missing;
    fit.intercept = std::numeric_limits<double>::quiet_NaN();
    fit.degenerate = true;
    return fit;
  }

  if (sums.positive < static_cast<std::size_t>(d + 1)) {
    fit.status = FitStatus::LocalConstant;
    fit.intercept = sums.xty[0] / sums.xtx[0];
    fit.degenerate = true;
    return fit;
  }

  const int p = d + 1;
  Eigen::Matrix4d S = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  for (int r = 0; r < p; ++r) {
    b(r) = sums.xty[r] * kernel_scale;
    for (int c = r; c < p; ++c) {
      S(r, c) = sums.xtx[simd::packed_index(r, c)] * kernel_scale;
      S(c, r) = S(r, c);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S.topLeftCorner(p, p));
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = kRankTolerance * lambda.cwiseAbs().maxCoeff();
  const Eigen::MatrixXd& V = eig.eigenvectors();
  Eigen::VectorXd proj = V.transpose() * b.head(p);
  for (int r = 0; r < p; ++r)
    proj(r) = lambda(r) > cutoff ? proj(r) / lambda(r) : 0.0;
  const Eigen::VectorXd coef = V * proj;

  fit.status = FitStatus::Linear;
  fit.degenerate = scale != 1.0;
  fit.intercept = coef(0);
  for (int k = 0; k < d; ++k)
    fit.slopes[k] = coef(k + 1) * query.inv_h[k];
  return fit;
}

LocalLinearFit LocalLinearSmoother::fit(const Point& at, const std::array<double, 3>& bandwidths) const
{
  for (int k = 0; k < data_.dims; ++k)
    if (!(bandwidths[k] > 0.0))
      throw std::invalid_argument("local linear fit: bandwidths must be positive");
  double scale = 1.0;
  LocalLinearFit fit = fit_window(at, bandwidths, scale);
  for (int attempt = 0; attempt < kMaxWidenings && fit.effective_points == 0; ++attempt) {
    scale *= kWidenFactor;
    fit = fit_window(at, bandwidths, scale);
  }
  return fit;
}

std::vector<LocalLinearFit> LocalLinearSmoother::fit_many(std::span<const Point> points,
                                                          const std::array<double, 3>& bandwidths) const
{
  std::vector<LocalLinearFit> out(points.size());
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (points.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t end = std::min(points.size(), (blk + 1) * kBlock);
    for (std::size_t i = blk * kBlock; i < end; ++i)
      out[i] = fit(points[i], bandwidths);
  });
  return out;
}

LocalLinearFit local_linear_fit(const LocalLinearProblem& problem)
{
  const LocalLinearSmoother smoother(problem.data, problem.kernel);
  return smoother.fit(problem.eval_point, problem.bandwidths);
}

GridSmooth smooth_on_grid(const LocalLinearSmoother& smoother,
                          std::span<const Point> grid,
                          const std::array<double, 3>& bandwidths)
{
  if (grid.empty())
    throw std::invalid_argument("smooth_on_grid: empty grid");
  GridSmooth out;
  out.fits = smoother.fit_many(grid, bandwidths);
  out.values.reserve(out.fits.size());
  for (const auto& f : out.fits) {
    out.values.push_back(f.intercept);
    if (f.degenerate)
      ++out.degenerate_count;
  }
  return out;
}

} // namespace sfsir
