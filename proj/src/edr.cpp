#include "sfsir/edr.hpp"
#include "sfsir/error.hpp"
#include "sfsir/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace sfsir {

namespace {

constexpr double kNullEigenvalue = 1e-12;

std::span<const double> as_span(const Eigen::VectorXd& v)
{
  return { v.data(), static_cast<std::size_t>(v.size()) };
}

} // namespace

EigenDecomposition eigendecompose_surface(const CovarianceSurface& surface)
{
  const auto p = static_cast<Eigen::Index>(surface.grid.size());
  if (surface.values.rows() != p || surface.values.cols() != p)
    throw std::invalid_argument("eigendecompose_surface: surface does not match its grid");
  if (!surface.values.allFinite())
    throw ComputationError("eigendecompose_surface: surface has non-finite entries");

  const Eigen::VectorXd sqrt_w = surface.grid.weights().cwiseSqrt();
  const Eigen::MatrixXd sym = 0.5 * (surface.values + surface.values.transpose());
  const Eigen::MatrixXd weighted = sqrt_w.asDiagonal() * sym * sqrt_w.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(weighted);
  if (eig.info() != Eigen::Success)
    throw ComputationError("eigendecompose_surface: eigen solver did not converge");

  EigenDecomposition out;
  out.grid = surface.grid;
  out.source = surface.kind;
  out.eigenvalues.resize(static_cast<std::size_t>(p));
  out.eigenvectors.resize(p, p);
  const Eigen::VectorXd inv_sqrt_w = sqrt_w.cwiseInverse();
  // the solver returns ascending order
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::Index src = p - 1 - i;
    out.eigenvalues[static_cast<std::size_t>(i)] = eig.eigenvalues()(src);
    out.eigenvectors.col(i) = inv_sqrt_w.cwiseProduct(eig.eigenvectors().col(src));
  }
  return out;
}

std::size_t select_truncation(const std::vector<double>& eigenvalues, const TruncationRule& rule)
{
  const double top = eigenvalues.empty() ? 0.0 : eigenvalues.front();
  std::size_t usable = 0;
  double total = 0.0;
  for (double xi : eigenvalues) {
    if (!(xi > 0.0) || xi < kNullEigenvalue * top)
      break;
    ++usable;
    total += xi;
  }
  if (usable == 0)
    throw ComputationError("truncation: no positive eigenvalue available");

  std::size_t L = 0;
  if (rule.kind == TruncationRule::Kind::Fixed) {
    L = std::min(rule.fixed_L, usable);
  } else {
    if (!(rule.fve_threshold > 0.0 && rule.fve_threshold <= 1.0))
      throw std::invalid_argument("truncation: FVE threshold must lie in (0, 1]");
    double cumulative = 0.0;
    for (std::size_t i = 0; i < usable; ++i) {
      cumulative += eigenvalues[i];
      if (cumulative >= rule.fve_threshold * total) {
        L = i + 1;
        break;
      }
    }
    if (L == 0)
      L = usable;
  }
  if (L == 0)
    throw ComputationError("truncation: rule selects L = 0");
  return L;
}

Eigen::VectorXd TruncatedInverseSqrt::apply(const Eigen::VectorXd& f) const
{
  return kernel * grid.weights().cwiseProduct(f);
}

Eigen::MatrixXd TruncatedInverseSqrt::reconstruction() const
{
  Eigen::VectorXd xi(static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < L; ++i)
    xi(static_cast<Eigen::Index>(i)) = eigenvalues[i];
  return basis * xi.asDiagonal() * basis.transpose();
}

TruncatedInverseSqrt truncated_inv_sqrt(const EigenDecomposition& decomposition, const TruncationRule& rule)
{
  TruncatedInverseSqrt out;
  out.grid = decomposition.grid;
  out.L = select_truncation(decomposition.eigenvalues, rule);
  const auto L = static_cast<Eigen::Index>(out.L);
  out.eigenvalues.assign(decomposition.eigenvalues.begin(), decomposition.eigenvalues.begin() + L);
  out.basis = decomposition.eigenvectors.leftCols(L);
  Eigen::VectorXd inv_sqrt(L);
  for (Eigen::Index i = 0; i < L; ++i)
    inv_sqrt(i) = 1.0 / std::sqrt(out.eigenvalues[static_cast<std::size_t>(i)]);
  out.kernel = out.basis * inv_sqrt.asDiagonal() * out.basis.transpose();
  return out;
}

EdrResult edr_directions(const CovarianceSurface& covariance,
                         const CovarianceSurface& re,
                         std::size_t K,
                         const TruncationRule& rule)
{
  if (covariance.grid.size() != re.grid.size())
    throw std::invalid_argument("edr_directions: surfaces are on different grids");
  if (K < 1)
    throw std::invalid_argument("edr_directions: K must be at least 1");

  const auto inv = truncated_inv_sqrt(eigendecompose_surface(covariance), rule);
  if (K > inv.L)
    throw std::invalid_argument("edr_directions: K = " + std::to_string(K) + " exceeds truncation order L = " +
                                std::to_string(inv.L));
  const auto L = static_cast<Eigen::Index>(inv.L);
  const auto& w = covariance.grid.weights();

  // R_e with negative eigenvalues clipped
  const auto re_dec = eigendecompose_surface(re);
  const auto p = static_cast<Eigen::Index>(re.grid.size());
  Eigen::VectorXd clipped(p);
  for (Eigen::Index i = 0; i < p; ++i)
    clipped(i) = std::max(0.0, re_dec.eigenvalues[static_cast<std::size_t>(i)]);
  const Eigen::MatrixXd re_plus = re_dec.eigenvectors * clipped.asDiagonal() * re_dec.eigenvectors.transpose();

  // <pi_a, R_e pi_b> in the retained basis, then whitened
  const Eigen::MatrixXd weighted_basis = w.asDiagonal() * inv.basis;
  const Eigen::MatrixXd G = weighted_basis.transpose() * re_plus * weighted_basis;
  Eigen::VectorXd inv_sqrt(L);
  for (Eigen::Index i = 0; i < L; ++i)
    inv_sqrt(i) = 1.0 / std::sqrt(inv.eigenvalues[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd M = inv_sqrt.asDiagonal() * G * inv_sqrt.asDiagonal();
  M = 0.5 * (M + M.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success)
    throw ComputationError("edr_directions: eigen solver did not converge");

  EdrResult out;
  out.grid = covariance.grid;
  out.K = K;
  out.L = inv.L;
  out.covariance_eigenvalues = inv.eigenvalues;
  out.directions.resize(p, static_cast<Eigen::Index>(K));
  out.standardized.resize(p, static_cast<Eigen::Index>(K));
  for (std::size_t j = 0; j < K; ++j) {
    const Eigen::Index src = L - 1 - static_cast<Eigen::Index>(j);
    out.eigenvalues.push_back(eig.eigenvalues()(src));
    const Eigen::VectorXd c = eig.eigenvectors().col(src);
    Eigen::VectorXd eta = inv.basis * c;
    Eigen::VectorXd beta = inv.basis * inv_sqrt.cwiseProduct(c);
    if (beta.sum() < 0.0) {
      beta = -beta;
      eta = -eta;
    }
    out.directions.col(static_cast<Eigen::Index>(j)) = beta;
    out.standardized.col(static_cast<Eigen::Index>(j)) = eta;
  }
  if (out.eigenvalues.front() < kNullEigenvalue) {
    out.degenerate = true;
    out.warning = "conditional covariance is numerically zero; directions are arbitrary";
  }
  return out;
}

Eigen::VectorXd align_sign(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference, const TimeGrid& grid)
{
  return grid.inner(estimate, reference) < 0.0 ? Eigen::VectorXd(-estimate) : estimate;
}

double angle_degrees(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const TimeGrid& grid)
{
  const double na = std::sqrt(grid.inner(a, a));
  const double nb = std::sqrt(grid.inner(b, b));
  if (!(na > 0.0 && nb > 0.0))
    throw std::invalid_argument("angle_degrees: zero curve");
  // half-chord form stays accurate for nearly parallel curves
  const Eigen::VectorXd ua = a / na;
  const Eigen::VectorXd ub = (grid.inner(a, b) < 0.0 ? -b : b) / nb;
  const Eigen::VectorXd diff = ua - ub, sum = ua + ub;
  const double theta = 2.0 * std::atan2(std::sqrt(grid.inner(diff, diff)), std::sqrt(grid.inner(sum, sum)));
  return theta * 180.0 / 3.14159265358979323846;
}

Eigen::VectorXd normalize_l2(const Eigen::VectorXd& f, const TimeGrid& grid)
{
  const double norm = std::sqrt(grid.inner(f, f));
  if (!(norm > 0.0))
    throw ComputationError("normalize_l2: zero curve");
  return f / norm;
}

std::vector<double> subject_indices(const SpatialFunctionalDataset& dataset,
                                    const MeanCurve& mean,
                                    const Eigen::VectorXd& direction)
{
  const TimeGrid& grid = mean.grid;
  if (static_cast<std::size_t>(direction.size()) != grid.size())
    throw std::invalid_argument("subject_indices: direction does not match the mean grid");
  std::vector<double> indices;
  indices.reserve(dataset.size());
  Eigen::VectorXd curve(direction.size());
  for (const auto& s : dataset.subjects()) {
    std::vector<std::size_t> order(s.count());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.times[a] < s.times[b]; });
    std::vector<double> ts, rs;
    for (std::size_t j : order) {
      ts.push_back(s.times[j]);
      rs.push_back(s.values[j] - mean.at(s.times[j]));
    }
    for (Eigen::Index k = 0; k < curve.size(); ++k)
      curve(k) = interpolate_linear(ts, rs, grid[static_cast<std::size_t>(k)]);
    indices.push_back(grid.inner(as_span(direction), as_span(curve)));
  }
  return indices;
}

LinkEstimate estimate_link(const SpatialFunctionalDataset& dataset,
                           const MeanCurve& mean,
                           const Eigen::VectorXd& direction,
                           double h,
                           const std::vector<double>& eval_points,
                           KernelSpec kernel)
{
  LinkEstimate out;
  out.indices = subject_indices(dataset, mean, direction);
  const auto [lo, hi] = std::minmax_element(out.indices.begin(), out.indices.end());
  if (*hi - *lo < 1e-12)
    throw ComputationError("estimate_link: indices have no spread");

  SmootherData data;
  data.dims = 1;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double x[1] = { out.indices[i] };
    data.push(x, dataset[i].response, 1.0);
  }
  const LocalLinearSmoother smoother(std::move(data), kernel);
  std::vector<Point> points;
  for (double u : eval_points)
    points.push_back({ u, 0.0, 0.0 });
  const auto smooth = smooth_on_grid(smoother, points, { h, 1.0, 1.0 });
  out.eval_points = eval_points;
  out.values = smooth.values;
  for (const auto& f : smooth.fits)
    out.degenerate.push_back(f.degenerate);
  return out;
}

void write_directions_csv(const EdrResult& result, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << 't';
  for (std::size_t j = 0; j < result.K; ++j)
    out << ",beta_" << (j + 1);
  out << '\n';
  for (std::size_t k = 0; k < result.grid.size(); ++k) {
    out << format_double(result.grid[k]);
    for (std::size_t j = 0; j < result.K; ++j)
      out << ',' << format_double(result.directions(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
    out << '\n';
  }
}

} // namespace sfsir
