#include "sfsir/covariance.hpp"
#include "sfsir/error.hpp"
#include "sfsir/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sfsir {

// ---------------------------------------------------------------------------
// Weights

WeightScheme WeightScheme::mixed(double theta)
{
  if (!(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("mixed weighting needs theta in [0, 1]");
  return { WeightKind::Mixed, theta };
}

double WeightScheme::obs_share() const noexcept
{
  switch (kind) {
    case WeightKind::Obs:
      return 1.0;
    case WeightKind::Subj:
      return 0.0;
    case WeightKind::Mixed:
    default:
      return theta;
  }
}

std::string_view to_string(const WeightScheme& scheme)
{
  switch (scheme.kind) {
    case WeightKind::Obs:
      return "OBS";
    case WeightKind::Subj:
      return "SUBJ";
    case WeightKind::Mixed:
    default:
      return "MIXED";
  }
}

WeightScheme parse_weight_scheme(std::string_view name, double theta)
{
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "obs")
    return WeightScheme::obs();
  if (lower == "subj")
    return WeightScheme::subj();
  if (lower == "mixed")
    return WeightScheme::mixed(theta);
  throw std::invalid_argument("unknown weighting scheme '" + std::string(name) + "' (expected obs, subj or mixed)");
}

SchemeWeights::SchemeWeights(const WeightScheme& scheme, std::span<const std::size_t> counts)
  : theta_(scheme.obs_share())
  , counts_(counts.begin(), counts.end())
{
  const std::size_t n = counts_.size();
  if (n < 2)
    throw std::invalid_argument("weights need at least 2 subjects");
  double total = 0.0, total_sq = 0.0, within_total = 0.0;
  for (std::size_t c : counts_) {
    if (c < 1)
      throw std::invalid_argument("every subject needs at least one observation");
    const double N = static_cast<double>(c);
    total += N;
    total_sq += N * N;
    within_total += N * (N - 1.0);
    if (c < 2)
      within_valid_ = false;
  }
  cross_total_ = total * total - total_sq;

  const double nd = static_cast<double>(n);
  obs_.resize(n);
  within_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double N = static_cast<double>(counts_[i]);
    obs_[i] = theta_ / total + (1.0 - theta_) / (nd * N);
    within_[i] = within_valid_ ? theta_ / within_total + (1.0 - theta_) / (nd * N * (N - 1.0)) : 0.0;
  }
}

const std::vector<double>& SchemeWeights::within() const
{
  if (!within_valid_)
    throw std::invalid_argument("within-subject weights need N_i >= 2 for every subject");
  return within_;
}

double SchemeWeights::pair(std::size_t i, std::size_t i2) const
{
  if (i == i2)
    throw std::invalid_argument("pair weight is defined for distinct subjects only");
  const double n = static_cast<double>(counts_.size());
  const double Ni = static_cast<double>(counts_.at(i));
  const double Nk = static_cast<double>(counts_.at(i2));
  return theta_ / cross_total_ + (1.0 - theta_) / (n * (n - 1.0) * Ni * Nk);
}

SchemeWeights weights_for(const WeightScheme& scheme, std::span<const std::size_t> counts)
{
  return SchemeWeights(scheme, counts);
}

double optimal_theta(double d_n1, double d_n2)
{
  if (!(d_n1 >= 0.0 && d_n2 >= 0.0) || d_n1 + d_n2 <= 0.0)
    throw std::invalid_argument("optimal_theta needs nonnegative rate terms with positive sum");
  return d_n2 / (d_n1 + d_n2);
}

MixingRates mixing_rates(std::span<const std::size_t> counts, double h_c)
{
  const std::size_t n = counts.size();
  if (n < 2)
    throw std::invalid_argument("mixing_rates needs at least 2 subjects");
  if (!(h_c > 0.0))
    throw std::invalid_argument("mixing_rates needs h_c > 0");
  double s1 = 0.0, inv = 0.0, inv_sq = 0.0, s_sq = 0.0, s_sq2 = 0.0, s12 = 0.0;
  for (std::size_t c : counts) {
    const double N = static_cast<double>(c);
    s1 += N;
    s_sq += N * N;
    s_sq2 += N * N * N * N;
    s12 += N * N * N;
    inv += 1.0 / N;
    inv_sq += 1.0 / (N * N);
  }
  const double nd = static_cast<double>(n);
  const double pairs = nd * (nd - 1.0);
  // sums over ordered pairs i != i'
  const double N2 = (s1 * s1 - s_sq) / pairs;
  const double N21 = (s_sq * s1 - s12) / pairs;
  const double N212 = (s_sq * s_sq - s_sq2) / pairs;
  const double NH = nd / inv;
  const double NH2 = pairs / (inv * inv - inv_sq);

  MixingRates r;
  r.d_n1 = (1.0 / (N2 * h_c * h_c) + N21 / (N2 * N2 * h_c) + N212 / (N2 * N2)) / nd;
  r.d_n2 = (1.0 / (NH2 * h_c * h_c) + 1.0 / (NH * h_c) + 1.0) / nd;
  r.theta_star = optimal_theta(r.d_n1, r.d_n2);
  return r;
}

void validate(const BandwidthSet& bw)
{
  if (!(bw.h_mu > 0.0 && bw.h_c > 0.0 && bw.b > 0.0 && bw.h_t > 0.0 && bw.h_y > 0.0))
    throw std::invalid_argument("all bandwidths must be positive");
}

// ---------------------------------------------------------------------------
// Mean

double MeanCurve::at(double t) const
{
  const auto pts = grid.points();
  if (values.size() != pts.size())
    throw std::logic_error("mean curve does not match its grid");
  // nearest finite neighbors on each side
  const auto it = std::upper_bound(pts.begin(), pts.end(), t);
  std::ptrdiff_t hi = it - pts.begin();
  std::ptrdiff_t lo = hi - 1;
  const auto n = static_cast<std::ptrdiff_t>(pts.size());
  while (lo >= 0 && std::isnan(values[static_cast<std::size_t>(lo)]))
    --lo;
  while (hi < n && std::isnan(values[static_cast<std::size_t>(hi)]))
    ++hi;
  if (lo < 0 && hi >= n)
    throw ComputationError("mean curve has no finite values");
  if (lo < 0)
    return values[static_cast<std::size_t>(hi)];
  if (hi >= n)
    return values[static_cast<std::size_t>(lo)];
  const double x0 = pts[static_cast<std::size_t>(lo)], x1 = pts[static_cast<std::size_t>(hi)];
  const double a = std::clamp((t - x0) / (x1 - x0), 0.0, 1.0);
  return (1.0 - a) * values[static_cast<std::size_t>(lo)] + a * values[static_cast<std::size_t>(hi)];
}

MeanCurve estimate_mean(const SpatialFunctionalDataset& dataset,
                        const WeightScheme& scheme,
                        double h_mu,
                        const TimeGrid& grid,
                        KernelSpec kernel)
{
  const auto counts = dataset.counts();
  const SchemeWeights weights(scheme, counts);
  SmootherData data;
  data.dims = 1;
  data.reserve(dataset.total_observations());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    for (std::size_t j = 0; j < s.count(); ++j) {
      const double x[1] = { s.times[j] };
      data.push(x, s.values[j], weights.obs()[i]);
    }
  }
  const LocalLinearSmoother smoother(std::move(data), kernel);
  std::vector<Point> points;
  points.reserve(grid.size());
  for (double t : grid.points())
    points.push_back({ t, 0.0, 0.0 });
  const auto smooth = smooth_on_grid(smoother, points, { h_mu, 1.0, 1.0 });

  MeanCurve mean;
  mean.grid = grid;
  mean.values = smooth.values;
  mean.bandwidth = h_mu;
  mean.degenerate.reserve(smooth.fits.size());
  for (const auto& f : smooth.fits)
    mean.degenerate.push_back(f.degenerate);
  return mean;
}

// ---------------------------------------------------------------------------
// Surfaces

void symmetrize(Eigen::MatrixXd& values)
{
  const Eigen::Index p = values.rows();
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = r; c < p; ++c) {
      const double a = values(r, c), b = values(c, r);
      double v;
      if (std::isnan(a))
        v = b;
      else if (std::isnan(b))
        v = a;
      else
        v = 0.5 * (a + b);
      values(r, c) = v;
      values(c, r) = v;
    }
}

namespace {

std::vector<Point> product_grid(const TimeGrid& grid, double third)
{
  std::vector<Point> points;
  points.reserve(grid.size() * grid.size());
  for (double t1 : grid.points())
    for (double t2 : grid.points())
      points.push_back({ t1, t2, third });
  return points;
}

CovarianceSurface smooth_surface(const LocalLinearSmoother& smoother,
                                 const TimeGrid& grid,
                                 const std::array<double, 3>& bandwidths,
                                 double lag)
{
  const auto points = product_grid(grid, lag);
  const auto smooth = smooth_on_grid(smoother, points, bandwidths);
  const auto p = static_cast<Eigen::Index>(grid.size());
  CovarianceSurface s;
  s.grid = grid;
  s.values.resize(p, p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c)
      s.values(r, c) = smooth.values[static_cast<std::size_t>(r * p + c)];
  s.degenerate_count = smooth.degenerate_count;
  symmetrize(s.values);
  return s;
}

std::vector<double> residuals(const Subject& s, const MeanCurve& mean)
{
  std::vector<double> r(s.count());
  for (std::size_t j = 0; j < s.count(); ++j)
    r[j] = s.values[j] - mean.at(s.times[j]);
  return r;
}

// Centered observations of one subject, optionally binned: one pseudo
// observation per nonempty bin at the mean time with the mean residual and
// the bin count as multiplicity. Products across subjects of bin means equal
// the mean of the raw products over the bin pair.
struct Residuals
{
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> multiplicity;
};

Residuals centered(const Subject& s, const MeanCurve& mean, std::size_t bins)
{
  Residuals out;
  const auto r = residuals(s, mean);
  if (bins == 0) {
    out.times = s.times;
    out.values = r;
    out.multiplicity.assign(s.count(), 1.0);
    return out;
  }
  std::vector<double> tsum(bins, 0.0), rsum(bins, 0.0), cnt(bins, 0.0);
  for (std::size_t j = 0; j < s.count(); ++j) {
    auto b = static_cast<std::size_t>(s.times[j] * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    tsum[b] += s.times[j];
    rsum[b] += r[j];
    cnt[b] += 1.0;
  }
  for (std::size_t b = 0; b < bins; ++b)
    if (cnt[b] > 0.0) {
      out.times.push_back(tsum[b] / cnt[b]);
      out.values.push_back(rsum[b] / cnt[b]);
      out.multiplicity.push_back(cnt[b]);
    }
  return out;
}

// Ordered subject pairs allowed by the nearest-neighbor restriction.
std::vector<std::vector<bool>> neighbor_mask(const SiteGeometry& geometry, std::size_t n, double fraction)
{
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("neighbor_fraction must lie in (0, 1]");
  std::vector<std::vector<bool>> allowed(n, std::vector<bool>(n, fraction >= 1.0));
  if (fraction >= 1.0)
    return allowed;
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n - 1) - 1e-12));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return geometry.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) <
             geometry.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
    });
    std::size_t taken = 0;
    for (std::size_t idx : order) {
      if (idx == i)
        continue;
      if (taken++ >= k)
        break;
      allowed[i][idx] = true;
      allowed[idx][i] = true;
    }
  }
  return allowed;
}

} // namespace

CovarianceSurface estimate_gamma(const SpatialFunctionalDataset& dataset,
                                 const MeanCurve& mean,
                                 const WeightScheme& scheme,
                                 double h_c,
                                 const TimeGrid& grid,
                                 KernelSpec kernel)
{
  if (!(h_c > 0.0))
    throw std::invalid_argument("estimate_gamma: h_c must be positive");
  // subjects with a single observation carry no within-subject products
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (dataset[i].count() >= 2)
      usable.push_back(i);
  if (usable.empty())
    throw ComputationError("estimate_gamma: no subject has at least 2 observations");
  std::vector<std::size_t> counts;
  for (std::size_t i : usable)
    counts.push_back(dataset[i].count());
  const SchemeWeights weights(scheme, counts.size() >= 2 ? std::span<const std::size_t>(counts) : dataset.counts());

  SmootherData data;
  data.dims = 2;
  for (std::size_t u = 0; u < usable.size(); ++u) {
    const auto& s = dataset[usable[u]];
    const auto r = residuals(s, mean);
    const double v = usable.size() >= 2 ? weights.within()[u] : 1.0;
    for (std::size_t j = 0; j < s.count(); ++j)
      for (std::size_t k = 0; k < s.count(); ++k) {
        if (j == k)
          continue;
        const double x[2] = { s.times[j], s.times[k] };
        data.push(x, r[j] * r[k], v);
      }
  }
  const LocalLinearSmoother smoother(std::move(data), kernel);
  auto surface = smooth_surface(smoother, grid, { h_c, h_c, 1.0 }, 0.0);
  surface.kind = SurfaceKind::Gamma;
  surface.bandwidths = { h_c, 0.0 };
  return surface;
}

std::size_t count_spatial_pairs(const SpatialFunctionalDataset& dataset,
                                double b,
                                double spatial_lag,
                                double neighbor_fraction,
                                KernelSpec kernel)
{
  const auto geometry = site_geometry(dataset);
  const std::size_t n = dataset.size();
  const auto allowed = neighbor_mask(geometry, n, neighbor_fraction);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k || !allowed[i][k])
        continue;
      const double d = geometry.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (kernel_eval(kernel, (d - spatial_lag) / b) > 0.0)
        ++pairs;
    }
  return pairs;
}

CovarianceSurface estimate_r_spatial(const SpatialFunctionalDataset& dataset,
                                     const MeanCurve& mean,
                                     const WeightScheme& scheme,
                                     double h_c,
                                     double b,
                                     double spatial_lag,
                                     const TimeGrid& grid,
                                     const SpatialOptions& options,
                                     KernelSpec kernel)
{
  if (!(h_c > 0.0) || !(b > 0.0))
    throw std::invalid_argument("estimate_r_spatial: bandwidths must be positive");
  if (!(spatial_lag >= 0.0))
    throw std::invalid_argument("estimate_r_spatial: spatial lag must be nonnegative");
  const std::size_t n = dataset.size();
  const auto geometry = site_geometry(dataset);
  const auto allowed = neighbor_mask(geometry, n, options.neighbor_fraction);
  const auto counts = dataset.counts();
  const SchemeWeights weights(scheme, counts);

  std::vector<Residuals> centered_obs;
  centered_obs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    centered_obs.push_back(centered(dataset[i], mean, options.bins));

  SmootherData data;
  data.dims = 3;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k || !allowed[i][k])
        continue;
      const double d = geometry.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (!(kernel_eval(kernel, (d - spatial_lag) / b) > 0.0))
        continue;
      ++pairs;
      const double v = weights.pair(i, k);
      const auto& a = centered_obs[i];
      const auto& c = centered_obs[k];
      for (std::size_t j = 0; j < a.times.size(); ++j)
        for (std::size_t j2 = 0; j2 < c.times.size(); ++j2) {
          const double x[3] = { a.times[j], c.times[j2], d };
          data.push(x, a.values[j] * c.values[j2], v * a.multiplicity[j] * c.multiplicity[j2]);
        }
    }
  if (pairs == 0) {
    std::ostringstream msg;
    msg << "estimate_r_spatial: no site pair has positive spatial kernel weight at lag " << spatial_lag
        << " with b = " << b << "; increase b or the neighbor fraction";
    throw ComputationError(msg.str());
  }

  const LocalLinearSmoother smoother(std::move(data), kernel);
  auto surface = smooth_surface(smoother, grid, { h_c, h_c, b }, spatial_lag);
  surface.kind = SurfaceKind::RSpatial;
  surface.spatial_lag = spatial_lag;
  surface.bandwidths = { h_c, b };
  return surface;
}

CovarianceSurface estimate_nugget(const CovarianceSurface& gamma, const CovarianceSurface& r0)
{
  if (gamma.grid.size() != r0.grid.size() || gamma.values.rows() != r0.values.rows())
    throw std::invalid_argument("estimate_nugget: surfaces are on different grids");
  if (r0.spatial_lag != 0.0)
    throw std::invalid_argument("estimate_nugget: spatial surface must be at lag 0");
  CovarianceSurface out;
  out.grid = gamma.grid;
  out.values = gamma.values - r0.values;
  out.kind = SurfaceKind::Nugget;
  out.bandwidths = r0.bandwidths;
  return out;
}

std::string_view to_string(SurfaceKind kind) noexcept
{
  switch (kind) {
    case SurfaceKind::Gamma:
      return "gamma";
    case SurfaceKind::RSpatial:
      return "r_spatial";
    case SurfaceKind::Nugget:
      return "nugget";
    case SurfaceKind::ConditionalRe:
    default:
      return "re";
  }
}

// ---------------------------------------------------------------------------
// CSV

void write_mean_csv(const MeanCurve& mean, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << "t,value\n";
  for (std::size_t k = 0; k < mean.grid.size(); ++k)
    out << format_double(mean.grid[k]) << ',' << format_double(mean.values[k]) << '\n';
}

void write_surface_csv(const CovarianceSurface& surface, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << "t1,t2,value\n";
  const std::size_t p = surface.grid.size();
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < p; ++c)
      out << format_double(surface.grid[r]) << ',' << format_double(surface.grid[c]) << ','
          << format_double(surface.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << '\n';
}

CovarianceSurface read_surface_csv(const std::filesystem::path& path, SurfaceKind kind)
{
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("t1,t2,value", 0) != 0)
    throw InputError(path.string() + ": expected header 't1,t2,value'");
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r")
      continue;
    const auto last = line.rfind(',');
    if (last == std::string::npos)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    try {
      values.push_back(std::stod(line.substr(last + 1)));
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": cannot parse value");
    }
  }
  const auto p = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(values.size()))));
  if (p < 2 || p * p != values.size())
    throw InputError(path.string() + ": row count is not a square grid");
  CovarianceSurface s;
  s.grid = TimeGrid(p);
  s.kind = kind;
  s.values.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < p; ++c)
      s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * p + c];
  return s;
}

} // namespace sfsir
