#include "sfsir/inverse_regression.hpp"
#include "sfsir/error.hpp"
#include "sfsir/smoothing.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sfsir {

namespace {

// Neumaier compensated sum.
class CompensatedSum
{
public:
  void add(double x) noexcept
  {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

} // namespace

InverseRegressionSurface estimate_m(const SpatialFunctionalDataset& dataset,
                                    const WeightScheme& scheme,
                                    double h_t,
                                    double h_y,
                                    const TimeGrid& grid,
                                    std::optional<std::vector<double>> y_points,
                                    KernelSpec kernel)
{
  if (!(h_t > 0.0 && h_y > 0.0))
    throw std::invalid_argument("estimate_m: bandwidths must be positive");
  const auto counts = dataset.counts();
  const SchemeWeights weights(scheme, counts);

  SmootherData data;
  data.dims = 2;
  data.reserve(dataset.total_observations());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    for (std::size_t j = 0; j < s.count(); ++j) {
      const double x[2] = { s.times[j], s.response };
      data.push(x, s.values[j], weights.obs()[i]);
    }
  }
  const LocalLinearSmoother smoother(std::move(data), kernel);

  InverseRegressionSurface out;
  out.grid = grid;
  out.y_values = y_points ? std::move(*y_points) : dataset.responses();
  out.h_t = h_t;
  out.h_y = h_y;
  const std::size_t p = grid.size();
  const std::size_t m = out.y_values.size();
  std::vector<Point> points;
  points.reserve(p * m);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t k = 0; k < p; ++k)
      points.push_back({ grid[k], out.y_values[c], 0.0 });
  const auto fits = smoother.fit_many(points, { h_t, h_y, 1.0 });

  out.values.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m));
  out.degenerate.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c) {
    bool any = false;
    for (std::size_t k = 0; k < p; ++k) {
      const auto& f = fits[c * p + k];
      out.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = f.intercept;
      out.degenerate(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = f.degenerate;
      any = any || f.status != FitStatus::Missing;
    }
    if (!any) {
      std::ostringstream msg;
      msg << "estimate_m: no data near y = " << out.y_values[c] << " for any grid time (h_t = " << h_t
          << ", h_y = " << h_y << "); increase h_y";
      throw ComputationError(msg.str());
    }
  }
  return out;
}

CovarianceSurface estimate_re(const InverseRegressionSurface& m_surface,
                              std::span<const double> responses,
                              TrimSpec trim)
{
  const std::size_t n = responses.size();
  if (static_cast<std::size_t>(m_surface.values.cols()) != n)
    throw std::invalid_argument("estimate_re: surface columns must match the responses");
  const Interval band = trim_interval(responses, trim);
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < n; ++i)
    if (band.contains(responses[i]))
      inside.push_back(i);
  if (inside.size() < 2)
    throw ComputationError("estimate_re: fewer than 2 responses inside the trim interval");

  const auto p = m_surface.values.rows();
  for (std::size_t i : inside)
    for (Eigen::Index k = 0; k < p; ++k)
      if (!std::isfinite(m_surface.values(k, static_cast<Eigen::Index>(i))))
        throw ComputationError("estimate_re: inverse regression surface is missing values for an in-trim subject");

  const double nd = static_cast<double>(n);
  Eigen::VectorXd first(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    CompensatedSum s;
    for (std::size_t i : inside)
      s.add(m_surface.values(k, static_cast<Eigen::Index>(i)));
    first(k) = s.value() / nd;
  }

  CovarianceSurface out;
  out.grid = m_surface.grid;
  out.kind = SurfaceKind::ConditionalRe;
  out.bandwidths = { m_surface.h_t, m_surface.h_y };
  out.values.resize(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a; b < p; ++b) {
      CompensatedSum s;
      for (std::size_t i : inside) {
        const auto col = static_cast<Eigen::Index>(i);
        s.add(m_surface.values(a, col) * m_surface.values(b, col));
      }
      const double v = s.value() / nd - first(a) * first(b);
      out.values(a, b) = v;
      out.values(b, a) = v;
    }
  return out;
}

} // namespace sfsir
