#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sfsir {

struct Site
{
  double x = 0.0;
  double y = 0.0;
};

double distance(const Site& a, const Site& b) noexcept;

//! One spatial unit: its location, its sampled curve and its scalar response.
struct Subject
{
  std::string id;
  Site site;
  std::vector<double> times;
  std::vector<double> values;
  double response = 0.0;

  std::size_t count() const noexcept { return times.size(); }
};

//! Irregularly located functional observations with one response per site.
//! Immutable after construction; construction validates every invariant.
class SpatialFunctionalDataset
{
public:
  //! Throws InputError naming the offending subject when
  //! - fewer than 2 subjects, or an empty / ragged subject,
  //! - a time outside [0, 1] or a non-finite value,
  //! - duplicate site ids or coincident site coordinates.
  explicit SpatialFunctionalDataset(std::vector<Subject> subjects);

  std::size_t size() const noexcept { return subjects_.size(); }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  std::span<const Subject> subjects() const noexcept { return subjects_; }

  std::vector<std::size_t> counts() const;
  std::vector<double> responses() const;
  std::vector<Site> sites() const;
  std::size_t total_observations() const noexcept { return total_observations_; }

  //! Dataset restricted to the given subject indices (order preserved).
  SpatialFunctionalDataset subset(std::span<const std::size_t> indices) const;

private:
  std::vector<Subject> subjects_;
  std::size_t total_observations_ = 0;
};

struct LoadOptions
{
  //! Map the observed time range [min, max] affinely onto [0, 1] before
  //! validation.
  bool rescale_time = false;
};

//! Reads `site_id,sx,sy,t,z` observations and `site_id,y` responses.
//! Subjects keep the order of first appearance in the observations file.
SpatialFunctionalDataset load_dataset(const std::filesystem::path& observations,
                                      const std::filesystem::path& responses,
                                      const LoadOptions& options = {});

void save_dataset(const SpatialFunctionalDataset& dataset,
                  const std::filesystem::path& observations,
                  const std::filesystem::path& responses);

//! Equally spaced points on [0, 1] with trapezoid quadrature weights.
class TimeGrid
{
public:
  explicit TimeGrid(std::size_t p);

  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t k) const { return points_[k]; }
  std::span<const double> points() const noexcept { return points_; }
  double spacing() const noexcept { return spacing_; }

  //! Trapezoid weights: spacing inside, spacing/2 at both ends.
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  //! Trapezoid inner product of two curves sampled on the grid.
  double inner(std::span<const double> f, std::span<const double> g) const;
  double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;

  bool operator==(const TimeGrid& other) const noexcept { return points_.size() == other.points_.size(); }

private:
  std::vector<double> points_;
  Eigen::VectorXd weights_;
  double spacing_;
};

//! Linear interpolation of (xs, ys) at x; constant extrapolation outside.
//! xs must be sorted ascending.
double interpolate_linear(std::span<const double> xs, std::span<const double> ys, double x);

struct SiteGeometry
{
  //! max_j min_{i != j} |s_i - s_j|: largest nearest-neighbor distance.
  double delta_n = 0.0;
  //! min_j max_{i != j} |s_i - s_j|: smallest farthest-neighbor distance.
  double Delta_n = 0.0;
  Eigen::MatrixXd distances;
  double diameter = 0.0;
};

SiteGeometry site_geometry(std::span<const Site> sites);
SiteGeometry site_geometry(const SpatialFunctionalDataset& dataset);

struct TrimSpec
{
  double alpha = 0.05;
};

struct Interval
{
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double y) const noexcept { return y >= lower && y <= upper; }
};

//! Empirical quantile with linear interpolation between order statistics
//! (position (n-1) q, zero based).
double empirical_quantile(std::span<const double> values, double q);

//! [y_alpha, y_{1-alpha}]. Requires at least 2 responses and alpha in [0, 0.5).
Interval trim_interval(std::span<const double> responses, TrimSpec trim);

//! "%.17g" formatting used by every CSV writer.
std::string format_double(double v);

} // namespace sfsir
