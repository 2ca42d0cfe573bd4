#pragma once

#include "sfsir/data.hpp"
#include "sfsir/kernels.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace sfsir {

enum class WeightKind
{
  Obs,
  Subj,
  Mixed
};

//! How pooled smoothers weight subjects with different numbers of
//! observations. Mixed(theta) interpolates: theta = 1 is OBS, theta = 0 is SUBJ.
struct WeightScheme
{
  WeightKind kind = WeightKind::Subj;
  double theta = 0.5;

  static WeightScheme obs() { return { WeightKind::Obs, 1.0 }; }
  static WeightScheme subj() { return { WeightKind::Subj, 0.0 }; }
  static WeightScheme mixed(double theta);

  //! Effective OBS share: 1 for OBS, 0 for SUBJ, theta for Mixed.
  double obs_share() const noexcept;
};

std::string_view to_string(const WeightScheme& scheme);
WeightScheme parse_weight_scheme(std::string_view name, double theta = 0.5);

//! Per-subject weights for a scheme and a count profile N_1..N_n:
//!   sum_i w_i N_i = 1, sum_i v_i N_i (N_i - 1) = 1,
//!   sum_i sum_{i' != i} v_{i,i'} N_i N_i' = 1.
class SchemeWeights
{
public:
  SchemeWeights(const WeightScheme& scheme, std::span<const std::size_t> counts);

  //! w_i, attached to each observation of subject i.
  const std::vector<double>& obs() const noexcept { return obs_; }
  //! v_i, attached to each within-subject cross-product of subject i.
  //! Throws if some N_i < 2.
  const std::vector<double>& within() const;
  //! v_{i,i'} for i != i'.
  double pair(std::size_t i, std::size_t i2) const;

private:
  double theta_;
  std::vector<std::size_t> counts_;
  std::vector<double> obs_;
  std::vector<double> within_;
  bool within_valid_ = true;
  double cross_total_ = 0.0; // sum_i sum_{i' != i} N_i N_i'
};

SchemeWeights weights_for(const WeightScheme& scheme, std::span<const std::size_t> counts);

//! Rate terms d_n1 (OBS) and d_n2 (SUBJ) for the cross-subject covariance
//! estimator at bandwidth h_c, and the mixing weight minimizing
//! theta^2 d_n1 + (1 - theta)^2 d_n2.
struct MixingRates
{
  double d_n1 = 0.0;
  double d_n2 = 0.0;
  double theta_star = 0.0;
};

double optimal_theta(double d_n1, double d_n2);
MixingRates mixing_rates(std::span<const std::size_t> counts, double h_c);

struct BandwidthSet
{
  double h_mu = 0.1;
  double h_c = 0.1;
  double b = 0.2;
  double h_t = 0.1;
  double h_y = 0.5;
};

//! Throws std::invalid_argument unless every bandwidth is positive.
void validate(const BandwidthSet& bandwidths);

struct MeanCurve
{
  TimeGrid grid{ 2 };
  std::vector<double> values;
  std::vector<bool> degenerate;
  double bandwidth = 0.0;

  //! Linear interpolation between grid values, skipping missing (NaN) points.
  double at(double t) const;
};

enum class SurfaceKind
{
  Gamma,
  RSpatial,
  Nugget,
  ConditionalRe
};

std::string_view to_string(SurfaceKind kind) noexcept;

struct CovarianceSurface
{
  TimeGrid grid{ 2 };
  Eigen::MatrixXd values;
  double spatial_lag = 0.0;
  SurfaceKind kind = SurfaceKind::Gamma;
  //! (h_c, b) for Gamma/RSpatial; (h_t, h_y) for ConditionalRe.
  std::array<double, 2> bandwidths{ 0.0, 0.0 };
  std::size_t degenerate_count = 0;
};

//! Pooled 1-d local linear smoother of (T_ij, Z_ij) with observation weights w_i.
MeanCurve estimate_mean(const SpatialFunctionalDataset& dataset,
                        const WeightScheme& scheme,
                        double h_mu,
                        const TimeGrid& grid,
                        KernelSpec kernel = {});

//! 2-d local linear smoother of within-subject products C_ijk, j != k, with
//! weights v_i; symmetrized.
CovarianceSurface estimate_gamma(const SpatialFunctionalDataset& dataset,
                                 const MeanCurve& mean,
                                 const WeightScheme& scheme,
                                 double h_c,
                                 const TimeGrid& grid,
                                 KernelSpec kernel = {});

struct SpatialOptions
{
  //! Pair (i, i') is used only if i' is among the ceil(fraction (n-1))
  //! nearest sites of i, or i among those of i'.
  double neighbor_fraction = 0.2;
  //! Equal-width time bins per subject applied to centered residuals before
  //! forming products; 0 disables binning.
  std::size_t bins = 0;
};

//! 3-d local linear smoother of cross-subject products C_{ij,i'j'}, i != i',
//! over (T_ij, T_i'j', |s_i - s_i'|) at (t1, t2, spatial_lag) with weights
//! v_{i,i'}; symmetrized in (t1, t2).
CovarianceSurface estimate_r_spatial(const SpatialFunctionalDataset& dataset,
                                     const MeanCurve& mean,
                                     const WeightScheme& scheme,
                                     double h_c,
                                     double b,
                                     double spatial_lag,
                                     const TimeGrid& grid,
                                     const SpatialOptions& options = {},
                                     KernelSpec kernel = {});

//! Number of ordered subject pairs with positive spatial kernel weight at the
//! lag under the neighbor restriction.
std::size_t count_spatial_pairs(const SpatialFunctionalDataset& dataset,
                                double b,
                                double spatial_lag,
                                double neighbor_fraction,
                                KernelSpec kernel = {});

//! Lambda = Gamma - R(0), entrywise.
CovarianceSurface estimate_nugget(const CovarianceSurface& gamma, const CovarianceSurface& r0);

//! Replaces A by (A + A^T) / 2, using the finite entry when one side is NaN.
void symmetrize(Eigen::MatrixXd& values);

void write_mean_csv(const MeanCurve& mean, const std::filesystem::path& path);
//! `t1,t2,value`, row-major over the grid.
void write_surface_csv(const CovarianceSurface& surface, const std::filesystem::path& path);
CovarianceSurface read_surface_csv(const std::filesystem::path& path, SurfaceKind kind);

} // namespace sfsir
