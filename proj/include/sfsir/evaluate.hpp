#pragma once

#include "sfsir/covariance.hpp"
#include "sfsir/data.hpp"
#include "sfsir/edr.hpp"
#include "sfsir/inverse_regression.hpp"
#include "sfsir/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sfsir {

// ---------------------------------------------------------------------------
// Cross-validation

enum class CvTarget
{
  Mean,  // h_mu
  Gamma, // h_c
  M      // (h_t, h_y) jointly
};

std::string_view to_string(CvTarget target) noexcept;
CvTarget parse_cv_target(std::string_view name);

//! Default candidates: six log-spaced multiples of the pilot in [lower, upper].
struct CandidateSpan
{
  double lower = 0.5;
  double upper = 4.0;
};

struct CvPlan
{
  std::size_t folds = 3;
  //! Empty: default candidates around a normal-reference pilot.
  std::vector<BandwidthSet> candidates;
  std::uint64_t seed = 0;
  CandidateSpan span;
};

struct CvResult
{
  BandwidthSet selected;
  std::size_t selected_index = 0;
  std::vector<BandwidthSet> candidates;
  //! Pooled held-out squared error per candidate; +inf when some fold could
  //! not be predicted.
  std::vector<double> scores;
};

//! Subject-level K-fold assignment: a seeded shuffle, then position mod folds.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

//! range(values) m^{-1/(d+4)}; m defaults to values.size().
double pilot_bandwidth(std::span<const double> values, std::size_t dims, std::size_t m = 0);

//! Six log-spaced values over [span.lower, span.upper] times the pilot.
std::vector<double> candidate_values(double pilot, CandidateSpan span = {});

//! Candidates for a target; the other bandwidths are copied from base.
std::vector<BandwidthSet> default_candidates(const SpatialFunctionalDataset& dataset,
                                             CvTarget target,
                                             const BandwidthSet& base,
                                             CandidateSpan span = {});

//! Held-out prediction SSE for each candidate; argmin with ties going to the
//! smaller bandwidth product. Gamma centers with each training fold's mean at
//! the candidate's h_mu. Throws ComputationError listing the candidates when
//! none can predict every fold.
CvResult cross_validate(const SpatialFunctionalDataset& dataset,
                        const CvPlan& plan,
                        CvTarget target,
                        const WeightScheme& scheme,
                        const BandwidthSet& base = {},
                        KernelSpec kernel = {});

//! min(1, c_b) (n - 1)^{-1/2} diameter.
double spatial_bandwidth_rule(std::size_t n, double diameter, double c_b);

//! h_mu, then h_c (centered at the chosen h_mu), then (h_t, h_y) by CV; b by
//! the spatial rule.
BandwidthSet select_bandwidths(const SpatialFunctionalDataset& dataset,
                               const WeightScheme& scheme,
                               std::size_t folds,
                               std::uint64_t seed,
                               double c_b,
                               KernelSpec kernel = {},
                               CandidateSpan span = {});

// ---------------------------------------------------------------------------
// Pipeline

enum class Method
{
  Sfsir, // spatial covariance R(0) whitens
  Fsir   // within-subject covariance Gamma whitens
};

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view name);

struct FitOptions
{
  WeightScheme scheme = WeightScheme::subj();
  BandwidthSet bandwidths;
  bool cross_validate = false;
  std::size_t folds = 3;
  std::uint64_t cv_seed = 0;
  CandidateSpan cv_span;
  //! b from the spatial rule with this constant (overrides bandwidths.b).
  std::optional<double> c_b;
  std::size_t K = 1;
  TruncationRule truncation;
  std::size_t grid_size = 101;
  TrimSpec trim;
  SpatialOptions spatial;
  KernelSpec kernel;
  bool sfsir = true;
  bool fsir = true;
};

struct FitResult
{
  BandwidthSet bandwidths;
  MeanCurve mean;
  CovarianceSurface gamma;
  std::optional<CovarianceSurface> r0;
  std::optional<CovarianceSurface> nugget;
  InverseRegressionSurface m;
  CovarianceSurface re;
  std::optional<EdrResult> sfsir;
  std::optional<EdrResult> fsir;
};

//! Every stage is shared between the two methods except the covariance
//! surface handed to edr_directions.
FitResult fit_model(const SpatialFunctionalDataset& dataset, const FitOptions& options);

// ---------------------------------------------------------------------------
// Metrics and study

struct StudyMetrics
{
  double isb = 0.0;
  double ivar = 0.0;
  double mise = 0.0;
  std::size_t replications = 0;
};

//! Each estimate is sign-aligned to the truth, then
//! ISB = int (mean - truth)^2, IVAR = int mean_r (est_r - mean)^2, MISE = ISB + IVAR.
//! Needs at least 2 estimates on the truth's grid.
StudyMetrics compute_metrics(const std::vector<Eigen::VectorXd>& estimates,
                             const Eigen::VectorXd& truth,
                             const TimeGrid& grid);

struct Scenario
{
  Density density = Density::Sparse;
  bool nugget = true;

  std::string name() const;
  //! Fixed stream index, so a scenario draws the same data whatever else runs.
  std::uint64_t stream() const noexcept;
};

Scenario parse_scenario(std::string_view name);

struct StudyConfig
{
  std::size_t n = 50;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
  std::vector<Scenario> scenarios{ { Density::Sparse, true } };
  std::vector<WeightScheme> schemes{ WeightScheme::subj() };
  //! Base fit settings; bandwidths are selected by CV per replication and
  //! scheme unless cross_validate is false.
  FitOptions fit;
  SimulationConfig simulation;
  bool fixed_sites = false;
};

struct ReplicationRecord
{
  std::string scenario;
  std::string scheme;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  BandwidthSet bandwidths;
  double ise_sfsir = 0.0;
  double ise_fsir = 0.0;
  double angle_sfsir = 0.0;
  double angle_fsir = 0.0;
  std::size_t L_sfsir = 0;
  std::size_t L_fsir = 0;
  Eigen::VectorXd estimate_sfsir;
  Eigen::VectorXd estimate_fsir;
};

struct StudyRow
{
  std::string scenario;
  std::string scheme;
  std::string method;
  StudyMetrics metrics;
  std::size_t failures = 0;
};

struct StudyResult
{
  TimeGrid grid{ 2 };
  Eigen::VectorXd truth;
  std::vector<StudyRow> rows;
  std::vector<ReplicationRecord> records;
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
};

//! Direction estimates are scaled to unit L2 norm before the metrics, since
//! e.d.r. directions are identified only up to scale. Replications run in
//! parallel; each draws its data from replication_seed(seed, scenario stream,
//! replication) and all schemes of a replication share that data. Per-replication failures are recorded, not
//! thrown.
StudyResult run_study(const StudyConfig& config);

void write_study_csv(const StudyResult& result, const std::filesystem::path& path);
void write_study_table(const StudyResult& result, std::ostream& out);
void write_replications_csv(const StudyResult& result, const std::filesystem::path& path);
//! Tidy `scenario,scheme,method,t,truth,mean,lower,upper`: mean curve +/- 1 SD.
void write_plot_data(const StudyResult& result, const std::filesystem::path& path);

} // namespace sfsir
