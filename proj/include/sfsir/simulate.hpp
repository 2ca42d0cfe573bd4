#pragma once

#include "sfsir/data.hpp"

#include "json.hpp"
#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sfsir {

struct MaternParams
{
  double variance = 1.0;
  double shape = 0.5;
  double range = 1.0;
};

//! V 2^{1-v}/Gamma(v) (sqrt(2v) u/r)^v K_v(sqrt(2v) u/r); V at u = 0.
double matern_cov(double u, const MaternParams& params);

enum class Density
{
  Sparse, // N_i ~ U{3..7}
  Dense   // N_i ~ U{10..15 + floor(n/10)}
};

std::string_view to_string(Density density) noexcept;

//! Unit square with an axis-aligned rectangular hole removed.
struct SiteSampler
{
  double hole_x0 = 0.4;
  double hole_x1 = 0.6;
  double hole_y0 = 0.2;
  double hole_y1 = 0.8;

  bool in_hole(const Site& s) const noexcept
  {
    return s.x >= hole_x0 && s.x <= hole_x1 && s.y >= hole_y0 && s.y <= hole_y1;
  }
};

struct SimulationConfig
{
  std::size_t n = 50;
  Density density = Density::Sparse;
  std::array<MaternParams, 3> matern{ { { 1.0, 0.2, 1.0 }, { 1.5, 0.1, 0.5 }, { 1.0, 0.05, 1.0 } } };
  //! Variances of the two nugget scores; nullopt disables the nugget.
  std::optional<std::array<double, 2>> nugget = std::array<double, 2>{ 0.5, 1.0 };
  double noise_sd = 0.1;
  double response_noise_sd = 0.1;
  std::uint64_t seed = 1;
  SiteSampler sites;
  std::size_t grid_size = 101;
};

//! Parses and validates a JSON config. Every schema violation is collected
//! and reported in one InputError; malformed JSON reports the byte offset.
SimulationConfig parse_simulation_config(const std::string& text);
SimulationConfig load_simulation_config(const std::filesystem::path& path);
nlohmann::json to_json(const SimulationConfig& config);

// Model components.
double true_mean(double t);
double true_eigenfunction(int j, double t);  // j = 0, 1, 2
double nugget_basis(int j, double t);        // j = 0, 1
double true_beta(double t);
double true_link(double x);

std::vector<Site> sample_sites(std::size_t n, const SiteSampler& sampler, std::mt19937_64& rng);

//! One draw of a zero-mean Gaussian field with Matern covariance at the sites.
//! Cholesky with diagonal jitter escalating from 1e-10 V to 1e-6 V.
std::vector<double> sample_grf_scores(std::span<const Site> sites, const MaternParams& params, std::mt19937_64& rng);

struct SimulationTruth
{
  TimeGrid grid{ 2 };
  Eigen::VectorXd beta;
  Eigen::VectorXd mean;
  Eigen::MatrixXd r0;     // sum_j V_j pi_j(t1) pi_j(t2)
  Eigen::MatrixXd nugget; // sum_j V_nug,j pi_nug,j(t1) pi_nug,j(t2), zero if disabled
  //! Orthogonal projection of beta onto span{pi_j}: the part of beta that the
  //! covariate process can reveal.
  Eigen::VectorXd beta_projection;
  std::array<double, 3> beta_inner_pi{};
  double beta_inner_mu = 0.0;
  std::vector<std::array<double, 3>> scores; // A_j(s_i)
};

struct SimulatedData
{
  SpatialFunctionalDataset dataset;
  SimulationTruth truth;
};

//! Draws sites (unless given), scores, observation times, measurements and
//! responses from the config's seed.
SimulatedData simulate_dataset(const SimulationConfig& config,
                               std::optional<std::span<const Site>> fixed_sites = std::nullopt);

SimulationTruth make_truth(const SimulationConfig& config);

//! Independent stream seed for (base seed, scenario, replication).
std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t scenario, std::uint64_t replication) noexcept;

void write_truth_json(const SimulatedData& data, const SimulationConfig& config, const std::filesystem::path& path);

} // namespace sfsir
