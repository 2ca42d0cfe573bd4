#pragma once

#include "sfsir/covariance.hpp"
#include "sfsir/data.hpp"
#include "sfsir/kernels.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace sfsir {

//! Spectral decomposition of an integral operator sampled on a grid.
//! Eigenvectors are orthonormal under the grid's trapezoid inner product and
//! eigenvalues approximate those of the operator on L2[0, 1].
struct EigenDecomposition
{
  TimeGrid grid{ 2 };
  std::vector<double> eigenvalues; // descending
  Eigen::MatrixXd eigenvectors;    // column i pairs with eigenvalues[i]
  SurfaceKind source = SurfaceKind::Gamma;
};

EigenDecomposition eigendecompose_surface(const CovarianceSurface& surface);

struct TruncationRule
{
  enum class Kind
  {
    Fixed,
    FractionOfVariance
  };
  Kind kind = Kind::FractionOfVariance;
  std::size_t fixed_L = 0;
  double fve_threshold = 0.95;

  static TruncationRule fixed(std::size_t L) { return { Kind::Fixed, L, 0.95 }; }
  static TruncationRule fve(double threshold) { return { Kind::FractionOfVariance, 0, threshold }; }
};

//! Truncation order for a descending spectrum. Nonpositive eigenvalues (and
//! those below 1e-12 of the largest) are never selected. Throws
//! ComputationError when the rule selects nothing.
std::size_t select_truncation(const std::vector<double>& eigenvalues, const TruncationRule& rule);

//! sum_{i <= L} xi_i^{-1/2} pi_i(s) pi_i(t): the rank-L inverse square root.
struct TruncatedInverseSqrt
{
  TimeGrid grid{ 2 };
  std::size_t L = 0;
  std::vector<double> eigenvalues; // the L retained xi_i
  Eigen::MatrixXd basis;           // p x L, retained pi_i
  Eigen::MatrixXd kernel;          // p x p

  //! (R_L^{-1/2} f)(s) = int kernel(s, t) f(t) dt by trapezoid quadrature.
  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  //! Kernel of the rank-L reconstruction sum_{i <= L} xi_i pi_i pi_i^T.
  Eigen::MatrixXd reconstruction() const;
};

TruncatedInverseSqrt truncated_inv_sqrt(const EigenDecomposition& decomposition, const TruncationRule& rule);

struct EdrResult
{
  TimeGrid grid{ 2 };
  std::size_t K = 0;
  std::size_t L = 0;
  std::vector<double> eigenvalues;      // lambda_1 >= ... >= lambda_K
  Eigen::MatrixXd directions;           // p x K, beta_j
  Eigen::MatrixXd standardized;         // p x K, eta_j
  std::vector<double> covariance_eigenvalues; // retained xi_1..xi_L
  //! lambda_1 < 1e-12: the conditional covariance carries no signal.
  bool degenerate = false;
  std::string warning;
};

//! e.d.r. directions from the eigen-analysis of R_L^{-1/2} R_e R_L^{-1/2}.
//!
//! The operator is formed in the coordinates of the L retained eigenfunctions
//! of R (where its range lies), symmetrized, and decomposed; beta_j =
//! R_L^{-1/2} eta_j then satisfies <beta_j, R_L beta_k> = delta_jk. Negative
//! eigenvalues of R_e are clipped to zero first. Signs follow
//! sum_k beta_j(t_k) >= 0.
EdrResult edr_directions(const CovarianceSurface& covariance,
                         const CovarianceSurface& re,
                         std::size_t K,
                         const TruncationRule& rule);

//! estimate or -estimate, whichever has nonnegative inner product with
//! reference. Ties keep the estimate.
Eigen::VectorXd align_sign(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference, const TimeGrid& grid);

//! Unsigned angle in degrees between two curves, in [0, 90].
double angle_degrees(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const TimeGrid& grid);

//! Scales a curve to unit L2 norm.
Eigen::VectorXd normalize_l2(const Eigen::VectorXd& f, const TimeGrid& grid);

struct LinkEstimate
{
  std::vector<double> indices;     // <beta, Z_i - mu> per subject
  std::vector<double> eval_points;
  std::vector<double> values;
  std::vector<bool> degenerate;
};

//! Index of each subject: trapezoid inner product of the direction with the
//! subject's centered observations, linearly interpolated onto the grid
//! (constant beyond the first and last observation).
std::vector<double> subject_indices(const SpatialFunctionalDataset& dataset,
                                    const MeanCurve& mean,
                                    const Eigen::VectorXd& direction);

//! Single-index link: 1-d local linear smooth of Y_i on the indices.
LinkEstimate estimate_link(const SpatialFunctionalDataset& dataset,
                           const MeanCurve& mean,
                           const Eigen::VectorXd& direction,
                           double h,
                           const std::vector<double>& eval_points,
                           KernelSpec kernel = {});

//! `t,beta_1,...,beta_K`.
void write_directions_csv(const EdrResult& result, const std::filesystem::path& path);

} // namespace sfsir
