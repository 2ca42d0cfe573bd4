#pragma once

#include "sfsir/kernels.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sfsir {

using Point = std::array<double, 3>;

enum class FitStatus
{
  Linear,        // full local linear fit on the requested window
  LocalConstant, // fewer than d+1 weighted points: Nadaraya-Watson fallback
  Missing        // no weighted point even after widening
};

struct LocalLinearFit
{
  double intercept = 0.0;
  std::array<double, 3> slopes{ 0.0, 0.0, 0.0 };
  std::size_t effective_points = 0;
  FitStatus status = FitStatus::Linear;
  //! 1, 1.5, 2.25 or 3.375: factor applied to the bandwidths when the
  //! requested window was empty.
  double bandwidth_scale = 1.0;
  //! Anything other than a linear fit on the requested window.
  bool degenerate = false;
};

//! Pooled weighted data for a d-dimensional local linear smoother (d = 1..3).
struct SmootherData
{
  int dims = 1;
  std::array<std::vector<double>, 3> covariates;
  std::vector<double> targets;
  std::vector<double> weights;

  std::size_t size() const noexcept { return targets.size(); }
  void reserve(std::size_t n);
  void push(std::span<const double> x, double y, double w);
};

//! A single local linear problem: data, kernel, bandwidths and evaluation point.
struct LocalLinearProblem
{
  SmootherData data;
  KernelSpec kernel;
  std::array<double, 3> bandwidths{ 1.0, 1.0, 1.0 };
  Point eval_point{ 0.0, 0.0, 0.0 };
};

//! Kernel-weighted local linear regression over a fixed data set.
//!
//! At an evaluation point c the fit minimizes
//!   sum_i w_i prod_k K_{h_k}(x_ik - c_k) (y_i - a_0 - sum_k a_k (x_ik - c_k))^2
//! and returns a_0 as the estimate. The design is centered at c and scaled by
//! the bandwidths before solving; the normal equations are solved through a
//! symmetric eigendecomposition, discarding eigenvalues below 1e-10 of the
//! largest (minimum-norm solution for rank-deficient designs).
//!
//! Fallbacks: fewer than d+1 weighted points gives the local constant fit;
//! an empty window widens all bandwidths by 1.5 up to three times, after which
//! the fit is Missing with a NaN intercept.
class LocalLinearSmoother
{
public:
  LocalLinearSmoother(SmootherData data, KernelSpec kernel = {});

  int dims() const noexcept { return data_.dims; }
  std::size_t size() const noexcept { return data_.size(); }

  LocalLinearFit fit(const Point& at, const std::array<double, 3>& bandwidths) const;

  //! Independent fits at every point, in parallel; output order matches input.
  std::vector<LocalLinearFit> fit_many(std::span<const Point> points, const std::array<double, 3>& bandwidths) const;

private:
  LocalLinearFit fit_window(const Point& at, const std::array<double, 3>& bandwidths, double scale) const;

  SmootherData data_; // sorted by the first covariate, zero weights pruned
  KernelSpec kernel_;
};

LocalLinearFit local_linear_fit(const LocalLinearProblem& problem);

struct GridSmooth
{
  std::vector<double> values;
  std::vector<LocalLinearFit> fits;
  std::size_t degenerate_count = 0;
};

GridSmooth smooth_on_grid(const LocalLinearSmoother& smoother,
                          std::span<const Point> grid,
                          const std::array<double, 3>& bandwidths);

} // namespace sfsir
