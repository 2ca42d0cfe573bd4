#pragma once

#include "sfsir/covariance.hpp"
#include "sfsir/data.hpp"
#include "sfsir/kernels.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace sfsir {

//! m(t, y) = E[X(t) | Y = y] on grid times x response abscissae.
struct InverseRegressionSurface
{
  TimeGrid grid{ 2 };
  std::vector<double> y_values;
  Eigen::MatrixXd values; // grid.size() x y_values.size()
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
  double h_t = 0.0;
  double h_y = 0.0;
};

//! 2-d local linear smoother of the pooled Z_ij over (T_ij, Y_i) with
//! observation weights w_i and product kernel bandwidths (h_t, h_y).
//! y_points defaults to the observed responses, in subject order.
//! Throws ComputationError when every cell of some column is missing.
InverseRegressionSurface estimate_m(const SpatialFunctionalDataset& dataset,
                                    const WeightScheme& scheme,
                                    double h_t,
                                    double h_y,
                                    const TimeGrid& grid,
                                    std::optional<std::vector<double>> y_points = std::nullopt,
                                    KernelSpec kernel = {});

//! Trimmed empirical covariance of m(., Y_i) across subjects:
//!   n^-1 sum_i m(t1,Y_i) m(t2,Y_i) 1{Y_i in B} - [n^-1 sum_i m(t1,Y_i) 1][n^-1 sum_j m(t2,Y_j) 1]
//! with B = [y_alpha, y_{1-alpha}] and n the full subject count. Column i of
//! the surface must hold m(., responses[i]).
CovarianceSurface estimate_re(const InverseRegressionSurface& m_surface,
                              std::span<const double> responses,
                              TrimSpec trim);

} // namespace sfsir
