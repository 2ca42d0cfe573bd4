#pragma once

#include <string>
#include <string_view>

namespace sfsir {

enum class KernelFamily
{
  Epanechnikov,
  Quartic,
  Uniform
};

//! Compactly supported, symmetric univariate kernel on [-1, 1].
//! Multivariate smoothers use the product of this kernel over dimensions.
struct KernelSpec
{
  KernelFamily family = KernelFamily::Epanechnikov;
  static constexpr double support_radius = 1.0;
};

//! k(u); zero outside [-1, 1].
double kernel_eval(KernelSpec spec, double u) noexcept;

//! int u^order k(u) du, by composite Simpson quadrature (10^4 panels).
//! Orders up to 8 are computed once per family and cached.
double kernel_moment(KernelSpec spec, int order);

//! h^-1 k(u / h). Throws std::invalid_argument for h <= 0.
double scaled_kernel(KernelSpec spec, double u, double h);

std::string_view to_string(KernelFamily family) noexcept;
KernelFamily parse_kernel_family(std::string_view name);

} // namespace sfsir
