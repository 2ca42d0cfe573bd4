#include "sfsir/kernels.hpp"
#include "sfsir/quadrature.hpp"

#include <array>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sfsir {

namespace {

constexpr int kCachedOrders = 9;

double integrate_moment(KernelSpec spec, int order)
{
  return simpson(
    [&](double u) { return std::pow(u, order) * kernel_eval(spec, u); },
    -KernelSpec::support_radius,
    KernelSpec::support_radius,
    10000);
}

using MomentTable = std::array<double, kCachedOrders>;

MomentTable build_table(KernelSpec spec)
{
  MomentTable table{};
  for (int k = 0; k < kCachedOrders; ++k)
    table[k] = integrate_moment(spec, k);
  return table;
}

const MomentTable& moment_table(KernelFamily family)
{
  static const MomentTable epanechnikov = build_table({ KernelFamily::Epanechnikov });
  static const MomentTable quartic = build_table({ KernelFamily::Quartic });
  static const MomentTable uniform = build_table({ KernelFamily::Uniform });
  switch (family) {
    case KernelFamily::Quartic:
      return quartic;
    case KernelFamily::Uniform:
      return uniform;
    case KernelFamily::Epanechnikov:
    default:
      return epanechnikov;
  }
}

} // namespace

double kernel_eval(KernelSpec spec, double u) noexcept
{
  const double u2 = u * u;
  if (!(u2 <= 1.0))
    return 0.0;
  switch (spec.family) {
    case KernelFamily::Quartic: {
      const double s = 1.0 - u2;
      return 0.9375 * s * s;
    }
    case KernelFamily::Uniform:
      return 0.5;
    case KernelFamily::Epanechnikov:
    default:
      return 0.75 * (1.0 - u2);
  }
}

double kernel_moment(KernelSpec spec, int order)
{
  if (order < 0)
    throw std::invalid_argument("kernel_moment: order must be >= 0");
  if (order < kCachedOrders)
    return moment_table(spec.family)[order];
  return integrate_moment(spec, order);
}

double scaled_kernel(KernelSpec spec, double u, double h)
{
  if (!(h > 0.0))
    throw std::invalid_argument("scaled_kernel: bandwidth must be positive, got " + std::to_string(h));
  return kernel_eval(spec, u / h) / h;
}

std::string_view to_string(KernelFamily family) noexcept
{
  switch (family) {
    case KernelFamily::Quartic:
      return "quartic";
    case KernelFamily::Uniform:
      return "uniform";
    case KernelFamily::Epanechnikov:
    default:
      return "epanechnikov";
  }
}

KernelFamily parse_kernel_family(std::string_view text)
{
  std::string name(text);
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "epanechnikov")
    return KernelFamily::Epanechnikov;
  if (name == "quartic")
    return KernelFamily::Quartic;
  if (name == "uniform")
    return KernelFamily::Uniform;
  throw std::invalid_argument("unknown kernel family '" + std::string(text) + "' (expected epanechnikov, quartic or uniform)");
}

} // namespace sfsir
