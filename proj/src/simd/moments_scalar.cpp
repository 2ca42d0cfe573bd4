#include "sfsir/simd.hpp"

namespace sfsir::simd {

namespace {

inline double kernel_of_u2(KernelFamily family, double u2) noexcept
{
  if (!(u2 <= 1.0))
    return 0.0;
  switch (family) {
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

} // namespace

void accumulate_scalar(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept
{
  const int d = block.dims;
  for (std::size_t i = 0; i < block.count; ++i) {
    std::array<double, 4> z{ 1.0, 0.0, 0.0, 0.0 };
    double omega = block.w[i];
    for (int k = 0; k < d; ++k) {
      const double u = (block.x[k][i] - query.center[k]) * query.inv_h[k];
      z[k + 1] = u;
      omega *= kernel_of_u2(query.family, u * u);
    }
    if (!(omega > 0.0))
      continue;
    ++sums.positive;
    const double y = block.y[i];
    for (int r = 0; r <= d; ++r) {
      const double wz = omega * z[r];
      sums.xty[r] += wz * y;
      for (int c = r; c <= d; ++c)
        sums.xtx[packed_index(r, c)] += wz * z[c];
    }
  }
}

} // namespace sfsir::simd
