#pragma once

// Weighted moment accumulation for local linear fits.
//
// For a block of observations with covariates x (up to 3 dims), targets y and
// observation weights w, and a query (center c, inverse bandwidths 1/h), the
// accumulator forms the scaled design z = (1, (x_1-c_1)/h_1, ..., (x_d-c_d)/h_d)
// and total weight omega = w * prod_k k((x_k-c_k)/h_k), and sums
//
//   xtx = sum omega z z^T   (packed upper triangle, 10 slots)
//   xty = sum omega z y     (4 slots)
//
// plus the count of observations with omega > 0. The scalar routine is the
// reference; vector variants must agree with it up to summation order.

#include "sfsir/kernels.hpp"

#include <array>
#include <cstddef>
#include <string_view>

namespace sfsir::simd {

enum class Level
{
  Scalar,
  Avx2
};

struct MomentBlock
{
  int dims = 1;
  std::array<const double*, 3> x{ nullptr, nullptr, nullptr };
  const double* y = nullptr;
  const double* w = nullptr;
  std::size_t count = 0;
};

struct MomentQuery
{
  std::array<double, 3> center{ 0.0, 0.0, 0.0 };
  std::array<double, 3> inv_h{ 1.0, 1.0, 1.0 };
  KernelFamily family = KernelFamily::Epanechnikov;
};

struct MomentSums
{
  // Row-major packed upper triangle of the 4x4 scaled design cross-product:
  // (0,0) (0,1) (0,2) (0,3) (1,1) (1,2) (1,3) (2,2) (2,3) (3,3)
  std::array<double, 10> xtx{};
  std::array<double, 4> xty{};
  std::size_t positive = 0;
};

constexpr int packed_index(int r, int c) noexcept
{
  if (r > c) {
    const int t = r;
    r = c;
    c = t;
  }
  // offset of row r in a packed 4x4 upper triangle
  constexpr int row_offset[4] = { 0, 4, 7, 9 };
  return row_offset[r] + (c - r);
}

void accumulate_scalar(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept;

#if defined(SFSIR_BUILD_AVX2)
void accumulate_avx2(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept;
#endif

//! Dispatches to the active level's routine.
void accumulate(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept;

//! Best level supported by both this build and the running CPU.
Level detect_level() noexcept;
//! Level in use. Starts at detect_level() unless SFSIR_SIMD=scalar.
Level active_level() noexcept;
//! Requests a level; clamps to what detect_level() allows. Returns the level set.
Level set_level(Level level) noexcept;
bool level_supported(Level level) noexcept;
std::string_view to_string(Level level) noexcept;

} // namespace sfsir::simd
