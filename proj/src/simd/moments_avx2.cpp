// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "sfsir/simd.hpp"

#include <immintrin.h>

namespace sfsir::simd {

namespace {

template <KernelFamily Family>
inline __m256d kernel_of_u2(__m256d u2) noexcept
{
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d inside = _mm256_cmp_pd(u2, one, _CMP_LE_OQ);
  __m256d k;
  if constexpr (Family == KernelFamily::Quartic) {
    const __m256d s = _mm256_sub_pd(one, u2);
    k = _mm256_mul_pd(_mm256_set1_pd(0.9375), _mm256_mul_pd(s, s));
  } else if constexpr (Family == KernelFamily::Uniform) {
    k = _mm256_set1_pd(0.5);
  } else {
    k = _mm256_mul_pd(_mm256_set1_pd(0.75), _mm256_sub_pd(one, u2));
  }
  return _mm256_and_pd(k, inside);
}

inline double hsum(__m256d v) noexcept
{
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

template <int D, KernelFamily Family>
void accumulate_impl(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept
{
  constexpr int P = D + 1;
  __m256d acc_xtx[10];
  __m256d acc_xty[4];
  for (auto& a : acc_xtx)
    a = _mm256_setzero_pd();
  for (auto& a : acc_xty)
    a = _mm256_setzero_pd();

  __m256d center[3], inv_h[3];
  for (int k = 0; k < 3; ++k) {
    center[k] = _mm256_set1_pd(query.center[k]);
    inv_h[k] = _mm256_set1_pd(query.inv_h[k]);
  }
  const __m256d zero = _mm256_setzero_pd();

  std::size_t positive = 0;
  const std::size_t n = block.count;
  const std::size_t vec_end = n - n % 4;
  for (std::size_t i = 0; i < vec_end; i += 4) {
    __m256d z[4];
    z[0] = _mm256_set1_pd(1.0);
    __m256d omega = _mm256_loadu_pd(block.w + i);
    for (int k = 0; k < D; ++k) {
      const __m256d u = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(block.x[k] + i), center[k]), inv_h[k]);
      z[k + 1] = u;
      omega = _mm256_mul_pd(omega, kernel_of_u2<Family>(_mm256_mul_pd(u, u)));
    }
    const __m256d live = _mm256_cmp_pd(omega, zero, _CMP_GT_OQ);
    const int mask = _mm256_movemask_pd(live);
    if (mask == 0)
      continue;
    positive += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
    // lanes with omega <= 0 (or NaN) contribute nothing
    omega = _mm256_and_pd(omega, live);
    const __m256d y = _mm256_loadu_pd(block.y + i);
    for (int r = 0; r < P; ++r) {
      const __m256d wz = _mm256_mul_pd(omega, z[r]);
      acc_xty[r] = _mm256_fmadd_pd(wz, y, acc_xty[r]);
      for (int c = r; c < P; ++c)
        acc_xtx[packed_index(r, c)] = _mm256_fmadd_pd(wz, z[c], acc_xtx[packed_index(r, c)]);
    }
  }

  for (int r = 0; r < P; ++r) {
    sums.xty[r] += hsum(acc_xty[r]);
    for (int c = r; c < P; ++c)
      sums.xtx[packed_index(r, c)] += hsum(acc_xtx[packed_index(r, c)]);
  }
  sums.positive += positive;

  if (vec_end < n) {
    MomentBlock tail = block;
    for (int k = 0; k < D; ++k)
      tail.x[k] = block.x[k] + vec_end;
    tail.y = block.y + vec_end;
    tail.w = block.w + vec_end;
    tail.count = n - vec_end;
    accumulate_scalar(tail, query, sums);
  }
}

template <int D>
void accumulate_dims(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept
{
  switch (query.family) {
    case KernelFamily::Quartic:
      accumulate_impl<D, KernelFamily::Quartic>(block, query, sums);
      break;
    case KernelFamily::Uniform:
      accumulate_impl<D, KernelFamily::Uniform>(block, query, sums);
      break;
    case KernelFamily::Epanechnikov:
    default:
      accumulate_impl<D, KernelFamily::Epanechnikov>(block, query, sums);
      break;
  }
}

} // namespace

void accumulate_avx2(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept
{
  switch (block.dims) {
    case 1:
      accumulate_dims<1>(block, query, sums);
      break;
    case 2:
      accumulate_dims<2>(block, query, sums);
      break;
    case 3:
      accumulate_dims<3>(block, query, sums);
      break;
    default:
      accumulate_scalar(block, query, sums);
      break;
  }
}

} // namespace sfsir::simd
