#include "sfsir/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace sfsir::simd {

namespace {

bool cpu_has_avx2() noexcept
{
#if defined(SFSIR_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level initial_level() noexcept
{
  if (const char* env = std::getenv("SFSIR_SIMD")) {
    if (std::string_view(env) == "scalar")
      return Level::Scalar;
  }
  return detect_level();
}

std::atomic<Level>& current() noexcept
{
  static std::atomic<Level> level{ initial_level() };
  return level;
}

} // namespace

Level detect_level() noexcept
{
  static const bool avx2 = cpu_has_avx2();
  return avx2 ? Level::Avx2 : Level::Scalar;
}

bool level_supported(Level level) noexcept
{
  return level == Level::Scalar || detect_level() == Level::Avx2;
}

Level active_level() noexcept
{
  return current().load(std::memory_order_relaxed);
}

Level set_level(Level level) noexcept
{
  const Level chosen = level_supported(level) ? level : Level::Scalar;
  current().store(chosen, std::memory_order_relaxed);
  return chosen;
}

void accumulate(const MomentBlock& block, const MomentQuery& query, MomentSums& sums) noexcept
{
#if defined(SFSIR_BUILD_AVX2)
  if (active_level() == Level::Avx2) {
    accumulate_avx2(block, query, sums);
    return;
  }
#endif
  accumulate_scalar(block, query, sums);
}

std::string_view to_string(Level level) noexcept
{
  return level == Level::Avx2 ? "avx2" : "scalar";
}

} // namespace sfsir::simd
