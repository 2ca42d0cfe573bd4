#pragma once

#include <cstddef>
#include <stdexcept>

namespace sfsir {

//! Composite Simpson rule on [a, b] with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels = 10000)
{
  if (panels == 0 || panels % 2 != 0)
    throw std::invalid_argument("simpson: panel count must be positive and even");
  const double h = (b - a) / static_cast<double>(panels);
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i < panels; ++i) {
    const double v = f(a + h * static_cast<double>(i));
    if (i % 2 == 1)
      odd += v;
    else
      even += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

} // namespace sfsir
