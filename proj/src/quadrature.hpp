#pragma once

// Internal quadrature helpers shared by the kernel builders.

#include <cmath>

namespace almostcomm::detail {

/// Composite Simpson rule on [a, b] with n intervals (rounded up to even).
template <class F>
double simpson(F&& f, double a, double b, int n) {
  if (n < 2) n = 2;
  if (n % 2 != 0) ++n;
  if (b <= a) return 0.0;
  const double h = (b - a) / n;
  double odd = 0.0;
  double even = 0.0;
  for (int i = 1; i < n; ++i) {
    const double v = f(a + i * h);
    if (i % 2 != 0) {
      odd += v;
    } else {
      even += v;
    }
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

}  // namespace almostcomm::detail
