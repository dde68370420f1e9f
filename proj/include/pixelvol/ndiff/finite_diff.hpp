#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pixelvol/ndiff/array.hpp"

namespace pixelvol::ndiff {

// Central finite differences: the independent oracle that every backward rule
// in the project is checked against. Kept free of any Tape machinery.

template <class F>
double central_diff(F&& f, double x0, double h) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// Relative error with an absolute floor so near-zero pairs compare cleanly.
inline double relative_error(double a, double b, double floor = 1e-9) {
  double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

// Numeric gradient of a scalar functional of one array, element by element.
template <typename T, class F>
std::vector<double> numeric_gradient(F&& f, const Array<T>& x, double h = 1e-5) {
  std::vector<T> base = x.to_vector();
  std::vector<double> grad(base.size());
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<T> hi = base, lo = base;
    hi[i] = T(double(base[i]) + h);
    lo[i] = T(double(base[i]) - h);
    double fhi = f(Array<T>(x.shape(), hi));
    double flo = f(Array<T>(x.shape(), lo));
    grad[i] = (fhi - flo) / (2.0 * h);
  }
  return grad;
}

// Worst relative error between an analytic gradient and its numeric estimate.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  return worst;
}

}  // namespace pixelvol::ndiff
