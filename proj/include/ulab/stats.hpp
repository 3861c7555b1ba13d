#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "ulab/error.hpp"

namespace ulab {

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // NaN when n < 2
  std::size_t n = 0;
};

// Two-sided Student-t interval with n - 1 degrees of freedom.
inline MeanCi mean_ci(std::span<const double> xs, double level = 0.95) {
  if (xs.empty()) throw ValidationError("mean_ci needs at least one value");
  MeanCi r;
  r.n = xs.size();
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(r.n);
  if (r.n < 2) {
    r.half_width = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  r.half_width = t * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

}  // namespace ulab
