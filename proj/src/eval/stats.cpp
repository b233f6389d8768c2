#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "callscape/eval.hpp"

namespace callscape {

namespace {

double mean_of(std::span<const double> v) {
  double sum = 0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// Sum of squared deviations from `mean`.
double squared_deviations(std::span<const double> v, double mean) {
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss;
}

}  // namespace

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) {
    s.mean = s.stddev = s.cv = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = mean_of(values);
  s.stddev = std::sqrt(squared_deviations(values, s.mean) / static_cast<double>(s.n));
  if (s.stddev == 0)
    s.cv = 0;
  else if (s.mean == 0)
    s.cv = std::numeric_limits<double>::quiet_NaN();
  else
    s.cv = s.stddev / s.mean;
  return s;
}

StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw EvalError(EvalErrc::DegenerateSample, "each sample needs at least two values (got " +
                                                    std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  StatTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = mean_of(a);
  r.mean_b = mean_of(b);
  const double na = static_cast<double>(r.n_a), nb = static_cast<double>(r.n_b);
  const double va = squared_deviations(a, r.mean_a) / (na - 1) / na;
  const double vb = squared_deviations(b, r.mean_b) / (nb - 1) / nb;
  if (va == 0 && vb == 0) throw EvalError(EvalErrc::DegenerateSample, "both samples have zero variance");
  r.t = (r.mean_a - r.mean_b) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
  const boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  return r;
}

}  // namespace callscape
