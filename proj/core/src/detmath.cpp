#include "detcnn/detmath.hpp"

#include <cmath>
#include <limits>

namespace detcnn::detmath {

namespace {

// ln 2 split so that k * kLn2Hi is exact for |k| < 2^11.
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kInvLn2 = 1.44269504088896338700e+00;

// pi/2 split the same way (33 significant bits in the high part).
constexpr double kPio2Hi = 1.57079632673412561417e+00;
constexpr double kPio2Lo = 6.07710050650619224932e-11;
constexpr double kInvPio2 = 6.36619772367581382433e-01;

constexpr double kSqrtHalf = 0.70710678118654752440;

// exp(r) for |r| <= ln2/2, Taylor through r^13 (truncation < 1e-18).
double exp_kernel(double r) {
  constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
                          1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
                          1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         1.0 / 2.0,
                          1.0,                1.0};
  double p = c[0];
  for (int i = 1; i < 14; ++i) p = p * r + c[i];
  return p;
}

// sin/cos on |r| <= pi/4.
double sin_kernel(double r) {
  const double r2 = r * r;
  double q = 1.0 / 1307674368000.0;  // 1/15!
  q = 1.0 / 6227020800.0 - r2 * q;
  q = 1.0 / 39916800.0 - r2 * q;
  q = 1.0 / 362880.0 - r2 * q;
  q = 1.0 / 5040.0 - r2 * q;
  q = 1.0 / 120.0 - r2 * q;
  q = 1.0 / 6.0 - r2 * q;
  return r - r * (r2 * q);
}

double cos_kernel(double r) {
  const double r2 = r * r;
  double q = 1.0 / 87178291200.0;  // 1/14!
  q = 1.0 / 479001600.0 - r2 * q;
  q = 1.0 / 3628800.0 - r2 * q;
  q = 1.0 / 40320.0 - r2 * q;
  q = 1.0 / 720.0 - r2 * q;
  q = 1.0 / 24.0 - r2 * q;
  q = 0.5 - r2 * q;
  return 1.0 - r2 * q;
}

// x = k * pi/2 + r, |r| <= ~pi/4. Adequate for |x| up to ~1e6, far beyond
// the rotation angles the engine uses.
double reduce_pio2(double x, long long& k) {
  const double kd = std::nearbyint(x * kInvPio2);
  k = static_cast<long long>(kd);
  return (x - kd * kPio2Hi) - kd * kPio2Lo;
}

}  // namespace

double exp(double x) {
  if (std::isnan(x)) return x;
  if (x > 709.782712893384) return std::numeric_limits<double>::infinity();
  if (x < -745.1332191019412) return 0.0;
  const double kd = std::floor(x * kInvLn2 + 0.5);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  return std::ldexp(exp_kernel(r), static_cast<int>(kd));
}

double log(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return x;
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  if (m < kSqrtHalf) {
    m = m * 2.0;
    e -= 1;
  }
  // log(m) = 2 atanh(s), s = (m-1)/(m+1), |s| < 0.1716
  const double s = (m - 1.0) / (m + 1.0);
  const double s2 = s * s;
  double p = 1.0 / 23.0;
  for (int n = 21; n >= 1; n -= 2) p = p * s2 + 1.0 / n;
  const double log_m = 2.0 * s * p;
  const double ed = static_cast<double>(e);
  return ed * kLn2Hi + (ed * kLn2Lo + log_m);
}

double sin(double x) {
  if (!std::isfinite(x)) return std::numeric_limits<double>::quiet_NaN();
  long long k = 0;
  const double r = reduce_pio2(x, k);
  switch (static_cast<int>(k & 3)) {
    case 0: return sin_kernel(r);
    case 1: return cos_kernel(r);
    case 2: return -sin_kernel(r);
    default: return -cos_kernel(r);
  }
}

double cos(double x) {
  if (!std::isfinite(x)) return std::numeric_limits<double>::quiet_NaN();
  long long k = 0;
  const double r = reduce_pio2(x, k);
  switch (static_cast<int>(k & 3)) {
    case 0: return cos_kernel(r);
    case 1: return -sin_kernel(r);
    case 2: return -cos_kernel(r);
    default: return sin_kernel(r);
  }
}

float exp(float x) { return static_cast<float>(exp(static_cast<double>(x))); }
float log(float x) { return static_cast<float>(log(static_cast<double>(x))); }

double sigmoid(double x) { return 1.0 / (1.0 + exp(-x)); }
float sigmoid(float x) { return static_cast<float>(sigmoid(static_cast<double>(x))); }

}  // namespace detcnn::detmath
