#pragma once

// Platform-independent transcendental functions.
//
// libm implementations of exp/log/sin/cos differ between vendors and versions
// in the last bit. These routines use only IEEE-754 basic operations
// (+ - * /, exact scaling by powers of two) in a fixed evaluation order, so
// they produce identical bits on every conforming platform as long as the
// translation unit is compiled without FMA contraction.
//
// All evaluation happens in double; the float overloads round the double
// result once, which keeps them within 1 ulp of the true value.

namespace detcnn::detmath {

double exp(double x);
double log(double x);  // NaN for x < 0, -inf for x == 0
double sin(double x);
double cos(double x);

float exp(float x);
float log(float x);

/// 1 / (1 + exp(-x)) using the routines above.
double sigmoid(double x);
float sigmoid(float x);

}  // namespace detcnn::detmath
