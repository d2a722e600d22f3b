#pragma once

namespace aroma {

// Regularized incomplete beta I_x(a, b), evaluated with the Lentz continued
// fraction to an absolute tolerance of 1e-10 via the standard symmetry split.
double reg_incomplete_beta(double a, double b, double x);

// Upper-tail probability P(F(d1, d2) > f).
double f_upper_tail(double f, double d1, double d2);

// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

// Upper quantile: smallest t with CDF(t) >= p. Bisection on the CDF.
double student_t_quantile(double p, double dof);

}  // namespace aroma
