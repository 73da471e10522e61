#pragma once

namespace adaudit::stats {

/// Regularized incomplete beta I_x(a, b), continued fraction (modified
/// Lentz). Relative accuracy around 1e-14 for moderate a, b.
double incomplete_beta(double a, double b, double x);

/// Regularized upper incomplete gamma Q(a, x).
double incomplete_gamma_q(double a, double x);

double normal_cdf(double z);

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom
/// (df may be fractional).
double student_t_sf(double t, double df);

/// P(|T| > |t|).
double student_t_two_sided(double t, double df);

/// Upper tail of the F distribution.
double f_sf(double f, double df1, double df2);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);

}  // namespace adaudit::stats
