#pragma once

// Tail probabilities for the t and F reference distributions, computed from
// the regularized incomplete beta function by continued fraction.

namespace pkgee::dist {

/// I_x(a, b), the regularized incomplete beta function, for a, b > 0 and
/// x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for T ~ t(df); df > 0 (non-integer allowed).
double student_t_two_sided(double t, double df);

/// P(T <= t) for T ~ t(df).
double student_t_cdf(double t, double df);

/// P(F >= f) for F ~ F(df1, df2).
double f_upper_tail(double f, double df1, double df2);

}  // namespace pkgee::dist
