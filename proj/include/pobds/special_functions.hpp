#pragma once

namespace pobds {

// Digamma function psi(x) = Gamma'(x)/Gamma(x) for x > 0. Recurrence up to
// argument >= 6, then the asymptotic series; absolute accuracy ~1e-12.
double digamma(double x);

// log(sum of exp(v_i)) with max offset; -inf input vector yields -inf.
double log_sum_exp(const double* values, int count);

}  // namespace pobds
