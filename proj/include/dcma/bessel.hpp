#ifndef DCMA_BESSEL_HPP
#define DCMA_BESSEL_HPP

namespace dcma
{

// Cylinder functions of order nu in (1/2)Z, nu >= 0, argument x >= 0.
// Anything else throws std::domain_error.
//
//   J: power series for small x, the periodic Bessel integral (trapezoid rule,
//      spectrally accurate) for integer order, closed forms + upward
//      recurrence for half-integer order
//   I: power series up to x = 25, Hankel asymptotic expansion beyond
//   K: trapezoid rule on int_0^inf exp(-x cosh t) cosh(nu t) dt up to x = 25,
//      Hankel asymptotic expansion beyond

double bessel_j(double nu, double x);
// I_nu(x) exp(-x)
double bessel_i_scaled(double nu, double x);
// K_nu(x) exp(x)
double bessel_k_scaled(double nu, double x);

double bessel_i(double nu, double x);
double bessel_k(double nu, double x);

// J'_nu via (J_{nu-1} - J_{nu+1}) / 2, with J_{-1/2} = sqrt(2/(pi x)) cos x
double bessel_j_prime(double nu, double x);

// out[t] = J_{t/2}(x), t = 0..twice_max; integer orders share one trapezoid pass
void bessel_j_half_orders(double x, int twice_max, double *out);
// out[t] = K_{t/2}(x) e^x via upward recurrence from K_0, K_1 and K_{1/2}, K_{3/2}
void bessel_k_scaled_half_orders(double x, int twice_max, double *out);

} // namespace dcma

#endif
