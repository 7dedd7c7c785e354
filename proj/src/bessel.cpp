#include <dcma/bessel.hpp>

#include <cmath>
#include <complex>
#include <vector>
#include <stdexcept>

namespace dcma
{

namespace
{

constexpr double pi = 3.14159265358979323846264338327950288;

// returns 2 nu, checking nu in (1/2)Z and x >= 0
int twice_order(double nu, double x)
{
    const double t = 2.0 * nu;
    if (!(nu >= 0.0) || t != std::floor(t) || t > 4000.0) {
        throw std::domain_error("bessel: order must be a nonnegative multiple of 1/2");
    }
    if (!(x >= 0.0) || !std::isfinite(x)) {
        throw std::domain_error("bessel: argument must be finite and >= 0");
    }
    return static_cast<int>(t);
}

double j_series(double nu, double x)
{
    const double q = -0.25 * x * x;
    double term = std::pow(0.5 * x, nu) / std::tgamma(nu + 1.0);
    double sum = term;
    for (int k = 1; k < 500; ++k) {
        term *= q / (k * (k + nu));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) {
            break;
        }
    }
    return sum;
}

// J_n(x) = (1/2pi) int_0^{2pi} cos(n t - x sin t) dt; the aliasing error of
// the M-point rule is of size J_{M-n}(x)
double j_integer_trapezoid(int n, double x)
{
    int M = static_cast<int>(1.1 * (x + n)) + 48;
    M += M % 2;
    double sum = 0.0;
    for (int j = 0; j < M; ++j) {
        const double t = 2.0 * pi * j / M;
        sum += std::cos(n * t - x * std::sin(t));
    }
    return sum / M;
}

double j_half_integer(int twice_nu, double x)
{
    // J_{1/2}, J_{3/2} closed forms, upward recurrence J_{v+1} = (2v/x) J_v - J_{v-1}
    const double c = std::sqrt(2.0 / (pi * x));
    double jm = c * std::sin(x);
    if (twice_nu == 1) {
        return jm;
    }
    double j = c * (std::sin(x) / x - std::cos(x));
    for (int t = 3; t < twice_nu; t += 2) {
        const double v = 0.5 * t;
        const double jn = (2.0 * v / x) * j - jm;
        jm = j;
        j = jn;
    }
    return j;
}

// sum_k a_k(nu) s^k / x^k with a_k = prod_{j<=k} (4nu^2 - (2j-1)^2) / (k! 8^k);
// s = -1 for I, +1 for K
double hankel_series(double nu, double x, double s)
{
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0, prev = 1.0;
    for (int k = 1; k < 200; ++k) {
        term *= s * (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
        if (term == 0.0) {
            break;
        }
        if (std::abs(term) > std::abs(prev)) {
            break; // asymptotic series started to diverge
        }
        sum += term;
        prev = term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) {
            break;
        }
    }
    return sum;
}

} // namespace

double bessel_j(double nu, double x)
{
    const int t = twice_order(nu, x);
    if (x == 0.0) {
        return t == 0 ? 1.0 : 0.0;
    }
    if (x < 2.0 || x < 0.5 * nu) {
        return j_series(nu, x);
    }
    if (t % 2 == 0) {
        return j_integer_trapezoid(t / 2, x);
    }
    if (x < nu) {
        return j_series(nu, x);
    }
    return j_half_integer(t, x);
}

double bessel_j_prime(double nu, double x)
{
    twice_order(nu, x);
    if (nu == 0.0) {
        return -bessel_j(1.0, x);
    }
    if (nu == 0.5) {
        if (x == 0.0) {
            throw std::domain_error("bessel_j_prime: J_{1/2}' is singular at 0");
        }
        const double jm = std::sqrt(2.0 / (pi * x)) * std::cos(x);
        return 0.5 * (jm - bessel_j(1.5, x));
    }
    return 0.5 * (bessel_j(nu - 1.0, x) - bessel_j(nu + 1.0, x));
}

double bessel_i_scaled(double nu, double x)
{
    twice_order(nu, x);
    if (x == 0.0) {
        return nu == 0.0 ? 1.0 : 0.0;
    }
    if (x > 25.0 + nu * nu) {
        return hankel_series(nu, x, -1.0) / std::sqrt(2.0 * pi * x);
    }
    const double q = 0.25 * x * x;
    // start in log space so large orders at small x do not underflow early
    double term = std::exp(nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) - x);
    double sum = term;
    for (int k = 1; k < 2000; ++k) {
        term *= q / (k * (k + nu));
        sum += term;
        if (term < 1e-18 * sum) {
            break;
        }
    }
    return sum;
}

double bessel_k_scaled(double nu, double x)
{
    twice_order(nu, x);
    if (x == 0.0) {
        throw std::domain_error("bessel_k: K_nu is singular at 0");
    }
    if (x > 25.0 + nu * nu) {
        return hankel_series(nu, x, 1.0) * std::sqrt(pi / (2.0 * x));
    }
    // K_nu(x) e^x = int_0^inf exp(-x (cosh t - 1)) cosh(nu t) dt; the integrand
    // is entire and decays doubly exponentially, so the trapezoid rule converges
    // geometrically in 1/h
    const double h = std::min(0.1, 0.6 / std::sqrt(x));
    double sum = 0.5;
    for (int j = 1; j < 100000; ++j) {
        const double t = j * h;
        const double e = -x * (std::cosh(t) - 1.0) + nu * t;
        const double f = 0.5 * (std::exp(e) + std::exp(-x * (std::cosh(t) - 1.0) - nu * t));
        sum += f;
        if (f < 1e-18 * sum && e < 0.0 && t > 1.0) {
            break;
        }
    }
    return h * sum;
}

void bessel_j_half_orders(double x, int twice_max, double *out)
{
    twice_order(0.5 * twice_max, x);
    const int nmax = twice_max / 2;
    if (x < 2.0 || x < 0.5 * nmax + 1.0) {
        for (int t = 0; t <= twice_max; ++t) {
            out[t] = bessel_j(0.5 * t, x);
        }
        return;
    }
    // (1/M) sum_j exp(i(n t_j - x sin t_j)) for n = 0..nmax in one pass
    int M = static_cast<int>(1.1 * (x + nmax)) + 48;
    M += M % 2;
    std::vector<double> acc(nmax + 1, 0.0);
    for (int j = 0; j < M; ++j) {
        const double t = 2.0 * pi * j / M;
        const std::complex<double> base = std::polar(1.0, -x * std::sin(t));
        const std::complex<double> step = std::polar(1.0, t);
        std::complex<double> e = base;
        for (int n = 0; n <= nmax; ++n) {
            acc[n] += e.real();
            e *= step;
        }
    }
    for (int n = 0; n <= nmax && 2 * n <= twice_max; ++n) {
        out[2 * n] = acc[n] / M;
    }
    if (twice_max >= 1) {
        // x >= nu_max here, so upward recurrence is stable
        const double c = std::sqrt(2.0 / (pi * x));
        double jm = c * std::sin(x);
        out[1] = jm;
        if (twice_max >= 3) {
            double j = c * (std::sin(x) / x - std::cos(x));
            out[3] = j;
            for (int t = 3; t + 2 <= twice_max; t += 2) {
                const double jn = (t / x) * j - jm;
                jm = j;
                j = jn;
                out[t + 2] = j;
            }
        }
    }
}

void bessel_k_scaled_half_orders(double x, int twice_max, double *out)
{
    twice_order(0.5 * twice_max, x);
    if (x == 0.0) {
        throw std::domain_error("bessel_k: K_nu is singular at 0");
    }
    // K_{v+1} = K_{v-1} + (2v/x) K_v holds verbatim for the scaled functions
    double km = bessel_k_scaled(0.0, x);
    out[0] = km;
    if (twice_max >= 2) {
        double k = bessel_k_scaled(1.0, x);
        out[2] = k;
        for (int t = 2; t + 2 <= twice_max; t += 2) {
            const double kn = km + (t / x) * k;
            km = k;
            k = kn;
            out[t + 2] = k;
        }
    }
    if (twice_max >= 1) {
        const double c = std::sqrt(pi / (2.0 * x));
        double k1 = c;
        out[1] = k1;
        if (twice_max >= 3) {
            double k3 = c * (1.0 + 1.0 / x);
            out[3] = k3;
            for (int t = 3; t + 2 <= twice_max; t += 2) {
                const double kn = k1 + (t / x) * k3;
                k1 = k3;
                k3 = kn;
                out[t + 2] = k3;
            }
        }
    }
}

double bessel_i(double nu, double x)
{
    return bessel_i_scaled(nu, x) * std::exp(x);
}

double bessel_k(double nu, double x)
{
    return bessel_k_scaled(nu, x) * std::exp(-x);
}

} // namespace dcma
