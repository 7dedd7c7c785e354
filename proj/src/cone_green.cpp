#include <dcma/cone_green.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fftw3.h>

#include <dcma/bessel.hpp>
#include <dcma/rng.hpp>

namespace dcma
{

namespace
{

constexpr double pi = 3.14159265358979323846264338327950288;

double sq(double x)
{
    return x * x;
}

// nu = k / beta must land in (1/2)Z for the Bessel layer
int twice_nu(int k, double beta)
{
    const double t = 2.0 * k / beta;
    if (std::abs(t - std::round(t)) > 1e-12) {
        throw std::domain_error("cone angle beta must make k/beta a multiple of 1/2");
    }
    return static_cast<int>(std::lround(t));
}

// J_o for o in {-1/2} U (1/2)N
double bessel_j_signed(double o, double x)
{
    if (o == -0.5) {
        return std::sqrt(2.0 / (pi * x)) * std::cos(x);
    }
    return bessel_j(o, x);
}

using vec = std::vector<double>;

// Vector-valued adaptive Gauss-Kronrod (7/15). Every component must satisfy
// err_k <= tol * max(|I_k|, 1e-8 L1_k, 1e-6 max_j L1_j); panels are split in batches.
template <typename F>
vec integrate_vector(const F &f, std::size_t dim, const vec &breaks, double tol, int max_panels = 40000)
{
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    using gl = boost::math::quadrature::gauss<double, 7>;
    const auto &xk = gk::abscissa();
    const auto &wk = gk::weights();
    const auto &wg = gl::weights();

    struct panel {
        double a, b;
        vec val, err, l1;
    };
    std::vector<double> fx(dim);
    auto eval_panel = [&](double a, double b) {
        panel p{a, b, vec(dim, 0.0), vec(dim, 0.0), vec(dim, 0.0)};
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        vec g(dim, 0.0);
        for (std::size_t i = 0; i < xk.size(); ++i) {
            const int signs = xk[i] == 0.0 ? 1 : 2;
            for (int sgn = 0; sgn < signs; ++sgn) {
                const double x = sgn == 0 ? c + h * xk[i] : c - h * xk[i];
                f(x, fx);
                for (std::size_t k = 0; k < dim; ++k) {
                    p.val[k] += wk[i] * fx[k];
                    p.l1[k] += wk[i] * std::abs(fx[k]);
                    if (i % 2 == 0) {
                        g[k] += wg[i / 2] * fx[k];
                    }
                }
            }
        }
        for (std::size_t k = 0; k < dim; ++k) {
            p.val[k] *= h;
            p.l1[k] *= h;
            p.err[k] = std::abs(p.val[k] - h * g[k]);
        }
        return p;
    };

    std::vector<panel> panels;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        panels.push_back(eval_panel(breaks[i], breaks[i + 1]));
    }
    vec total(dim), error(dim), l1(dim);
    for (int round = 0; round < 60; ++round) {
        std::fill(total.begin(), total.end(), 0.0);
        std::fill(error.begin(), error.end(), 0.0);
        std::fill(l1.begin(), l1.end(), 0.0);
        for (const auto &p : panels) {
            for (std::size_t k = 0; k < dim; ++k) {
                total[k] += p.val[k];
                error[k] += p.err[k];
                l1[k] += p.l1[k];
            }
        }
        vec target(dim);
        bool done = true;
        const double l1max = *std::max_element(l1.begin(), l1.end());
        for (std::size_t k = 0; k < dim; ++k) {
            target[k] = tol * std::max({std::abs(total[k]), 1e-8 * l1[k], 1e-6 * l1max});
            if (l1[k] == 0.0) {
                target[k] = 0.0;
                continue;
            }
            if (error[k] > target[k]) {
                done = false;
            }
        }
        if (done) {
            return total;
        }
        if (panels.size() > static_cast<std::size_t>(max_panels)) {
            break;
        }
        std::vector<panel> next;
        next.reserve(panels.size() * 2);
        const double share = 1.0 / static_cast<double>(panels.size());
        for (auto &p : panels) {
            bool split = false;
            for (std::size_t k = 0; k < dim && !split; ++k) {
                split = error[k] > target[k] && p.err[k] > 0.5 * share * target[k];
            }
            if (split) {
                const double mid = 0.5 * (p.a + p.b);
                next.push_back(eval_panel(p.a, mid));
                next.push_back(eval_panel(mid, p.b));
            } else {
                next.push_back(std::move(p));
            }
        }
        panels.swap(next);
    }
    std::size_t worst = 0;
    for (std::size_t k = 0; k < dim; ++k) {
        if (error[k] / std::max(std::abs(total[k]), 1e-300) > error[worst] / std::max(std::abs(total[worst]), 1e-300)) {
            worst = k;
        }
    }
    throw quadrature_failure(total[worst], error[worst]);
}

} // namespace

// ------------------------------------------------------------- geometry

cone_point pi2_pushforward(const cone_point &pulled)
{
    cone_point p = pulled;
    p.radial = sq(pulled.radial);
    return p;
}

cone_point pi2_pullback(const cone_point &pushed)
{
    if (!(pushed.radial > 0.0)) {
        throw std::domain_error("pi2_pullback: radial coordinate must be > 0");
    }
    cone_point p = pushed;
    p.radial = std::sqrt(pushed.radial);
    return p;
}

double gprime_distance(const cone_point &x, const cone_point &y)
{
    // cone of angle 4 pi in the radius R^2 / 2
    const double a = 0.5 * sq(x.radial), b = 0.5 * sq(y.radial);
    double dth = std::fmod(std::abs(x.theta - y.theta), 2 * pi);
    dth = std::min(dth, 2 * pi - dth);
    const double ang = 2.0 * dth;
    const double dc = ang >= pi ? a + b : std::sqrt(std::max(0.0, a * a + b * b - 2 * a * b * std::cos(ang)));
    double ds2 = 0;
    for (std::size_t i = 0; i < x.s.size(); ++i) {
        ds2 += sq(x.s[i] - y.s[i]);
    }
    return std::sqrt(dc * dc + ds2);
}

cone_point dilate(const cone_point &x, double lambda)
{
    cone_point p = x;
    for (auto &v : p.s) {
        v *= lambda;
    }
    p.radial *= std::sqrt(lambda);
    return p;
}

// ---------------------------------------------------------------- modes

std::vector<double> mode_integrals(int kmax, double r, double rp, double Rs, green_rep rep, const green_options &opt)
{
    if (opt.m < 3) {
        throw std::invalid_argument("mode representation needs m >= 3");
    }
    if (kmax < 0 || r < 0 || rp < 0 || Rs < 0) {
        throw std::invalid_argument("mode_integrals: negative argument");
    }
    const int d = opt.m - 2;
    const double hd = 0.5 * d;
    const double order = hd - 1.0; // of the transverse Bessel factor
    const int tmax = twice_nu(kmax, opt.beta);
    std::vector<int> tk(kmax + 1);
    for (int k = 0; k <= kmax; ++k) {
        tk[k] = twice_nu(k, opt.beta);
    }
    const double rlo = std::min(r, rp), rhi = std::max(r, rp);
    if (rep == green_rep::automatic) {
        rep = (rhi - rlo >= Rs && rhi > rlo) ? green_rep::fourier_in_s : green_rep::hankel_in_r;
    }
    double decay = 0;
    if (rep == green_rep::hankel_in_r) {
        if (!(Rs > 0)) {
            throw std::invalid_argument("hankel_in_r representation needs Rs > 0");
        }
        decay = Rs;
    } else {
        if (!(rhi > rlo)) {
            throw std::invalid_argument("fourier_in_s representation needs r != r'");
        }
        if (Rs == 0.0 && d != 2) {
            throw std::invalid_argument("fourier_in_s at Rs = 0 is only implemented for m = 4");
        }
        decay = rhi - rlo;
    }
    const double lam_max = 50.0 / decay;
    const double osc = std::max({r + rp, Rs, 1e-6});
    const int n0 = std::clamp(static_cast<int>(std::ceil(lam_max * osc / pi)), 8, 2000);
    vec breaks;
    // a geometric start resolves the lam -> 0 behaviour, uniform panels the oscillation
    const double w = lam_max / n0;
    for (double t = w / 64; t < w; t *= 2) {
        breaks.push_back(t);
    }
    breaks.insert(breaks.begin(), 0.0);
    for (int i = 1; i <= n0; ++i) {
        breaks.push_back(i * w);
    }

    std::vector<double> ja(tmax + 1), jb(tmax + 1), ks(tmax + 1);
    const bool hankel = rep == green_rep::hankel_in_r;
    auto f = [&](double lam, vec &out) {
        const double pw = std::pow(lam, hd);
        if (hankel) {
            const double wt = pw * bessel_k_scaled(std::abs(order), Rs * lam) * std::exp(-Rs * lam);
            bessel_j_half_orders(r * lam, tmax, ja.data());
            bessel_j_half_orders(rp * lam, tmax, jb.data());
            for (int k = 0; k <= kmax; ++k) {
                out[k] = wt * ja[tk[k]] * jb[tk[k]];
            }
        } else {
            const double wt = pw * (Rs == 0.0 ? (order == 0.0 ? 1.0 : 0.0) : bessel_j_signed(order, Rs * lam));
            const double damp = std::exp(-(rhi - rlo) * lam);
            bessel_k_scaled_half_orders(rhi * lam, tmax, ks.data());
            for (int k = 0; k <= kmax; ++k) {
                const double nu = 0.5 * tk[k];
                const double is = bessel_i_scaled(nu, rlo * lam);
                // high orders at small argument: K overflows before I K loses its
                // leading form (r</r>)^nu / (2 nu)
                const double ik = std::isfinite(ks[tk[k]]) && is > 0 ? is * ks[tk[k]] * damp
                                  : nu > 0                          ? std::pow(rlo / rhi, nu) / (2 * nu)
                                                                    : is * ks[tk[k]] * damp;
                out[k] = wt * ik;
            }
        }
    };
    return integrate_vector(f, kmax + 1, breaks, opt.tol);
}

double mode_integral(int k, double r, double rp, double Rs, green_rep rep, const green_options &opt)
{
    if (k < 0) {
        throw std::invalid_argument("mode index must be >= 0");
    }
    // a single mode: reuse the vector path with unit weight on component k
    return mode_integrals(k, r, rp, Rs, rep, opt)[k];
}

double mode_prefactor(int k, double Rs, const green_options &opt)
{
    const int d = opt.m - 2;
    const double eps = k == 0 ? 1.0 : 2.0;
    const double rs_pow = d == 2 ? 1.0 : std::pow(Rs, 1.0 - 0.5 * d);
    return eps / (2 * pi * opt.beta) * std::pow(2 * pi, -0.5 * d) * rs_pow;
}

double cone_green(const cone_point &x, const cone_point &y, const green_options &opt)
{
    if (static_cast<int>(x.s.size()) != opt.m - 2 || static_cast<int>(y.s.size()) != opt.m - 2) {
        throw std::invalid_argument("cone_green: point dimension does not match m");
    }
    double Rs2 = 0;
    for (std::size_t i = 0; i < x.s.size(); ++i) {
        Rs2 += sq(x.s[i] - y.s[i]);
    }
    const double Rs = std::sqrt(Rs2);
    if (Rs == 0.0 && x.radial == y.radial) {
        throw std::invalid_argument("cone_green: coincident points");
    }
    const auto g = mode_integrals(opt.mode_cut, x.radial, y.radial, Rs, green_rep::automatic, opt);
    double sum = 0;
    for (int k = 0; k <= opt.mode_cut; ++k) {
        sum += mode_prefactor(k, Rs, opt) * std::cos(k * (x.theta - y.theta)) * g[k];
    }
    return sum;
}

double degenerate_green(const cone_point &x, const cone_point &y, const green_options &opt)
{
    if (opt.m == 2) {
        const std::complex<double> zx = std::polar(x.radial, x.theta), zy = std::polar(y.radial, y.theta);
        return -std::log(std::abs(zx - zy)) / (2 * pi);
    }
    green_options o = opt;
    o.beta = 2.0;
    cone_point a = x, b = y;
    a.radial = 0.5 * sq(x.radial);
    b.radial = 0.5 * sq(y.radial);
    return cone_green(a, b, o);
}

// --------------------------------------------------------------- grids

double cone_grid::dtheta() const
{
    return 2 * pi / ntheta;
}

cone_grid cone_grid::dilated(double lambda) const
{
    cone_grid g = *this;
    g.s_len *= lambda;
    g.r_max *= std::sqrt(lambda);
    return g;
}

void cone_grid::validate() const
{
    if (d != 1 && d != 2) {
        throw std::invalid_argument("cone_grid: d must be 1 or 2");
    }
    if (ns < 4 || ns % 2 != 0 || nr < 4 || ntheta < 1 || !(s_len > 0) || !(r_max > 0)) {
        throw std::invalid_argument("cone_grid: bad sizes");
    }
}

namespace
{

cone_point node(const cone_grid &g, int i1, int i2, int j, int l)
{
    cone_point p;
    p.s.push_back(g.s(i1));
    if (g.d == 2) {
        p.s.push_back(g.s(i2));
    }
    p.radial = g.R(j);
    p.theta = g.theta(l);
    return p;
}

template <typename F>
void for_nodes(const cone_grid &g, F &&f)
{
    const int n2 = g.d == 2 ? g.ns : 1;
    for (int i1 = 0; i1 < g.ns; ++i1) {
        for (int i2 = 0; i2 < n2; ++i2) {
            for (int j = 0; j <= g.nr; ++j) {
                for (int l = 0; l < g.ntheta; ++l) {
                    f(i1, i2, j, l);
                }
            }
        }
    }
}

int wrap_index(int n, int N)
{
    return n <= N / 2 ? n : n - N;
}

} // namespace

std::vector<double> sample(const cone_grid &g, const cone_function &f)
{
    g.validate();
    std::vector<double> v(g.size());
    for_nodes(g, [&](int i1, int i2, int j, int l) { v[g.index(i1, i2, j, l)] = f(node(g, i1, i2, j, l)); });
    return v;
}

std::vector<double> green_apply(const cone_grid &g, const std::vector<double> &rho, int p1, int p2, bool weighted_volume)
{
    g.validate();
    if (rho.size() != g.size()) {
        throw std::invalid_argument("green_apply: sample count does not match grid");
    }
    if (p1 < 0 || p2 < 0 || (g.d == 1 && p2 != 0)) {
        throw std::invalid_argument("green_apply: bad derivative order");
    }
    const int n2 = g.d == 2 ? g.ns : 1;
    const std::size_t plane = g.s_count() * g.ntheta;
    const int nr1 = g.nr + 1;

    fftw_complex *work = fftw_alloc_complex(plane);
    fftw_plan fwd, bwd;
    if (g.d == 2) {
        fwd = fftw_plan_dft_3d(g.ns, g.ns, g.ntheta, work, work, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_3d(g.ns, g.ns, g.ntheta, work, work, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
        fwd = fftw_plan_dft_2d(g.ns, g.ntheta, work, work, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_2d(g.ns, g.ntheta, work, work, FFTW_BACKWARD, FFTW_ESTIMATE);
    }

    // spectral coefficients of rho * (volume weight) * dR, indexed [j][plane]
    std::vector<std::complex<double>> spec(plane * nr1);
    const double dR = g.dr();
    bool touches = false;
    for (int j = 0; j < nr1; ++j) {
        const double R = g.R(j);
        const double wt = (weighted_volume ? R * R * R : R) * dR * (j == g.nr ? 0.5 : 1.0);
        for (int i1 = 0; i1 < g.ns; ++i1) {
            for (int i2 = 0; i2 < n2; ++i2) {
                for (int l = 0; l < g.ntheta; ++l) {
                    const std::size_t pi_ = (std::size_t(i1) * n2 + i2) * g.ntheta + l;
                    const double v = rho[g.index(i1, i2, j, l)];
                    if (v != 0.0 && (j == g.nr || i1 == 0 || (g.d == 2 && i2 == 0))) {
                        touches = true;
                    }
                    work[pi_][0] = v * wt;
                    work[pi_][1] = 0.0;
                }
            }
        }
        fftw_execute(fwd);
        for (std::size_t q = 0; q < plane; ++q) {
            spec[std::size_t(j) * plane + q] = {work[q][0], work[q][1]};
        }
    }
    if (touches) {
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
        fftw_free(work);
        throw std::invalid_argument("green_apply: support of rho touches the grid boundary");
    }

    std::vector<double> r(nr1);
    for (int j = 0; j < nr1; ++j) {
        r[j] = sq(g.R(j));
    }
    // Bessel tables keyed by (|k|, |n|^2); kappa r is all that enters
    std::unordered_map<long, std::pair<vec, vec>> cache;
    const double xi_unit = 2 * pi / g.s_len;
    std::vector<std::complex<double>> q(nr1), out(plane * nr1);
    vec A(nr1), B(nr1);
    for (int i1 = 0; i1 < g.ns; ++i1) {
        for (int i2 = 0; i2 < n2; ++i2) {
            const int m1 = wrap_index(i1, g.ns), m2 = g.d == 2 ? wrap_index(i2, g.ns) : 0;
            const double xi1 = xi_unit * m1, xi2 = xi_unit * m2;
            std::complex<double> dfac = std::pow(std::complex<double>(0, xi1), p1) * std::pow(std::complex<double>(0, xi2), p2);
            if ((p1 % 2 == 1 && 2 * std::abs(m1) == g.ns) || (p2 % 2 == 1 && 2 * std::abs(m2) == g.ns)) {
                dfac = 0.0;
            }
            const long n2sum = long(m1) * m1 + long(m2) * m2;
            const double kappa = 0.5 * xi_unit * std::sqrt(double(n2sum));
            for (int l = 0; l < g.ntheta; ++l) {
                const int kk = std::abs(wrap_index(l, g.ntheta));
                const double nu = 0.5 * kk;
                const std::size_t pidx = (std::size_t(i1) * n2 + i2) * g.ntheta + l;
                for (int j = 0; j < nr1; ++j) {
                    q[j] = spec[std::size_t(j) * plane + pidx];
                }
                std::vector<std::complex<double>> f(nr1, 0.0);
                if (n2sum == 0) {
                    // static limit of I_nu K_nu: (r</r>)^nu / (2 nu), or -log r> for nu = 0
                    for (int j = 0; j < nr1; ++j) {
                        std::complex<double> s = 0;
                        for (int jp = 1; jp < nr1; ++jp) {
                            const double lo = std::min(r[j], r[jp]), hi = std::max(r[j], r[jp]);
                            const double ker = kk == 0 ? -std::log(hi) : std::pow(lo / hi, nu) / (2 * nu);
                            s += ker * q[jp];
                        }
                        f[j] = s;
                    }
                } else {
                    const long key = long(kk) * 100000007L + n2sum;
                    auto it = cache.find(key);
                    if (it == cache.end()) {
                        vec is(nr1), ks(nr1);
                        for (int j = 0; j < nr1; ++j) {
                            is[j] = bessel_i_scaled(nu, kappa * r[j]);
                            ks[j] = j == 0 ? 0.0 : bessel_k_scaled(nu, kappa * r[j]);
                        }
                        it = cache.emplace(key, std::make_pair(std::move(is), std::move(ks))).first;
                    }
                    const vec &is = it->second.first, &ks = it->second.second;
                    // f_j = K(r_j) sum_{j'<=j} I(r_j') q_j' + I(r_j) sum_{j'>j} K(r_j') q_j', with the
                    // exponential factors of the scaled functions folded into the running sums
                    std::complex<double> acc = 0;
                    std::vector<std::complex<double>> lower(nr1), upper(nr1);
                    for (int j = 0; j < nr1; ++j) {
                        if (j > 0) {
                            acc *= std::exp(-kappa * (r[j] - r[j - 1]));
                        }
                        acc += is[j] * q[j];
                        lower[j] = acc;
                    }
                    acc = 0;
                    for (int j = nr1 - 1; j >= 0; --j) {
                        upper[j] = acc;
                        if (j > 0) {
                            acc = (acc + ks[j] * q[j]) * std::exp(-kappa * (r[j] - r[j - 1]));
                        }
                    }
                    for (int j = 0; j < nr1; ++j) {
                        f[j] = (j == 0 ? 0.0 : ks[j] * lower[j]) + is[j] * upper[j];
                    }
                }
                for (int j = 0; j < nr1; ++j) {
                    out[std::size_t(j) * plane + pidx] = 0.5 * dfac * f[j];
                }
            }
        }
    }

    std::vector<double> phi(g.size());
    const double norm = 1.0 / static_cast<double>(plane);
    for (int j = 0; j < nr1; ++j) {
        for (std::size_t q2 = 0; q2 < plane; ++q2) {
            work[q2][0] = out[std::size_t(j) * plane + q2].real();
            work[q2][1] = out[std::size_t(j) * plane + q2].imag();
        }
        fftw_execute(bwd);
        for (int i1 = 0; i1 < g.ns; ++i1) {
            for (int i2 = 0; i2 < n2; ++i2) {
                for (int l = 0; l < g.ntheta; ++l) {
                    const std::size_t pidx = (std::size_t(i1) * n2 + i2) * g.ntheta + l;
                    phi[g.index(i1, i2, j, l)] = work[pidx][0] * norm;
                }
            }
        }
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(work);
    return phi;
}

// ---------------------------------------------------------- Laplacians

namespace
{

struct stepper {
    const cone_grid &g;
    int n2;
    int sp(int i) const
    {
        return (i + 1) % g.ns;
    }
    int sm(int i) const
    {
        return (i + g.ns - 1) % g.ns;
    }
    int tp(int l) const
    {
        return (l + 1) % g.ntheta;
    }
    int tm(int l) const
    {
        return (l + g.ntheta - 1) % g.ntheta;
    }
};

} // namespace

std::vector<double> degenerate_laplacian_apply(const cone_grid &g, const std::vector<double> &f)
{
    g.validate();
    if (f.size() != g.size()) {
        throw std::invalid_argument("degenerate_laplacian_apply: sample count does not match grid");
    }
    const stepper st{g, g.d == 2 ? g.ns : 1};
    const double hs = g.ds(), hr = g.dr(), ht = g.dtheta();
    std::vector<double> out(g.size(), std::nan(""));
    for_nodes(g, [&](int i1, int i2, int j, int l) {
        if (j == 0 || j == g.nr) {
            return;
        }
        const double R = g.R(j);
        const double c = f[g.index(i1, i2, j, l)];
        const double frr = (f[g.index(i1, i2, j + 1, l)] - 2 * c + f[g.index(i1, i2, j - 1, l)]) / (hr * hr);
        const double fr = (f[g.index(i1, i2, j + 1, l)] - f[g.index(i1, i2, j - 1, l)]) / (2 * hr);
        double ftt = 0;
        if (g.ntheta > 1) {
            ftt = (f[g.index(i1, i2, j, st.tp(l))] - 2 * c + f[g.index(i1, i2, j, st.tm(l))]) / (ht * ht);
        }
        double fss = (f[g.index(st.sp(i1), i2, j, l)] - 2 * c + f[g.index(st.sm(i1), i2, j, l)]) / (hs * hs);
        if (g.d == 2) {
            fss += (f[g.index(i1, st.sp(i2), j, l)] - 2 * c + f[g.index(i1, st.sm(i2), j, l)]) / (hs * hs);
        }
        out[g.index(i1, i2, j, l)] = (frr + fr / R + ftt / (R * R)) / (R * R) + fss;
    });
    return out;
}

std::vector<double> metric_laplacian_apply(const cone_grid &g, const std::vector<double> &f, const hermitian_metric &metric)
{
    g.validate();
    if (g.d != 2) {
        throw std::invalid_argument("metric_laplacian_apply: needs d = 2 (one w coordinate)");
    }
    if (f.size() != g.size()) {
        throw std::invalid_argument("metric_laplacian_apply: sample count does not match grid");
    }
    using cd = std::complex<double>;
    const stepper st{g, g.ns};
    const double hs = g.ds(), hr = g.dr(), ht = g.dtheta();
    const cd I(0, 1);
    // complex derivatives in (z, w) of a grid field, z in polar form
    auto dz = [&](const auto &v, int i1, int i2, int j, int l, bool bar) {
        const double R = g.R(j), th = g.theta(l);
        const cd vr = (v[g.index(i1, i2, j + 1, l)] - v[g.index(i1, i2, j - 1, l)]) / (2 * hr);
        const cd vt = g.ntheta > 1 ? (v[g.index(i1, i2, j, st.tp(l))] - v[g.index(i1, i2, j, st.tm(l))]) / (2 * ht) : cd(0);
        return bar ? 0.5 * std::exp(I * th) * (vr + I * vt / R) : 0.5 * std::exp(-I * th) * (vr - I * vt / R);
    };
    auto dw = [&](const auto &v, int i1, int i2, int j, int l, bool bar) {
        const cd v1 = (v[g.index(st.sp(i1), i2, j, l)] - v[g.index(st.sm(i1), i2, j, l)]) / (2 * hs);
        const cd v2 = (v[g.index(i1, st.sp(i2), j, l)] - v[g.index(i1, st.sm(i2), j, l)]) / (2 * hs);
        return bar ? 0.5 * (v1 + I * v2) : 0.5 * (v1 - I * v2);
    };
    std::vector<cd> vz(g.size(), 0.0), vw(g.size(), 0.0);
    std::vector<double> det(g.size(), 0.0);
    for_nodes(g, [&](int i1, int i2, int j, int l) {
        if (j == 0 || j == g.nr) {
            return;
        }
        const cd z = std::polar(g.R(j), g.theta(l)), w(g.s(i1), g.s(i2));
        const Eigen::Matrix2cd H = metric(z, w);
        const double dt = H.determinant().real();
        // g^{i jbar} g_{k jbar} = delta: the inverse of the transpose
        const Eigen::Matrix2cd Minv = H.transpose().inverse();
        const Eigen::Vector2cd db(dz(f, i1, i2, j, l, true), dw(f, i1, i2, j, l, true));
        const Eigen::Vector2cd V = dt * (Minv * db);
        const auto k = g.index(i1, i2, j, l);
        vz[k] = V(0);
        vw[k] = V(1);
        det[k] = dt;
    });
    std::vector<double> out(g.size(), std::nan(""));
    for_nodes(g, [&](int i1, int i2, int j, int l) {
        if (j < 2 || j > g.nr - 2) {
            return;
        }
        const auto k = g.index(i1, i2, j, l);
        const cd div = dz(vz, i1, i2, j, l, false) + dw(vw, i1, i2, j, l, false);
        out[k] = 4.0 * div.real() / det[k];
    });
    return out;
}

double degenerate_laplacian_at(const cone_function &f, const cone_point &x, double h)
{
    if (!(x.radial > h)) {
        throw std::domain_error("degenerate_laplacian_at: stencil reaches the divisor z = 0");
    }
    const double c = f(x);
    const std::complex<double> z = std::polar(x.radial, x.theta);
    auto at_z = [&](std::complex<double> zz) {
        cone_point p = x;
        p.radial = std::abs(zz);
        p.theta = std::arg(zz);
        return f(p);
    };
    const double lz = (at_z(z + h) + at_z(z - h) + at_z(z + std::complex<double>(0, h)) + at_z(z - std::complex<double>(0, h)) - 4 * c) / (h * h);
    double ls = 0;
    for (std::size_t i = 0; i < x.s.size(); ++i) {
        cone_point p = x, q = x;
        p.s[i] += h;
        q.s[i] -= h;
        ls += (f(p) - 2 * c + f(q)) / (h * h);
    }
    return lz / (x.radial * x.radial) + ls;
}

// ---------------------------------------------------- scaled derivatives

namespace
{

// exponent of R in front of the coordinate derivative
double weight_exponent(const scaled_derivative_spec &s, int d)
{
    if (s.i < 1 || s.i > d + 2) {
        throw std::invalid_argument("scaled derivative index out of range");
    }
    if (s.gamma < 0 || s.gamma > 1) {
        throw std::invalid_argument("scaled derivative gamma must lie in [0, 1]");
    }
    if (s.i <= d) {
        return 1.0 - s.gamma;
    }
    const double g = s.weight_all ? s.gamma : 0.0;
    return s.i == d + 1 ? -g : -1.0 - g;
}

double radial_weight(double R, double e)
{
    if (e == 0.0) {
        return 1.0;
    }
    if (R == 0.0) {
        return e > 0 ? 0.0 : std::nan("");
    }
    return std::pow(R, e);
}

} // namespace

std::vector<double> scaled_derivative(const cone_grid &g, const std::vector<double> &f, const scaled_derivative_spec &spec)
{
    g.validate();
    if (f.size() != g.size()) {
        throw std::invalid_argument("scaled_derivative: sample count does not match grid");
    }
    const double e = weight_exponent(spec, g.d);
    const stepper st{g, g.d == 2 ? g.ns : 1};
    std::vector<double> out(g.size());
    for_nodes(g, [&](int i1, int i2, int j, int l) {
        double df = 0;
        if (spec.i <= g.d) {
            const bool first = spec.i == 1;
            const auto kp = first ? g.index(st.sp(i1), i2, j, l) : g.index(i1, st.sp(i2), j, l);
            const auto km = first ? g.index(st.sm(i1), i2, j, l) : g.index(i1, st.sm(i2), j, l);
            df = (f[kp] - f[km]) / (2 * g.ds());
        } else if (spec.i == g.d + 1) {
            const double h = g.dr();
            if (j == 0) {
                df = (-3 * f[g.index(i1, i2, 0, l)] + 4 * f[g.index(i1, i2, 1, l)] - f[g.index(i1, i2, 2, l)]) / (2 * h);
            } else if (j == g.nr) {
                df = (3 * f[g.index(i1, i2, j, l)] - 4 * f[g.index(i1, i2, j - 1, l)] + f[g.index(i1, i2, j - 2, l)]) / (2 * h);
            } else {
                df = (f[g.index(i1, i2, j + 1, l)] - f[g.index(i1, i2, j - 1, l)]) / (2 * h);
            }
        } else if (g.ntheta > 1) {
            df = (f[g.index(i1, i2, j, st.tp(l))] - f[g.index(i1, i2, j, st.tm(l))]) / (2 * g.dtheta());
        }
        out[g.index(i1, i2, j, l)] = radial_weight(g.R(j), e) * df;
    });
    return out;
}

double scaled_derivative_at(const cone_function &f, const cone_point &x, const scaled_derivative_spec &spec, int d, const double steps[3])
{
    const double e = weight_exponent(spec, d);
    cone_point p = x, q = x;
    double h;
    if (spec.i <= d) {
        h = steps[0];
        p.s[spec.i - 1] += h;
        q.s[spec.i - 1] -= h;
    } else if (spec.i == d + 1) {
        h = steps[1];
        p.radial += h;
        q.radial -= h;
    } else {
        h = steps[2];
        p.theta += h;
        q.theta -= h;
    }
    return radial_weight(x.radial, e) * (f(p) - f(q)) / (2 * h);
}

double scaled_second_derivative_at(const cone_function &f, const cone_point &x, const scaled_derivative_spec &outer,
                                   const scaled_derivative_spec &inner, int d, const double steps[3])
{
    const cone_function first = [&](const cone_point &y) { return scaled_derivative_at(f, y, inner, d, steps); };
    return scaled_derivative_at(first, x, outer, d, steps);
}

// ------------------------------------------------------------ checks

std::vector<homogeneity_row> homogeneity_check(const homogeneity_options &opt)
{
    const int m = opt.m;
    const int d = m - 2;
    if (m < 2 || d > 2) {
        throw std::invalid_argument("homogeneity_check: m must be 2, 3 or 4");
    }
    auto pairs = opt.index_pairs;
    if (pairs.empty()) {
        pairs = {{d + 1, d + 1}, {d + 1, d + 2}, {d + 2, d + 2}};
        if (d >= 1) {
            pairs.push_back({1, 1});
            pairs.push_back({1, d + 1});
        }
    }
    green_options gopt = opt.green;
    gopt.m = m;
    gopt.tol = std::min(gopt.tol, 1e-11);

    // kernel values are shared between gamma pairs, so memoise them by point
    std::map<std::vector<double>, double> memo;
    auto key_of = [](const cone_point &x, const cone_point &y) {
        std::vector<double> k = x.s;
        k.push_back(x.radial);
        k.push_back(x.theta);
        k.insert(k.end(), y.s.begin(), y.s.end());
        k.push_back(y.radial);
        k.push_back(y.theta);
        return k;
    };

    counter_rng rng(opt.seed, "homogeneity");
    std::vector<std::pair<cone_point, cone_point>> samples;
    while (static_cast<int>(samples.size()) < opt.samples) {
        cone_point x, y;
        for (int i = 0; i < d; ++i) {
            x.s.push_back(rng.uniform(-1, 1));
            y.s.push_back(rng.uniform(-1, 1));
        }
        x.radial = rng.uniform(0.5, 1.2);
        y.radial = rng.uniform(0.5, 1.2);
        x.theta = rng.uniform(0, 2 * pi);
        y.theta = rng.uniform(0, 2 * pi);
        if (gprime_distance(x, y) > 0.3 && std::abs(x.radial - y.radial) > 0.1) {
            samples.emplace_back(x, y);
        }
    }

    std::vector<double> lambdas{1.0};
    lambdas.insert(lambdas.end(), opt.lambdas.begin(), opt.lambdas.end());
    std::vector<homogeneity_row> rows;
    for (const auto &[g1, g2] : opt.gammas) {
        for (const auto &[i, j] : pairs) {
            homogeneity_row row;
            row.gamma1 = g1;
            row.gamma2 = g2;
            row.i = i;
            row.j = j;
            row.expected = 1.0 - m - 0.5 * (g1 + g2);
            double slope_sum = 0;
            int used = 0;
            for (const auto &[x, y] : samples) {
                std::vector<double> logs;
                for (double lam : lambdas) {
                    const cone_point xl = dilate(x, lam), yl = dilate(y, lam);
                    const cone_function G = [&](const cone_point &p) {
                        const auto k = key_of(p, yl);
                        auto it = memo.find(k);
                        if (it != memo.end()) {
                            return it->second;
                        }
                        const double v = degenerate_green(p, yl, gopt);
                        memo.emplace(k, v);
                        return v;
                    };
                    // steps follow the dilation so the difference quotient is itself homogeneous
                    const double steps[3] = {1e-3 * lam, 1e-3 * std::sqrt(lam), 1e-3};
                    const double v = scaled_second_derivative_at(G, xl, {i, g1, true}, {j, g2, true}, d, steps);
                    logs.push_back(std::log(std::abs(v)));
                }
                if (!std::isfinite(logs[0]) || logs[0] < std::log(1e-10)) {
                    continue; // D G~ vanishes at this sample
                }
                double sx = 0, sy = 0, sxx = 0, sxy = 0;
                for (std::size_t t = 0; t < lambdas.size(); ++t) {
                    const double lx = std::log(lambdas[t]);
                    sx += lx;
                    sy += logs[t];
                    sxx += lx * lx;
                    sxy += lx * logs[t];
                    if (t > 0) {
                        row.worst_err = std::max(row.worst_err, std::abs((logs[t] - logs[0]) / lx - row.expected));
                    }
                }
                const double nn = static_cast<double>(lambdas.size());
                slope_sum += (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
                ++used;
            }
            row.fitted = used ? slope_sum / used : std::nan("");
            if (!used) {
                row.worst_err = std::nan("");
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<bump_spec> default_bump_family()
{
    return {
        {"on_divisor", 0.0, 1.0, 0.0, 1.0},
        {"off_divisor", 0.3, 1.0, 1.0, 0.5},
        {"elongated", 0.0, 2.0, 0.0, 0.5},
    };
}

double bump_value(const bump_spec &b, const cone_point &x)
{
    double t2 = sq(x.radial * x.radial - b.c) / sq(b.w);
    for (std::size_t i = 0; i < x.s.size(); ++i) {
        t2 += sq(x.s[i] - (i == 0 ? b.s0 : 0.0)) / sq(b.a);
    }
    return t2 < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t2)) : 0.0;
}

std::string holder_report::csv() const
{
    std::ostringstream os;
    os.precision(10);
    os << "family,lambda,alpha,gamma1,gamma2,seminorm_T,seminorm_rho,ratio\n";
    for (const auto &r : rows) {
        os << r.family << ',' << r.lambda << ',' << alpha << ',' << gamma1 << ',' << gamma2 << ',' << r.seminorm_T << ','
           << r.seminorm_rho << ',' << r.ratio << '\n';
    }
    return os.str();
}

std::vector<holder_report> holder_ratio_sweep(const std::vector<double> &alphas, const std::vector<std::pair<double, double>> &gammas,
                                              holder_options base)
{
    for (double a : alphas) {
        if (!(a > 0 && a < 0.5)) {
            throw std::invalid_argument("holder_ratio_check: alpha must lie in (0, 1/2)");
        }
    }
    std::vector<holder_report> reps;
    for (double a : alphas) {
        for (const auto &[g1, g2] : gammas) {
            if (g1 < 0 || g1 > 1 || g2 < 0 || g2 > 1) {
                throw std::invalid_argument("holder_ratio_check: gammas must lie in [0, 1]");
            }
            holder_report r;
            r.alpha = a;
            r.gamma1 = g1;
            r.gamma2 = g2;
            reps.push_back(r);
        }
    }
    for (const auto &fam : base.family) {
        cone_grid g0;
        g0.d = 2;
        g0.ns = base.ns;
        g0.nr = base.nr;
        g0.ntheta = 1;
        g0.s_len = 8.0 * (std::abs(fam.s0) + fam.a);
        g0.r_max = 1.5 * std::sqrt(fam.c + fam.w);
        for (double lam : base.lambdas) {
            const cone_grid g = g0.dilated(lam);
            const auto rho = sample(g, [&](const cone_point &x) { return bump_value(fam, dilate(x, 1.0 / lam)); });
            const auto phi2 = green_apply(g, rho, 2, 0);

            // distinct alphas and weights R^b; every pair updates all settings at once
            std::vector<double> alphas;
            std::vector<double> bs;
            for (const auto &rep : reps) {
                if (std::find(alphas.begin(), alphas.end(), rep.alpha) == alphas.end()) {
                    alphas.push_back(rep.alpha);
                }
                const double b = 2.0 - rep.gamma1 - rep.gamma2;
                if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
                    bs.push_back(b);
                }
            }
            std::vector<std::vector<double>> wT(bs.size(), std::vector<double>(g.size())), wQ = wT;
            for (std::size_t t = 0; t < bs.size(); ++t) {
                for (int i1 = 0; i1 < g.ns; ++i1) {
                    for (int i2 = 0; i2 < g.ns; ++i2) {
                        for (int j = 0; j <= g.nr; ++j) {
                            const auto k = g.index(i1, i2, j, 0);
                            const double w = bs[t] == 0.0 ? 1.0 : std::pow(g.R(j), bs[t]);
                            wT[t][k] = w * phi2[k];
                            wQ[t][k] = w * rho[k];
                        }
                    }
                }
            }
            std::vector<double> sT(alphas.size() * bs.size(), 0.0), sQ = sT;
            std::vector<double> inv(alphas.size());
            auto visit = [&](int a1, int a2, int aj, int b1, int b2, int bj) {
                const double ra = g.R(aj), rb = g.R(bj);
                const double d2 = sq(g.s(a1) - g.s(b1)) + sq(g.s(a2) - g.s(b2)) + sq(0.5 * (ra * ra - rb * rb));
                const double ld = 0.5 * std::log(d2);
                for (std::size_t u = 0; u < alphas.size(); ++u) {
                    inv[u] = std::exp(-alphas[u] * ld);
                }
                const auto ka = g.index(a1, a2, aj, 0), kb = g.index(b1, b2, bj, 0);
                for (std::size_t t = 0; t < bs.size(); ++t) {
                    const double dT = std::abs(wT[t][ka] - wT[t][kb]), dQ = std::abs(wQ[t][ka] - wQ[t][kb]);
                    for (std::size_t u = 0; u < alphas.size(); ++u) {
                        double &a = sT[u * bs.size() + t];
                        double &c = sQ[u * bs.size() + t];
                        a = std::max(a, dT * inv[u]);
                        c = std::max(c, dQ * inv[u]);
                    }
                }
            };
            const int st = std::max(1, base.coarse_stride), lr = base.local_radius;
            std::vector<std::array<int, 3>> anchors;
            for (int i1 = 0; i1 < g.ns; i1 += st) {
                for (int i2 = 0; i2 < g.ns; i2 += st) {
                    for (int j = 0; j <= g.nr; j += st) {
                        anchors.push_back({i1, i2, j});
                    }
                }
            }
            for (std::size_t x = 0; x < anchors.size(); ++x) {
                const auto &u = anchors[x];
                for (std::size_t y = x + 1; y < anchors.size(); ++y) {
                    visit(u[0], u[1], u[2], anchors[y][0], anchors[y][1], anchors[y][2]);
                }
                for (int a1 = -lr; a1 <= lr; ++a1) {
                    for (int a2 = -lr; a2 <= lr; ++a2) {
                        for (int aj = -lr; aj <= lr; ++aj) {
                            const int v0 = u[0] + a1, v1 = u[1] + a2, v2 = u[2] + aj;
                            if ((a1 == 0 && a2 == 0 && aj == 0) || v0 < 0 || v0 >= g.ns || v1 < 0 || v1 >= g.ns || v2 < 0 || v2 > g.nr) {
                                continue;
                            }
                            visit(u[0], u[1], u[2], v0, v1, v2);
                        }
                    }
                }
            }
            for (auto &rep : reps) {
                const std::size_t u = std::find(alphas.begin(), alphas.end(), rep.alpha) - alphas.begin();
                const std::size_t t = std::find(bs.begin(), bs.end(), 2.0 - rep.gamma1 - rep.gamma2) - bs.begin();
                holder_row row;
                row.family = fam.name;
                row.lambda = lam;
                row.seminorm_T = sT[u * bs.size() + t];
                row.seminorm_rho = sQ[u * bs.size() + t];
                row.ratio = row.seminorm_rho > 0 ? row.seminorm_T / row.seminorm_rho : std::nan("");
                rep.rows.push_back(row);
            }
        }
    }
    auto slope = [](const std::vector<double> &x, const std::vector<double> &y) {
        const double n = static_cast<double>(x.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sx += x[i];
            sy += y[i];
            sxx += x[i] * x[i];
            sxy += x[i] * y[i];
        }
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    for (auto &rep : reps) {
        rep.max_spread = 0;
        rep.expected_exponent = 1.0 - 0.5 * (rep.gamma1 + rep.gamma2) - rep.alpha;
        rep.worst_exponent_err = 0;
        for (const auto &fam : base.family) {
            double lo = INFINITY, hi = 0;
            std::vector<double> ll, lt, lq;
            for (const auto &row : rep.rows) {
                if (row.family == fam.name && std::isfinite(row.ratio)) {
                    lo = std::min(lo, row.ratio);
                    hi = std::max(hi, row.ratio);
                    ll.push_back(std::log(row.lambda));
                    lt.push_back(std::log(row.seminorm_T));
                    lq.push_back(std::log(row.seminorm_rho));
                }
            }
            if (ll.size() >= 2) {
                rep.worst_exponent_err = std::max({rep.worst_exponent_err, std::abs(slope(ll, lt) - rep.expected_exponent),
                                                   std::abs(slope(ll, lq) - rep.expected_exponent)});
            }
            if (hi > 0) {
                rep.max_spread = std::max(rep.max_spread, hi / lo - 1.0);
            }
        }
    }
    return reps;
}

holder_report holder_ratio_check(const holder_options &opt)
{
    return holder_ratio_sweep({opt.alpha}, {{opt.gamma1, opt.gamma2}}, opt).front();
}

std::vector<convergence_case> default_convergence_cases()
{
    return {
        {2, -1.0, 0.5, true},  {2, -2.0, 0.5, true},  {3, -3.0, 0.5, true},
        {2, -4.0, 0.5, false}, {3, -2.5, 0.0, false}, {4, -2.0, 0.0, false},
    };
}

convergence_result integral_convergence_check(const convergence_case &cs, int shells)
{
    if (cs.n < 2 || shells < 3) {
        throw std::invalid_argument("integral_convergence_check: need n >= 2 and at least 3 shells");
    }
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    const int q = cs.n - 2; // dimension of y
    const double area_y = q == 0 ? 1.0 : 2.0 * std::pow(pi, 0.5 * q) / std::tgamma(0.5 * q);

    // With u = |x|^2 = rho cos(phi), |y| = rho sin(phi) the shell {a < rho < b} is a
    // rectangle and dx dy carries rho^{n+k+c-2} cos^c(phi) sin^{n-3}(phi) / 2 in total
    using ts = boost::math::quadrature::tanh_sinh<double>;
    auto shell = [&](double a, double b) {
        if (q == 0) {
            auto f = [&](double r1) { return std::pow(r1, 2 * cs.k + 2 * cs.c + 1); };
            return 2 * pi * gk::integrate(f, std::sqrt(a), std::sqrt(b), 15, 1e-12);
        }
        ts angular;
        auto inner = [&](double rho) {
            auto g = [&](double phi) {
                return 0.5 * std::pow(rho, cs.k + cs.c + q) * std::pow(std::cos(phi), cs.c) * std::pow(std::sin(phi), q - 1);
            };
            return angular.integrate(g, 0.0, 0.5 * pi, 1e-12);
        };
        return 2 * pi * area_y * gk::integrate(inner, a, b, 15, 1e-11);
    };

    convergence_result res;
    res.input = cs;
    const double e = cs.n + cs.k + cs.c - 1.0;
    const bool finite_pred = cs.inside ? e > 0 : e < 0;
    res.predicted = finite_pred ? convergence_verdict::finite : convergence_verdict::divergent;
    for (int j = 0; j < shells; ++j) {
        const double a = cs.inside ? std::ldexp(1.0, -j - 1) : std::ldexp(1.0, j);
        res.shells.push_back(shell(a, 2 * a));
    }
    const std::size_t n = res.shells.size();
    res.ratio = res.shells[n - 1] / res.shells[n - 2];
    const double prev = res.shells[n - 2] / res.shells[n - 3];
    double sum = 0;
    for (double v : res.shells) {
        sum += v;
    }
    // geometric tail (Richardson on the shell sums) when the ratios have settled below 1
    if (res.ratio < 1.0 - 1e-6 && std::abs(res.ratio - prev) < 1e-3) {
        res.numeric = convergence_verdict::finite;
        res.partial = sum + res.shells[n - 1] * res.ratio / (1.0 - res.ratio);
    } else {
        res.numeric = convergence_verdict::divergent;
        res.partial = INFINITY;
    }
    return res;
}

mode_agreement mode_agreement_check(int kmax, double tol, int per_axis, int m)
{
    mode_agreement out;
    out.kmax = kmax;
    green_options opt;
    opt.m = m;
    opt.tol = tol;
    auto lin = [per_axis](double a, double b, int i) { return per_axis == 1 ? a : a + (b - a) * i / (per_axis - 1); };
    for (int a = 0; a < per_axis; ++a) {
        for (int b = 0; b < per_axis; ++b) {
            for (int c = 0; c < per_axis; ++c) {
                const double rp = lin(0.5, 1.5, a);
                const double r = lin(0.1, 0.5, b) * rp;
                const double Rs = lin(0.5, 2.0, c);
                const auto A = mode_integrals(kmax, r, rp, Rs, green_rep::hankel_in_r, opt);
                const auto B = mode_integrals(kmax, r, rp, Rs, green_rep::fourier_in_s, opt);
                for (int k = 0; k <= kmax; ++k) {
                    const double rel = std::abs(A[k] - B[k]) / std::abs(B[k]);
                    if (!(rel <= out.worst_rel)) {
                        out.worst_rel = rel;
                        out.worst_k = k;
                        out.worst_r = r;
                        out.worst_rp = rp;
                        out.worst_Rs = Rs;
                    }
                }
                ++out.samples;
            }
        }
    }
    return out;
}

} // namespace dcma
