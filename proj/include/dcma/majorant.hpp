#ifndef DCMA_MAJORANT_HPP
#define DCMA_MAJORANT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <gmpxx.h>
#include <json.hpp>

#include <dcma/powerseries.hpp>
#include <dcma/rng.hpp>

namespace dcma
{

namespace detail
{

template <typename S>
S ratio(long p, long q)
{
    if constexpr (std::is_same_v<S, mpq_class>) {
        return mpq_class(p, q);
    } else {
        return static_cast<S>(p) / static_cast<S>(q);
    }
}

inline double to_double(double x)
{
    return x;
}
inline double to_double(const mpq_class &x)
{
    return x.get_d();
}

} // namespace detail

// delta_k = -(c + 3m/4)(k+1) - (m/4)(k+1)^2
template <typename S>
std::vector<S> delta_seq(const S &c, const S &m, int k_max)
{
    std::vector<S> d(k_max + 1);
    for (int k = 0; k <= k_max; ++k) {
        const S kp = S(k + 1);
        d[k] = -(c + S(3) * m / S(4)) * kp - m / S(4) * kp * kp;
    }
    return d;
}

// max_k |d_{k+1} - (2 + 1/(k+1)) d_k + d_{k-1} - (c + (k+2) m / 4)|
template <typename S>
S delta_recurrence_residual(const std::vector<S> &d, const S &c, const S &m)
{
    S worst = S(0);
    for (std::size_t k = 1; k + 1 < d.size(); ++k) {
        const S lhs = d[k + 1] - (S(2) + detail::ratio<S>(1, static_cast<long>(k + 1))) * d[k] + d[k - 1];
        S r = lhs - (c + S(static_cast<long>(k + 2)) * m / S(4));
        if (r < 0) {
            r = -r;
        }
        worst = std::max(worst, r);
    }
    return worst;
}

// theta_{k+1} = (2 + 1/(k+1)) theta_k - theta_{k-1}
template <typename S>
std::vector<S> theta_seq(const S &init0, const S &init1, int k_max)
{
    std::vector<S> t(std::max(k_max + 1, 2));
    t[0] = init0;
    t[1] = init1;
    for (int k = 1; k + 1 <= k_max; ++k) {
        t[k + 1] = (S(2) + detail::ratio<S>(1, k + 1)) * t[k] - t[k - 1];
    }
    t.resize(k_max + 1);
    return t;
}

// Comparison step: if b_k - a_k > b_{k-1} - a_{k-1} > 0 then
// ((2+1/(k+1)) b_k - b_{k-1}) - ((2+1/(k+1)) a_k - a_{k-1}) > b_k - a_k.
inline bool comparison_step_holds(double a_prev, double a_k, double b_prev, double b_k, int k)
{
    const double q = 2.0 + 1.0 / (k + 1);
    return (q * b_k - b_prev) - (q * a_k - a_prev) > b_k - a_k;
}

inline std::pair<double, double> u_roots(int k0)
{
    const double s = std::sqrt(4.0 * k0 + 5.0);
    return {1.0 + (1.0 + s) / (2.0 * (k0 + 1)), 1.0 + (1.0 - s) / (2.0 * (k0 + 1))};
}

inline double u_closed_form(int k0, double a, double b, int j)
{
    const auto [rp, rm] = u_roots(k0);
    return a * std::pow(rp, j) + b * std::pow(rm, j);
}

// (a, b) with u_{k0-1} = v0 and u_{k0} = v1.
inline std::pair<double, double> u_coefficients(int k0, double v0, double v1)
{
    const auto [rp, rm] = u_roots(k0);
    const double p0 = std::pow(rp, k0 - 1), m0 = std::pow(rm, k0 - 1);
    const double p1 = p0 * rp, m1 = m0 * rm;
    const double det = p0 * m1 - p1 * m0;
    return {(v0 * m1 - v1 * m0) / det, (p0 * v1 - p1 * v0) / det};
}

struct majorant_column {
    int l = 0; // = m + 1
    std::vector<double> A, alpha, beta, gamma, delta, eta, theta, u;
    double empirical_root = 0.0; // max over tail of A_{k,l}^{1/(k+l)}
    double growth_exponent = 0.0; // s in log A ~ a + b k + s k log k
    std::vector<std::string> failures;
};

struct majorant_certificate {
    bool success = false;
    double R = 0.0;
    double c = 0.0;
    int k0 = 1;
    int N = 0;
    double empirical_root = 0.0;
    double c0_fit = 0.0;
    std::string failure;
    std::vector<majorant_column> columns;
};

struct certify_options {
    double R_min = 0.05;
    double factor = 1.05;
    double R_max = 1e3;
    double rel_tol = 1e-12;
    double super_geometric_threshold = 0.5;
};

// A_{k,l}: largest coefficient modulus of B_{k,l}.
template <typename T>
std::vector<std::vector<double>> coefficient_moduli(const truncated_bi_series<T> &B)
{
    std::vector<std::vector<double>> A(B.K() + 1, std::vector<double>(B.L() + 1));
    for (int k = 0; k <= B.K(); ++k) {
        for (int l = 0; l <= B.L(); ++l) {
            A[k][l] = B(k, l).max_abs();
        }
    }
    return A;
}

namespace detail
{

inline int tail_start(int K)
{
    return K - (K + 1) / 2 + 1;
}

// Least-squares s in log A_k ~ a + b k + s k log k over the tail; 0 without
// three nonzero points.
inline double growth_exponent(const std::vector<double> &A)
{
    const int K = static_cast<int>(A.size()) - 1;
    std::vector<std::array<double, 3>> rows;
    std::vector<double> rhs;
    for (int k = std::max(1, tail_start(K)); k <= K; ++k) {
        if (A[k] > 0.0 && std::isfinite(A[k])) {
            rows.push_back({1.0, double(k), k * std::log(double(k))});
            rhs.push_back(std::log(A[k]));
        }
    }
    if (rows.size() < 3) {
        return 0.0;
    }
    double M[3][3] = {}, v[3] = {};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            v[a] += rows[i][a] * rhs[i];
            for (int b = 0; b < 3; ++b) {
                M[a][b] += rows[i][a] * rows[i][b];
            }
        }
    }
    // Cramer
    auto det3 = [](double m[3][3]) {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
               + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double D = det3(M);
    if (std::abs(D) < 1e-300) {
        return 0.0;
    }
    double Ms[3][3];
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            Ms[a][b] = b == 2 ? v[a] : M[a][b];
        }
    }
    return det3(Ms) / D;
}

inline bool leq(double a, double b, double tol)
{
    return a <= b + tol * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace detail

// Builds the sequences of one column l = m+1 at radius R and checks each link.
inline majorant_column majorant_chain(const std::vector<std::vector<double>> &A, int l, double c, int k0, double R,
                                      const certify_options &opt = {})
{
    const int K = static_cast<int>(A.size()) - 1;
    const int m = l - 1;
    const double tol = opt.rel_tol;
    majorant_column col;
    col.l = l;
    col.A.resize(K + 1);
    col.alpha.resize(K + 1);
    for (int k = 0; k <= K; ++k) {
        col.A[k] = A[k][l];
        col.alpha[k] = A[k][l] / std::pow(R, k + l);
    }
    col.beta.resize(K + 1);
    col.gamma.resize(K + 1);
    double s = 0.0;
    for (int k = 0; k <= K; ++k) {
        s += col.alpha[k];
        col.beta[k] = s;
    }
    s = 0.0;
    for (int k = 0; k <= K; ++k) {
        s += col.beta[k];
        col.gamma[k] = s;
    }
    col.delta = delta_seq<double>(c, double(m), K);
    col.eta.resize(K + 1);
    for (int k = 0; k <= K; ++k) {
        col.eta[k] = col.gamma[k] - col.delta[k];
    }
    col.theta = theta_seq<double>(col.eta[0], K >= 1 ? col.eta[1] : col.eta[0], K);

    auto fail = [&](const std::string &what, int k) {
        if (col.failures.empty() || col.failures.back().rfind(what, 0) != 0) {
            col.failures.push_back(what + " at k=" + std::to_string(k));
        }
    };

    for (int k = 0; k <= K; ++k) {
        if (k + l >= 1 && !detail::leq(col.A[k], std::pow(R, k + l), tol)) {
            fail("hypothesis A<=R^(k+l)", k);
        }
    }
    for (int k = 0; k + 1 <= K; ++k) {
        double sum = 0.0;
        for (int p = 0; p <= k; ++p) {
            sum += double(k - p + 1) / (k + 1) * col.alpha[p];
        }
        const double bound = c * std::pow(R, k + m) + ((k + 2) * m / 4.0 + sum) * std::pow(R, k + m + 2);
        if (!detail::leq(col.alpha[k + 1] * std::pow(R, k + m + 2), bound, tol)) {
            fail("ak2ie", k);
        }
        double bsum = 0.0;
        for (int p = 0; p <= k; ++p) {
            bsum += col.beta[p];
        }
        if (!detail::leq(col.beta[k + 1] - col.beta[k], c + (k + 2) * m / 4.0 + bsum / (k + 1), tol)) {
            fail("bet-bet", k);
        }
        if (k >= 1) {
            const double lhs = col.gamma[k + 1] - (2.0 + 1.0 / (k + 1)) * col.gamma[k] + col.gamma[k - 1];
            if (!detail::leq(lhs, c + (k + 2) * m / 4.0, tol)) {
                fail("gamkn", k);
            }
        }
    }
    for (int k = 0; k <= K; ++k) {
        if (!detail::leq(col.eta[k], col.theta[k], tol)) {
            fail("eta<=theta", k);
        }
    }
    const int j0 = std::max(0, k0 - 1);
    if (k0 >= 1 && k0 <= K) {
        auto [a, b] = u_coefficients(k0, col.theta[k0 - 1], col.theta[k0]);
        col.u.assign(K + 1, 0.0);
        for (int k = j0; k <= K; ++k) {
            col.u[k] = u_closed_form(k0, a, b, k);
            if (!detail::leq(col.theta[k], col.u[k], 1e-9)) {
                fail("theta<=u", k);
            }
            if (!(col.gamma[k] >= 0.0) || !detail::leq(col.gamma[k], col.u[k] + std::abs(col.delta[k]), 1e-9)) {
                fail("gamanam", k);
            }
        }
    }
    for (int k = 0; k <= K; ++k) {
        const double g1 = k >= 1 ? col.gamma[k - 1] : 0.0, g2 = k >= 2 ? col.gamma[k - 2] : 0.0;
        if (!detail::leq(std::abs(col.alpha[k] - (col.gamma[k] - 2.0 * g1 + g2)), 0.0, 1e-9 * (1.0 + col.gamma[k]))) {
            fail("alfagama", k);
        }
    }
    for (int k = detail::tail_start(K); k <= K; ++k) {
        if (k + l >= 1 && col.A[k] > 0.0) {
            col.empirical_root = std::max(col.empirical_root, std::pow(col.A[k], 1.0 / (k + l)));
        }
    }
    col.growth_exponent = detail::growth_exponent(col.A);
    if (col.growth_exponent > opt.super_geometric_threshold) {
        fail("super-geometric growth", K);
    }
    return col;
}

inline majorant_certificate check_radius(const std::vector<std::vector<double>> &A, double c, int k0, double R,
                                         const certify_options &opt = {})
{
    majorant_certificate cert;
    cert.R = R;
    cert.c = c;
    cert.k0 = k0;
    cert.N = static_cast<int>(A.size());
    const int L = static_cast<int>(A[0].size()) - 1;
    cert.success = true;
    for (int l = 1; l <= L; ++l) {
        cert.columns.push_back(majorant_chain(A, l, c, k0, R, opt));
        const auto &col = cert.columns.back();
        cert.empirical_root = std::max(cert.empirical_root, col.empirical_root);
        if (!col.failures.empty()) {
            cert.success = false;
            if (cert.failure.empty()) {
                cert.failure = "l=" + std::to_string(l) + ": " + col.failures.front();
            }
        }
    }
    // Hypothesis also covers the boundary row l = 0.
    for (int k = 1; k < static_cast<int>(A.size()); ++k) {
        if (!detail::leq(A[k][0], std::pow(R, k), opt.rel_tol)) {
            cert.success = false;
            if (cert.failure.empty()) {
                cert.failure = "l=0: hypothesis A<=R^(k+l) at k=" + std::to_string(k);
            }
        }
    }
    if (cert.success && cert.empirical_root > R) {
        cert.success = false;
        cert.failure = "empirical root exceeds R";
    }
    double c0 = 0.0;
    for (const auto &col : cert.columns) {
        const int K = static_cast<int>(col.alpha.size()) - 1;
        for (int k = detail::tail_start(K); k <= K; ++k) {
            if (col.alpha[k] > 0.0) {
                c0 = std::max(c0, (std::pow(col.alpha[k], 1.0 / (k + col.l + 1)) - 1.0) * std::sqrt(k0 + 1.0));
            }
        }
    }
    cert.c0_fit = c0;
    return cert;
}

// c default: 1/|det G0(0)| bounds 1/((k+1)(m+1) det G0) at the base point.
template <typename T>
double default_c(const truncated_bi_series<T> &B)
{
    const auto &B00 = B(0, 0);
    const int nw = B00.nw();
    if (nw == 0) {
        return 1.0;
    }
    Eigen::MatrixXcd g0(nw, nw);
    for (int i = 0; i < nw; ++i) {
        for (int j = 0; j < nw; ++j) {
            std::vector<int> e(2 * nw, 0);
            ++e[i];
            ++e[nw + j];
            g0(i, j) = coeff_traits<T>::to_cplx(B00.coeff(B00.pack(e)));
        }
    }
    const double d = std::abs(g0.determinant());
    return d > 0.0 ? 1.0 / d : INFINITY;
}

// Smallest grid radius whose chain closes.
inline majorant_certificate certify_moduli(const std::vector<std::vector<double>> &A, double c, int k0,
                                           const certify_options &opt = {})
{
    majorant_certificate last;
    for (double R = opt.R_min; R <= opt.R_max * (1.0 + 1e-12); R *= opt.factor) {
        auto cert = check_radius(A, c, k0, R, opt);
        if (cert.success) {
            return cert;
        }
        last = std::move(cert);
    }
    last.success = false;
    last.failure = "no radius up to R_max=" + std::to_string(opt.R_max) + " (" + last.failure + ")";
    return last;
}

template <typename T>
majorant_certificate certify(const truncated_bi_series<T> &B, double c, int k0, const certify_options &opt = {})
{
    return certify_moduli(coefficient_moduli(B), c, k0, opt);
}

inline std::string certificate_csv(const std::vector<std::vector<double>> &A)
{
    std::ostringstream os;
    os.precision(17);
    os << "k,l,abs_B,root\n";
    for (std::size_t k = 0; k < A.size(); ++k) {
        for (std::size_t l = 0; l < A[k].size(); ++l) {
            const double root = k + l == 0 ? 0.0 : std::pow(A[k][l], 1.0 / double(k + l));
            os << k << ',' << l << ',' << A[k][l] << ',' << root << '\n';
        }
    }
    return os.str();
}

inline nlohmann::json certificate_to_json(const majorant_certificate &c)
{
    nlohmann::json j;
    j["success"] = c.success;
    j["R"] = c.R;
    j["c"] = c.c;
    j["k0"] = c.k0;
    j["N"] = c.N;
    j["empirical_root"] = c.empirical_root;
    j["c0_fit"] = c.c0_fit;
    j["failure"] = c.failure;
    j["columns"] = nlohmann::json::array();
    for (const auto &col : c.columns) {
        j["columns"].push_back({{"l", col.l},
                                {"A", col.A},
                                {"alpha", col.alpha},
                                {"beta", col.beta},
                                {"gamma", col.gamma},
                                {"delta", col.delta},
                                {"eta", col.eta},
                                {"theta", col.theta},
                                {"u", col.u},
                                {"empirical_root", col.empirical_root},
                                {"growth_exponent", col.growth_exponent},
                                {"failures", col.failures}});
    }
    return j;
}

// Exact gamma sequence obeying the gamkn inequality with random slack; returns
// the largest k at which eta <= theta fails, or -1.
inline int eta_theta_comparison(std::uint64_t seed, int m, int k_max)
{
    counter_rng rng(seed, "eta_theta");
    auto rnd = [&](long den) { return mpq_class(static_cast<long>(rng() % 1000), den); };
    const mpq_class c = mpq_class(1) + rnd(100);
    std::vector<mpq_class> g(k_max + 1);
    g[0] = rnd(10);
    g[1] = g[0] + rnd(10);
    for (int k = 1; k + 1 <= k_max; ++k) {
        g[k + 1] = (mpq_class(2) + mpq_class(1, k + 1)) * g[k] - g[k - 1] + c + mpq_class(k + 2) * m / 4 - rnd(1000);
    }
    const auto d = delta_seq<mpq_class>(c, mpq_class(m), k_max);
    std::vector<mpq_class> eta(k_max + 1);
    for (int k = 0; k <= k_max; ++k) {
        eta[k] = g[k] - d[k];
    }
    const auto th = theta_seq<mpq_class>(eta[0], eta[1], k_max);
    int bad = -1;
    for (int k = 0; k <= k_max; ++k) {
        if (eta[k] > th[k]) {
            bad = k;
        }
    }
    return bad;
}

} // namespace dcma

#endif
