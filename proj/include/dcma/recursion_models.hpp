#ifndef DCMA_RECURSION_MODELS_HPP
#define DCMA_RECURSION_MODELS_HPP

#include <cmath>
#include <cstdint>

#include <dcma/recursion.hpp>
#include <dcma/rng.hpp>

namespace dcma
{

template <typename T>
struct local_problem {
    boundary_data<T> bd;
    rhs_jet<T> rhs;
    int K, L;
};

// B00 = |w|^2 (summed over the nw directions), no other boundary data.
template <typename T>
inline boundary_data<T> flat_boundary(int nw, int d, int K, int L)
{
    using tr = coeff_traits<T>;
    boundary_data<T> bd;
    bd.B00 = w_polynomial<T>(nw, d);
    for (int i = 0; i < nw; ++i) {
        std::vector<int> e(2 * nw, 0);
        e[i] = e[nw + i] = 1;
        bd.B00.add_term(bd.B00.pack(e), tr::from_int(1));
    }
    bd.Bk0.assign(K, w_polynomial<T>(nw, d));
    bd.B0l.assign(L, w_polynomial<T>(nw, d));
    return bd;
}

// Flat model: det G = |z|^2, solution |w|^2 + |z|^4/4.
template <typename T>
inline local_problem<T> flat_problem(int n, int K, int L, int d)
{
    local_problem<T> p{flat_boundary<T>(n - 1, d, K, L), {}, K, L};
    p.rhs.K = K - 1;
    p.rhs.L = L - 1;
    p.rhs.nw = n - 1;
    p.rhs.d = d;
    if (K >= 2 && L >= 2) {
        p.rhs.coeffs[{1, 1}] = w_polynomial<T>::constant(n - 1, d, coeff_traits<T>::from_int(1));
    }
    return p;
}

// Taylor data of |z|^2 exp(z + zbar + |w|^2), n = 2.
inline local_problem<cplx> exp_problem(int K, int L, int d)
{
    local_problem<cplx> p{flat_boundary<cplx>(1, d, K, L), {}, K, L};
    p.rhs.K = K - 1;
    p.rhs.L = L - 1;
    p.rhs.nw = 1;
    p.rhs.d = d;
    w_polynomial<cplx> e(1, d);
    double f = 1.0;
    for (int j = 0; 2 * j <= d; ++j) {
        if (j > 0) {
            f /= j;
        }
        e.add_term(e.pack({j, j}), cplx(f, 0.0));
    }
    auto fact = [](int m) { return std::tgamma(m + 1.0); };
    for (int k = 1; k <= K - 1; ++k) {
        for (int l = 1; l <= L - 1; ++l) {
            p.rhs.coeffs[{k, l}] = e.scaled(cplx(1.0 / (fact(k - 1) * fact(l - 1)), 0.0));
        }
    }
    return p;
}

// Flat boundary, det G = |z|^2 / ((1 - z/rho)(1 - zbar/rho)); the mixed
// coefficients grow like rho^{-(k+l)}.
template <typename T = cplx>
inline local_problem<T> geometric_problem(double rho, int K, int L)
{
    local_problem<T> p{flat_boundary<T>(1, 2, K, L), {}, K, L};
    p.rhs.K = K - 1;
    p.rhs.L = L - 1;
    p.rhs.nw = 1;
    p.rhs.d = 2;
    for (int k = 1; k <= K - 1; ++k) {
        for (int l = 1; l <= L - 1; ++l) {
            p.rhs.coeffs[{k, l}] = w_polynomial<T>::constant(1, 2, coeff_traits<T>::from_cplx(cplx(std::pow(rho, -(k + l - 2)), 0.0)));
        }
    }
    return p;
}

// Seeded random real instance with (det G)_{0,0} = 0. B_{1,0} is holomorphic
// in w, so the normal form at the base point is inherited by the solution.
inline local_problem<cplx> random_problem(std::uint64_t seed, int n, int K, int L, int d)
{
    const int nw = n - 1;
    counter_rng rng(seed, "random_problem");
    auto unit = [&] { return 2.0 * rng.uniform() - 1.0; };
    auto random_poly = [&](bool holomorphic, double scale) {
        w_polynomial<cplx> p(nw, d);
        for (int t = 0; t < 6; ++t) {
            std::vector<int> e(2 * nw, 0);
            const int deg = static_cast<int>(rng.uniform() * (d + 1));
            for (int j = 0; j < deg; ++j) {
                const int s = static_cast<int>(rng.uniform() * (holomorphic ? nw : 2 * nw));
                ++e[s];
            }
            p.add_term(p.pack(e), cplx(scale * unit(), scale * unit()));
        }
        return p;
    };

    local_problem<cplx> p{flat_boundary<cplx>(nw, d, K, L), {}, K, L};
    // real perturbation of |w|^2 of degree >= 3 keeps det G0(0) = 1
    {
        auto q = random_poly(false, 0.2);
        w_polynomial<cplx> hi(nw, d);
        for (const auto &[key, c] : q.terms()) {
            if (hi.key_degree(key) >= 3) {
                hi.add_term(key, c);
            }
        }
        p.bd.B00 += hi + hi.conj();
    }
    for (int k = 1; k <= K; ++k) {
        p.bd.Bk0[k - 1] = random_poly(k == 1, 0.5 / k);
    }
    for (int l = 1; l <= L; ++l) {
        p.bd.B0l[l - 1] = l <= K ? p.bd.Bk0[l - 1].conj() : random_poly(false, 0.5 / l);
    }
    p.rhs.K = K - 1;
    p.rhs.L = L - 1;
    p.rhs.nw = nw;
    p.rhs.d = d;
    for (int k = 0; k <= K - 1; ++k) {
        for (int l = k; l <= L - 1; ++l) {
            if (k == 0 && l == 0) {
                continue;
            }
            auto c = random_poly(false, std::pow(0.5, k + l));
            if (k == l) {
                c = (c + c.conj()).scaled(cplx(0.5, 0.0));
                if (k == 1) {
                    c.add_term(0, cplx(1.0, 0.0));
                }
            }
            p.rhs.coeffs[{k, l}] = c;
            if (l != k && l <= K - 1 && k <= L - 1) {
                p.rhs.coeffs[{l, k}] = c.conj();
            }
        }
    }
    return p;
}

} // namespace dcma

#endif
