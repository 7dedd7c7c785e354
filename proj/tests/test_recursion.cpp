#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include <dcma/recursion.hpp>
#include <dcma/recursion_models.hpp>

#include "test_util.hpp"

using namespace dcma;

namespace
{

using Q = qcplx;

template <typename T>
truncated_bi_series<T> flat_potential(int K, int d)
{
    truncated_bi_series<T> phi(K, K, 1, d);
    phi.at(0, 0) = w_polynomial<T>::monomial(1, d, {1, 1}, coeff_traits<T>::from_int(1));
    phi.at(2, 2) = w_polynomial<T>::constant(1, d, coeff_traits<T>::from_ratio(1, 4));
    phi.mark_real();
    return phi;
}

// Leibniz expansion over permutations.
template <typename T>
truncated_bi_series<T> leibniz_det(const metric_jet<T> &G)
{
    std::vector<int> perm(G.n);
    std::iota(perm.begin(), perm.end(), 0);
    const auto &g0 = G.g[0][0];
    truncated_bi_series<T> acc(g0.K(), g0.L(), g0.nw(), g0.d());
    do {
        int inv = 0;
        for (int i = 0; i < G.n; ++i) {
            for (int j = i + 1; j < G.n; ++j) {
                inv += perm[i] > perm[j];
            }
        }
        auto t = G.g[0][perm[0]];
        for (int i = 1; i < G.n; ++i) {
            t = series_mul(t, G.g[i][perm[i]]);
        }
        acc = inv % 2 == 0 ? series_add(acc, t) : series_sub(acc, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return acc;
}

template <typename T>
local_problem<Q> to_rational(const local_problem<T> &p)
{
    auto conv = [](const w_polynomial<cplx> &a) {
        w_polynomial<Q> b(a.nw(), a.max_degree());
        for (const auto &[k, c] : a.terms()) {
            b.add_term(k, coeff_traits<Q>::from_cplx(c));
        }
        return b;
    };
    local_problem<Q> q;
    q.K = p.K;
    q.L = p.L;
    q.bd.B00 = conv(p.bd.B00);
    for (const auto &b : p.bd.Bk0) {
        q.bd.Bk0.push_back(conv(b));
    }
    for (const auto &b : p.bd.B0l) {
        q.bd.B0l.push_back(conv(b));
    }
    q.rhs.K = p.rhs.K;
    q.rhs.L = p.rhs.L;
    q.rhs.nw = p.rhs.nw;
    q.rhs.d = p.rhs.d;
    for (const auto &[kl, c] : p.rhs.coeffs) {
        q.rhs.coeffs[kl] = conv(c);
    }
    return q;
}

} // namespace

TEST(recursion, jet_of_flat_potential)
{
    auto G = assemble_metric_jet(flat_potential<Q>(4, 4));
    EXPECT_EQ(G(0, 0)(0, 0), w_polynomial<Q>::constant(1, 4, Q(1)));
    EXPECT_EQ(G(1, 1)(1, 1), w_polynomial<Q>::constant(1, 4, Q(1)));
    EXPECT_TRUE(G(0, 1).is_zero());
    EXPECT_TRUE(G(1, 0).is_zero());

    truncated_bi_series<Q> id(3, 3, 1, 4);
    id.at(0, 0) = w_polynomial<Q>::monomial(1, 4, {1, 1}, Q(1));
    id.at(1, 1) = w_polynomial<Q>::constant(1, 4, Q(1));
    id.mark_real();
    auto I = assemble_metric_jet(id);
    EXPECT_EQ(I(0, 0)(0, 0).constant_term(), Q(1));
    EXPECT_EQ(I(1, 1)(0, 0).constant_term(), Q(1));
    EXPECT_TRUE(I(1, 1)(1, 1).is_zero());
    EXPECT_EQ(det_cofactor(I)(0, 0), w_polynomial<Q>::constant(1, 4, Q(1)));
}

TEST(recursion, jet_rejects_non_real)
{
    truncated_bi_series<Q> s(2, 2, 1, 2);
    s.at(1, 0) = w_polynomial<Q>::constant(1, 2, Q(1));
    EXPECT_THROW(assemble_metric_jet(s), std::invalid_argument);
}

TEST(recursion, jet_matches_finite_differences)
{
    // |w|^2 + |z|^4/4 + Re(w z^2 zbar)
    const int K = 4, d = 4;
    truncated_bi_series<cplx> phi(K, K, 1, d);
    phi.at(0, 0) = w_polynomial<cplx>::monomial(1, d, {1, 1}, 1.0);
    phi.at(2, 2) = w_polynomial<cplx>::constant(1, d, 0.25);
    phi.at(2, 1) = w_polynomial<cplx>::monomial(1, d, {1, 0}, 0.5);
    phi.at(1, 2) = w_polynomial<cplx>::monomial(1, d, {0, 1}, 0.5);
    phi.mark_real();
    auto G = assemble_metric_jet(phi);

    auto Phi = [](double x, double y, double u, double v) {
        cplx z(x, y), w(u, v);
        return std::norm(w) + std::pow(std::norm(z), 2) / 4.0 + (w * z * z * std::conj(z)).real();
    };
    const double h = 1e-4;
    // d_z d_wbar = (1/4)(d_x - i d_y)(d_u + i d_v)
    auto mixed = [&](double x, double y, double u, double v, int a, int b) {
        double p[4] = {x, y, u, v};
        auto f = [&](int da, int db) {
            double q[4] = {p[0], p[1], p[2], p[3]};
            q[a] += da * h;
            q[b] += db * h;
            return Phi(q[0], q[1], q[2], q[3]);
        };
        return (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * h * h);
    };
    const double pts[3][4] = {{0.3, -0.2, 0.1, 0.4}, {-0.5, 0.25, -0.3, 0.2}, {0.1, 0.1, 0.7, -0.6}};
    for (const auto &pt : pts) {
        const cplx fd = 0.25 * cplx(mixed(pt[0], pt[1], pt[2], pt[3], 0, 2) + mixed(pt[0], pt[1], pt[2], pt[3], 1, 3),
                                    mixed(pt[0], pt[1], pt[2], pt[3], 0, 3) - mixed(pt[0], pt[1], pt[2], pt[3], 1, 2));
        const cplx jet = G(1, 0).eval(cplx(pt[0], pt[1]), {cplx(pt[2], pt[3])});
        EXPECT_NEAR(std::abs(fd - jet), 0.0, 1e-6);
    }
    // d_z d_wbar of Re(w z^2 zbar) = zbar^2 / 2
    EXPECT_EQ(G(1, 0)(0, 2).constant_term(), cplx(0.5, 0.0));
    EXPECT_EQ(G(0, 1)(2, 0).constant_term(), cplx(0.5, 0.0));
}

TEST(recursion, det_examples)
{
    metric_jet<Q> G;
    G.n = 2;
    truncated_bi_series<Q> one(2, 2, 1, 2), zz(2, 2, 1, 2), zero(2, 2, 1, 2);
    one.at(0, 0) = w_polynomial<Q>::constant(1, 2, Q(1));
    zz.at(1, 1) = w_polynomial<Q>::constant(1, 2, Q(1));
    G.g = {{one, zero}, {zero, zz}};
    EXPECT_EQ(det_cofactor(G), zz);
    G.g = {{one, zero}, {zero, one}};
    EXPECT_EQ(det_cofactor(G), one);
}

TEST(recursion, det_matches_leibniz)
{
    std::mt19937_64 rng(77);
    for (int it = 0; it < 4; ++it) {
        metric_jet<Q> G;
        G.n = 3;
        G.g.assign(3, std::vector<truncated_bi_series<Q>>(3));
        for (int i = 0; i < 3; ++i) {
            for (int j = i; j < 3; ++j) {
                auto s = test::random_series<Q>(rng, 2, 2, 2, 3, 2);
                if (i == j) {
                    s = series_add(s, s.conj());
                }
                G.g[i][j] = s;
                G.g[j][i] = s.conj();
            }
        }
        EXPECT_EQ(det_cofactor(G), leibniz_det(G));
    }
}

TEST(recursion, flat_model_rational)
{
    auto p = flat_problem<Q>(2, 6, 6, 4);
    auto phi = solve_recursion(p.bd, p.rhs, 6, 6);
    for (int k = 1; k <= 6; ++k) {
        for (int l = 1; l <= 6; ++l) {
            if (k == 2 && l == 2) {
                EXPECT_EQ(phi(k, l), w_polynomial<Q>::constant(1, 4, Q(mpq_class(1, 4))));
            } else {
                EXPECT_TRUE(phi(k, l).is_zero()) << k << "," << l;
            }
        }
    }
    EXPECT_EQ(residual_check(phi, p.rhs), 0.0);
    EXPECT_TRUE(phi.reality_flag());
}

TEST(recursion, flat_model_float)
{
    auto p = flat_problem<cplx>(2, 6, 6, 4);
    auto phi = solve_recursion(p.bd, p.rhs, 6, 6);
    EXPECT_NEAR(phi(2, 2).constant_term().real(), 0.25, 1e-15);
    EXPECT_LE(residual_check(phi, p.rhs), 1e-12);
}

TEST(recursion, flat_model_n3)
{
    auto p = flat_problem<Q>(3, 4, 4, 2);
    auto phi = solve_recursion(p.bd, p.rhs, 4, 4);
    EXPECT_EQ(phi(2, 2).constant_term(), Q(mpq_class(1, 4)));
    EXPECT_EQ(residual_check(phi, p.rhs), 0.0);
}

TEST(recursion, exp_rhs_recomposes)
{
    auto p = exp_problem(5, 5, 4);
    auto phi = solve_recursion(p.bd, p.rhs, 5, 5);
    EXPECT_LE(residual_check(phi, p.rhs), 1e-10);
}

TEST(recursion, random_suite_float)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto p = random_problem(seed, 2, 5, 5, 4);
        auto phi = solve_recursion(p.bd, p.rhs, 5, 5);
        EXPECT_LE(residual_check(phi, p.rhs), 1e-10) << seed;
        EXPECT_TRUE(phi(1, 1).is_zero()) << seed;
        for (const auto &c : normal_form_check(phi, 1e-12)) {
            if (c.name == "B_{1,1}(0)=0" || c.name == "(B_{1,0})_{wbar_k}(0)=0") {
                EXPECT_TRUE(c.pass) << c.name;
            }
        }
    }
}

TEST(recursion, random_suite_rational_exact)
{
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto p = to_rational(random_problem(seed, 2, 3, 3, 3));
        auto phi = solve_recursion(p.bd, p.rhs, 3, 3);
        EXPECT_EQ(residual_check(phi, p.rhs), 0.0);
        EXPECT_TRUE(phi.is_real());
    }
}

TEST(recursion, random_n3)
{
    auto p = random_problem(5, 3, 3, 3, 3);
    auto phi = solve_recursion(p.bd, p.rhs, 3, 3);
    EXPECT_LE(residual_check(phi, p.rhs), 1e-10);
}

TEST(recursion, boundary_preserved_and_deterministic)
{
    auto p = random_problem(4, 2, 4, 4, 4);
    auto a = solve_recursion(p.bd, p.rhs, 4, 4);
    auto b = solve_recursion(p.bd, p.rhs, 4, 4);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a(0, 0), p.bd.B00);
    for (int k = 1; k <= 4; ++k) {
        EXPECT_EQ(a(k, 0), p.bd.Bk0[k - 1]);
        EXPECT_EQ(a(0, k), p.bd.B0l[k - 1]);
    }
}

TEST(recursion, leading_update_matches_when_tangential_block_is_constant)
{
    // linear boundary data and constant rhs keep every mixed cell constant
    const int K = 4, d = 2;
    auto bd = flat_boundary<Q>(1, d, K, K);
    bd.Bk0[0] = w_polynomial<Q>::monomial(1, d, {0, 1}, Q(mpq_class(1, 3), mpq_class(1, 2)))
                + w_polynomial<Q>::monomial(1, d, {1, 0}, Q(2));
    bd.B0l[0] = bd.Bk0[0].conj();
    bd.Bk0[1] = w_polynomial<Q>::monomial(1, d, {0, 1}, Q(-1));
    bd.B0l[1] = bd.Bk0[1].conj();
    rhs_jet<Q> rhs{K - 1, K - 1, 1, d, {}};
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < K; ++l) {
            rhs.coeffs[{k, l}] = w_polynomial<Q>::constant(1, d, Q(mpq_class(1, 1 + k + 2 * l)));
        }
    }
    auto phi = solve_recursion(bd, rhs, K, K);
    EXPECT_EQ(residual_check(phi, rhs), 0.0);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < K; ++l) {
            EXPECT_EQ(phi(k + 1, l + 1), bkl_leading_update(phi, rhs, k, l)) << k << "," << l;
        }
    }
}

TEST(recursion, errors)
{
    auto p = flat_problem<Q>(2, 4, 4, 4);
    auto bad = p.bd;
    bad.B00 = w_polynomial<Q>::monomial(1, 4, {2, 2}, Q(1));
    EXPECT_THROW(solve_recursion(bad, p.rhs, 4, 4), degenerate_metric_error);
    EXPECT_THROW(solve_recursion(p.bd, p.rhs, 6, 6), order_error);
}

TEST(recursion, residual_detects_corruption)
{
    auto p = flat_problem<Q>(2, 4, 4, 2);
    auto phi = solve_recursion(p.bd, p.rhs, 4, 4);
    phi.at(2, 2) += w_polynomial<Q>::constant(1, 2, Q(1));
    auto t = residual_table(phi, p.rhs);
    EXPECT_GE(t[1][1], 1.0);
}

TEST(recursion, normal_form)
{
    auto flat = flat_potential<Q>(3, 2);
    for (const auto &c : normal_form_check(flat)) {
        EXPECT_TRUE(c.pass) << c.name;
    }
    flat.at(1, 1) = w_polynomial<Q>::constant(1, 2, Q(1));
    auto r = normal_form_check(flat);
    EXPECT_FALSE(r[1].pass);
    EXPECT_DOUBLE_EQ(r[1].magnitude, 1.0);
}

TEST(recursion, positivity)
{
    auto G = assemble_metric_jet(flat_potential<cplx>(3, 2));
    auto rep = positivity_scan(G, {0.1, 0.5}, {{cplx(0.0, 0.0)}, {cplx(0.3, -0.1)}});
    EXPECT_NEAR(rep.min_tangential_eigenvalue, 1.0, 1e-14);
    EXPECT_NEAR(rep.min_full_eigenvalue, 0.01, 1e-14);
    EXPECT_NEAR(jet_min_eigenvalue(G, cplx(0.0, 0.0), {cplx(0.2, 0.0)}), 0.0, 1e-15);
    EXPECT_THROW(positivity_scan(G, {0.0}, {{cplx(0.0, 0.0)}}), std::invalid_argument);

    auto p = exp_problem(5, 5, 4);
    auto phi = solve_recursion(p.bd, p.rhs, 5, 5);
    auto rep2 = positivity_scan(assemble_metric_jet(phi), {0.05}, {{cplx(0.0, 0.0)}, {cplx(0.05, 0.02)}});
    EXPECT_GT(rep2.min_full_eigenvalue, 0.0);
    EXPECT_GT(rep2.min_tangential_eigenvalue, 0.0);
}
