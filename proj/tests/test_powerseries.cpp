#include <random>

#include <gtest/gtest.h>

#include <dcma/powerseries.hpp>
#include <dcma/series_json.hpp>

#include "test_util.hpp"

using namespace dcma;

namespace
{

using Q = qcplx;
using S = truncated_bi_series<Q>;
using P = w_polynomial<Q>;

S mono_series(int K, int L, int nw, int d, int k, int l, std::vector<int> e, long c = 1)
{
    S s(K, L, nw, d);
    s.at(k, l) = P::monomial(nw, d, e, Q(c));
    return s;
}

} // namespace

TEST(powerseries, add_examples)
{
    auto one = mono_series(2, 2, 1, 2, 0, 0, {0, 0});
    auto z = mono_series(2, 2, 1, 2, 1, 0, {0, 0});
    auto zb = mono_series(2, 2, 1, 2, 0, 1, {0, 0});
    auto r = series_add(series_add(one, z), zb);
    EXPECT_EQ(r(0, 0).constant_term(), Q(1));
    EXPECT_EQ(r(1, 0).constant_term(), Q(1));
    EXPECT_EQ(r(0, 1).constant_term(), Q(1));
    EXPECT_TRUE(r(1, 1).is_zero());

    S zero(2, 2, 1, 2);
    EXPECT_EQ(series_add(r, zero), r);

    auto wz = mono_series(2, 2, 1, 2, 1, 0, {1, 0});
    auto mwz = mono_series(2, 2, 1, 2, 1, 0, {1, 0}, -1);
    EXPECT_TRUE(series_add(wz, mwz).is_zero());
}

TEST(powerseries, shape_mismatch_rejected)
{
    S a(2, 2, 1, 2), b(2, 3, 1, 2), c(2, 2, 1, 3);
    EXPECT_THROW(series_add(a, b), std::invalid_argument);
    EXPECT_THROW(series_mul(a, c), std::invalid_argument);
}

TEST(powerseries, mul_examples)
{
    auto one = mono_series(2, 2, 1, 2, 0, 0, {0, 0});
    auto z = mono_series(2, 2, 1, 2, 1, 0, {0, 0});
    auto zb = mono_series(2, 2, 1, 2, 0, 1, {0, 0});
    auto r = series_mul(series_add(one, z), series_add(one, zb));
    for (int k = 0; k <= 1; ++k) {
        for (int l = 0; l <= 1; ++l) {
            EXPECT_EQ(r(k, l).constant_term(), Q(1));
        }
    }
    EXPECT_TRUE(r(2, 2).is_zero());

    auto w = mono_series(1, 1, 1, 2, 0, 0, {1, 0});
    auto wb = mono_series(1, 1, 1, 2, 0, 0, {0, 1});
    auto ww = series_mul(w, wb);
    EXPECT_EQ(ww(0, 0), P::monomial(1, 2, {1, 1}, Q(1)));

    // z^2 * zbar^2 does not fit in (1, 1)
    S a(1, 1, 1, 2), b(1, 1, 1, 2);
    EXPECT_TRUE(series_mul(a, b).is_zero());
    auto z1 = mono_series(1, 1, 1, 2, 1, 0, {0, 0});
    auto z2 = series_mul(z1, z1);
    EXPECT_TRUE(z2.is_zero());
}

TEST(powerseries, w_degree_truncation)
{
    auto p = P::monomial(1, 2, {2, 0}, Q(1));
    auto q = P::monomial(1, 2, {0, 1}, Q(1));
    EXPECT_TRUE((p * q).is_zero());
}

TEST(powerseries, diff_examples)
{
    auto z2zb = mono_series(3, 3, 1, 3, 2, 1, {0, 0});
    auto d = series_diff(z2zb, variable::z());
    EXPECT_EQ(d(1, 1).constant_term(), Q(2));
    EXPECT_EQ(d.window().k, 2);

    auto w = mono_series(1, 1, 1, 3, 0, 0, {2, 1});
    auto dw = series_diff(w, variable::w(0));
    EXPECT_EQ(dw(0, 0), P::monomial(1, 3, {1, 1}, Q(2)));
    EXPECT_EQ(dw.window().d, 2);

    auto z = mono_series(2, 2, 1, 2, 1, 0, {0, 0});
    EXPECT_TRUE(series_diff(z, variable::zbar()).is_zero());
    EXPECT_THROW(series_diff(z, variable::w(1)), std::out_of_range);
}

TEST(powerseries, hol_split_examples)
{
    auto one = mono_series(2, 2, 1, 2, 0, 0, {0, 0});
    auto z = mono_series(2, 2, 1, 2, 1, 0, {0, 0});
    auto zb = mono_series(2, 2, 1, 2, 0, 1, {0, 0});
    auto zzb = mono_series(2, 2, 1, 2, 1, 1, {0, 0});
    auto s = hol_split(series_add(series_add(one, z), series_add(zb, zzb)));
    EXPECT_EQ(s.hol, series_add(one, z));
    EXPECT_EQ(s.antihol, zb);
    EXPECT_EQ(s.mixed, zzb);

    auto h = hol_split(series_add(one, z));
    EXPECT_TRUE(h.mixed.is_zero());
}

TEST(powerseries, hol_split_real_conjugation)
{
    std::mt19937_64 rng(11);
    for (int it = 0; it < 10; ++it) {
        auto a = test::random_real_series<Q>(rng, 3, 2, 3, 4);
        auto s = hol_split(a);
        S hol_nc = s.hol;
        hol_nc.at(0, 0) = hol_nc.zero_poly();
        EXPECT_EQ(s.antihol, hol_nc.conj());
        // reconstruction: hol + antihol + mixed
        EXPECT_EQ(series_add(series_add(s.hol, s.antihol), s.mixed), a);
    }
}

TEST(powerseries, inner_product_examples)
{
    auto g = identity_poly_matrix<Q>(1, 4);
    auto u = P::monomial(1, 4, {0, 1}, Q(1));
    auto v = P::monomial(1, 4, {1, 0}, Q(1));
    EXPECT_EQ(inner_product_D(u, v, g), P::constant(1, 4, Q(1)));

    auto c = P::constant(1, 4, Q(3));
    EXPECT_TRUE(inner_product_D(c, v, g).is_zero());
    EXPECT_TRUE(inner_product_D(u, c, g).is_zero());

    auto u2 = P::monomial(1, 4, {0, 2}, Q(1));
    auto v2 = P::monomial(1, 4, {2, 0}, Q(1));
    EXPECT_EQ(inner_product_D(u2, v2, g), P::monomial(1, 4, {1, 1}, Q(4)));

    auto bad = identity_poly_matrix<Q>(2, 4);
    bad[0][1] = P::monomial(2, 4, {1, 0, 0, 0}, Q(1));
    auto u3 = P::monomial(2, 4, {0, 0, 1, 0}, Q(1));
    EXPECT_THROW(inner_product_D(u3, u3, bad), std::invalid_argument);
}

TEST(powerseries, ring_axioms_exact)
{
    std::mt19937_64 rng(2024);
    for (int it = 0; it < 8; ++it) {
        auto a = test::random_series<Q>(rng, 3, 3, 1, 4, 3);
        auto b = test::random_series<Q>(rng, 3, 3, 1, 4, 3);
        auto c = test::random_series<Q>(rng, 3, 3, 1, 4, 3);
        EXPECT_EQ(series_mul(series_mul(a, b), c), series_mul(a, series_mul(b, c)));
        EXPECT_EQ(series_mul(a, series_add(b, c)), series_add(series_mul(a, b), series_mul(a, c)));
        EXPECT_EQ(series_mul(a, b), series_mul(b, a));
    }
}

TEST(powerseries, leibniz_in_window)
{
    std::mt19937_64 rng(5);
    const std::vector<variable> vars{variable::z(), variable::zbar(), variable::w(0), variable::wbar(1)};
    for (int it = 0; it < 6; ++it) {
        auto a = test::random_series<Q>(rng, 3, 3, 2, 4, 4);
        auto b = test::random_series<Q>(rng, 3, 3, 2, 4, 4);
        for (const auto &v : vars) {
            auto lhs = series_diff(series_mul(a, b), v);
            auto rhs = series_add(series_mul(series_diff(a, v), b), series_mul(a, series_diff(b, v)));
            const auto w = lhs.window();
            ASSERT_EQ(w, rhs.window());
            for (int k = 0; k <= w.k; ++k) {
                for (int l = 0; l <= w.l; ++l) {
                    EXPECT_EQ(lhs(k, l).truncated(w.d), rhs(k, l).truncated(w.d));
                }
            }
        }
    }
}

TEST(powerseries, reality_flag_propagation)
{
    std::mt19937_64 rng(9);
    auto a = test::random_real_series<Q>(rng, 3, 1, 4, 3);
    auto b = test::random_real_series<Q>(rng, 3, 1, 4, 3);
    auto s = series_add(a, b);
    EXPECT_TRUE(s.reality_flag());
    EXPECT_TRUE(s.is_real());
    auto m = series_mul(a, b);
    EXPECT_TRUE(m.reality_flag());
    EXPECT_TRUE(m.is_real());
    auto dd = series_diff2(a, variable::z(), variable::zbar());
    EXPECT_TRUE(dd.reality_flag());
    EXPECT_TRUE(dd.is_real());
    EXPECT_FALSE(series_diff(a, variable::z()).reality_flag());
}

TEST(powerseries, truncated_inverse_roundtrip)
{
    auto p = P::constant(1, 5, Q(2)) + P::monomial(1, 5, {1, 1}, Q(1)) + P::monomial(1, 5, {2, 0}, Q(mpq_class(1, 3)));
    auto inv = truncated_inverse(p);
    EXPECT_EQ(p * inv, P::constant(1, 5, Q(1)));
    EXPECT_THROW(truncated_inverse(P::monomial(1, 5, {1, 0}, Q(1))), std::domain_error);
}

TEST(powerseries, json_roundtrip)
{
    std::mt19937_64 rng(3);
    auto a = test::random_real_series<Q>(rng, 2, 1, 3, 3);
    auto j = series_to_json(a);
    EXPECT_EQ(series_from_json<Q>(j), a);
    EXPECT_TRUE(j["terms"][0]["re"].is_string());

    auto f = test::random_series<cplx>(rng, 2, 3, 2, 2, 3);
    auto jf = series_to_json(f);
    EXPECT_EQ(series_from_json<cplx>(jf), f);
    EXPECT_TRUE(jf["terms"][0]["re"].is_number());
}

TEST(powerseries, rational_literals)
{
    EXPECT_EQ(parse_rational("1/4"), mpq_class(1, 4));
    EXPECT_EQ(parse_rational("-0.125"), mpq_class(-1, 8));
    EXPECT_EQ(parse_rational("2.5e-1"), mpq_class(1, 4));
    EXPECT_EQ(parse_rational("3"), mpq_class(3));
}
