#include <cmath>

#include <gtest/gtest.h>

#include <dcma/estimates.hpp>

using namespace dcma;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace
{

const double pi = 3.14159265358979323846;

VectorXcd point(std::initializer_list<cdouble> v)
{
    VectorXcd p(v.size());
    int i = 0;
    for (auto x : v) {
        p[i++] = x;
    }
    return p;
}

kahler_model one_dim_quartic()
{
    kahler_model m;
    m.name = "quartic";
    m.n = 1;
    m.phi = herm_poly(1);
    m.phi.add(0.25, {2}, {2});
    return m;
}

// independent dense loop for the restricted contraction
double dense_loop(const kahler_jet &j, int ihi, int khi)
{
    const int n = j.n;
    const MatrixXcd inv = j.g.inverse();
    cdouble s = 0;
    for (int i = 0; i < ihi; ++i)
        for (int r = 0; r < ihi; ++r)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    for (int k = 0; k < khi; ++k)
                        for (int t = 0; t < khi; ++t)
                            s += inv(r, i) * inv(a, b) * inv(t, k) * j.t(i, a, k) * std::conj(j.t(r, b, t));
    return s.real();
}

} // namespace

TEST(estimates, polynomial_derivatives)
{
    const auto m = one_dim_quartic();
    const auto p = point({cdouble(0.3, -0.4)});
    EXPECT_NEAR(std::abs(m.phi.derivative(p, {2}, {1}) - std::conj(p[0])), 0.0, 1e-15);
    EXPECT_NEAR(m.phi.value(p), std::pow(0.25, 2) / 4, 1e-15);
    herm_poly h(2);
    h.add(cdouble(0.5, 0.2), {1, 0}, {0, 2});
    EXPECT_EQ(h.terms().size(), 2u);
    EXPECT_NEAR(std::abs(h.derivative(point({1.0, 1.0}), {0, 0}, {0, 0}).imag()), 0.0, 1e-15);
    EXPECT_THROW(h.add(1.0, {1}, {0, 1}), std::invalid_argument);
}

TEST(estimates, psi_closed_forms)
{
    // |z| = 1: phi_{z zbar z} = zbar, g = 1 + |z|^2, Psi = |z|^2 / (1 + |z|^2)^3
    const auto m = one_dim_quartic();
    EXPECT_NEAR(psi_compute(m.jet(point({1.0}))), 0.125, 1e-15);
    EXPECT_NEAR(psi_compute(m.jet(point({std::polar(1.0, 0.7)}))), 0.125, 1e-15);
    EXPECT_EQ(psi1_compute(m.jet(point({1.0}))), 0.0);

    kahler_model quad{"quadratic", 2, herm_poly(2), 0.0};
    quad.phi.add(0.7, {1, 0}, {1, 0});
    quad.phi.add(cdouble(0.1, 0.2), {1, 0}, {0, 1});
    EXPECT_EQ(psi_compute(quad.jet(point({0.3, 0.2}))), 0.0);

    kahler_model hol{"holomorphic", 2, herm_poly(2), 0.0};
    hol.phi.add(1.0, {3, 0}, {0, 0});
    hol.phi.add(0.5, {1, 2}, {0, 0});
    EXPECT_EQ(psi_compute(hol.jet(point({0.3, 0.2}))), 0.0);

    // flat degenerate model: Psi = |z|^-4
    const auto flat = flat_model(2);
    for (double r : {0.5, 0.1, 0.01}) {
        const auto j = flat.jet(point({0.2, r}));
        EXPECT_NEAR(psi_compute(j) * std::pow(r, 4), 1.0, 1e-12);
    }
}

TEST(estimates, psi_matches_dense_contraction)
{
    for (int n : {2, 3}) {
        for (int k = 0; k < 25; ++k) {
            const auto j = random_jet(n, 11, k);
            const double a = psi_compute(j);
            EXPECT_NEAR(psi_brute(j) / a, 1.0, 1e-12);
            EXPECT_NEAR(dense_loop(j, n, n) / a, 1.0, 1e-12);
        }
    }
}

TEST(estimates, psi_is_coordinate_invariant)
{
    for (int n : {2, 3}) {
        for (int k = 0; k < 10; ++k) {
            const auto j = random_jet(n, 5, k);
            const auto A = random_jet(n, 6, k).g; // any invertible matrix
            const auto t = transform_jet(j, A);
            EXPECT_NEAR(psi_compute(t) / psi_compute(j), 1.0, 1e-10);
            EXPECT_NEAR(second_order_quantity(t) / second_order_quantity(j), 1.0, 1e-10);
        }
    }
}

TEST(estimates, second_order_invariant_under_w_rotation)
{
    const auto m = sheared_model(3);
    const auto j = m.jet(point({cdouble(0.1, 0.2), -0.3, cdouble(0.2, 0.1)}));
    const double c = std::cos(0.4), s = std::sin(0.4);
    MatrixXcd U = MatrixXcd::Identity(3, 3);
    U(0, 0) = c;
    U(0, 1) = cdouble(0, s);
    U(1, 0) = cdouble(0, s);
    U(1, 1) = c;
    EXPECT_NEAR(second_order_quantity(transform_jet(j, U)), second_order_quantity(j), 1e-10);
    EXPECT_NEAR(second_order_quantity(j), 2 + 0.05 + std::norm(cdouble(0.6, 0.3)), 1e-12);
}

TEST(estimates, psi1_index_restrictions)
{
    // third derivatives only in the z slot
    const auto flat = flat_model(2);
    const auto j = flat.jet(point({0.1, 0.3}));
    EXPECT_EQ(psi1_compute(j, psi1_slots::last), 0.0);
    EXPECT_EQ(psi1_compute(j, psi1_slots::first), 0.0);
    EXPECT_GT(psi_compute(j), 0.0);

    const auto mixed = mixed_model(2);
    const auto jm = mixed.jet(point({cdouble(0.2, 0.1), cdouble(0.3, -0.2)}));
    const double p1 = psi1_compute(jm, psi1_slots::last);
    EXPECT_GT(p1, 0.0);
    EXPECT_NEAR(p1, dense_loop(jm, 2, 1), 1e-13 * p1);
    EXPECT_NEAR(psi1_compute(jm, psi1_slots::first), dense_loop(jm, 1, 2), 1e-13 * p1);

    // diagonal g: restricting the index set never increases the value
    for (int k = 0; k < 20; ++k) {
        auto r = random_jet(3, 3, k);
        r.g = MatrixXcd(r.g.diagonal().real().cwiseAbs().asDiagonal()) + MatrixXcd::Identity(3, 3);
        for (auto sl : {psi1_slots::last, psi1_slots::first}) {
            const double v = psi1_compute(r, sl);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, psi_compute(r) * (1 + 1e-14));
        }
    }
}

TEST(estimates, singular_metric_is_rejected)
{
    const auto flat = flat_model(2);
    const auto on_d = flat.jet(point({0.1, 0.0}));
    EXPECT_THROW(psi_compute(on_d), std::domain_error);
    EXPECT_THROW(frame_build(on_d), std::domain_error);
    auto bad = flat.jet(point({0.1, 0.2}));
    bad.g(0, 0) = -1;
    EXPECT_THROW(frame_build(bad), std::domain_error);
}

TEST(estimates, finite_difference_jets_agree)
{
    for (const auto &name : model_names()) {
        const auto m = model_by_name(name, 3);
        const auto p = point({cdouble(0.2, -0.1), cdouble(-0.3, 0.25), cdouble(0.15, 0.2)});
        const auto a = m.jet(p), b = jet_fd(m, p, 0.25);
        for (std::size_t i = 0; i < a.third.size(); ++i) {
            EXPECT_NEAR(std::abs(a.third[i] - b.third[i]), 0.0, 1e-9) << name << " " << i;
        }
        EXPECT_NEAR(psi_compute(b) / psi_compute(a), 1.0, 1e-7) << name;
    }
    EXPECT_THROW(model_by_name("nope", 2), std::invalid_argument);
}

TEST(estimates, frame_of_diagonal_metric)
{
    const auto m = flat_model(3);
    const auto f = frame_build(m.jet(point({0.1, 0.2, 0.4})));
    for (int k = 0; k < 3; ++k) {
        VectorXcd ek = VectorXcd::Zero(3);
        ek[k] = 1;
        EXPECT_NEAR((f.V[k] - ek).norm(), 0.0, 1e-14) << k;
    }
    for (double t : f.theta) {
        EXPECT_NEAR(t, pi / 2, 1e-14);
    }
    EXPECT_NEAR(f.norm2_gprime[0] * f.norm2_gprime[1] * f.norm2_gprime[2], 0.16, 1e-14);
    EXPECT_LT(f.v1vn_residual, 1e-14);
}

TEST(estimates, frame_identity_on_random_metrics)
{
    for (int k = 0; k < 100; ++k) {
        const int n = 2 + k % 2;
        const auto j = random_jet(n, 21, k);
        const auto f = frame_build(j);
        EXPECT_LT(f.v1vn_residual, 1e-8);
        for (int a = 0; a < n; ++a) {
            EXPECT_NEAR((f.V[a].transpose() * j.g_reg * f.V[a].conjugate())(0, 0).real(), 1.0, 1e-12);
            EXPECT_NEAR((f.e[a].transpose() * j.g_reg * f.e[a].conjugate())(0, 0).real(), 1.0, 1e-12);
            for (int b = a + 1; b < n; ++b) {
                EXPECT_NEAR(std::abs((f.V[a].transpose() * j.g * f.V[b].conjugate())(0, 0)), 0.0, 1e-12);
            }
        }
        // V_n is g-orthogonal to the tangential coordinate directions
        const VectorXcd h = j.g.transpose() * f.V[n - 1];
        for (int t = 0; t + 1 < n; ++t) {
            EXPECT_NEAR(std::abs(h[t]), 0.0, 1e-12);
        }
    }
}

TEST(estimates, mprime_bounds_on_models)
{
    for (int n : {2, 3}) {
        for (const auto &name : {"flat", "sheared", "weighted"}) {
            const auto m = model_by_name(name, n);
            std::vector<kahler_jet> jets;
            for (const auto &p : model_sample_points(n, 40)) {
                jets.push_back(m.jet(p));
            }
            const auto r = mprime_bounds_check(jets);
            EXPECT_GE(r.lower_margin, -1e-12) << name << n;
            EXPECT_GT(r.upper_margin, 0.0) << name << n;
            EXPECT_GE(r.sin_margin, -1e-12) << name << n;
            EXPECT_LT(r.worst_v1vn, 1e-10);
        }
    }
    // diagonal model: ratio 1 with M' = 1
    const auto flat = flat_model(2);
    const auto r = mprime_bounds_check({flat.jet(point({0.1, 0.5})), flat.jet(point({-0.2, 0.1}))});
    EXPECT_NEAR(r.max_ratio, 1.0, 1e-14);
    EXPECT_NEAR(r.mprime, 1.0, 1e-14);
}

TEST(estimates, mprime_lower_bound_follows_G)
{
    const auto m = sheared_model(2);
    std::vector<kahler_jet> jets, shifted;
    for (const auto &p : model_sample_points(2, 20)) {
        jets.push_back(m.jet(p));
        auto s = jets.back();
        s.S *= std::exp(-3.0); // same metric, G larger by 6
        s.G += 6.0;
        shifted.push_back(s);
    }
    const auto a = mprime_bounds_check(jets), b = mprime_bounds_check(shifted);
    EXPECT_NEAR(a.lower_margin, b.lower_margin, 1e-12);
    EXPECT_NEAR(b.max_ratio / a.max_ratio, std::exp(-6.0), 1e-12);
}

TEST(estimates, boundedness_on_flat_model)
{
    const auto m = flat_model(2);
    const auto psi = boundedness_profile(m, estimate_quantity::psi);
    EXPECT_EQ(psi.rows.size(), 21u);
    EXPECT_NEAR(psi.slope, 0.0, 1e-9);
    EXPECT_TRUE(psi.bounded);
    EXPECT_NEAR(psi.max_weighted, 1.0, 1e-9);
    for (auto sl : {psi1_slots::last, psi1_slots::first}) {
        boundedness_options o;
        o.slots = sl;
        EXPECT_TRUE(boundedness_profile(m, estimate_quantity::psi1, o).bounded);
    }
    const auto so = boundedness_profile(m, estimate_quantity::second_order);
    EXPECT_TRUE(so.bounded);
    EXPECT_NEAR(so.max_weighted, 1.01, 1e-12);
    boundedness_options fd;
    fd.finite_differences = true;
    EXPECT_NEAR(boundedness_profile(m, estimate_quantity::psi, fd).slope, 0.0, 1e-3);
    EXPECT_EQ(psi.csv().substr(0, 25), "radius,s2,value,weighted\n");
}

TEST(estimates, unweighted_growth_is_flagged)
{
    // only the weighted column is flat: Psi itself grows like |z|^-4
    const auto m = flat_model(2);
    const auto r = boundedness_profile(m, estimate_quantity::psi);
    const auto &a = r.rows[r.rows.size() - 11], &b = r.rows.back();
    EXPECT_NEAR(std::log(b.value / a.value) / std::log(b.radius / a.radius), -4.0, 1e-9);

    // mixed model: non-degenerate at z = 0 once w != 0, so Psi1 stays bounded
    boundedness_options o;
    o.slots = psi1_slots::first;
    EXPECT_TRUE(boundedness_profile(mixed_model(2), estimate_quantity::psi1, o).bounded);
}

TEST(estimates, second_order_inequality)
{
    const auto flat = flat_model(2);
    const auto a = second_order_inequality_check(flat);
    EXPECT_GT(a.points, 100);
    EXPECT_GE(a.min_margin, -1e-6);
    second_order_options flip;
    flip.flip_sign = true;
    EXPECT_LT(second_order_inequality_check(flat, flip).min_margin, -1.0);
    for (const auto &m : {sheared_model(2), flat_model(3), weighted_model(2, 3.0)}) {
        second_order_options o;
        o.C = 2.0;
        o.cutoff_width = 2.0;
        EXPECT_GE(second_order_inequality_check(m, o).min_margin, -1e-6) << m.name;
    }
    EXPECT_THROW(second_order_inequality_check(one_dim_quartic()), std::invalid_argument);
}

TEST(estimates, divisor_lower_bound)
{
    const double C = 0.8, L = 2.0;
    std::vector<std::pair<double, double>> ones, ext;
    for (int i = 0; i <= 4000; ++i) {
        const double t = L * i / 4000;
        ones.emplace_back(t, 1.0);
        ext.emplace_back(t, std::pow(1 + 0.5 * C * t, -2.0));
    }
    lower_bound_options o;
    o.C = C;
    o.diameter = L;
    const auto a = gprime_D_lower_bound({ones}, o);
    EXPECT_TRUE(a.asserted && a.holds);
    EXPECT_LE(a.bound, 1.0);
    EXPECT_EQ(a.min_u, 1.0);

    const auto b = gprime_D_lower_bound({ext}, o);
    EXPECT_TRUE(b.asserted && b.holds);
    EXPECT_NEAR(b.min_u / b.bound, 1.0, 1e-6);
    EXPECT_NEAR(b.measured_C / C, 1.0, 1e-6);
    o.C = -1; // measured constant
    EXPECT_NEAR(gprime_D_lower_bound({ext}, o).min_u / gprime_D_lower_bound({ext}, o).bound, 1.0, 1e-6);
    o.C = C;
    // the square-root form is not implied: the extremal curve goes below it
    EXPECT_LT(b.min_u, 1 / std::sqrt(1 + 0.5 * C * L));

    lower_bound_options tight = o;
    tight.C = 0.5 * C;
    const auto c = gprime_D_lower_bound({ext}, tight);
    EXPECT_FALSE(c.inequality_holds);
    EXPECT_FALSE(c.asserted);

    const auto flat = divisor_curve(flat_model(3), point({0.1, 0.2}), point({1.0, 0.0}), 1.0, 11);
    const auto w = divisor_curve(weighted_model(3, 2.0), point({0.1, 0.2}), point({0.0, 1.0}), 1.0, 11);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        EXPECT_NEAR(flat[i].second, 1.0, 1e-15);
        EXPECT_NEAR(w[i].second, 4.0, 1e-14);
    }
    EXPECT_TRUE(gprime_D_lower_bound({flat, w}).holds);
}
