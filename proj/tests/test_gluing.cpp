#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include <dcma/gluing.hpp>

using namespace dcma;

namespace
{

const gluing_profile &profile_m1()
{
    static const gluing_profile p = find_parameters(1.0);
    return p;
}

double quad(double x, double y)
{
    return x * x + y * y;
}

} // namespace

TEST(gluing, htilde_examples)
{
    const auto &p = profile_m1();
    EXPECT_DOUBLE_EQ(htilde_eval(p, p.epsilon / 2), p.epsilon);
    EXPECT_NEAR(htilde_eval(p, 2 * p.x0 - p.epsilon / 2), p.epsilon, 1e-12);
    EXPECT_EQ(htilde_eval(p, p.epsilon_prime * 1.01), 0.0);
    EXPECT_EQ(htilde_eval(p, 10 * p.epsilon_prime), 0.0);
}

TEST(gluing, x0_solves_its_equation)
{
    for (double m : {1.0, 1.9, 0.3}) {
        const auto p = find_parameters(m);
        EXPECT_LT(p.a, 0.0);
        EXPECT_GT(p.b, 0.0);
        const double y0 = p.x0 - p.epsilon;
        EXPECT_LE(std::abs(x0_equation_residual(p.a, p.b, y0)), 1e-10);
        EXPECT_GT(p.x0, p.epsilon);
        EXPECT_LT(p.x0, p.epsilon + std::sqrt(2 * p.b / 3));
        EXPECT_GT(p.epsilon_prime, 2 * p.x0);
    }
}

TEST(gluing, smoothness_at_breakpoints)
{
    const auto &p = profile_m1();
    // continuous at eps, flat at x0 from the left
    EXPECT_LE(std::abs(htilde_eval(p, p.epsilon + 1e-9) - 2 * p.epsilon), 1e-8);
    // the one-sided quotient is O(t); Richardson removes that term
    auto q = [&](double t) { return (htilde_eval(p, p.x0 - t) - htilde_eval(p, p.x0)) / t; };
    for (double t : {1e-5, 2e-6}) {
        EXPECT_LE(std::abs(2 * q(t / 2) - q(t)), 1e-8) << t;
    }
    EXPECT_LE(std::abs(htilde_derivative(p, p.x0)), 1e-8);
    // C^1 where the tail starts and between the ramp pieces
    for (double k : p.tail_knots) {
        EXPECT_NEAR(htilde_eval(p, k - 1e-10), htilde_eval(p, k + 1e-10), 1e-8);
        if (k < p.epsilon_prime) {
            EXPECT_NEAR(htilde_derivative(p, k - 1e-12), htilde_derivative(p, k + 1e-12), 1e-8);
        }
    }
}

TEST(gluing, quadrature_matches_closed_form)
{
    const auto &p = profile_m1();
    std::vector<double> xs;
    for (int i = 1; i <= 2000; ++i) {
        xs.push_back(1.05 * p.epsilon_prime * i / 2000);
    }
    const auto h = h_on_grid(p, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_NEAR(h[i], h_closed_form(p, xs[i]), 1e-10 * (1 + p.mass)) << xs[i];
    }
}

TEST(gluing, parameter_preconditions)
{
    EXPECT_THROW(find_parameters(2.0), std::invalid_argument);
    EXPECT_THROW(find_parameters(2.5), std::invalid_argument);
    EXPECT_THROW(find_parameters(0.0), std::invalid_argument);
    search_config cfg;
    cfg.a_start = 0.01;
    cfg.max_steps = 2;
    try {
        find_parameters(1.0, cfg);
        FAIL() << "expected construction failure";
    } catch (const construction_failure &e) {
        EXPECT_EQ(e.inequality, "x0 root existence");
    }
}

TEST(gluing, property_check_profile_conditions)
{
    for (double m : {1.0, 1.9}) {
        const auto p = find_parameters(m);
        const auto rep = property_check(p, 10000);
        for (const char *name : {"p1", "p2", "p4", "p5", "hm", "hinc", "convexity", "u_positive", "hm_equivalence", "hinc_equivalence"}) {
            EXPECT_TRUE(rep.get(name).pass) << m << ' ' << name << " margin " << rep.get(name).margin;
        }
        EXPECT_GT(rep.get("hm").margin, 0.0);
        EXPECT_GT(rep.get("p5").margin, 0.0);
    }
    EXPECT_THROW(property_check(profile_m1(), 999), std::invalid_argument);
}

// The two-sided bound |ht'| <= m + (2-m) h/x^2 cannot hold on the mirrored
// linear piece: there |ht'| = 2 while h < x^2 pulls the right side below 2.
// Only the one-sided form (hm) is needed, and that one passes.
TEST(gluing, absolute_derivative_bound_breaks_on_mirror)
{
    const auto &p = profile_m1();
    const auto rep = property_check(p, 10000);
    const auto &p3 = rep.get("p3");
    EXPECT_FALSE(p3.pass);
    EXPECT_GE(p3.worst_x, 2 * p.x0 - p.epsilon);
    EXPECT_LE(p3.worst_x, 2 * p.x0 + p.ell);
    EXPECT_TRUE(rep.get("hm").pass);
}

TEST(gluing, trivial_regions)
{
    const auto &p = profile_m1();
    // u = 0 below eps, the check value x^2 u'' + 4 x u' + m u vanishes
    for (double x : {0.1 * p.epsilon, 0.5 * p.epsilon, 0.99 * p.epsilon}) {
        const double u = 1 - alpha_eval(p, x), du = -alpha_d1(p, x), d2u = -alpha_d2(p, x);
        EXPECT_EQ(x * x * d2u + 4 * x * du + p.m * u, 0.0);
    }
    // u = 1 beyond eps', check value m
    for (double x : {1.01 * p.epsilon_prime, 3 * p.epsilon_prime}) {
        const double u = 1 - alpha_eval(p, x), du = -alpha_d1(p, x), d2u = -alpha_d2(p, x);
        EXPECT_DOUBLE_EQ(x * x * d2u + 4 * x * du + p.m * u, p.m);
    }
    // the differential inequality on the transition
    for (int i = 1; i < 2000; ++i) {
        const double x = p.epsilon + (p.epsilon_prime - p.epsilon) * i / 2000;
        const double u = 1 - alpha_eval(p, x), du = -alpha_d1(p, x), d2u = -alpha_d2(p, x);
        EXPECT_GE(x * x * d2u + 4 * x * du + p.m * u, -1e-12) << x;
        EXPECT_GE(du, -1e-12) << x;
    }
}

TEST(gluing, csv_and_json)
{
    const auto &p = profile_m1();
    const auto rep = property_check(p, 1000);
    EXPECT_EQ(rep.csv().substr(0, 30), "property,pass,margin,worst_x\np");
    const auto j = profile_to_json(p);
    for (const char *k : {"a", "b", "eps", "eps_prime", "m", "x0"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
    const auto q = profile_from_json(j);
    EXPECT_DOUBLE_EQ(q.x0, p.x0);
    EXPECT_DOUBLE_EQ(q.epsilon_prime, p.epsilon_prime);
    auto bad = j;
    bad["eps_prime"] = p.epsilon_prime * 1.1;
    EXPECT_THROW(profile_from_json(bad), std::invalid_argument);
}

TEST(gluing, equal_fields_glue_to_themselves)
{
    const auto &p = profile_m1();
    glue_options opt;
    opt.grid.nr = 128;
    opt.grid.ntheta = 512;
    auto f = [](double x, double y) { return quad(x, y) + 0.3 * x * x * x; };
    const auto r = glue_at(f, f, p, 8.0, opt);
    for (int i = 1; i + 1 < opt.grid.nr; i += 7) {
        for (int j = 0; j < opt.grid.ntheta; j += 5) {
            const double rr = opt.grid.r(i), t = opt.grid.theta(j);
            EXPECT_DOUBLE_EQ(r.T[i * opt.grid.ntheta + j], f(rr * std::cos(t), rr * std::sin(t)));
            // Laplacian of |x|^2 + 0.3 x^3 is 4 + 1.8 x; the centred u_r/r term
            // is off by O(dr^2/r) on the cubic, the angular one by O(dtheta^2 r)
            const double dt = 2 * M_PI / opt.grid.ntheta;
            const double tol = 1e-9 + 0.6 * opt.grid.dr() * opt.grid.dr() / rr + 0.6 * dt * dt * rr;
            EXPECT_NEAR(polar_laplacian(r.T, opt.grid, i, j), 4 + 1.8 * rr * std::cos(t), tol);
        }
    }
}

TEST(gluing, subharmonic_threshold)
{
    const auto &p = profile_m1();
    auto g = [](double x, double y) { return 2 * quad(x, y); };
    const auto rep = glue_subharmonic(quad, g, p);
    ASSERT_TRUE(rep.reached);
    EXPECT_LE(rep.lambda_star, 1048576.0);
    EXPECT_GT(rep.at_star.min_laplacian, 0.0);
    EXPECT_GT(rep.at_star.annulus_points, 0);
    // below the threshold the transition annulus leaves the grid
    EXPECT_FALSE(glue_at(quad, g, p, 0.5 * rep.lambda_star, {}).fits);
    glue_options capped;
    capped.lambda_cap = 0.5 * rep.lambda_star;
    EXPECT_FALSE(glue_subharmonic(quad, g, p, capped).reached);
}

TEST(gluing, subharmonic_rejects_bad_input)
{
    const auto &p = profile_m1();
    auto shifted = [](double x, double y) { return 1 + 2 * quad(x, y); };
    EXPECT_THROW(glue_subharmonic(quad, shifted, p), std::invalid_argument);
    auto tilted = [](double x, double y) { return x + 2 * quad(x, y); };
    EXPECT_THROW(glue_subharmonic(quad, tilted, p), std::invalid_argument);
    auto weak = [](double x, double y) { return 1.2 * quad(x, y); };
    EXPECT_THROW(glue_subharmonic(quad, weak, p), std::invalid_argument);
}

// With g - f = r^2 + r^3 cos^3, the stencil Laplacian of T_lambda approaches
// Df + R^2 u'' + 5 R u' + 4 u (R = lambda r) at rate 1/lambda.
TEST(gluing, scaling_consistency)
{
    const auto &p = profile_m1();
    auto g = [](double x, double y) { return 2 * quad(x, y) + x * x * x; };
    std::vector<double> errs;
    for (double lam : {16.0, 32.0, 64.0, 128.0}) {
        glue_options opt;
        opt.grid.nr = 1024;
        opt.grid.ntheta = 64;
        opt.grid.r_max = 1.2 * p.epsilon_prime / lam;
        const auto r = glue_at(quad, g, p, lam, opt);
        double err = 0;
        for (int i = 1; i + 1 < opt.grid.nr; ++i) {
            const double R = lam * opt.grid.r(i);
            if (R < p.epsilon || R > p.epsilon_prime) {
                continue;
            }
            const double u = 1 - alpha_eval(p, R), du = -alpha_d1(p, R), d2u = -alpha_d2(p, R);
            const double lead = 4 + R * R * d2u + 5 * R * du + 4 * u;
            for (int j = 0; j < opt.grid.ntheta; ++j) {
                err = std::max(err, std::abs(polar_laplacian(r.T, opt.grid, i, j) - lead));
            }
        }
        errs.push_back(err);
    }
    for (std::size_t k = 1; k < errs.size(); ++k) {
        const double ratio = errs[k - 1] / errs[k];
        EXPECT_GT(ratio, 1.6) << k;
        EXPECT_LT(ratio, 2.4) << k;
    }
}

namespace
{

double phi_flat(std::complex<double> z, const std::vector<std::complex<double>> &w)
{
    return std::norm(w[0]) + std::norm(z);
}

} // namespace

TEST(gluing, kahler_identical_potentials)
{
    const auto &p = profile_m1();
    const auto r = kahler_at(phi_flat, phi_flat, p, 4.0, {});
    EXPECT_NEAR(r.min_full, 1.0, 1e-5);
    EXPECT_NEAR(r.min_tangential, 1.0, 1e-5);
}

TEST(gluing, kahler_model_pair)
{
    const auto &p = profile_m1();
    auto phi1 = [](std::complex<double> z, const std::vector<std::complex<double>> &w) {
        return phi_flat(z, w) + std::norm(z) * std::norm(z) / 4;
    };
    const auto r = glue_kahler_check(phi_flat, phi1, p);
    ASSERT_TRUE(r.reached);
    EXPECT_GT(r.min_full, 0.0);
    EXPECT_GT(r.min_tangential, 0.0);
    // a steeper correction needs a larger lambda
    auto phi2 = [](std::complex<double> z, const std::vector<std::complex<double>> &w) {
        return phi_flat(z, w) + 40.0 * std::norm(z) * std::norm(z);
    };
    const auto r2 = glue_kahler_check(phi_flat, phi2, p);
    ASSERT_TRUE(r2.reached);
    EXPECT_GT(r2.lambda, r.lambda);
    EXPECT_FALSE(kahler_at(phi_flat, phi2, p, r2.lambda / 2, {}).reached);
}

TEST(gluing, kahler_rejects_linear_term)
{
    const auto &p = profile_m1();
    auto lin = [](std::complex<double> z, const std::vector<std::complex<double>> &w) { return phi_flat(z, w) + 0.1 * z.real(); };
    EXPECT_THROW(glue_kahler_check(phi_flat, lin, p), std::invalid_argument);
    auto shift = [](std::complex<double> z, const std::vector<std::complex<double>> &w) { return phi_flat(z, w) + 0.1; };
    EXPECT_THROW(glue_kahler_check(phi_flat, shift, p), std::invalid_argument);
}
