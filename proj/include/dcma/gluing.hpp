#ifndef DCMA_GLUING_HPP
#define DCMA_GLUING_HPP

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dcma
{

struct construction_failure : std::runtime_error {
    std::string inequality;
    double worst_x;
    construction_failure(const std::string &ineq, double x)
        : std::runtime_error("gluing construction failed: " + ineq + " violated at x=" + std::to_string(x)), inequality(ineq),
          worst_x(x)
    {
    }
};

// Cutoff profile. On [0, x0] the derivative-profile is
//   ht(x) = 2x + a b (x-eps)^-3 exp(-b/(x-eps)^2) 1_{x>=eps},
// it is mirrored about x0 on [x0, 2 x0], and beyond 2 x0 a C^1 piecewise
// quadratic ramp (slopes bounded by s = m/2) brings the running integral
// back to zero at eps_prime.
struct gluing_profile {
    double a = 0, b = 0, epsilon = 0, epsilon_prime = 0, m = 1, x0 = 0;
    double lambda = 1;
    // tail: knots t[0] = 2 x0 < t[1] < ... < t[5] = eps_prime
    double slope = 0, ell = 0;
    double tail_knots[6] = {};
    double tail_values[6] = {};
    double mass = 0; // h(2 x0)
};

// raw exponential correction ab/y^3 e^{-b/y^2} and its derivative, y = x - eps > 0
double bump(double a, double b, double y);
double bump_derivative(double a, double b, double y);

double htilde_eval(const gluing_profile &p, double x);
double htilde_derivative(const gluing_profile &p, double x);
// closed form of h = int_0^x ht, used as the quadrature oracle
double h_closed_form(const gluing_profile &p, double x);
// alpha = h/x^2, u = 1 - alpha
double alpha_eval(const gluing_profile &p, double x);
double alpha_d1(const gluing_profile &p, double x);
double alpha_d2(const gluing_profile &p, double x);

// residual of the x0 equation at y = x0 - eps
double x0_equation_residual(double a, double b, double y);

// Assemble the full profile from (a, b, eps, m); solves x0 and the tail.
gluing_profile build_profile(double a, double b, double epsilon, double m);

struct search_config {
    double b = 1.0;
    double a_start = 1.0;
    double a_growth = 2.0;
    // extra factor on |a| past the existence threshold so the root is simple
    double a_headroom = 1.5;
    double eps_start = 0.25;
    double eps_growth = 2.0;
    int max_steps = 60;
    int check_points = 4000;
};

gluing_profile find_parameters(double m, const search_config &cfg = {});

struct property_result {
    std::string name;
    bool pass = false;
    double margin = 0; // worst slack (scaled), > 0 means strict pass
    double worst_x = 0;
};

struct property_report {
    std::vector<property_result> props;
    double eps_numeric = 0; // start of the strictly active region
    int grid_n = 0;
    bool all_pass() const;
    const property_result &get(const std::string &name) const;
    std::string csv() const;
};

// checks p1..p5, hm, hinc and the u/equivalence invariants on a uniform grid
property_report property_check(const gluing_profile &p, int grid_n, double quad_tol = 1e-10);

// cumulative h on a grid via adaptive Gauss-Kronrod with knot splitting
std::vector<double> h_on_grid(const gluing_profile &p, const std::vector<double> &xs, double tol = 1e-10);

nlohmann::json profile_to_json(const gluing_profile &p);
gluing_profile profile_from_json(const nlohmann::json &j);

// --- subharmonic gluing in the plane ---

using plane_field = std::function<double(double x, double y)>;

struct polar_grid {
    int nr = 512, ntheta = 256;
    double r_max = 1.0;
    double dr() const
    {
        return r_max / nr;
    }
    double r(int i) const
    {
        return (i + 1) * dr();
    }
    double theta(int j) const;
};

struct glue_options {
    polar_grid grid;
    double m0 = 1.0;
    double lambda_start = 1.0;
    double lambda_cap = 1048576.0; // 2^20
    int bisection_steps = 20;
    // r -> rho(r) with rho(r) = r + O(r^2); identity by default
    std::function<double(double)> reparam;
};

struct glue_result {
    std::vector<double> T; // nr * ntheta, row-major in r
    double min_laplacian = 0;
    int annulus_points = 0;
    bool fits = false; // annulus eps <= lambda r <= eps' lies inside the grid
};

struct glue_report {
    bool reached = false;
    double lambda_star = 0;
    glue_result at_star;
    std::vector<std::pair<double, double>> scan; // (lambda, min laplacian)
};

// T_lambda = at f + (1 - at) g on the grid, at(r) = alpha(lambda rho(r)); stencil
// Laplacian minimised over the transition annulus
glue_result glue_at(const plane_field &f, const plane_field &g, const gluing_profile &p, double lambda, const glue_options &opt);
// validates the hypotheses at the origin, then searches lambda*
glue_report glue_subharmonic(const plane_field &f, const plane_field &g, const gluing_profile &p, const glue_options &opt = {});
// five-point polar stencil
double polar_laplacian(const std::vector<double> &v, const polar_grid &grid, int i, int j);

// --- Kahler gluing of two potentials on C^n (coordinate z normal to the divisor) ---

using potential = std::function<double(std::complex<double> z, const std::vector<std::complex<double>> &w)>;

struct kahler_options {
    int nw = 1;
    int radial_samples = 12;
    int angular_samples = 8;
    int w_samples = 4;
    double w_radius = 0.5;
    double lambda_start = 1.0;
    double lambda_cap = 1048576.0;
};

struct kahler_report {
    bool reached = false;
    double lambda = 0;
    double min_tangential = 0; // over the annulus and on the divisor
    double min_full = 0;       // off the divisor
    std::vector<std::pair<double, double>> scan;
};

// minimum eigenvalues of ddbar Phi_lambda at a fixed lambda
kahler_report kahler_at(const potential &phi0, const potential &phi1, const gluing_profile &p, double lambda, const kahler_options &opt);
kahler_report glue_kahler_check(const potential &phi0, const potential &phi1, const gluing_profile &p, const kahler_options &opt = {});

} // namespace dcma

#endif
