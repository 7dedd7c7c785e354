#ifndef DCMA_CONE_GREEN_HPP
#define DCMA_CONE_GREEN_HPP

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcma
{

// Points of C^{n-1} x C with the real coordinates s of the divisor factor,
// a radial coordinate and an angle. "Pulled" points use R = |z|; "pushed"
// points use the cone radius r = R^2 of the map z -> z|z|.
struct cone_point {
    std::vector<double> s;
    double radial = 0;
    double theta = 0;
};

cone_point pi2_pushforward(const cone_point &pulled);
// (s, R, theta) -> (s, R^2, theta) and back; pullback requires radial > 0
cone_point pi2_pullback(const cone_point &pushed);

// ---------------------------------------------------------------- modes

struct quadrature_failure : std::runtime_error {
    double estimate, error;
    quadrature_failure(double est, double err)
        : std::runtime_error("mode quadrature did not reach tolerance: estimate " + std::to_string(est) + ", error " + std::to_string(err)),
          estimate(est), error(err)
    {
    }
};

enum class green_rep { hankel_in_r, fourier_in_s, automatic };

struct green_options {
    int m = 4;         // real dimension, >= 3 for the mode representation
    double beta = 2.0; // cone angle 2 pi beta
    double tol = 1e-9;
    int mode_cut = 8;
};

// Radial integral of mode k, cone radii r, rp, transverse distance Rs:
//   hankel_in_r : int lam^{d/2} K_{d/2-1}(Rs lam) J_nu(r lam) J_nu(rp lam) dlam   (Rs > 0)
//   fourier_in_s: int lam^{d/2} J_{d/2-1}(Rs lam) I_nu(r< lam) K_nu(r> lam) dlam  (r != rp)
// d = m - 2, nu = k / beta. Adaptive Gauss-Kronrod on dyadic panels.
double mode_integral(int k, double r, double rp, double Rs, green_rep rep, const green_options &opt);
// all modes 0..kmax in one pass (shared Bessel evaluations)
std::vector<double> mode_integrals(int kmax, double r, double rp, double Rs, green_rep rep, const green_options &opt);

// eps_k / (2 pi beta) (2 pi)^{-d/2} Rs^{1-d/2}; the angular factor cos(k dtheta) is separate
double mode_prefactor(int k, double Rs, const green_options &opt);

// Green function of minus the Laplacian of dr^2 + beta^2 r^2 dtheta^2 + |ds|^2,
// mode sum up to mode_cut; arguments are in those (standard cone) coordinates
double cone_green(const cone_point &x, const cone_point &y, const green_options &opt);

// Green function of minus the degenerate Laplacian of |z|^2 |dz|^2 + |dw|^2 at pulled
// points. m = 2 uses the closed form -(1/2pi) log|z - z'|; otherwise the cone
// kernel at r = R^2 / 2.
double degenerate_green(const cone_point &x, const cone_point &y, const green_options &opt);

// distance of g' = |z|^2 |dz|^2 + |ds|^2 between pulled points
double gprime_distance(const cone_point &x, const cone_point &y);

// dilation a_lambda: s -> lambda s, R -> sqrt(lambda) R
cone_point dilate(const cone_point &x, double lambda);

// -------------------------------------------------------- product grids

// Periodic s-box [-L/2, L/2)^d with d in {1, 2}, R_j = j dR for j = 0..nr,
// theta_l = 2 pi l / ntheta. Storage is s-major, then R, then theta.
struct cone_grid {
    int d = 2;
    int ns = 32;
    double s_len = 8.0;
    int nr = 32;
    double r_max = 2.0;
    int ntheta = 16;

    double ds() const
    {
        return s_len / ns;
    }
    double dr() const
    {
        return r_max / nr;
    }
    double dtheta() const;
    double s(int i) const
    {
        return -0.5 * s_len + i * ds();
    }
    double R(int j) const
    {
        return j * dr();
    }
    double theta(int l) const
    {
        return l * dtheta();
    }
    std::size_t s_count() const
    {
        return d == 1 ? ns : std::size_t(ns) * ns;
    }
    std::size_t size() const
    {
        return s_count() * (nr + 1) * ntheta;
    }
    std::size_t index(int i1, int i2, int j, int l) const
    {
        const std::size_t si = d == 1 ? std::size_t(i1) : std::size_t(i1) * ns + i2;
        return (si * (nr + 1) + j) * ntheta + l;
    }
    // dilated grid carrying a_lambda of every node
    cone_grid dilated(double lambda) const;
    void validate() const;
};

using cone_function = std::function<double(const cone_point &)>;
std::vector<double> sample(const cone_grid &g, const cone_function &f);

// G~ rho on the grid: Fourier in s and theta, radial mode kernels
// I_nu(kappa r<) K_nu(kappa r>), kappa = |xi| / 2, nu = |k| / 2. The s-factor is
// the periodic box, so the xi = 0, k = 0 component is fixed up to a constant.
// s_derivative = (p1, p2) returns d^p1/ds1 d^p2/ds2 of the potential (spectral).
// weighted_volume = false integrates against dy instead of dvol_g' = |z|^2 dy.
std::vector<double> green_apply(const cone_grid &g, const std::vector<double> &rho, int p1 = 0, int p2 = 0,
                                bool weighted_volume = true);

// Degenerate Laplacian |z|^-2 Delta_z + Delta_s by central differences. Entries on
// R = 0 and R = r_max are NaN (the weight is singular on the divisor).
std::vector<double> degenerate_laplacian_apply(const cone_grid &g, const std::vector<double> &f);

// Hermitian metric in the complex coordinates (z, w), d = 2 only
using hermitian_metric = std::function<Eigen::Matrix2cd(std::complex<double> z, std::complex<double> w)>;
// divergence form 4 det^-1 d_i (det g^{i jbar} d_jbar f) with nested central differences;
// entries within two nodes of R = 0 or R = r_max are NaN
std::vector<double> metric_laplacian_apply(const cone_grid &g, const std::vector<double> &f, const hermitian_metric &metric);

// pointwise version for the flat model; throws std::domain_error at z = 0
double degenerate_laplacian_at(const cone_function &f, const cone_point &x, double h);

// ---------------------------------------------------- scaled derivatives

// i in 1..m (m = d + 2): i <= d is R^{1-gamma} d/ds_i, i = d+1 is R^{-gamma} d/dR,
// i = d+2 is R^{-1-gamma} d/dtheta. With weight_all = false the R^{-gamma} factor is
// applied to the s-derivatives only.
struct scaled_derivative_spec {
    int i = 1;
    double gamma = 0;
    bool weight_all = true;
};

std::vector<double> scaled_derivative(const cone_grid &g, const std::vector<double> &f, const scaled_derivative_spec &spec);
// nested central differences at a point; steps (h_s, h_R, h_theta)
double scaled_derivative_at(const cone_function &f, const cone_point &x, const scaled_derivative_spec &spec, int d,
                            const double steps[3]);
// D = d~_{i,g1} d~_{j,g2} applied to f at x
double scaled_second_derivative_at(const cone_function &f, const cone_point &x, const scaled_derivative_spec &outer,
                                   const scaled_derivative_spec &inner, int d, const double steps[3]);

// ------------------------------------------------------------ checks

struct homogeneity_row {
    double gamma1 = 0, gamma2 = 0;
    int i = 0, j = 0;
    double expected = 0;
    double fitted = 0;     // least-squares slope of log|D G~| against log lambda
    double worst_err = 0;  // max over samples and lambdas of the pointwise exponent error
};

struct homogeneity_options {
    int m = 2;
    std::vector<double> lambdas{2.0, 4.0, 8.0, 16.0};
    std::vector<std::pair<double, double>> gammas{{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}};
    std::vector<std::pair<int, int>> index_pairs; // empty: all (i, j) with i, j in the R/theta slots
    int samples = 6;
    std::uint64_t seed = 7;
    green_options green;
};

// expected exponent 1 - m - (g1 + g2) / 2 for D G~ under (x, y) -> (a_lambda x, a_lambda y)
std::vector<homogeneity_row> homogeneity_check(const homogeneity_options &opt);

struct bump_spec {
    std::string name;
    double s0 = 0;     // centre along s1
    double a = 1;      // s radius
    double c = 0;      // centre of |z|^2
    double w = 1;      // |z|^2 radius
};
std::vector<bump_spec> default_bump_family();
double bump_value(const bump_spec &b, const cone_point &x);

struct holder_row {
    std::string family;
    double lambda = 0;
    double seminorm_T = 0;   // [T' rho_lambda]_alpha
    double seminorm_rho = 0; // [|z|^b rho_lambda]_alpha
    double ratio = 0;
};

struct holder_report {
    double alpha = 0, gamma1 = 0, gamma2 = 0;
    std::vector<holder_row> rows;
    double max_spread = 0; // max over families of max(ratio)/min(ratio) - 1
    // both seminorms should scale as lambda^{b/2 - alpha}
    double expected_exponent = 0;
    double worst_exponent_err = 0; // over families, fitted slopes of log seminorm vs log lambda
    std::string csv() const;
};

struct holder_options {
    double alpha = 0.25;
    double gamma1 = 0.5, gamma2 = 0.5;
    std::vector<double> lambdas{1.0, 4.0, 16.0, 64.0};
    std::vector<bump_spec> family = default_bump_family();
    int ns = 64;
    int nr = 64;
    int coarse_stride = 4; // every pair of the stride-4 sublattice
    int local_radius = 3;  // plus full-resolution neighbours of each sublattice node
};

// T' rho = d~_{1,g1} d~_{1,g2} G~ rho on the n = 2 model; Hoelder seminorms in the
// g' distance over the pair set above (a lower bound for the sup). Grids follow
// the dilation, so node sets correspond across lambda.
holder_report holder_ratio_check(const holder_options &opt);
// several (alpha, gamma) settings share the potentials
std::vector<holder_report> holder_ratio_sweep(const std::vector<double> &alphas, const std::vector<std::pair<double, double>> &gammas,
                                              holder_options base);

enum class convergence_verdict { finite, divergent };

struct convergence_case {
    int n = 2;
    double k = 0, c = 0;
    bool inside = true; // ball of radius 1 in the g' norm, or its complement
};

struct convergence_result {
    convergence_case input;
    convergence_verdict predicted = convergence_verdict::finite; // from the sign of n + k + c - 1
    convergence_verdict numeric = convergence_verdict::finite;
    std::vector<double> shells; // dyadic shell integrals, outward from the unit sphere
    double ratio = 0;           // last shell ratio
    double partial = 0;         // extrapolated total when finite
};

// int |(y, x)|^k |x|^{2c} over {|x|^4 + |y|^2 < 1} (or > 1), x in R^2, y in R^{n-2}
convergence_result integral_convergence_check(const convergence_case &cs, int shells = 10);
std::vector<convergence_case> default_convergence_cases();

struct mode_agreement {
    int kmax = 8;
    double worst_rel = 0;
    int worst_k = 0;
    double worst_r = 0, worst_rp = 0, worst_Rs = 0;
    int samples = 0;
};

// |hankel - fourier| / |value| over r' in [0.5, 1.5], r = f r' with f in [0.1, 0.5], Rs in [0.5, 2]
mode_agreement mode_agreement_check(int kmax, double tol, int per_axis = 5, int m = 4);

} // namespace dcma

#endif
