#ifndef DCMA_ESTIMATES_HPP
#define DCMA_ESTIMATES_HPP

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcma
{

using cdouble = std::complex<double>;

// Real polynomial potential sum c z^a zbar^b in n complex variables. Terms are
// added in conjugate pairs so the value is real.
class herm_poly
{
public:
    struct term {
        cdouble c;
        std::vector<int> a, b;
    };

    explicit herm_poly(int n = 0) : m_n(n) {}

    int n() const
    {
        return m_n;
    }
    const std::vector<term> &terms() const
    {
        return m_terms;
    }
    // adds c z^a zbar^b + conj(c) z^b zbar^a (only Re c when a == b)
    void add(cdouble c, const std::vector<int> &a, const std::vector<int> &b);
    // d^da dbar^db of the polynomial at p
    cdouble derivative(const Eigen::VectorXcd &p, const std::vector<int> &da, const std::vector<int> &db) const;
    double value(const Eigen::VectorXcd &p) const;

private:
    int m_n;
    std::vector<term> m_terms;
};

// Pointwise data of a Kaehler potential in coordinates (w_1..w_{n-1}, z):
// g = g_reg + ddbar phi, third[(i n + j) n + k] = phi_{i jbar k}.
struct kahler_jet {
    int n = 0;
    Eigen::MatrixXcd g_reg, g;
    std::vector<cdouble> third;
    cdouble S = 0;
    double G = 0; // log(det g / det g_reg) - log |S|^2
    double phi = 0;

    cdouble t(int i, int j, int k) const
    {
        return third[(std::size_t(i) * n + j) * n + k];
    }
};

// Model problems on the flat background g_reg = I (curvature zero). The
// divisor is {z = 0}, S = z.
struct kahler_model {
    std::string name;
    int n = 2;
    herm_poly phi;
    double inf_curvature = 0; // inf R_{i ibar l lbar} of g_reg

    kahler_jet jet(const Eigen::VectorXcd &p) const;
    double G(const Eigen::VectorXcd &p) const;
};

// flat:     |w|^2 + |z|^4/4, det g' = |z|^2, G = 0
// sheared:  |w_1 + c z|^2 + ... + |z|^4/4, G = 0, g'-normal not a coordinate direction
// weighted: a |w|^2 + |z|^4/4, G = (n-1) log a
// mixed:    flat + eps |w_1|^2 |z|^2 (positive off D, not a solution)
kahler_model flat_model(int n);
kahler_model sheared_model(int n, cdouble c = cdouble(0.6, 0.3));
kahler_model weighted_model(int n, double a);
kahler_model mixed_model(int n, double eps = 0.5);
// one of model_names(); weighted uses a = 2. Throws std::invalid_argument.
kahler_model model_by_name(const std::string &name, int n);
std::vector<std::string> model_names();

// Same jet with the third derivatives from 4th order central differences of
// the analytic g (steps h, 2h with h = 1e-3 scale).
kahler_jet jet_fd(const kahler_model &m, const Eigen::VectorXcd &p, double scale = 1.0);

// New coordinates x = A x': g -> A^T g conj(A), third -> A, conj(A), A on the
// three slots. S and G are left alone.
kahler_jet transform_jet(const kahler_jet &j, const Eigen::MatrixXcd &A);

// random jet: g = B B^* + I/2, g_reg = C C^* + I/2, third symmetric in (i, k)
kahler_jet random_jet(int n, std::uint64_t seed, int index);

// Psi = sum g^{i rbar} g^{s jbar} g^{k tbar} phi_{i jbar k} conj(phi_{r sbar t}),
// via the unitary frame of g. Throws std::domain_error if g is not positive.
double psi_compute(const kahler_jet &j);
// dense six-fold loop over the inverse matrix
double psi_brute(const kahler_jet &j);

enum class psi1_slots {
    last,  // k, t <= n-1: derivative direction tangential to D
    first, // i, r <= n-1
};
double psi1_compute(const kahler_jet &j, psi1_slots slots = psi1_slots::last);

// n + Delta_reg phi = tr(g_reg^-1 g)
double second_order_quantity(const kahler_jet &j);

// ---------------------------------------------------------------- frames

// V[n-1] is g-normal to D, V[k-1] the g_reg projection of V[k] onto the
// g-orthogonal complement of {V[n-1]..V[k]}, normalized. V[k] = cos th V[k-1] + sin th e[k].
// theta[i] is the angle of V[i+1] against V[i] (i = 0..n-2); e[0] = V[0].
struct foliation_frame {
    Eigen::VectorXcd base_point;
    std::vector<Eigen::VectorXcd> V, e;
    std::vector<double> theta;
    std::vector<double> norm2_gprime; // ||V_k||^2 in g
    double v1vn_residual = 0;         // |prod ||V||^2 - e^G |S|^2 prod sin^2| / prod ||V||^2
};

// Throws std::domain_error if the tangential block of g is not positive.
foliation_frame frame_build(const kahler_jet &j);

struct mprime_report {
    int samples = 0;
    double mprime = 0;      // sqrt of the least tangential eigenvalue of g relative to g_reg
    double second_bound = 0; // max of n + Delta_reg phi
    double mprime2 = 0;     // max(2, 2 C / M'^2): bound for 1 / sin^2
    double mprime1 = 0;     // e^{-inf G} (C M'')^{n-1}
    double max_ratio = 0;   // observed max of |S|^2 / ||V_n||^2
    double lower_margin = 0; // min over samples of ratio / (e^{-G} M'^{2n-2}) - 1
    double upper_margin = 0; // 1 - max_ratio / M'_1
    double sin_margin = 0;   // min sin^2 th / min(1/2, M'^2 / (2 C)) - 1
    bool printed_sin_bound_holds = true; // same with 2 M'^2 / C
    double worst_v1vn = 0;
};

mprime_report mprime_bounds_check(const std::vector<kahler_jet> &jets);

// samples for the frame checks: |z| in [0.05, 0.9] x angles x a few w
std::vector<Eigen::VectorXcd> model_sample_points(int n, int count);

// ----------------------------------------------------- boundedness profile

enum class estimate_quantity { psi, psi1, second_order };

struct profile_row {
    double radius = 0, s2 = 0, value = 0, weighted = 0; // weighted = |S|^4 Psi for psi
};

struct boundedness_options {
    double r_max = 1e-1, r_min = 1e-3;
    int radii = 21;
    int rays = 4;
    psi1_slots slots = psi1_slots::last;
    bool finite_differences = false;
};

struct boundedness_profile_result {
    std::string model;
    estimate_quantity quantity = estimate_quantity::psi;
    std::vector<profile_row> rows; // max over rays at each radius
    double slope = 0;              // of log weighted vs log radius over the last decade
    double max_weighted = 0;
    bool bounded = false; // slope >= -0.1 and max finite
    std::string csv() const;
};

boundedness_profile_result boundedness_profile(const kahler_model &m, estimate_quantity q, const boundedness_options &opt = {});

// ------------------------------------------------ second order inequality

struct second_order_options {
    double C = 1.0;
    double cutoff_width = 0; // chi = exp(-|p|^2 / width^2); 0 means chi = 1
    double r_inner = 0.2, r_outer = 1.0;
    int nr = 9, nangle = 8, nw = 3;
    double h = 1e-2; // relative finite difference step
    bool flip_sign = false; // wrong sign on the -C m chi term (detector check)
};

struct second_order_report {
    double min_margin = 0;
    Eigen::VectorXcd worst_point;
    double lhs_at_worst = 0, rhs_at_worst = 0;
    int points = 0;
    int excluded = 0; // grid points too close to D for the stencil
};

// min over an annulus of Delta_g'(chi e^{-C phi}(m + Delta phi)) minus the lower bound
//   e^{-C phi} [chi (Delta G - m^2 R) + (-C m + Delta_g' u) chi (m + Delta phi)
//               + chi (C + R) e^{-F/(m-1)} (m + Delta phi)^{m/(m-1)}],  F = G + log|S|^2
second_order_report second_order_inequality_check(const kahler_model &m, const second_order_options &opt = {});

// ------------------------------------------------------- divisor lower bound

struct lower_bound_options {
    double exponent = 1.5; // the inequality is |u'| u^{-exponent} <= C
    double C = -1;         // negative: use the measured constant
    double diameter = 1.0;
};

struct lower_bound_report {
    double measured_C = 0;
    double used_C = 0;
    bool inequality_holds = true; // measured <= given C (when given)
    bool normalized = true;       // max u >= 1
    bool asserted = false;        // bound meaningful (exponent > 1 or = 1, inequality holds, normalized)
    double bound = 0;             // (1 + (a - 1) C diam)^{-1/(a-1)}, or e^{-C diam} for a = 1
    double min_u = 0;
    bool holds = false;
};

// curves: samples (t, u) of u along g_reg unit speed curves, t increasing
lower_bound_report gprime_D_lower_bound(const std::vector<std::vector<std::pair<double, double>>> &curves,
                                        const lower_bound_options &opt = {});

// u = det g'|_D / det g_reg|_D along w(t) = w0 + t dir at z = 0 (dir unit)
std::vector<std::pair<double, double>> divisor_curve(const kahler_model &m, const Eigen::VectorXcd &w0, const Eigen::VectorXcd &dir,
                                                     double length, int samples);

} // namespace dcma

#endif
