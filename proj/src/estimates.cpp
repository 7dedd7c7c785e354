#include <dcma/estimates.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include <dcma/rng.hpp>

namespace dcma
{

namespace
{

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

constexpr double pi = 3.14159265358979323846;

std::vector<int> unit(int n, int i)
{
    std::vector<int> e(n, 0);
    e[i] = 1;
    return e;
}

std::vector<int> unit2(int n, int i, int k)
{
    std::vector<int> e(n, 0);
    ++e[i];
    ++e[k];
    return e;
}

// falling factorial a (a-1) ... (a-d+1)
double falling(int a, int d)
{
    double r = 1;
    for (int i = 0; i < d; ++i) {
        r *= a - i;
    }
    return r;
}

cdouble ipow(cdouble x, int k)
{
    cdouble r = 1;
    for (int i = 0; i < k; ++i) {
        r *= x;
    }
    return r;
}

cdouble ip(const MatrixXcd &H, const VectorXcd &u, const VectorXcd &v)
{
    return (u.transpose() * H * v.conjugate())(0, 0);
}

double norm2(const MatrixXcd &H, const VectorXcd &u)
{
    return ip(H, u, u).real();
}

// Cholesky with a positivity check
Eigen::LLT<MatrixXcd> checked_llt(const MatrixXcd &H, const char *what)
{
    Eigen::LLT<MatrixXcd> llt(H);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error(std::string(what) + ": metric is not positive definite");
    }
    return llt;
}

// g^{a bbar} with sum_b g^{a bbar} g_{c bbar} = delta_ac, i.e. (H^-1)^T
MatrixXcd inverse_metric(const MatrixXcd &H)
{
    return checked_llt(H, "inverse_metric").solve(MatrixXcd::Identity(H.rows(), H.cols())).transpose();
}

// 4th order first derivative along a real direction
template <typename F>
auto d1(const F &f, const VectorXcd &p, const VectorXcd &dir, double h)
{
    using R = std::decay_t<decltype(f(p))>;
    const VectorXcd a = p + h * dir, b = p - h * dir, c = p + 2 * h * dir, d = p - 2 * h * dir;
    const R fa = f(a), fb = f(b), fc = f(c), fd = f(d);
    return R((8.0 * (fa - fb) - (fc - fd)) / (12.0 * h));
}

// real coordinate directions x_i (2i) and y_i (2i+1)
VectorXcd real_dir(int n, int r)
{
    VectorXcd d = VectorXcd::Zero(n);
    d[r / 2] = (r % 2 == 0) ? cdouble(1, 0) : cdouble(0, 1);
    return d;
}

// d_i dbar_j f from nested 4th order differences
template <typename F>
MatrixXcd complex_hessian(const F &f, const VectorXcd &p, double h)
{
    const int n = p.size();
    std::vector<std::vector<double>> d2(2 * n, std::vector<double>(2 * n));
    for (int u = 0; u < 2 * n; ++u) {
        for (int v = u; v < 2 * n; ++v) {
            const VectorXcd du = real_dir(n, u), dv = real_dir(n, v);
            if (u == v) {
                d2[u][u] = (-f(p + 2 * h * du) + 16 * f(p + h * du) - 30 * f(p) + 16 * f(p - h * du) - f(p - 2 * h * du)) / (12 * h * h);
            } else {
                const auto fu = [&](const VectorXcd &q) { return d1(f, q, du, h); };
                d2[u][v] = d2[v][u] = d1(fu, p, dv, h);
            }
        }
    }
    MatrixXcd m(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int xi = 2 * i, yi = 2 * i + 1, xj = 2 * j, yj = 2 * j + 1;
            m(i, j) = 0.25 * cdouble(d2[xi][xj] + d2[yi][yj], d2[xi][yj] - d2[yi][xj]);
        }
    }
    return m;
}

double log_det_ratio(const MatrixXcd &g, const MatrixXcd &g_reg)
{
    return std::log(std::abs(g.determinant().real())) - std::log(std::abs(g_reg.determinant().real()));
}

MatrixXcd model_metric(const kahler_model &m, const VectorXcd &p)
{
    const int n = m.n;
    MatrixXcd g = MatrixXcd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            g(i, j) += m.phi.derivative(p, unit(n, i), unit(n, j));
        }
    }
    return g;
}

double least_generalized_eigenvalue(const MatrixXcd &A, const MatrixXcd &B)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXcd> es(A, B);
    return es.eigenvalues().minCoeff();
}

} // namespace

// ---------------------------------------------------------------- herm_poly

void herm_poly::add(cdouble c, const std::vector<int> &a, const std::vector<int> &b)
{
    if (int(a.size()) != m_n || int(b.size()) != m_n) {
        throw std::invalid_argument("herm_poly::add: exponent length");
    }
    if (a == b) {
        m_terms.push_back({cdouble(c.real(), 0), a, b});
    } else {
        m_terms.push_back({c, a, b});
        m_terms.push_back({std::conj(c), b, a});
    }
}

cdouble herm_poly::derivative(const VectorXcd &p, const std::vector<int> &da, const std::vector<int> &db) const
{
    cdouble sum = 0;
    for (const auto &t : m_terms) {
        cdouble v = t.c;
        for (int i = 0; i < m_n && v != 0.0; ++i) {
            if (da[i] > t.a[i] || db[i] > t.b[i]) {
                v = 0;
                break;
            }
            v *= falling(t.a[i], da[i]) * falling(t.b[i], db[i]);
            v *= ipow(p[i], t.a[i] - da[i]) * ipow(std::conj(p[i]), t.b[i] - db[i]);
        }
        sum += v;
    }
    return sum;
}

double herm_poly::value(const VectorXcd &p) const
{
    const std::vector<int> zero(m_n, 0);
    return derivative(p, zero, zero).real();
}

// ------------------------------------------------------------------ models

kahler_jet kahler_model::jet(const VectorXcd &p) const
{
    kahler_jet j;
    j.n = n;
    j.g_reg = MatrixXcd::Identity(n, n);
    j.g = model_metric(*this, p);
    j.third.resize(std::size_t(n) * n * n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < n; ++c) {
                j.third[(std::size_t(a) * n + b) * n + c] = phi.derivative(p, unit2(n, a, c), unit(n, b));
            }
        }
    }
    j.S = p[n - 1];
    j.G = G(p);
    j.phi = phi.value(p);
    return j;
}

double kahler_model::G(const VectorXcd &p) const
{
    const double s2 = std::norm(p[n - 1]);
    if (s2 == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return log_det_ratio(model_metric(*this, p), MatrixXcd::Identity(n, n)) - std::log(s2);
}

namespace
{

// |z|^4/4 - |z|^2 on top of the flat background
herm_poly degenerate_normal(int n)
{
    herm_poly p(n);
    std::vector<int> z2(n, 0), z1 = unit(n, n - 1);
    z2[n - 1] = 2;
    p.add(0.25, z2, z2);
    p.add(-1.0, z1, z1);
    return p;
}

} // namespace

kahler_model flat_model(int n)
{
    if (n < 1) {
        throw std::invalid_argument("flat_model: n >= 1");
    }
    return {"flat", n, degenerate_normal(n), 0.0};
}

kahler_model sheared_model(int n, cdouble c)
{
    if (n < 2) {
        throw std::invalid_argument("sheared_model: n >= 2");
    }
    kahler_model m{"sheared", n, degenerate_normal(n), 0.0};
    // |w_1 + c z|^2 - |w_1|^2 = conj(c) w_1 zbar + c z wbar_1 + |c|^2 |z|^2
    m.phi.add(std::conj(c), unit(n, 0), unit(n, n - 1));
    m.phi.add(std::norm(c), unit(n, n - 1), unit(n, n - 1));
    return m;
}

kahler_model weighted_model(int n, double a)
{
    if (!(a > 0)) {
        throw std::invalid_argument("weighted_model: a > 0");
    }
    kahler_model m{"weighted", n, degenerate_normal(n), 0.0};
    for (int i = 0; i + 1 < n; ++i) {
        m.phi.add(a - 1.0, unit(n, i), unit(n, i));
    }
    return m;
}

kahler_model mixed_model(int n, double eps)
{
    if (n < 2) {
        throw std::invalid_argument("mixed_model: n >= 2");
    }
    kahler_model m{"mixed", n, degenerate_normal(n), 0.0};
    std::vector<int> e(n, 0);
    e[0] = e[n - 1] = 1;
    m.phi.add(eps, e, e);
    return m;
}

std::vector<std::string> model_names()
{
    return {"flat", "sheared", "weighted", "mixed"};
}

kahler_model model_by_name(const std::string &name, int n)
{
    if (name == "flat") {
        return flat_model(n);
    }
    if (name == "sheared") {
        return sheared_model(n);
    }
    if (name == "weighted") {
        return weighted_model(n, 2.0);
    }
    if (name == "mixed") {
        return mixed_model(n);
    }
    throw std::invalid_argument("unknown model '" + name + "'");
}

kahler_jet jet_fd(const kahler_model &m, const VectorXcd &p, double scale)
{
    kahler_jet j = m.jet(p);
    const int n = m.n;
    const double h = 1e-3 * scale;
    for (int k = 0; k < n; ++k) {
        const auto gx = d1([&](const VectorXcd &q) { return model_metric(m, q); }, p, real_dir(n, 2 * k), h);
        const auto gy = d1([&](const VectorXcd &q) { return model_metric(m, q); }, p, real_dir(n, 2 * k + 1), h);
        // d_k = (d_x - i d_y) / 2
        const MatrixXcd dk = 0.5 * (gx - cdouble(0, 1) * gy);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                j.third[(std::size_t(a) * n + b) * n + k] = dk(a, b);
            }
        }
    }
    return j;
}

kahler_jet transform_jet(const kahler_jet &j, const MatrixXcd &A)
{
    const int n = j.n;
    kahler_jet r = j;
    r.g = A.transpose() * j.g * A.conjugate();
    r.g_reg = A.transpose() * j.g_reg * A.conjugate();
    const MatrixXcd Ac = A.conjugate();
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < n; ++c) {
                cdouble s = 0;
                for (int i = 0; i < n; ++i) {
                    for (int jj = 0; jj < n; ++jj) {
                        for (int k = 0; k < n; ++k) {
                            s += j.t(i, jj, k) * A(i, a) * Ac(jj, b) * A(k, c);
                        }
                    }
                }
                r.third[(std::size_t(a) * n + b) * n + c] = s;
            }
        }
    }
    return r;
}

kahler_jet random_jet(int n, std::uint64_t seed, int index)
{
    counter_rng rng(seed, "random_jet/" + std::to_string(n) + "/" + std::to_string(index));
    const auto rc = [&] { return cdouble(rng.normal(), rng.normal()); };
    MatrixXcd B(n, n), C(n, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            B(i, k) = rc();
            C(i, k) = 0.3 * rc();
        }
    }
    kahler_jet j;
    j.n = n;
    j.g = B * B.adjoint() + 0.5 * MatrixXcd::Identity(n, n);
    j.g_reg = C * C.adjoint() + 0.5 * MatrixXcd::Identity(n, n);
    j.third.assign(std::size_t(n) * n * n, 0);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = a; c < n; ++c) {
                const cdouble v = rc();
                j.third[(std::size_t(a) * n + b) * n + c] = v;
                j.third[(std::size_t(c) * n + b) * n + a] = v;
            }
        }
    }
    j.S = rc();
    j.G = log_det_ratio(j.g, j.g_reg) - std::log(std::norm(j.S));
    return j;
}

// -------------------------------------------------------------------- Psi

double psi_compute(const kahler_jet &j)
{
    const int n = j.n;
    // frame E with g(e_a, conj e_b) = delta: E = L^{-T} for g = L L^*
    const auto llt = checked_llt(j.g, "psi_compute");
    const MatrixXcd L = llt.matrixL();
    const MatrixXcd E = L.transpose().triangularView<Eigen::Upper>().solve(MatrixXcd::Identity(n, n));
    const MatrixXcd Ec = E.conjugate();
    // contract one slot at a time
    std::vector<cdouble> a(j.third), b(a.size());
    const auto idx = [n](int x, int y, int z) { return (std::size_t(x) * n + y) * n + z; };
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) {
            for (int z = 0; z < n; ++z) {
                cdouble s = 0;
                for (int i = 0; i < n; ++i) {
                    s += E(i, x) * a[idx(i, y, z)];
                }
                b[idx(x, y, z)] = s;
            }
        }
    }
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) {
            for (int z = 0; z < n; ++z) {
                cdouble s = 0;
                for (int i = 0; i < n; ++i) {
                    s += Ec(i, y) * b[idx(x, i, z)];
                }
                a[idx(x, y, z)] = s;
            }
        }
    }
    double psi = 0;
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) {
            for (int z = 0; z < n; ++z) {
                cdouble s = 0;
                for (int i = 0; i < n; ++i) {
                    s += E(i, z) * a[idx(x, y, i)];
                }
                psi += std::norm(s);
            }
        }
    }
    return psi;
}

namespace
{

double restricted_contraction(const kahler_jet &j, int first_hi, int last_hi)
{
    const int n = j.n;
    const MatrixXcd gi = inverse_metric(j.g);
    cdouble sum = 0;
    for (int i = 0; i < first_hi; ++i) {
        for (int r = 0; r < first_hi; ++r) {
            for (int jj = 0; jj < n; ++jj) {
                for (int s = 0; s < n; ++s) {
                    for (int k = 0; k < last_hi; ++k) {
                        for (int t = 0; t < last_hi; ++t) {
                            sum += gi(i, r) * gi(s, jj) * gi(k, t) * j.t(i, jj, k) * std::conj(j.t(r, s, t));
                        }
                    }
                }
            }
        }
    }
    return sum.real();
}

} // namespace

double psi_brute(const kahler_jet &j)
{
    return restricted_contraction(j, j.n, j.n);
}

double psi1_compute(const kahler_jet &j, psi1_slots slots)
{
    return slots == psi1_slots::last ? restricted_contraction(j, j.n, j.n - 1) : restricted_contraction(j, j.n - 1, j.n);
}

double second_order_quantity(const kahler_jet &j)
{
    return checked_llt(j.g_reg, "second_order_quantity").solve(j.g).trace().real();
}

// ------------------------------------------------------------------ frames

foliation_frame frame_build(const kahler_jet &j)
{
    const int n = j.n;
    const MatrixXcd &H = j.g, &R = j.g_reg;
    if (n >= 2) {
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(H.topLeftCorner(n - 1, n - 1));
        if (es.eigenvalues().minCoeff() <= 0) {
            throw std::domain_error("frame_build: tangentially degenerate metric");
        }
    }
    if (std::abs(H.determinant()) <= 1e-300) {
        throw std::domain_error("frame_build: metric is singular (point on the divisor)");
    }
    foliation_frame f;
    f.V.assign(n, VectorXcd::Zero(n));
    f.e.assign(n, VectorXcd::Zero(n));
    f.theta.assign(std::max(0, n - 1), 0.0);

    // g-normal to D: <V, d_j> = 0 for tangential j
    VectorXcd en = VectorXcd::Zero(n);
    en[n - 1] = 1;
    VectorXcd vn = H.transpose().fullPivLu().solve(en);
    f.V[n - 1] = vn / std::sqrt(norm2(R, vn));

    for (int k = n - 1; k >= 1; --k) {
        // g-orthogonal complement of V[n-1..k]
        MatrixXcd rows(n - k, n);
        for (int q = k; q < n; ++q) {
            rows.row(q - k) = (H * f.V[q].conjugate()).transpose();
        }
        const MatrixXcd ker = rows.fullPivLu().kernel();
        // g_reg orthonormal basis of the complement
        std::vector<VectorXcd> basis;
        for (int c = 0; c < ker.cols(); ++c) {
            VectorXcd b = ker.col(c);
            for (const auto &o : basis) {
                b -= ip(R, b, o) * o;
            }
            const double nb = std::sqrt(norm2(R, b));
            if (nb > 1e-13) {
                basis.push_back(b / nb);
            }
        }
        const auto project = [&](const VectorXcd &v) {
            VectorXcd p = VectorXcd::Zero(n);
            for (const auto &b : basis) {
                p += ip(R, v, b) * b;
            }
            return p;
        };
        const VectorXcd &prev = f.V[k];
        VectorXcd vt = project(prev);
        const double c = std::sqrt(std::max(0.0, norm2(R, vt)));
        const VectorXcd resid = prev - vt;
        const double s = std::sqrt(std::max(0.0, norm2(R, resid)));
        if (c < 1e-12) {
            // V[k] is g_reg-orthogonal to the complement: take the coordinate
            // direction with the largest projection
            double best = -1;
            for (int q = n - 1; q >= 0; --q) {
                VectorXcd d = VectorXcd::Zero(n);
                d[q] = 1;
                const VectorXcd pd = project(d);
                const double np = norm2(R, pd);
                if (np > best + 1e-12) {
                    best = np;
                    vt = pd;
                }
            }
            f.V[k - 1] = vt / std::sqrt(norm2(R, vt));
            f.theta[k - 1] = pi / 2;
        } else {
            f.V[k - 1] = vt / c;
            f.theta[k - 1] = std::atan2(s, c);
        }
        f.e[k] = s > 1e-14 ? VectorXcd(resid / s) : prev;
    }
    f.e[0] = f.V[0];

    double lhs = 1, sin2 = 1;
    for (int k = 0; k < n; ++k) {
        f.norm2_gprime.push_back(norm2(H, f.V[k]));
        lhs *= f.norm2_gprime.back();
    }
    for (double t : f.theta) {
        sin2 *= std::sin(t) * std::sin(t);
    }
    const double rhs = std::exp(j.G) * std::norm(j.S) * sin2;
    f.v1vn_residual = std::abs(lhs - rhs) / std::abs(lhs);
    return f;
}

std::vector<VectorXcd> model_sample_points(int n, int count)
{
    counter_rng rng(1, "model_sample_points/" + std::to_string(n));
    std::vector<VectorXcd> pts;
    for (int c = 0; c < count; ++c) {
        VectorXcd p(n);
        for (int i = 0; i + 1 < n; ++i) {
            p[i] = cdouble(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        }
        p[n - 1] = std::polar(rng.uniform(0.05, 0.9), rng.uniform(0, 2 * pi));
        pts.push_back(p);
    }
    return pts;
}

mprime_report mprime_bounds_check(const std::vector<kahler_jet> &jets)
{
    if (jets.empty()) {
        throw std::invalid_argument("mprime_bounds_check: no samples");
    }
    const int n = jets[0].n;
    mprime_report rep;
    rep.samples = int(jets.size());
    double m2 = INFINITY, ginf = INFINITY;
    std::vector<foliation_frame> frames;
    for (const auto &j : jets) {
        frames.push_back(frame_build(j));
        rep.worst_v1vn = std::max(rep.worst_v1vn, frames.back().v1vn_residual);
        if (n >= 2) {
            m2 = std::min(m2, least_generalized_eigenvalue(j.g.topLeftCorner(n - 1, n - 1), j.g_reg.topLeftCorner(n - 1, n - 1)));
        }
        rep.second_bound = std::max(rep.second_bound, second_order_quantity(j));
        ginf = std::min(ginf, j.G);
    }
    if (n < 2) {
        m2 = 1;
    }
    const double C = rep.second_bound;
    rep.mprime = std::sqrt(m2);
    rep.mprime2 = std::max(2.0, 2 * C / m2);
    rep.mprime1 = std::exp(-ginf) * std::pow(C * rep.mprime2, n - 1);
    rep.lower_margin = INFINITY;
    rep.sin_margin = INFINITY;
    const double sin_floor = std::min(0.5, m2 / (2 * C));
    const double printed_floor = std::min(0.5, 2 * m2 / C);
    for (std::size_t s = 0; s < jets.size(); ++s) {
        const auto &j = jets[s];
        const auto &f = frames[s];
        const double ratio = std::norm(j.S) / f.norm2_gprime[n - 1];
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        rep.lower_margin = std::min(rep.lower_margin, ratio / (std::exp(-j.G) * std::pow(m2, n - 1)) - 1);
        for (double t : f.theta) {
            const double s2 = std::sin(t) * std::sin(t);
            rep.sin_margin = std::min(rep.sin_margin, s2 / sin_floor - 1);
            if (s2 < printed_floor * (1 - 1e-12)) {
                rep.printed_sin_bound_holds = false;
            }
        }
    }
    rep.upper_margin = 1 - rep.max_ratio / rep.mprime1;
    return rep;
}

// ------------------------------------------------------ boundedness profile

std::string boundedness_profile_result::csv() const
{
    std::ostringstream os;
    os.precision(12);
    os << "radius,s2,value,weighted\n";
    for (const auto &r : rows) {
        os << r.radius << ',' << r.s2 << ',' << r.value << ',' << r.weighted << '\n';
    }
    return os.str();
}

boundedness_profile_result boundedness_profile(const kahler_model &m, estimate_quantity q, const boundedness_options &opt)
{
    if (!(opt.r_min > 0 && opt.r_max > opt.r_min) || opt.radii < 2 || opt.rays < 1) {
        throw std::invalid_argument("boundedness_profile: bad radii");
    }
    const int n = m.n;
    boundedness_profile_result res;
    res.model = m.name;
    res.quantity = q;
    VectorXcd w0(n);
    for (int i = 0; i + 1 < n; ++i) {
        w0[i] = cdouble(0.2 * std::cos(i + 1.0), 0.1 * std::sin(i + 1.0));
    }
    for (int k = 0; k < opt.radii; ++k) {
        const double r = opt.r_max * std::pow(opt.r_min / opt.r_max, double(k) / (opt.radii - 1));
        profile_row row;
        row.radius = r;
        row.s2 = r * r;
        row.weighted = -INFINITY;
        for (int ray = 0; ray < opt.rays; ++ray) {
            VectorXcd p = w0;
            p[n - 1] = std::polar(r, 2 * pi * ray / opt.rays + 0.3);
            const kahler_jet j = opt.finite_differences ? jet_fd(m, p, r) : m.jet(p);
            double v = 0, wv = 0;
            switch (q) {
            case estimate_quantity::psi:
                v = psi_compute(j);
                wv = row.s2 * row.s2 * v;
                break;
            case estimate_quantity::psi1:
                v = n >= 2 ? psi1_compute(j, opt.slots) : 0.0;
                wv = v;
                break;
            case estimate_quantity::second_order:
                v = second_order_quantity(j);
                wv = v;
                break;
            }
            if (wv > row.weighted) {
                row.weighted = wv;
                row.value = v;
            }
        }
        res.max_weighted = std::max(res.max_weighted, row.weighted);
        res.rows.push_back(row);
    }
    // slope over the last decade
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    bool all_zero = true;
    for (const auto &r : res.rows) {
        if (r.radius <= 10 * opt.r_min * (1 + 1e-12)) {
            if (r.weighted > 0) {
                all_zero = false;
                const double x = std::log(r.radius), y = std::log(r.weighted);
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
                ++cnt;
            }
        }
    }
    if (all_zero || cnt < 2) {
        res.slope = 0;
    } else {
        res.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    }
    res.bounded = res.slope >= -0.1 && std::isfinite(res.max_weighted);
    return res;
}

// ---------------------------------------------- second order inequality

second_order_report second_order_inequality_check(const kahler_model &m, const second_order_options &opt)
{
    const int n = m.n;
    if (n < 2) {
        throw std::invalid_argument("second_order_inequality_check: needs n >= 2");
    }
    if (!(opt.C + m.inf_curvature > 0)) {
        throw std::invalid_argument("second_order_inequality_check: C + inf R must be positive");
    }
    const double C = opt.C, R = m.inf_curvature, mm = n;
    const auto chi = [&](const VectorXcd &p) { return opt.cutoff_width > 0 ? std::exp(-p.squaredNorm() / (opt.cutoff_width * opt.cutoff_width)) : 1.0; };
    const auto f = [&](const VectorXcd &p) { return chi(p) * std::exp(-C * m.phi.value(p)) * model_metric(m, p).trace().real(); };
    const auto Gf = [&](const VectorXcd &p) { return m.G(p); };

    second_order_report rep;
    rep.min_margin = INFINITY;
    for (int ir = 0; ir < opt.nr; ++ir) {
        const double r = opt.nr == 1 ? opt.r_inner : opt.r_inner + (opt.r_outer - opt.r_inner) * ir / (opt.nr - 1);
        for (int ia = 0; ia < opt.nangle; ++ia) {
            for (int iw = 0; iw < opt.nw; ++iw) {
                VectorXcd p(n);
                for (int i = 0; i + 1 < n; ++i) {
                    p[i] = std::polar(0.15 * iw, 0.7 * iw + i);
                }
                p[n - 1] = std::polar(r, 2 * pi * ia / opt.nangle);
                if (r < 1e-8) {
                    ++rep.excluded;
                    continue;
                }
                const double h = opt.h * r;
                const MatrixXcd H = model_metric(m, p);
                const MatrixXcd gi = inverse_metric(H);
                const MatrixXcd fh = complex_hessian(f, p, h);
                cdouble lhs = 0;
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < n; ++j) {
                        lhs += gi(i, j) * fh(i, j);
                    }
                }
                const double lapG = complex_hessian(Gf, p, h).trace().real();
                const double A = H.trace().real();
                const double E = std::exp(-C * m.phi.value(p));
                const double ch = chi(p);
                const double lap_u = opt.cutoff_width > 0 ? -gi.trace().real() / (opt.cutoff_width * opt.cutoff_width) : 0.0;
                const double F = m.G(p) + std::log(std::norm(p[n - 1]));
                const double cm = (opt.flip_sign ? 1.0 : -1.0) * C * mm;
                const double rhs = E * (ch * (lapG - mm * mm * R) + (cm + lap_u) * ch * A +
                                        ch * (C + R) * std::exp(-F / (mm - 1)) * std::pow(A, mm / (mm - 1)));
                const double margin = lhs.real() - rhs;
                ++rep.points;
                if (margin < rep.min_margin) {
                    rep.min_margin = margin;
                    rep.worst_point = p;
                    rep.lhs_at_worst = lhs.real();
                    rep.rhs_at_worst = rhs;
                }
            }
        }
    }
    return rep;
}

// --------------------------------------------------- divisor lower bound

lower_bound_report gprime_D_lower_bound(const std::vector<std::vector<std::pair<double, double>>> &curves, const lower_bound_options &opt)
{
    lower_bound_report rep;
    rep.min_u = INFINITY;
    const double a = opt.exponent;
    for (const auto &c : curves) {
        if (c.size() < 3) {
            throw std::invalid_argument("gprime_D_lower_bound: curves need at least 3 samples");
        }
        double umax = -INFINITY;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (!(c[i].second > 0)) {
                throw std::invalid_argument("gprime_D_lower_bound: u must be positive");
            }
            if (i > 0 && !(c[i].first > c[i - 1].first)) {
                throw std::invalid_argument("gprime_D_lower_bound: t must increase");
            }
            umax = std::max(umax, c[i].second);
            rep.min_u = std::min(rep.min_u, c[i].second);
            // derivative of the quadratic through three neighbouring samples
            const std::size_t m = std::clamp<std::size_t>(i, 1, c.size() - 2);
            const double t0 = c[m - 1].first, t1 = c[m].first, t2 = c[m + 1].first, t = c[i].first;
            const double du = c[m - 1].second * (2 * t - t1 - t2) / ((t0 - t1) * (t0 - t2)) +
                              c[m].second * (2 * t - t0 - t2) / ((t1 - t0) * (t1 - t2)) +
                              c[m + 1].second * (2 * t - t0 - t1) / ((t2 - t0) * (t2 - t1));
            rep.measured_C = std::max(rep.measured_C, std::abs(du) * std::pow(c[i].second, -a));
        }
        if (umax < 1 - 1e-12) {
            rep.normalized = false;
        }
    }
    if (opt.C >= 0) {
        rep.used_C = opt.C;
        rep.inequality_holds = rep.measured_C <= opt.C * (1 + 1e-6) + 1e-12;
    } else {
        rep.used_C = rep.measured_C;
    }
    rep.asserted = a >= 1 && rep.inequality_holds && rep.normalized;
    if (!rep.asserted) {
        rep.bound = 0;
        rep.holds = false;
        return rep;
    }
    const double Cd = rep.used_C * opt.diameter;
    rep.bound = a == 1 ? std::exp(-Cd) : std::pow(1 + (a - 1) * Cd, -1 / (a - 1));
    rep.holds = rep.min_u >= rep.bound * (1 - 1e-9);
    return rep;
}

std::vector<std::pair<double, double>> divisor_curve(const kahler_model &m, const VectorXcd &w0, const VectorXcd &dir, double length,
                                                     int samples)
{
    const int n = m.n;
    if (w0.size() != n - 1 || dir.size() != n - 1 || samples < 3) {
        throw std::invalid_argument("divisor_curve: bad arguments");
    }
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < samples; ++i) {
        const double t = length * i / (samples - 1);
        VectorXcd p(n);
        p.head(n - 1) = w0 + t * dir;
        p[n - 1] = 0;
        const MatrixXcd gT = model_metric(m, p).topLeftCorner(n - 1, n - 1);
        out.emplace_back(t, gT.determinant().real());
    }
    return out;
}

} // namespace dcma
