#ifndef DCMA_RECURSION_HPP
#define DCMA_RECURSION_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <dcma/powerseries.hpp>

namespace dcma
{

struct degenerate_metric_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct order_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// g'_{i jbar} as series. Indices 0..n-2 are the w directions, n-1 is z.
template <typename T>
struct metric_jet {
    int n = 0;
    std::vector<std::vector<truncated_bi_series<T>>> g;

    const truncated_bi_series<T> &operator()(int i, int j) const
    {
        return g[i][j];
    }
};

template <typename T>
struct boundary_data {
    w_polynomial<T> B00;
    std::vector<w_polynomial<T>> Bk0; // k = 1..K
    std::vector<w_polynomial<T>> B0l; // l = 1..L
};

// Taylor data (det G)_{k,l}; cells not stored are zero.
template <typename T>
struct rhs_jet {
    int K = 0, L = 0, nw = 0, d = 0; // orders covered
    std::map<std::pair<int, int>, w_polynomial<T>> coeffs;

    w_polynomial<T> at(int k, int l) const
    {
        auto it = coeffs.find({k, l});
        return it == coeffs.end() ? w_polynomial<T>(nw, d) : it->second;
    }
};

namespace detail
{

template <typename T>
inline double reality_defect(const truncated_bi_series<T> &s)
{
    if (s.K() != s.L()) {
        return INFINITY;
    }
    double m = 0.0;
    for (int k = 0; k <= s.K(); ++k) {
        for (int l = k; l <= s.L(); ++l) {
            m = std::max(m, (s(l, k) - s(k, l).conj()).max_abs());
        }
    }
    return m;
}

template <typename T>
inline bool series_is_real(const truncated_bi_series<T> &s)
{
    if constexpr (coeff_traits<T>::exact) {
        return s.is_real();
    } else {
        return s.K() == s.L() && reality_defect(s) <= 1e-12 * std::max(1.0, s.max_abs());
    }
}

template <typename T>
inline truncated_bi_series<T> series_det(const std::vector<std::vector<truncated_bi_series<T>>> &m);

// Minor with row r and column c removed.
template <typename T>
inline std::vector<std::vector<truncated_bi_series<T>>>
drop_row_col(const std::vector<std::vector<truncated_bi_series<T>>> &m, std::size_t r, std::size_t c)
{
    std::vector<std::vector<truncated_bi_series<T>>> out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i == r) {
            continue;
        }
        std::vector<truncated_bi_series<T>> row;
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (j != c) {
                row.push_back(m[i][j]);
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

// Laplace expansion along the first row.
template <typename T>
inline truncated_bi_series<T> series_det(const std::vector<std::vector<truncated_bi_series<T>>> &m)
{
    if (m.size() == 1) {
        return m[0][0];
    }
    truncated_bi_series<T> acc(m[0][0].K(), m[0][0].L(), m[0][0].nw(), m[0][0].d());
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (m[0][j].is_zero()) {
            continue;
        }
        auto t = series_mul(m[0][j], series_det(drop_row_col(m, 0, j)));
        acc = j % 2 == 0 ? series_add(acc, t) : series_sub(acc, t);
    }
    return acc;
}

template <typename T>
inline w_polynomial<T> poly_det(const poly_matrix<T> &m)
{
    if (m.size() == 1) {
        return m[0][0];
    }
    w_polynomial<T> acc(m[0][0].nw(), m[0][0].max_degree());
    for (std::size_t j = 0; j < m.size(); ++j) {
        poly_matrix<T> sub;
        for (std::size_t i = 1; i < m.size(); ++i) {
            std::vector<w_polynomial<T>> row;
            for (std::size_t c = 0; c < m.size(); ++c) {
                if (c != j) {
                    row.push_back(m[i][c]);
                }
            }
            sub.push_back(std::move(row));
        }
        auto t = m[0][j] * poly_det(sub);
        acc = j % 2 == 0 ? acc + t : acc - t;
    }
    return acc;
}

} // namespace detail

template <typename T>
inline metric_jet<T> assemble_metric_jet(const truncated_bi_series<T> &phi)
{
    if (!phi.reality_flag()) {
        throw std::invalid_argument("assemble_metric_jet: potential must be real");
    }
    const int n = phi.nw() + 1;
    metric_jet<T> G;
    G.n = n;
    G.g.assign(n, std::vector<truncated_bi_series<T>>(n));
    auto holo = [&](int i) { return i == n - 1 ? variable::z() : variable::w(i); };
    auto anti = [&](int j) { return j == n - 1 ? variable::zbar() : variable::wbar(j); };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            G.g[i][j] = series_diff2(phi, holo(i), anti(j));
        }
    }
    return G;
}

// Tangential block G_0 of the jet (w directions only).
template <typename T>
inline std::vector<std::vector<truncated_bi_series<T>>> tangential_block(const metric_jet<T> &G)
{
    std::vector<std::vector<truncated_bi_series<T>>> A(G.n - 1, std::vector<truncated_bi_series<T>>(G.n - 1));
    for (int i = 0; i < G.n - 1; ++i) {
        for (int j = 0; j < G.n - 1; ++j) {
            A[i][j] = G.g[i][j];
        }
    }
    return A;
}

// det G = g_{zzbar} det A - sum_{i,j} g_{z ibar} g_{j zbar} cof(A)_{j,i},
// cof(A)_{j,i} = (-1)^{i+j} det(A without row j, column i).
template <typename T>
inline truncated_bi_series<T> det_cofactor(const metric_jet<T> &G)
{
    const int n = G.n;
    const auto &gzz = G.g[n - 1][n - 1];
    if (n == 1) {
        return gzz;
    }
    const auto A = tangential_block(G);
    auto det = series_mul(gzz, detail::series_det(A));
    for (int i = 0; i < n - 1; ++i) {
        const auto &c = G.g[n - 1][i];
        if (c.is_zero()) {
            continue;
        }
        for (int j = 0; j < n - 1; ++j) {
            const auto &b = G.g[j][n - 1];
            if (b.is_zero()) {
                continue;
            }
            truncated_bi_series<T> cof;
            if (n == 2) {
                cof = truncated_bi_series<T>(gzz.K(), gzz.L(), gzz.nw(), gzz.d());
                cof.at(0, 0) = w_polynomial<T>::constant(gzz.nw(), gzz.d(), coeff_traits<T>::from_int(1));
            } else {
                cof = detail::series_det(detail::drop_row_col(A, j, i));
            }
            auto t = series_mul(series_mul(c, b), cof);
            det = (i + j) % 2 == 0 ? series_sub(det, t) : series_add(det, t);
        }
    }
    det.set_real_flag(false);
    return det;
}

// ∂²B00/∂w_i∂wbar_j
template <typename T>
inline poly_matrix<T> g0_matrix(const w_polynomial<T> &B00)
{
    const int nw = B00.nw();
    poly_matrix<T> g(nw, std::vector<w_polynomial<T>>(nw));
    for (int i = 0; i < nw; ++i) {
        for (int j = 0; j < nw; ++j) {
            g[i][j] = B00.diff_slot(i).diff_slot(nw + j);
        }
    }
    return g;
}

template <typename T>
inline truncated_bi_series<T> series_from_boundary(const boundary_data<T> &bd, int K, int L)
{
    const int nw = bd.B00.nw(), d = bd.B00.max_degree();
    truncated_bi_series<T> phi(K, L, nw, d);
    phi.set(0, 0, bd.B00);
    for (int k = 1; k <= K && k <= static_cast<int>(bd.Bk0.size()); ++k) {
        phi.set(k, 0, bd.Bk0[k - 1]);
    }
    for (int l = 1; l <= L && l <= static_cast<int>(bd.B0l.size()); ++l) {
        phi.set(0, l, bd.B0l[l - 1]);
    }
    return phi;
}

template <typename T>
struct recursion_result {
    truncated_bi_series<T> phi;
    // Guaranteed w-degree of each cell, row-major over (K+1)x(L+1); boundary
    // cells carry a large sentinel since they are exact input data.
    std::vector<int> degree_window;
};

// Mixed coefficients along diagonals k+l = const. For a cell (k,l) the
// recomposed (det G)_{k,l} is affine in B_{k+1,l+1} with slope
// (k+1)(l+1) det G0, and no other cell of the same diagonal enters it, so
// each diagonal is one recomposition followed by a division by det G0.
template <typename T>
inline recursion_result<T> solve_recursion_detailed(const boundary_data<T> &bd, const rhs_jet<T> &rhs, int K, int L)
{
    using tr = coeff_traits<T>;
    if (K < 1 || L < 1) {
        throw order_error("solve_recursion: orders must be at least (1, 1)");
    }
    if (rhs.K < K - 1 || rhs.L < L - 1) {
        throw order_error("solve_recursion: rhs covers (" + std::to_string(rhs.K) + ", " + std::to_string(rhs.L)
                          + "), need (" + std::to_string(K - 1) + ", " + std::to_string(L - 1) + ")");
    }
    const int nw = bd.B00.nw(), d = bd.B00.max_degree();
    if (rhs.nw != nw || rhs.d != d) {
        throw std::invalid_argument("solve_recursion: rhs shape does not match boundary data");
    }
    const auto g0 = g0_matrix(bd.B00);
    const auto detg0 = nw == 0 ? w_polynomial<T>::constant(0, d, tr::from_int(1)) : detail::poly_det(g0);
    if (tr::norm(detg0.constant_term()) < 1e-12) {
        throw degenerate_metric_error("solve_recursion: det G0 vanishes at the base point");
    }
    const auto inv = truncated_inverse(detg0);

    auto phi = series_from_boundary(bd, K, L);
    const bool real = K == L && detail::series_is_real(phi);
    // Boundary polynomials are exact data; computed cells are exact through degree d
    // only, and each w-derivative of them costs one degree.
    constexpr int exact_data = 1 << 20;
    std::vector<int> win(static_cast<std::size_t>((K + 1) * (L + 1)), exact_data);
    auto wref = [&](int k, int l) -> int & { return win[static_cast<std::size_t>(k * (L + 1) + l)]; };

    for (int s = 0; s <= (K - 1) + (L - 1); ++s) {
        phi.set_real_flag(true);
        const auto det = det_cofactor(assemble_metric_jet(phi));
        for (int k = std::max(0, s - (L - 1)); k <= std::min(K - 1, s); ++k) {
            const int l = s - k;
            auto defect = rhs.at(k, l) - det(k, l);
            auto b = (defect * inv).scaled(tr::from_int(1) / tr::from_int((k + 1) * (l + 1)));
            phi.set(k + 1, l + 1, std::move(b));

            int w = d;
            for (int a = 0; a <= k; ++a) {
                for (int c = 0; c <= l; ++c) {
                    w = std::min(w, wref(a, c) - 2);
                    if (a + 1 <= K) {
                        w = std::min(w, wref(a + 1, c) - 1);
                    }
                    if (c + 1 <= L) {
                        w = std::min(w, wref(a, c + 1) - 1);
                    }
                    if (a != k || c != l) {
                        w = std::min(w, wref(a + 1, c + 1));
                    }
                }
            }
            wref(k + 1, l + 1) = w;
        }
    }
    phi.set_real_flag(real);
    int wmin = d;
    for (int v : win) {
        wmin = std::min(wmin, v);
    }
    phi.set_window({K, L, std::max(wmin, -1)});
    return {std::move(phi), std::move(win)};
}

template <typename T>
inline truncated_bi_series<T> solve_recursion(const boundary_data<T> &bd, const rhs_jet<T> &rhs, int K, int L)
{
    return solve_recursion_detailed(bd, rhs, K, L).phi;
}

// The leading form of the update: (det G)_{k,l}/((k+1)(l+1) det G0) plus the
// weighted <dbar B_{r+1,s}, d B_{p,q+1}> sum (the sign follows from
// det G = g_{zzbar} det G0 - g_{z ibar} g_{j zbar} cof). It coincides with the
// full update whenever the tangential block does not depend on z.
template <typename T>
inline w_polynomial<T> bkl_leading_update(const truncated_bi_series<T> &phi, const rhs_jet<T> &rhs, int k, int l)
{
    using tr = coeff_traits<T>;
    const auto g0 = g0_matrix(phi(0, 0));
    const auto detg0 = detail::poly_det(g0);
    const auto inv = truncated_inverse(detg0);
    // inverse of G0 as adj(G0)/det G0
    const int nw = phi.nw();
    poly_matrix<T> g0inv(nw, std::vector<w_polynomial<T>>(nw));
    for (int i = 0; i < nw; ++i) {
        for (int j = 0; j < nw; ++j) {
            w_polynomial<T> cof;
            if (nw == 1) {
                cof = w_polynomial<T>::constant(nw, phi.d(), tr::from_int(1));
            } else {
                poly_matrix<T> sub;
                for (int r = 0; r < nw; ++r) {
                    if (r == j) {
                        continue;
                    }
                    std::vector<w_polynomial<T>> row;
                    for (int c = 0; c < nw; ++c) {
                        if (c != i) {
                            row.push_back(g0[r][c]);
                        }
                    }
                    sub.push_back(std::move(row));
                }
                cof = detail::poly_det(sub);
            }
            // (G0^{-1})_{ij} with G0 indexed (w_i, wbar_j): contraction uses the transpose
            g0inv[j][i] = (cof * inv).scaled((i + j) % 2 == 0 ? tr::from_int(1) : tr::from_int(-1));
        }
    }
    const T denom = tr::from_int((k + 1) * (l + 1));
    auto out = (rhs.at(k, l) * inv).scaled(tr::from_int(1) / denom);
    for (int r = 0; r <= k; ++r) {
        for (int s = 0; s <= l; ++s) {
            const int p = k - r, q = l - s;
            auto ip = inner_product_D(phi(r + 1, s), phi(p, q + 1), g0inv);
            out += ip.scaled(tr::from_int((r + 1) * (q + 1)) / denom);
        }
    }
    return out;
}

// Largest coefficient norm of det G - rhs over the rhs cells.
template <typename T>
inline std::vector<std::vector<double>> residual_table(const truncated_bi_series<T> &phi, const rhs_jet<T> &rhs)
{
    const int Kr = std::min(rhs.K, phi.K() - 1), Lr = std::min(rhs.L, phi.L() - 1);
    const auto det = det_cofactor(assemble_metric_jet(phi));
    std::vector<std::vector<double>> t(Kr + 1, std::vector<double>(Lr + 1, 0.0));
    for (int k = 0; k <= Kr; ++k) {
        for (int l = 0; l <= Lr; ++l) {
            t[k][l] = (det(k, l) - rhs.at(k, l)).max_abs();
        }
    }
    return t;
}

template <typename T>
inline double residual_check(const truncated_bi_series<T> &phi, const rhs_jet<T> &rhs)
{
    double m = 0.0;
    for (const auto &row : residual_table(phi, rhs)) {
        for (double v : row) {
            m = std::max(m, v);
        }
    }
    return m;
}

struct normal_form_condition {
    std::string name;
    bool pass;
    double magnitude;
};

template <typename T>
inline std::vector<normal_form_condition> normal_form_check(const truncated_bi_series<T> &phi, double tol = 0.0)
{
    const int nw = phi.nw();
    std::vector<normal_form_condition> out;
    auto slot_coeff = [&](const w_polynomial<T> &p, int s) {
        std::vector<int> e(2 * nw, 0);
        e[s] = 1;
        return coeff_traits<T>::norm(p.coeff(p.pack(e)));
    };
    double m1 = 0.0, m3 = 0.0;
    if (phi.K() >= 1) {
        for (int i = 0; i < nw; ++i) {
            m1 = std::max(m1, slot_coeff(phi(1, 0), nw + i));
        }
    }
    out.push_back({"(B_{1,0})_{wbar_k}(0)=0", m1 <= tol, m1});
    const double m2 = phi.K() >= 1 && phi.L() >= 1 ? coeff_traits<T>::norm(phi(1, 1).constant_term()) : 0.0;
    out.push_back({"B_{1,1}(0)=0", m2 <= tol, m2});
    if (phi.K() >= 2 && phi.L() >= 1) {
        for (int i = 0; i < nw; ++i) {
            m3 = std::max(m3, slot_coeff(phi(2, 1), i));
        }
    }
    out.push_back({"(B_{2,1})_{w_k}(0)=0", m3 <= tol, m3});
    return out;
}

struct positivity_report {
    double min_full_eigenvalue;
    double min_tangential_eigenvalue;
};

template <typename T>
inline Eigen::MatrixXcd jet_eval(const metric_jet<T> &G, cplx z, const std::vector<cplx> &w)
{
    Eigen::MatrixXcd M(G.n, G.n);
    for (int i = 0; i < G.n; ++i) {
        for (int j = 0; j < G.n; ++j) {
            M(i, j) = G.g[i][j].eval(z, w);
        }
    }
    // Hermitian part guards against truncation asymmetry
    return 0.5 * (M + M.adjoint());
}

template <typename T>
inline double jet_min_eigenvalue(const metric_jet<T> &G, cplx z, const std::vector<cplx> &w)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(jet_eval(G, z, w), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Numerical eigenvalues of the jet sampled on circles |z| = r (8 angles each)
// at the given w points; the tangential block is also sampled at z = 0.
template <typename T>
inline positivity_report positivity_scan(const metric_jet<T> &G, const std::vector<double> &radii,
                                         const std::vector<std::vector<cplx>> &w_samples)
{
    if (std::any_of(radii.begin(), radii.end(), [](double r) { return !(r > 0.0); })) {
        throw std::invalid_argument("positivity_scan: radii must be positive");
    }
    const int n = G.n;
    positivity_report rep{INFINITY, INFINITY};
    auto sample = [&](cplx z, const std::vector<cplx> &w, bool full) {
        const Eigen::MatrixXcd H = jet_eval(G, z, w);
        if (full) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
            rep.min_full_eigenvalue = std::min(rep.min_full_eigenvalue, es.eigenvalues().minCoeff());
        }
        if (n > 1) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> et(H.topLeftCorner(n - 1, n - 1), Eigen::EigenvaluesOnly);
            rep.min_tangential_eigenvalue = std::min(rep.min_tangential_eigenvalue, et.eigenvalues().minCoeff());
        }
    };
    for (const auto &w : w_samples) {
        sample(cplx(0.0, 0.0), w, false);
        for (double r : radii) {
            for (int a = 0; a < 8; ++a) {
                sample(std::polar(r, 2.0 * M_PI * a / 8.0), w, true);
            }
        }
    }
    return rep;
}

} // namespace dcma

#endif
