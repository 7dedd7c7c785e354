#ifndef DCMA_POWERSERIES_HPP
#define DCMA_POWERSERIES_HPP

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <dcma/coeff.hpp>

namespace dcma
{

// Polynomial in w_1..w_nw and their conjugates, truncated at total degree d.
// Exponents are packed one byte per slot: w_i in slot i, wbar_i in slot nw+i.
template <typename T>
class w_polynomial
{
public:
    using key_type = std::uint64_t;
    using traits = coeff_traits<T>;
    static constexpr int max_nw = 4;

    w_polynomial() = default;
    w_polynomial(int nw, int d) : m_nw(nw), m_d(d)
    {
        if (nw < 0 || nw > max_nw || d < 0 || d > 255) {
            throw std::invalid_argument("w_polynomial: unsupported shape");
        }
    }

    static w_polynomial constant(int nw, int d, const T &c)
    {
        w_polynomial p(nw, d);
        p.add_term(0, c);
        return p;
    }
    // exps lists w exponents then wbar exponents (length 2*nw).
    static w_polynomial monomial(int nw, int d, const std::vector<int> &exps, const T &c)
    {
        w_polynomial p(nw, d);
        p.add_term(p.pack(exps), c);
        return p;
    }

    key_type pack(const std::vector<int> &exps) const
    {
        if (static_cast<int>(exps.size()) != 2 * m_nw) {
            throw std::invalid_argument("w_polynomial: exponent list has wrong length");
        }
        key_type k = 0;
        for (int s = 0; s < 2 * m_nw; ++s) {
            if (exps[s] < 0 || exps[s] > 255) {
                throw std::invalid_argument("w_polynomial: exponent out of range");
            }
            k |= static_cast<key_type>(exps[s]) << (8 * s);
        }
        return k;
    }
    std::vector<int> unpack(key_type k) const
    {
        std::vector<int> e(2 * m_nw);
        for (int s = 0; s < 2 * m_nw; ++s) {
            e[s] = static_cast<int>((k >> (8 * s)) & 0xffu);
        }
        return e;
    }
    static int slot_exp(key_type k, int s)
    {
        return static_cast<int>((k >> (8 * s)) & 0xffu);
    }
    int key_degree(key_type k) const
    {
        int deg = 0;
        for (int s = 0; s < 2 * m_nw; ++s) {
            deg += slot_exp(k, s);
        }
        return deg;
    }

    int nw() const
    {
        return m_nw;
    }
    int max_degree() const
    {
        return m_d;
    }
    const std::map<key_type, T> &terms() const
    {
        return m_terms;
    }
    bool is_zero() const
    {
        return m_terms.empty();
    }
    bool same_shape(const w_polynomial &o) const
    {
        return m_nw == o.m_nw && m_d == o.m_d;
    }

    // Terms of degree > d are dropped, zero results erased.
    void add_term(key_type k, const T &c)
    {
        if (key_degree(k) > m_d || traits::is_zero(c)) {
            return;
        }
        auto it = m_terms.find(k);
        if (it == m_terms.end()) {
            m_terms.emplace(k, c);
            return;
        }
        it->second += c;
        if (traits::is_zero(it->second)) {
            m_terms.erase(it);
        }
    }

    T coeff(key_type k) const
    {
        auto it = m_terms.find(k);
        return it == m_terms.end() ? traits::from_int(0) : it->second;
    }
    T constant_term() const
    {
        return coeff(0);
    }

    friend bool operator==(const w_polynomial &a, const w_polynomial &b)
    {
        return a.same_shape(b) && a.m_terms == b.m_terms;
    }

    w_polynomial &operator+=(const w_polynomial &o)
    {
        check_shape(o);
        for (const auto &[k, c] : o.m_terms) {
            add_term(k, c);
        }
        return *this;
    }
    w_polynomial &operator-=(const w_polynomial &o)
    {
        check_shape(o);
        for (const auto &[k, c] : o.m_terms) {
            add_term(k, -c);
        }
        return *this;
    }
    friend w_polynomial operator+(w_polynomial a, const w_polynomial &b)
    {
        a += b;
        return a;
    }
    friend w_polynomial operator-(w_polynomial a, const w_polynomial &b)
    {
        a -= b;
        return a;
    }
    friend w_polynomial operator-(const w_polynomial &a)
    {
        w_polynomial r(a.m_nw, a.m_d);
        for (const auto &[k, c] : a.m_terms) {
            r.m_terms.emplace(k, -c);
        }
        return r;
    }
    friend w_polynomial operator*(const w_polynomial &a, const w_polynomial &b)
    {
        a.check_shape(b);
        w_polynomial r(a.m_nw, a.m_d);
        if (a.is_zero() || b.is_zero()) {
            return r;
        }
        for (const auto &[ka, ca] : a.m_terms) {
            const int da = a.key_degree(ka);
            for (const auto &[kb, cb] : b.m_terms) {
                if (da + a.key_degree(kb) > a.m_d) {
                    continue;
                }
                r.add_term(ka + kb, ca * cb);
            }
        }
        return r;
    }
    w_polynomial scaled(const T &s) const
    {
        w_polynomial r(m_nw, m_d);
        if (traits::is_zero(s)) {
            return r;
        }
        for (const auto &[k, c] : m_terms) {
            r.add_term(k, c * s);
        }
        return r;
    }

    // Swap w <-> wbar and conjugate coefficients.
    w_polynomial conj() const
    {
        w_polynomial r(m_nw, m_d);
        for (const auto &[k, c] : m_terms) {
            auto e = unpack(k);
            std::vector<int> f(e.size());
            for (int i = 0; i < m_nw; ++i) {
                f[i] = e[m_nw + i];
                f[m_nw + i] = e[i];
            }
            r.m_terms.emplace(pack(f), traits::conj(c));
        }
        return r;
    }

    // Derivative with respect to slot s (w_i: s=i, wbar_i: s=nw+i).
    w_polynomial diff_slot(int s) const
    {
        if (s < 0 || s >= 2 * m_nw) {
            throw std::out_of_range("w_polynomial: unknown variable index");
        }
        w_polynomial r(m_nw, m_d);
        const key_type unit = key_type(1) << (8 * s);
        for (const auto &[k, c] : m_terms) {
            const int e = slot_exp(k, s);
            if (e == 0) {
                continue;
            }
            r.add_term(k - unit, c * traits::from_int(e));
        }
        return r;
    }

    cplx eval(const std::vector<cplx> &w) const
    {
        if (static_cast<int>(w.size()) != m_nw) {
            throw std::invalid_argument("w_polynomial: wrong point dimension");
        }
        cplx acc(0.0, 0.0);
        for (const auto &[k, c] : m_terms) {
            cplx t = traits::to_cplx(c);
            for (int i = 0; i < m_nw; ++i) {
                const int e = slot_exp(k, i), f = slot_exp(k, m_nw + i);
                for (int j = 0; j < e; ++j) {
                    t *= w[i];
                }
                for (int j = 0; j < f; ++j) {
                    t *= std::conj(w[i]);
                }
            }
            acc += t;
        }
        return acc;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (const auto &[k, c] : m_terms) {
            m = std::max(m, traits::norm(c));
        }
        return m;
    }

    // Drop terms above degree dd (dd <= d).
    w_polynomial truncated(int dd) const
    {
        w_polynomial r(m_nw, m_d);
        for (const auto &[k, c] : m_terms) {
            if (key_degree(k) <= dd) {
                r.m_terms.emplace(k, c);
            }
        }
        return r;
    }

private:
    void check_shape(const w_polynomial &o) const
    {
        if (!same_shape(o)) {
            throw std::invalid_argument("w_polynomial: shape mismatch");
        }
    }

    int m_nw = 0;
    int m_d = 0;
    std::map<key_type, T> m_terms;
};

// 1/p as a truncated geometric series around p(0).
template <typename T>
inline w_polynomial<T> truncated_inverse(const w_polynomial<T> &p, double tol = 1e-12)
{
    using tr = coeff_traits<T>;
    const T c0 = p.constant_term();
    if (tr::norm(c0) < tol) {
        throw std::domain_error("truncated_inverse: constant term vanishes");
    }
    const T inv0 = tr::from_int(1) / c0;
    w_polynomial<T> q = p.scaled(inv0);
    q.add_term(0, -tr::from_int(1));
    w_polynomial<T> sum = w_polynomial<T>::constant(p.nw(), p.max_degree(), tr::from_int(1));
    w_polynomial<T> pw = sum;
    const w_polynomial<T> mq = -q;
    for (int j = 1; j <= p.max_degree() && !q.is_zero(); ++j) {
        pw = pw * mq;
        if (pw.is_zero()) {
            break;
        }
        sum += pw;
    }
    return sum.scaled(inv0);
}

struct variable {
    enum class kind { z, zbar, w, wbar };
    kind k;
    int index = 0;

    static variable z()
    {
        return {kind::z, 0};
    }
    static variable zbar()
    {
        return {kind::zbar, 0};
    }
    static variable w(int i)
    {
        return {kind::w, i};
    }
    static variable wbar(int i)
    {
        return {kind::wbar, i};
    }
};

// Orders through which coefficients are known to be exact.
struct accuracy_window {
    int k, l, d;
    friend bool operator==(const accuracy_window &, const accuracy_window &) = default;
};

// sum_{k<=K, l<=L} B_{k,l}(w, wbar) z^k zbar^l
template <typename T>
class truncated_bi_series
{
public:
    using poly_type = w_polynomial<T>;
    using traits = coeff_traits<T>;

    truncated_bi_series() = default;
    truncated_bi_series(int K, int L, int nw, int d)
        : m_K(K), m_L(L), m_nw(nw), m_d(d), m_win{K, L, d},
          m_coeffs(static_cast<std::size_t>((K + 1) * (L + 1)), poly_type(nw, d))
    {
        if (K < 0 || L < 0) {
            throw std::invalid_argument("truncated_bi_series: negative order");
        }
    }

    int K() const
    {
        return m_K;
    }
    int L() const
    {
        return m_L;
    }
    int nw() const
    {
        return m_nw;
    }
    int d() const
    {
        return m_d;
    }
    const accuracy_window &window() const
    {
        return m_win;
    }
    void set_window(const accuracy_window &w)
    {
        m_win = w;
    }
    bool reality_flag() const
    {
        return m_real;
    }
    bool same_shape(const truncated_bi_series &o) const
    {
        return m_K == o.m_K && m_L == o.m_L && m_nw == o.m_nw && m_d == o.m_d;
    }

    const poly_type &operator()(int k, int l) const
    {
        return m_coeffs[idx(k, l)];
    }
    poly_type &at(int k, int l)
    {
        return m_coeffs[idx(k, l)];
    }
    void set(int k, int l, poly_type p)
    {
        if (p.nw() != m_nw || p.max_degree() != m_d) {
            throw std::invalid_argument("truncated_bi_series: coefficient shape mismatch");
        }
        m_coeffs[idx(k, l)] = std::move(p);
    }
    poly_type zero_poly() const
    {
        return poly_type(m_nw, m_d);
    }

    // B_{l,k} == conj(B_{k,l}) for all k, l.
    bool is_real() const
    {
        if (m_K != m_L) {
            return false;
        }
        for (int k = 0; k <= m_K; ++k) {
            for (int l = k; l <= m_L; ++l) {
                if (!((*this)(l, k) == (*this)(k, l).conj())) {
                    return false;
                }
            }
        }
        return true;
    }
    // Sets the flag after verifying the invariant.
    void mark_real()
    {
        if (!is_real()) {
            throw std::invalid_argument("truncated_bi_series: series is not real");
        }
        m_real = true;
    }
    void clear_real()
    {
        m_real = false;
    }
    // Unchecked; used by operations that preserve reality structurally.
    void set_real_flag(bool f)
    {
        m_real = f;
    }

    bool is_zero() const
    {
        return std::all_of(m_coeffs.begin(), m_coeffs.end(), [](const poly_type &p) { return p.is_zero(); });
    }

    friend bool operator==(const truncated_bi_series &a, const truncated_bi_series &b)
    {
        return a.same_shape(b) && a.m_coeffs == b.m_coeffs;
    }

    truncated_bi_series conj() const
    {
        if (m_K != m_L) {
            throw std::invalid_argument("truncated_bi_series: conj needs K == L");
        }
        truncated_bi_series r(m_K, m_L, m_nw, m_d);
        r.m_win = {m_win.l, m_win.k, m_win.d};
        for (int k = 0; k <= m_K; ++k) {
            for (int l = 0; l <= m_L; ++l) {
                r.at(k, l) = (*this)(l, k).conj();
            }
        }
        r.m_real = m_real;
        return r;
    }

    cplx eval(cplx z, const std::vector<cplx> &w) const
    {
        cplx acc(0.0, 0.0);
        cplx zk(1.0, 0.0);
        for (int k = 0; k <= m_K; ++k) {
            cplx zl(1.0, 0.0);
            for (int l = 0; l <= m_L; ++l) {
                const auto &p = (*this)(k, l);
                if (!p.is_zero()) {
                    acc += zk * zl * p.eval(w);
                }
                zl *= std::conj(z);
            }
            zk *= z;
        }
        return acc;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (const auto &p : m_coeffs) {
            m = std::max(m, p.max_abs());
        }
        return m;
    }

private:
    std::size_t idx(int k, int l) const
    {
        if (k < 0 || k > m_K || l < 0 || l > m_L) {
            throw std::out_of_range("truncated_bi_series: index outside (K, L)");
        }
        return static_cast<std::size_t>(k * (m_L + 1) + l);
    }

    int m_K = 0, m_L = 0, m_nw = 0, m_d = 0;
    accuracy_window m_win{0, 0, 0};
    std::vector<poly_type> m_coeffs{poly_type()};
    bool m_real = false;
};

template <typename T>
struct series_split {
    truncated_bi_series<T> hol, antihol, mixed;
};

namespace detail
{

template <typename T>
inline void check_same_shape(const truncated_bi_series<T> &a, const truncated_bi_series<T> &b)
{
    if (!a.same_shape(b)) {
        throw std::invalid_argument("series shape mismatch");
    }
}

inline accuracy_window min_window(const accuracy_window &a, const accuracy_window &b)
{
    return {std::min(a.k, b.k), std::min(a.l, b.l), std::min(a.d, b.d)};
}

} // namespace detail

template <typename T>
inline truncated_bi_series<T> series_add(const truncated_bi_series<T> &a, const truncated_bi_series<T> &b)
{
    detail::check_same_shape(a, b);
    truncated_bi_series<T> r = a;
    for (int k = 0; k <= a.K(); ++k) {
        for (int l = 0; l <= a.L(); ++l) {
            r.at(k, l) += b(k, l);
        }
    }
    r.set_window(detail::min_window(a.window(), b.window()));
    r.set_real_flag(a.reality_flag() && b.reality_flag());
    return r;
}

template <typename T>
inline truncated_bi_series<T> series_sub(const truncated_bi_series<T> &a, const truncated_bi_series<T> &b)
{
    detail::check_same_shape(a, b);
    truncated_bi_series<T> r = a;
    for (int k = 0; k <= a.K(); ++k) {
        for (int l = 0; l <= a.L(); ++l) {
            r.at(k, l) -= b(k, l);
        }
    }
    r.set_window(detail::min_window(a.window(), b.window()));
    r.set_real_flag(a.reality_flag() && b.reality_flag());
    return r;
}

template <typename T>
inline truncated_bi_series<T> series_scale(const truncated_bi_series<T> &a, const T &s)
{
    truncated_bi_series<T> r(a.K(), a.L(), a.nw(), a.d());
    for (int k = 0; k <= a.K(); ++k) {
        for (int l = 0; l <= a.L(); ++l) {
            r.at(k, l) = a(k, l).scaled(s);
        }
    }
    r.set_window(a.window());
    return r;
}

// Cauchy product truncated to the common shape.
template <typename T>
inline truncated_bi_series<T> series_mul(const truncated_bi_series<T> &a, const truncated_bi_series<T> &b)
{
    detail::check_same_shape(a, b);
    truncated_bi_series<T> r(a.K(), a.L(), a.nw(), a.d());
    for (int i = 0; i <= a.K(); ++i) {
        for (int j = 0; j <= a.L(); ++j) {
            const auto &pa = a(i, j);
            if (pa.is_zero()) {
                continue;
            }
            for (int p = 0; i + p <= a.K(); ++p) {
                for (int q = 0; j + q <= a.L(); ++q) {
                    const auto &pb = b(p, q);
                    if (pb.is_zero()) {
                        continue;
                    }
                    r.at(i + p, j + q) += pa * pb;
                }
            }
        }
    }
    r.set_window(detail::min_window(a.window(), b.window()));
    r.set_real_flag(a.reality_flag() && b.reality_flag());
    return r;
}

// Formal derivative. The result keeps its shape; the accuracy window
// loses one order in the differentiated direction.
template <typename T>
inline truncated_bi_series<T> series_diff(const truncated_bi_series<T> &a, const variable &v)
{
    using tr = coeff_traits<T>;
    truncated_bi_series<T> r(a.K(), a.L(), a.nw(), a.d());
    accuracy_window w = a.window();
    switch (v.k) {
        case variable::kind::z:
            for (int k = 0; k < a.K(); ++k) {
                for (int l = 0; l <= a.L(); ++l) {
                    r.at(k, l) = a(k + 1, l).scaled(tr::from_int(k + 1));
                }
            }
            w.k -= 1;
            break;
        case variable::kind::zbar:
            for (int k = 0; k <= a.K(); ++k) {
                for (int l = 0; l < a.L(); ++l) {
                    r.at(k, l) = a(k, l + 1).scaled(tr::from_int(l + 1));
                }
            }
            w.l -= 1;
            break;
        case variable::kind::w:
        case variable::kind::wbar: {
            if (v.index < 0 || v.index >= a.nw()) {
                throw std::out_of_range("series_diff: unknown variable index");
            }
            const int slot = v.k == variable::kind::w ? v.index : a.nw() + v.index;
            for (int k = 0; k <= a.K(); ++k) {
                for (int l = 0; l <= a.L(); ++l) {
                    r.at(k, l) = a(k, l).diff_slot(slot);
                }
            }
            w.d -= 1;
            break;
        }
    }
    r.set_window(w);
    return r;
}

// Second derivative along a conjugate pair (z, zbar) or (w_i, wbar_i)
// keeps the reality flag.
template <typename T>
inline truncated_bi_series<T> series_diff2(const truncated_bi_series<T> &a, const variable &v1, const variable &v2)
{
    auto r = series_diff(series_diff(a, v1), v2);
    const bool pair = (v1.k == variable::kind::z && v2.k == variable::kind::zbar)
                      || (v1.k == variable::kind::zbar && v2.k == variable::kind::z)
                      || (v1.index == v2.index
                          && ((v1.k == variable::kind::w && v2.k == variable::kind::wbar)
                              || (v1.k == variable::kind::wbar && v2.k == variable::kind::w)));
    r.set_real_flag(pair && a.reality_flag());
    return r;
}

// Constant term goes to hol.
template <typename T>
inline series_split<T> hol_split(const truncated_bi_series<T> &a)
{
    series_split<T> s{truncated_bi_series<T>(a.K(), a.L(), a.nw(), a.d()),
                      truncated_bi_series<T>(a.K(), a.L(), a.nw(), a.d()),
                      truncated_bi_series<T>(a.K(), a.L(), a.nw(), a.d())};
    for (int k = 0; k <= a.K(); ++k) {
        for (int l = 0; l <= a.L(); ++l) {
            if (l == 0) {
                s.hol.at(k, l) = a(k, l);
            } else if (k == 0) {
                s.antihol.at(k, l) = a(k, l);
            } else {
                s.mixed.at(k, l) = a(k, l);
            }
        }
    }
    s.hol.set_window(a.window());
    s.antihol.set_window(a.window());
    s.mixed.set_window(a.window());
    return s;
}

template <typename T>
using poly_matrix = std::vector<std::vector<w_polynomial<T>>>;

template <typename T>
inline bool is_hermitian(const poly_matrix<T> &g)
{
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i].size() != g.size()) {
            return false;
        }
        for (std::size_t j = i; j < g.size(); ++j) {
            if (!(g[j][i] == g[i][j].conj())) {
                return false;
            }
        }
    }
    return true;
}

// sum_{i,j} g0_inv^{i jbar} (dv/dw_i)(du/dwbar_j)
template <typename T>
inline w_polynomial<T> inner_product_D(const w_polynomial<T> &u, const w_polynomial<T> &v, const poly_matrix<T> &g0_inv)
{
    const int nw = u.nw();
    if (static_cast<int>(g0_inv.size()) != nw || !is_hermitian(g0_inv)) {
        throw std::invalid_argument("inner_product_D: g0_inv must be a Hermitian nw x nw matrix");
    }
    w_polynomial<T> acc(nw, u.max_degree());
    for (int i = 0; i < nw; ++i) {
        const auto dv = v.diff_slot(i);
        if (dv.is_zero()) {
            continue;
        }
        for (int j = 0; j < nw; ++j) {
            const auto du = u.diff_slot(nw + j);
            if (du.is_zero() || g0_inv[i][j].is_zero()) {
                continue;
            }
            acc += g0_inv[i][j] * dv * du;
        }
    }
    return acc;
}

template <typename T>
inline poly_matrix<T> identity_poly_matrix(int nw, int d)
{
    poly_matrix<T> g(nw, std::vector<w_polynomial<T>>(nw, w_polynomial<T>(nw, d)));
    for (int i = 0; i < nw; ++i) {
        g[i][i] = w_polynomial<T>::constant(nw, d, coeff_traits<T>::from_int(1));
    }
    return g;
}

} // namespace dcma

#endif
