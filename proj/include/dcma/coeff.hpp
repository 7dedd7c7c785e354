#ifndef DCMA_COEFF_HPP
#define DCMA_COEFF_HPP

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <gmpxx.h>

namespace dcma
{

using cplx = std::complex<double>;

// Complex number with exact rational parts.
struct qcplx {
    mpq_class re{0}, im{0};

    qcplx() = default;
    qcplx(long n) : re(n), im(0) {}
    qcplx(mpq_class r) : re(std::move(r)), im(0) {}
    qcplx(mpq_class r, mpq_class i) : re(std::move(r)), im(std::move(i)) {}

    friend qcplx operator+(const qcplx &a, const qcplx &b)
    {
        return {a.re + b.re, a.im + b.im};
    }
    friend qcplx operator-(const qcplx &a, const qcplx &b)
    {
        return {a.re - b.re, a.im - b.im};
    }
    friend qcplx operator-(const qcplx &a)
    {
        return {-a.re, -a.im};
    }
    friend qcplx operator*(const qcplx &a, const qcplx &b)
    {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    friend qcplx operator/(const qcplx &a, const qcplx &b)
    {
        mpq_class n = b.re * b.re + b.im * b.im;
        if (n == 0) {
            throw std::domain_error("division by zero rational");
        }
        return {(a.re * b.re + a.im * b.im) / n, (a.im * b.re - a.re * b.im) / n};
    }
    qcplx &operator+=(const qcplx &o)
    {
        re += o.re;
        im += o.im;
        return *this;
    }
    qcplx &operator-=(const qcplx &o)
    {
        re -= o.re;
        im -= o.im;
        return *this;
    }
    qcplx &operator*=(const qcplx &o)
    {
        *this = *this * o;
        return *this;
    }
    friend bool operator==(const qcplx &a, const qcplx &b)
    {
        return a.re == b.re && a.im == b.im;
    }
};

// Uniform access to the two coefficient fields.
template <typename T>
struct coeff_traits;

template <>
struct coeff_traits<cplx> {
    static constexpr bool exact = false;
    static cplx from_int(long n)
    {
        return cplx(static_cast<double>(n), 0.0);
    }
    static cplx from_ratio(long p, long q)
    {
        return cplx(static_cast<double>(p) / static_cast<double>(q), 0.0);
    }
    static bool is_zero(const cplx &c)
    {
        return c.real() == 0.0 && c.imag() == 0.0;
    }
    static cplx conj(const cplx &c)
    {
        return std::conj(c);
    }
    static cplx to_cplx(const cplx &c)
    {
        return c;
    }
    static cplx from_cplx(const cplx &c)
    {
        return c;
    }
    static double norm(const cplx &c)
    {
        return std::abs(c);
    }
};

template <>
struct coeff_traits<qcplx> {
    static constexpr bool exact = true;
    static qcplx from_int(long n)
    {
        return qcplx(n);
    }
    static qcplx from_ratio(long p, long q)
    {
        return qcplx(mpq_class(p, q));
    }
    static bool is_zero(const qcplx &c)
    {
        return c.re == 0 && c.im == 0;
    }
    static qcplx conj(const qcplx &c)
    {
        return {c.re, -c.im};
    }
    static cplx to_cplx(const qcplx &c)
    {
        return cplx(c.re.get_d(), c.im.get_d());
    }
    // Exact conversion of the binary doubles.
    static qcplx from_cplx(const cplx &c)
    {
        return {mpq_class(c.real()), mpq_class(c.imag())};
    }
    static double norm(const qcplx &c)
    {
        return std::abs(to_cplx(c));
    }
};

// Parse "p/q", a plain decimal like "-0.125", or an integer, exactly.
inline mpq_class parse_rational(const std::string &s)
{
    if (s.find('/') != std::string::npos) {
        mpq_class q(s, 10);
        q.canonicalize();
        return q;
    }
    auto epos = s.find_first_of("eE");
    std::string mant = s.substr(0, epos);
    long ex = epos == std::string::npos ? 0 : std::stol(s.substr(epos + 1));
    auto dot = mant.find('.');
    if (dot != std::string::npos) {
        ex -= static_cast<long>(mant.size() - dot - 1);
        mant.erase(dot, 1);
    }
    if (mant.empty() || mant == "-" || mant == "+") {
        throw std::invalid_argument("bad rational literal: " + s);
    }
    if (mant[0] == '+') {
        mant.erase(0, 1);
    }
    mpz_class num(mant, 10);
    mpz_class pw;
    mpz_ui_pow_ui(pw.get_mpz_t(), 10, static_cast<unsigned long>(ex < 0 ? -ex : ex));
    mpq_class q = ex < 0 ? mpq_class(num, pw) : mpq_class(num * pw);
    q.canonicalize();
    return q;
}

inline std::string format_rational(const mpq_class &q)
{
    return q.get_str(10);
}

} // namespace dcma

#endif
