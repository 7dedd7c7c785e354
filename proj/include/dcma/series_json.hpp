#ifndef DCMA_SERIES_JSON_HPP
#define DCMA_SERIES_JSON_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <dcma/powerseries.hpp>

namespace dcma
{

namespace detail
{

inline void put_coeff(nlohmann::json &t, const cplx &c)
{
    t["re"] = c.real();
    t["im"] = c.imag();
}

inline void put_coeff(nlohmann::json &t, const qcplx &c)
{
    t["re"] = format_rational(c.re);
    t["im"] = format_rational(c.im);
}

inline mpq_class json_rational(const nlohmann::json &v)
{
    if (v.is_string()) {
        return parse_rational(v.get<std::string>());
    }
    if (v.is_number_integer()) {
        return mpq_class(v.get<long>());
    }
    if (v.is_number()) {
        return mpq_class(v.get<double>());
    }
    throw std::invalid_argument("coefficient must be a number or a string");
}

inline double json_double(const nlohmann::json &v)
{
    if (v.is_string()) {
        return parse_rational(v.get<std::string>()).get_d();
    }
    return v.get<double>();
}

template <typename T>
T get_coeff(const nlohmann::json &t);

template <>
inline cplx get_coeff<cplx>(const nlohmann::json &t)
{
    return {t.contains("re") ? json_double(t["re"]) : 0.0, t.contains("im") ? json_double(t["im"]) : 0.0};
}

template <>
inline qcplx get_coeff<qcplx>(const nlohmann::json &t)
{
    return {t.contains("re") ? json_rational(t["re"]) : mpq_class(0),
            t.contains("im") ? json_rational(t["im"]) : mpq_class(0)};
}

} // namespace detail

template <typename T>
nlohmann::json poly_to_json(const w_polynomial<T> &p)
{
    nlohmann::json terms = nlohmann::json::array();
    for (const auto &[k, c] : p.terms()) {
        nlohmann::json t;
        t["mono"] = p.unpack(k);
        detail::put_coeff(t, c);
        terms.push_back(std::move(t));
    }
    return {{"nw", p.nw()}, {"d", p.max_degree()}, {"terms", terms}};
}

// Accepts either a full polynomial document or a bare term list.
template <typename T>
w_polynomial<T> poly_from_json(const nlohmann::json &j, int nw, int d)
{
    w_polynomial<T> p(nw, d);
    const nlohmann::json &terms = j.is_array() ? j : j.at("terms");
    for (const auto &t : terms) {
        p.add_term(p.pack(t.at("mono").get<std::vector<int>>()), detail::get_coeff<T>(t));
    }
    return p;
}

template <typename T>
nlohmann::json series_to_json(const truncated_bi_series<T> &s)
{
    nlohmann::json terms = nlohmann::json::array();
    for (int k = 0; k <= s.K(); ++k) {
        for (int l = 0; l <= s.L(); ++l) {
            const auto &p = s(k, l);
            for (const auto &[key, c] : p.terms()) {
                nlohmann::json t;
                t["k"] = k;
                t["l"] = l;
                t["mono"] = p.unpack(key);
                detail::put_coeff(t, c);
                terms.push_back(std::move(t));
            }
        }
    }
    return {{"K", s.K()}, {"L", s.L()}, {"nw", s.nw()}, {"d", s.d()}, {"terms", terms}};
}

template <typename T>
truncated_bi_series<T> series_from_json(const nlohmann::json &j)
{
    truncated_bi_series<T> s(j.at("K").get<int>(), j.at("L").get<int>(), j.at("nw").get<int>(), j.at("d").get<int>());
    for (const auto &t : j.at("terms")) {
        const int k = t.at("k").get<int>(), l = t.at("l").get<int>();
        auto &p = s.at(k, l);
        p.add_term(p.pack(t.at("mono").get<std::vector<int>>()), detail::get_coeff<T>(t));
    }
    if (s.K() == s.L() && s.is_real()) {
        s.set_real_flag(true);
    }
    return s;
}

} // namespace dcma

#endif
