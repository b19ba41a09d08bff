#pragma once

// Exact arithmetic for the critical-set test. Every quantity that enters the
// collision condition (pi^2/a^2, mu_j, nu) is of the form c0 + c1*pi^2 with
// rational c0, c1, so equality can be decided without rounding because pi^2 is
// transcendental.

#include "errors.hpp"
#include "numeric.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <optional>
#include <string>

namespace ksc {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

struct QPi2 {
    Rational c0{0};
    Rational c1{0};

    QPi2() = default;
    QPi2(Rational a, Rational b) : c0(std::move(a)), c1(std::move(b)) {}

    QPi2 operator+(const QPi2& o) const { return {c0 + o.c0, c1 + o.c1}; }
    QPi2 operator-(const QPi2& o) const { return {c0 - o.c0, c1 - o.c1}; }
    QPi2 scaled(const Rational& s) const { return {c0 * s, c1 * s}; }
    bool is_zero() const { return c0 == 0 && c1 == 0; }
    double value() const {
        return static_cast<double>(static_cast<HP>(c0) + static_cast<HP>(c1) * pi_v<HP>() * pi_v<HP>());
    }
};

// Exact rational from a double (binary expansions are exact rationals).
inline Rational rational_from_double(double v) {
    require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite number");
    int e = 0;
    double m = std::frexp(v, &e);
    // m in [0.5,1): scale to a 53-bit integer.
    auto mi = static_cast<long long>(std::ldexp(m, 53));
    Rational r = Rational(BigInt(mi));
    int shift = e - 53;
    BigInt p2 = BigInt(1) << std::abs(shift);
    if (shift >= 0) r *= Rational(p2);
    else r /= Rational(p2);
    return r;
}

namespace detail {

inline std::string strip(const std::string& s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

// Decimal ("6.5", "-1e-3") or fraction ("13/2") to an exact rational.
inline std::optional<Rational> parse_rational(const std::string& raw) {
    std::string s = strip(raw);
    if (s.empty()) return std::nullopt;
    auto slash = s.find('/');
    if (slash != std::string::npos) {
        auto num = parse_rational(s.substr(0, slash));
        auto den = parse_rational(s.substr(slash + 1));
        if (!num || !den || *den == 0) return std::nullopt;
        return *num / *den;
    }
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') neg = (s[i++] == '-');
    BigInt mant = 0;
    int frac_digits = 0;
    bool any = false, dot = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            mant = mant * 10 + (c - '0');
            if (dot) ++frac_digits;
            any = true;
        } else if (c == '.' && !dot) {
            dot = true;
        } else {
            break;
        }
    }
    if (!any) return std::nullopt;
    long exp10 = 0;
    if (i < s.size()) {
        if (s[i] != 'e' && s[i] != 'E') return std::nullopt;
        try {
            std::size_t used = 0;
            exp10 = std::stol(s.substr(i + 1), &used);
            if (used != s.size() - i - 1) return std::nullopt;
        } catch (...) {
            return std::nullopt;
        }
    }
    exp10 -= frac_digits;
    Rational r(mant);
    BigInt p = 1;
    for (long k = 0; k < std::labs(exp10); ++k) p *= 10;
    if (exp10 >= 0) r *= Rational(p);
    else r /= Rational(p);
    return neg ? Rational(-r) : r;
}

}  // namespace detail

// A length r * pi^e with e in {0,1}.
struct Length {
    Rational r{1};
    int pi_power = 0;

    double value() const {
        HP v = static_cast<HP>(r);
        if (pi_power == 1) v *= pi_v<HP>();
        return static_cast<double>(v);
    }
    // (pi / L)^2 as c0 + c1 pi^2.
    QPi2 pi_over_sq() const {
        Rational inv = 1 / (r * r);
        return pi_power == 1 ? QPi2(inv, 0) : QPi2(0, inv);
    }
    static Length from_double(double v) { return Length{rational_from_double(v), 0}; }
};

// Accepts "pi", "2pi", "2*pi", "pi/2", "3pi/4", rationals "3/2" and decimals.
inline std::optional<Length> parse_length(const std::string& raw) {
    std::string s = detail::strip(raw);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto pos = s.find("pi");
    if (pos == std::string::npos) {
        auto r = detail::parse_rational(s);
        if (!r) return std::nullopt;
        return Length{*r, 0};
    }
    std::string pre = s.substr(0, pos), post = s.substr(pos + 2);
    if (!pre.empty() && pre.back() == '*') pre.pop_back();
    Rational coef = 1;
    if (!pre.empty()) {
        auto r = detail::parse_rational(pre);
        if (!r) return std::nullopt;
        coef = *r;
    }
    if (!post.empty()) {
        if (post[0] != '/') return std::nullopt;
        auto d = detail::parse_rational(post.substr(1));
        if (!d || *d == 0) return std::nullopt;
        coef /= *d;
    }
    return Length{coef, 1};
}

// A real parameter with an optional exact value.
struct ExactReal {
    double value = 0.0;
    std::optional<Rational> exact;

    static ExactReal from_double(double v) { return {v, rational_from_double(v)}; }
    static ExactReal inexact(double v) { return {v, std::nullopt}; }
    static std::optional<ExactReal> parse(const std::string& s) {
        auto r = detail::parse_rational(s);
        if (!r) return std::nullopt;
        return ExactReal{static_cast<double>(*r), *r};
    }
};

}  // namespace ksc
