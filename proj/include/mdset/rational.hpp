#pragma once

#include <gmpxx.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mdset {

using BigInt = mpz_class;
using Rational = mpq_class;
using i128 = __int128;
using u128 = unsigned __int128;

inline Rational make_rational(const BigInt& num, const BigInt& den) {
    if (den == 0) throw std::invalid_argument("zero denominator");
    Rational r(num, den);
    r.canonicalize();
    return r;
}

inline Rational make_rational(long long num, long long den) {
    return make_rational(BigInt(std::to_string(num)), BigInt(std::to_string(den)));
}

inline BigInt big(long long v) { return BigInt(std::to_string(v)); }

inline BigInt big(u128 v) {
    if (v == 0) return BigInt(0);
    std::string s;
    while (v > 0) {
        s.push_back(char('0' + int(v % 10)));
        v /= 10;
    }
    return BigInt(std::string(s.rbegin(), s.rend()));
}

inline BigInt big(i128 v) {
    if (v < 0) return -big(u128(-v));
    return big(u128(v));
}

/// Parses "a/b" or "a". Decimal points and exponents are rejected.
inline Rational parse_rational(std::string_view text) {
    std::string s(text);
    auto trim = [](std::string& t) {
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
    };
    trim(s);
    if (s.empty()) throw std::invalid_argument("empty rational");
    auto check_int = [](const std::string& t) {
        size_t i = (t.size() > 0 && (t[0] == '-' || t[0] == '+')) ? 1 : 0;
        if (i >= t.size()) return false;
        for (; i < t.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
        return true;
    };
    auto slash = s.find('/');
    std::string num = s.substr(0, slash);
    std::string den = slash == std::string::npos ? "1" : s.substr(slash + 1);
    trim(num);
    trim(den);
    if (!check_int(num) || !check_int(den))
        throw std::invalid_argument("not an exact rational (expected num/den): " + s);
    if (num[0] == '+') num.erase(num.begin());
    if (den[0] == '+') den.erase(den.begin());
    return make_rational(BigInt(num), BigInt(den));
}

inline std::string to_string(const Rational& r) {
    if (r.get_den() == 1) return r.get_num().get_str();
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

inline std::string to_string(const BigInt& z) { return z.get_str(); }

inline BigInt floor_div(const BigInt& a, const BigInt& b) {
    BigInt q;
    mpz_fdiv_q(q.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
    return q;
}

inline BigInt ceil_div(const BigInt& a, const BigInt& b) {
    BigInt q;
    mpz_cdiv_q(q.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
    return q;
}

inline BigInt floor(const Rational& r) { return floor_div(r.get_num(), r.get_den()); }
inline BigInt ceil(const Rational& r) { return ceil_div(r.get_num(), r.get_den()); }

inline BigInt ipow(long base, unsigned long e) {
    BigInt r;
    mpz_ui_pow_ui(r.get_mpz_t(), static_cast<unsigned long>(base), e);
    return r;
}

inline double to_double(const Rational& r) { return r.get_d(); }

inline long long to_ll(const BigInt& z) {
    if (!z.fits_slong_p()) throw std::overflow_error("integer does not fit 64 bits");
    return z.get_si();
}

inline i128 to_i128(const BigInt& z) {
    if (z.fits_slong_p()) return i128(z.get_si());
    BigInt a = abs(z);
    if (mpz_sizeinbase(a.get_mpz_t(), 2) > 126) throw std::overflow_error("integer does not fit 128 bits");
    BigInt hi = a >> 64;
    BigInt lo = a - (hi << 64);
    u128 v = (u128(hi.get_ui()) << 64) | u128(lo.get_ui());
    return z < 0 ? -i128(v) : i128(v);
}

/// Nearest rational with the given power-of-two denominator.
inline Rational dyadic_round(double x, int bits = 40) {
    double scaled = std::nearbyint(std::ldexp(x, bits));
    BigInt num;
    mpz_set_d(num.get_mpz_t(), scaled);
    return make_rational(num, BigInt(1) << bits);
}

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }
inline Rational min(const Rational& a, const Rational& b) { return a < b ? a : b; }
inline Rational max(const Rational& a, const Rational& b) { return a < b ? b : a; }

inline BigInt lcm(const BigInt& a, const BigInt& b) {
    BigInt r;
    mpz_lcm(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
    return r;
}

}  // namespace mdset
