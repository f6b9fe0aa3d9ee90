#pragma once

#include "rational.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mdset {

struct Interval {
    Rational lo, hi;
    Rational length() const { return hi - lo; }
    bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

/// Axis box; one side per coordinate.
struct Box {
    std::vector<Interval> side;
    int dim() const { return static_cast<int>(side.size()); }
    Rational volume() const {
        Rational v = 1;
        for (const auto& s : side) v *= s.length();
        return v;
    }
    bool operator==(const Box& o) const { return side == o.side; }
};

inline Box unit_box(int d) { return Box{std::vector<Interval>(d, Interval{0, 1})}; }

/**
 * @brief Base-b missing-digits system K(b, D_1 x ... x D_d) with its Bernoulli measure.
 */
class DigitSystem {
public:
    DigitSystem() = default;

    DigitSystem(int base, std::vector<std::vector<int>> digits) : base_(base), digits_(std::move(digits)) {
        if (base_ < 3) throw std::invalid_argument("base must be >= 3");
        if (digits_.empty()) throw std::invalid_argument("dimension must be >= 1");
        for (auto& dj : digits_) {
            std::sort(dj.begin(), dj.end());
            if (dj.empty()) throw std::invalid_argument("empty digit set");
            if (std::adjacent_find(dj.begin(), dj.end()) != dj.end())
                throw std::invalid_argument("repeated digit");
            if (dj.front() < 0 || dj.back() >= base_) throw std::invalid_argument("digit out of range");
        }
    }

    static DigitSystem full(int base, int dim) {
        std::vector<int> all(base);
        for (int a = 0; a < base; ++a) all[a] = a;
        return DigitSystem(base, std::vector<std::vector<int>>(dim, all));
    }

    int base() const { return base_; }
    int dim() const { return static_cast<int>(digits_.size()); }
    const std::vector<int>& digits(int j = 0) const { return digits_.at(j); }
    int count(int j = 0) const { return static_cast<int>(digits_.at(j).size()); }

    BigInt total_count() const {
        BigInt n = 1;
        for (const auto& dj : digits_) n *= static_cast<unsigned long>(dj.size());
        return n;
    }

    bool is_full(int j) const { return count(j) == base_; }
    bool is_full() const {
        for (int j = 0; j < dim(); ++j)
            if (!is_full(j)) return false;
        return true;
    }
    /// Full digit set in every coordinate: the measure is Lebesgue.
    bool is_lebesgue_reference() const { return is_full(); }

    bool has_digit(int j, int a) const { return std::binary_search(digits_[j].begin(), digits_[j].end(), a); }

    double hausdorff_dim() const {
        double s = 0;
        for (const auto& dj : digits_) s += std::log(double(dj.size())) / std::log(double(base_));
        return s;
    }

    /// Coordinate factor as a one-dimensional system.
    DigitSystem coordinate(int j) const { return DigitSystem(base_, {digits_.at(j)}); }

    bool operator==(const DigitSystem& o) const { return base_ == o.base_ && digits_ == o.digits_; }

    nlohmann::json to_json() const { return {{"base", base_}, {"dim", dim()}, {"digits", digits_}}; }

    static DigitSystem from_json(const nlohmann::json& j) {
        int b = j.at("base").get<int>();
        auto digits = j.at("digits").get<std::vector<std::vector<int>>>();
        if (j.contains("dim") && j.at("dim").get<int>() != static_cast<int>(digits.size()))
            throw std::invalid_argument("dim does not match digits");
        return DigitSystem(b, std::move(digits));
    }

private:
    int base_ = 3;
    std::vector<std::vector<int>> digits_;
};

/// Finite word of digit vectors; letter i holds one digit per coordinate.
struct CylinderWord {
    std::vector<std::vector<int>> letters;

    static CylinderWord of(std::vector<int> digits1d) {
        CylinderWord w;
        for (int a : digits1d) w.letters.push_back({a});
        return w;
    }
    int depth() const { return static_cast<int>(letters.size()); }
    std::vector<int> coordinate(int j) const {
        std::vector<int> out;
        for (const auto& l : letters) out.push_back(l.at(j));
        return out;
    }
    std::string id() const {
        if (letters.empty()) return "root";
        std::string s;
        for (size_t i = 0; i < letters.size(); ++i) {
            if (i) s += '.';
            for (size_t j = 0; j < letters[i].size(); ++j) {
                if (j) s += ':';
                s += std::to_string(letters[i][j]);
            }
        }
        return s;
    }
};

inline void validate_word(const DigitSystem& sys, const CylinderWord& w) {
    for (const auto& l : w.letters) {
        if (static_cast<int>(l.size()) != sys.dim()) throw std::invalid_argument("letter dimension mismatch");
        for (int j = 0; j < sys.dim(); ++j)
            if (!sys.has_digit(j, l[j])) throw std::invalid_argument("word digit not in D");
    }
}

/// Integer index of a one-dimensional word: box = [index, index+1] / b^depth.
inline BigInt word_index(int base, const std::vector<int>& digits) {
    BigInt k = 0;
    for (int a : digits) k = k * base + a;
    return k;
}

inline Box cylinder_box(const DigitSystem& sys, const CylinderWord& w) {
    validate_word(sys, w);
    BigInt scale = ipow(sys.base(), static_cast<unsigned long>(w.depth()));
    Box box;
    for (int j = 0; j < sys.dim(); ++j) {
        BigInt k = word_index(sys.base(), w.coordinate(j));
        box.side.push_back({make_rational(k, scale), make_rational(k + 1, scale)});
    }
    return box;
}

inline Rational cylinder_measure(const DigitSystem& sys, const CylinderWord& w) {
    validate_word(sys, w);
    BigInt n = 1;
    for (int i = 0; i < w.depth(); ++i) n *= sys.total_count();
    return make_rational(BigInt(1), n);
}

/// All words of the given depth, in lexicographic order.
inline std::vector<CylinderWord> all_words(const DigitSystem& sys, int depth) {
    std::vector<std::vector<int>> letters{{}};
    for (int j = 0; j < sys.dim(); ++j) {
        std::vector<std::vector<int>> next;
        for (const auto& l : letters)
            for (int a : sys.digits(j)) {
                auto m = l;
                m.push_back(a);
                next.push_back(m);
            }
        letters = std::move(next);
    }
    std::vector<CylinderWord> out{CylinderWord{}};
    for (int i = 0; i < depth; ++i) {
        std::vector<CylinderWord> next;
        for (const auto& w : out)
            for (const auto& l : letters) {
                auto v = w;
                v.letters.push_back(l);
                next.push_back(v);
            }
        out = std::move(next);
    }
    return out;
}

}  // namespace mdset
