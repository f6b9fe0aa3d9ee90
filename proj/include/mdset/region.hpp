#pragma once

#include "digit_system.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

namespace mdset {

/**
 * @brief Finite union of closed intervals (d=1) or axis boxes (d=2).
 *
 * Normal form for d=1: sorted, disjoint, touching intervals merged.
 * Normal form for d=2: x-slab decomposition.  Consecutive slabs with equal
 * cross-sections are merged, each cross-section is a normal d=1 union, and
 * degenerate (zero-area) pieces are dropped.
 */
class RegionUnion {
public:
    explicit RegionUnion(int dim = 1) : dim_(dim) {
        if (dim < 1 || dim > 2) throw std::invalid_argument("region dimension must be 1 or 2");
    }

    static RegionUnion from_boxes(int dim, std::vector<Box> boxes) {
        RegionUnion r(dim);
        for (auto& b : boxes) r.add(std::move(b));
        r.normalize();
        return r;
    }

    static RegionUnion from_intervals(std::vector<Interval> iv) {
        RegionUnion r(1);
        for (auto& i : iv) r.add(Box{{std::move(i)}});
        r.normalize();
        return r;
    }

    int dim() const { return dim_; }
    const std::vector<Box>& components() const { return comps_; }
    bool empty() const { return comps_.empty(); }
    std::size_t size() const { return comps_.size(); }

    void add(Box b) {
        if (b.dim() != dim_) throw std::invalid_argument("box dimension mismatch");
        for (const auto& s : b.side)
            if (s.hi < s.lo) throw std::invalid_argument("malformed box");
        comps_.push_back(std::move(b));
    }

    RegionUnion& normalize() {
        if (dim_ == 1) {
            std::vector<Interval> iv;
            for (auto& c : comps_) iv.push_back(c.side[0]);
            comps_.clear();
            for (auto& i : merge_intervals(std::move(iv))) comps_.push_back(Box{{i}});
        } else {
            normalize2();
        }
        return *this;
    }

    RegionUnion clipped(const Box& clip) const {
        RegionUnion r(dim_);
        for (const auto& c : comps_) {
            Box b;
            bool ok = true;
            for (int j = 0; j < dim_; ++j) {
                Interval s{max(c.side[j].lo, clip.side[j].lo), min(c.side[j].hi, clip.side[j].hi)};
                if (s.hi < s.lo) ok = false;
                b.side.push_back(s);
            }
            if (ok) r.comps_.push_back(std::move(b));
        }
        r.normalize();
        return r;
    }

    /// Exact length (d=1) or area (d=2).
    Rational volume() const {
        Rational v = 0;
        for (const auto& c : comps_) v += c.volume();
        return v;
    }

    bool contains(const std::vector<Rational>& x) const {
        for (const auto& c : comps_) {
            bool in = true;
            for (int j = 0; j < dim_; ++j)
                if (x[j] < c.side[j].lo || x[j] > c.side[j].hi) in = false;
            if (in) return true;
        }
        return false;
    }

    /// Every component of `other` lies inside the union (up to measure-null boundaries).
    bool covers(const RegionUnion& other) const {
        RegionUnion u(dim_);
        u.comps_ = comps_;
        for (const auto& c : other.comps_) u.comps_.push_back(c);
        u.normalize();
        return u.volume() == volume();
    }

    bool operator==(const RegionUnion& o) const { return dim_ == o.dim_ && comps_ == o.comps_; }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : comps_) {
            if (dim_ == 1) {
                arr.push_back({to_string(c.side[0].lo), to_string(c.side[0].hi)});
            } else {
                nlohmann::json box = nlohmann::json::array();
                for (const auto& s : c.side) box.push_back({to_string(s.lo), to_string(s.hi)});
                arr.push_back(box);
            }
        }
        return arr;
    }

    static RegionUnion from_json(const nlohmann::json& j, int dim) {
        RegionUnion r(dim);
        for (const auto& c : j) {
            Box b;
            if (dim == 1) {
                b.side.push_back({parse_rational(c.at(0).get<std::string>()), parse_rational(c.at(1).get<std::string>())});
            } else {
                for (const auto& s : c)
                    b.side.push_back({parse_rational(s.at(0).get<std::string>()), parse_rational(s.at(1).get<std::string>())});
            }
            r.add(std::move(b));
        }
        r.normalize();
        return r;
    }

    static std::vector<Interval> merge_intervals(std::vector<Interval> iv) {
        std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
            return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi);
        });
        std::vector<Interval> out;
        for (auto& i : iv) {
            if (!out.empty() && i.lo <= out.back().hi) {
                if (i.hi > out.back().hi) out.back().hi = i.hi;
            } else {
                out.push_back(std::move(i));
            }
        }
        return out;
    }

private:
    void normalize2() {
        std::vector<Rational> xs;
        for (const auto& c : comps_)
            if (c.side[0].lo < c.side[0].hi && c.side[1].lo < c.side[1].hi) {
                xs.push_back(c.side[0].lo);
                xs.push_back(c.side[0].hi);
            }
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        std::vector<const Box*> order;
        for (const auto& c : comps_)
            if (c.side[0].lo < c.side[0].hi && c.side[1].lo < c.side[1].hi) order.push_back(&c);
        std::sort(order.begin(), order.end(), [](const Box* a, const Box* b) { return a->side[0].lo < b->side[0].lo; });

        struct Slab {
            Rational lo, hi;
            std::vector<Interval> cross;
        };
        std::vector<Slab> slabs;
        std::vector<const Box*> active;
        std::size_t next = 0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            const Rational& a = xs[i];
            const Rational& b = xs[i + 1];
            while (next < order.size() && order[next]->side[0].lo <= a) active.push_back(order[next++]);
            active.erase(std::remove_if(active.begin(), active.end(), [&](const Box* p) { return p->side[0].hi <= a; }),
                         active.end());
            std::vector<Interval> ys;
            for (const Box* p : active) ys.push_back(p->side[1]);
            auto cross = merge_intervals(std::move(ys));
            if (cross.empty()) continue;
            if (!slabs.empty() && slabs.back().hi == a && slabs.back().cross == cross) {
                slabs.back().hi = b;
            } else {
                slabs.push_back({a, b, std::move(cross)});
            }
        }
        comps_.clear();
        for (const auto& s : slabs)
            for (const auto& y : s.cross) comps_.push_back(Box{{Interval{s.lo, s.hi}, y}});
    }

    int dim_;
    std::vector<Box> comps_;
};

}  // namespace mdset
