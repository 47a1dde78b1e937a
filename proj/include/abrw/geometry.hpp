#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>

#include "abrw/errors.hpp"

namespace abrw {

// Lattice sites live in Z^d with d <= kMaxDim. Coordinates are kept small
// (|c| < 2^15) so a site packs into one uint64 for hashing and map keys;
// desk-scale runs never get near that bound and the engine checks it.
inline constexpr int kMaxDim = 4;
inline constexpr int32_t kMaxCoord = 32767;

struct Site {
    std::array<int32_t, kMaxDim> c{0, 0, 0, 0};

    Site() = default;
    explicit Site(int32_t x) : c{x, 0, 0, 0} {}
    Site(int32_t x, int32_t y) : c{x, y, 0, 0} {}
    Site(int32_t x, int32_t y, int32_t z) : c{x, y, z, 0} {}

    int32_t& operator[](int i) { return c[static_cast<size_t>(i)]; }
    int32_t operator[](int i) const { return c[static_cast<size_t>(i)]; }

    bool operator==(const Site& o) const { return c == o.c; }
    bool operator!=(const Site& o) const { return c != o.c; }
    // Lexicographic order on coordinates; the fixed total order used for
    // tie-breaking and deterministic iteration everywhere.
    bool operator<(const Site& o) const { return c < o.c; }
};

inline Site add(const Site& a, const Site& b, int dim) {
    Site r;
    for (int i = 0; i < dim; ++i) r[i] = a[i] + b[i];
    return r;
}

// sup-norm |z|, the norm used for boxes B(0,r).
inline int32_t linf_norm(const Site& s, int dim) {
    int32_t m = 0;
    for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(s[i]));
    return m;
}

inline double l2_norm(const Site& s, int dim) {
    double q = 0;
    for (int i = 0; i < dim; ++i) q += double(s[i]) * double(s[i]);
    return std::sqrt(q);
}

inline uint64_t pack_site(const Site& s, int dim) {
    uint64_t k = 0;
    for (int i = 0; i < dim; ++i) {
        int32_t v = s[i];
        if (v < -kMaxCoord - 1 || v > kMaxCoord)
            throw Error(Error::Code::Overflow, "site coordinate out of packable range");
        k |= (uint64_t(uint16_t(v + 32768)) << (16 * i));
    }
    return k;
}

inline std::string format_site(const Site& s, int dim) {
    std::string out;
    for (int i = 0; i < dim; ++i) {
        if (i) out += ';';
        out += std::to_string(s[i]);
    }
    return out;
}

struct SiteHash {
    size_t operator()(uint64_t k) const {
        // splitmix64 finalizer; plenty for map keys
        k += 0x9E3779B97F4A7C15ull;
        k = (k ^ (k >> 30)) * 0xBF58476D1CE4E5B9ull;
        k = (k ^ (k >> 27)) * 0x94D049BB133111EBull;
        return size_t(k ^ (k >> 31));
    }
};

// Iterate the box [-r,r]^dim in lexicographic order.
template <typename F>
void for_each_in_box(int r, int dim, F&& f) {
    Site s;
    for (int i = 0; i < dim; ++i) s[i] = -r;
    while (true) {
        f(const_cast<const Site&>(s));
        int axis = dim - 1;
        while (axis >= 0) {
            if (++s[axis] <= r) break;
            s[axis] = -r;
            --axis;
        }
        if (axis < 0) break;
    }
}

inline int64_t box_volume(int r, int dim) {
    int64_t v = 1;
    for (int i = 0; i < dim; ++i) v *= (2 * int64_t(r) + 1);
    return v;
}

}  // namespace abrw
