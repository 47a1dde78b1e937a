#pragma once

#include <cstdint>
#include <vector>

#include "abrw/geometry.hpp"
#include "abrw/errors.hpp"

namespace abrw {

inline constexpr int64_t kCountCap = int64_t(1) << 62;

// Fenwick tree over non-negative integer weights, supporting O(log n)
// point update, prefix sampling and total queries. Capacity is a power of
// two; grow() rebuilds, which happens a handful of times per run.
class Fenwick {
public:
    explicit Fenwick(size_t capacity = 64) { reset(capacity); }

    void reset(size_t capacity) {
        cap_ = 1;
        while (cap_ < capacity) cap_ <<= 1;
        tree_.assign(cap_ + 1, 0);
        total_ = 0;
    }

    size_t capacity() const { return cap_; }
    int64_t total() const { return total_; }

    void add(size_t i, int64_t delta) {
        total_ += delta;
        for (size_t k = i + 1; k <= cap_; k += k & (~k + 1)) tree_[k] += delta;
    }

    // largest index whose prefix sum is <= v; v in [0, total)
    size_t sample(int64_t v) const {
        size_t idx = 0;
        for (size_t step = cap_; step; step >>= 1) {
            size_t next = idx + step;
            if (next <= cap_ && tree_[next] <= v) {
                idx = next;
                v -= tree_[next];
            }
        }
        return idx;  // 0-based slot
    }

    void grow(size_t capacity, const std::vector<int64_t>& weights) {
        reset(capacity);
        for (size_t i = 0; i < weights.size(); ++i)
            if (weights[i]) add(i, weights[i]);
    }

private:
    std::vector<int64_t> tree_;
    size_t cap_ = 0;
    int64_t total_ = 0;
};

// Dense box addressing: site <-> slot within a sup-norm box [-r,r]^d which
// grows on demand when a ball escapes. Desk-scale populations concentrate
// near the initial data, so the box stays small and lookups are arithmetic.
class BoxIndexer {
public:
    BoxIndexer() = default;
    BoxIndexer(int dim, int radius) { reset(dim, radius); }

    void reset(int dim, int radius) {
        dim_ = dim;
        radius_ = radius;
        side_ = 2 * radius + 1;
        size_ = 1;
        for (int i = 0; i < dim_; ++i) size_ *= size_t(side_);
        if (size_ > (size_t(1) << 26))
            throw Error(Error::Code::Overflow, "lattice box too large for dense addressing");
    }

    int dim() const { return dim_; }
    int radius() const { return radius_; }
    size_t size() const { return size_; }

    bool contains(const Site& s) const { return linf_norm(s, dim_) <= radius_; }

    size_t slot(const Site& s) const {
        size_t idx = 0;
        for (int i = 0; i < dim_; ++i) idx = idx * size_t(side_) + size_t(s[i] + radius_);
        return idx;
    }

    Site site(size_t slot) const {
        Site s;
        for (int i = dim_ - 1; i >= 0; --i) {
            s[i] = int32_t(slot % size_t(side_)) - radius_;
            slot /= size_t(side_);
        }
        return s;
    }

private:
    int dim_ = 1;
    int radius_ = 0;
    int side_ = 1;
    size_t size_ = 1;
};

enum class StateMode { annihilating, monochromatic };

// Sparse-in-spirit signed lattice state: Z_x > 0 red, < 0 blue, one colour
// per site by representation. Backed by a dense box that grows on escape.
class SignedLattice {
public:
    SignedLattice() = default;
    SignedLattice(int dim, int radius, StateMode mode);

    int dim() const { return indexer_.dim(); }
    StateMode mode() const { return mode_; }
    uint64_t total_balls() const { return uint64_t(weights_.total()); }

    int64_t at(const Site& s) const {
        if (!indexer_.contains(s)) return 0;
        return count_[indexer_.slot(s)];
    }

    // signed add with annihilation-by-arithmetic; returns the new value
    int64_t deposit(const Site& s, int64_t signed_count);

    // choose a ball uniformly: site with probability |count|/total
    size_t sample_slot(int64_t v) const { return weights_.sample(v); }
    Site slot_site(size_t slot) const { return indexer_.site(slot); }
    int64_t slot_count(size_t slot) const { return count_[slot]; }

    void deposit_slot(size_t slot, int64_t signed_count);

    // iterate non-zero entries in lexicographic site order
    template <typename F>
    void for_each(F&& f) const {
        for (size_t i = 0; i < count_.size(); ++i)
            if (count_[i] != 0) f(indexer_.site(i), count_[i]);
    }

    // debug/bookkeeping invariant: total == sum |counts|
    bool check_total() const;

    int box_radius() const { return indexer_.radius(); }

private:
    void grow_to(int radius);

    BoxIndexer indexer_;
    std::vector<int64_t> count_;
    Fenwick weights_;
    StateMode mode_ = StateMode::annihilating;
};

// Conservative three-colour state (red, blue, purple). Red and blue never
// coexist at a site; arrivals merge one-for-one into purple.
class TriLattice {
public:
    TriLattice() = default;
    TriLattice(int dim, int radius);

    int dim() const { return indexer_.dim(); }
    uint64_t total_balls() const { return uint64_t(weights_.total()); }

    struct Cell {
        int64_t red = 0, blue = 0, purple = 0;
        int64_t total() const { return red + blue + purple; }
    };

    Cell at(const Site& s) const {
        if (!indexer_.contains(s)) return {};
        size_t i = indexer_.slot(s);
        return {red_[i], blue_[i], purple_[i]};
    }

    size_t sample_slot(int64_t v) const { return weights_.sample(v); }
    Site slot_site(size_t slot) const { return indexer_.site(slot); }
    Cell slot_cell(size_t slot) const { return {red_[slot], blue_[slot], purple_[slot]}; }

    // colour: +1 red, -1 blue, 0 purple. Applies the merge rule for red/blue
    // arrivals and plain increment for purple; count may be negative only
    // for the death-mode parent removal (never crosses zero).
    void deposit(const Site& s, int colour, int64_t count);

    template <typename F>
    void for_each(F&& f) const {
        for (size_t i = 0; i < red_.size(); ++i)
            if (red_[i] | blue_[i] | purple_[i]) f(indexer_.site(i), Cell{red_[i], blue_[i], purple_[i]});
    }

    bool check_invariants() const;  // min(red,blue)==0 everywhere, totals

private:
    void grow_to(int radius);
    void bump(size_t slot, std::vector<int64_t>& arr, int64_t delta);

    BoxIndexer indexer_;
    std::vector<int64_t> red_, blue_, purple_;
    Fenwick weights_;
};

}  // namespace abrw
