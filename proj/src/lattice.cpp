#include "abrw/lattice.hpp"

#include <cstdlib>

namespace abrw {

SignedLattice::SignedLattice(int dim, int radius, StateMode mode) : mode_(mode) {
    indexer_.reset(dim, radius);
    count_.assign(indexer_.size(), 0);
    weights_.reset(indexer_.size());
}

int64_t SignedLattice::deposit(const Site& s, int64_t signed_count) {
    if (!indexer_.contains(s)) grow_to(linf_norm(s, dim()) + std::max(4, indexer_.radius() / 2));
    size_t slot = indexer_.slot(s);
    deposit_slot(slot, signed_count);
    return count_[slot];
}

void SignedLattice::deposit_slot(size_t slot, int64_t signed_count) {
    int64_t old = count_[slot];
    int64_t now = old + signed_count;
    if (now >= kCountCap || now <= -kCountCap)
        throw Error(Error::Code::Overflow, "site count magnitude reached 2^62");
    if (mode_ == StateMode::monochromatic && now < 0)
        throw Error(Error::Code::Overflow, "monochromatic count went negative");
    count_[slot] = now;
    weights_.add(slot, std::abs(now) - std::abs(old));
}

bool SignedLattice::check_total() const {
    int64_t s = 0;
    for (int64_t c : count_) s += std::abs(c);
    return s == weights_.total();
}

void SignedLattice::grow_to(int radius) {
    BoxIndexer bigger(dim(), radius);
    std::vector<int64_t> fresh(bigger.size(), 0);
    for (size_t i = 0; i < count_.size(); ++i)
        if (count_[i] != 0) fresh[bigger.slot(indexer_.site(i))] = count_[i];
    indexer_ = bigger;
    count_ = std::move(fresh);
    std::vector<int64_t> w(count_.size(), 0);
    for (size_t i = 0; i < count_.size(); ++i) w[i] = std::abs(count_[i]);
    weights_.grow(count_.size(), w);
}

TriLattice::TriLattice(int dim, int radius) {
    indexer_.reset(dim, radius);
    red_.assign(indexer_.size(), 0);
    blue_.assign(indexer_.size(), 0);
    purple_.assign(indexer_.size(), 0);
    weights_.reset(indexer_.size());
}

void TriLattice::bump(size_t slot, std::vector<int64_t>& arr, int64_t delta) {
    int64_t now = arr[slot] + delta;
    if (now >= kCountCap) throw Error(Error::Code::Overflow, "site count reached 2^62");
    if (now < 0) throw Error(Error::Code::Overflow, "tri-colour count went negative");
    arr[slot] = now;
    weights_.add(slot, delta);
}

void TriLattice::deposit(const Site& s, int colour, int64_t count) {
    if (!indexer_.contains(s)) grow_to(linf_norm(s, dim()) + std::max(4, indexer_.radius() / 2));
    size_t i = indexer_.slot(s);
    if (colour == 0) {
        bump(i, purple_, count);
        return;
    }
    if (count < 0) {
        // parent removal (death mode); the parent's colour is present
        bump(i, colour > 0 ? red_ : blue_, count);
        return;
    }
    auto& same = colour > 0 ? red_ : blue_;
    auto& other = colour > 0 ? blue_ : red_;
    int64_t merged = std::min(count, other[i]);
    if (merged > 0) {
        bump(i, other, -merged);
        bump(i, purple_, merged);
    }
    if (count - merged > 0) bump(i, same, count - merged);
}

bool TriLattice::check_invariants() const {
    int64_t s = 0;
    for (size_t i = 0; i < red_.size(); ++i) {
        if (red_[i] < 0 || blue_[i] < 0 || purple_[i] < 0) return false;
        if (std::min(red_[i], blue_[i]) != 0) return false;
        s += red_[i] + blue_[i] + purple_[i];
    }
    return s == weights_.total();
}

void TriLattice::grow_to(int radius) {
    BoxIndexer bigger(dim(), radius);
    std::vector<int64_t> r(bigger.size(), 0), b(bigger.size(), 0), p(bigger.size(), 0);
    for (size_t i = 0; i < red_.size(); ++i) {
        if (red_[i] | blue_[i] | purple_[i]) {
            size_t j = bigger.slot(indexer_.site(i));
            r[j] = red_[i];
            b[j] = blue_[i];
            p[j] = purple_[i];
        }
    }
    indexer_ = bigger;
    red_ = std::move(r);
    blue_ = std::move(b);
    purple_ = std::move(p);
    std::vector<int64_t> w(red_.size(), 0);
    for (size_t i = 0; i < red_.size(); ++i) w[i] = red_[i] + blue_[i] + purple_[i];
    weights_.grow(red_.size(), w);
}

}  // namespace abrw
