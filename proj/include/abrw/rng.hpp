#pragma once

#include <cmath>
#include <cstdint>

namespace abrw {

// Counter-based pseudorandomness: every variate is a pure function of
// (stream key, counter). Streams derived from distinct keys are independent
// in practice, replays are bit-exact, and a stream can be shared across
// coupled processes by construction. The mix is the splitmix64 finalizer
// over an additive golden-ratio walk.
namespace rngdetail {
inline constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline uint64_t mix(uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace rngdetail

inline uint64_t counter_u64(uint64_t key, uint64_t counter) {
    return rngdetail::mix(key + rngdetail::kGolden * (counter + 1));
}

// uniform on the open interval (0,1); never returns 0 or 1, so logs are safe
inline double u64_to_unit(uint64_t x) {
    return (double(x >> 11) + 0.5) * 0x1.0p-53;
}

inline double counter_uniform(uint64_t key, uint64_t counter) {
    return u64_to_unit(counter_u64(key, counter));
}

// Derive a child stream key from a parent key and an index (pure function;
// used for replicate seeds and per-label streams).
inline uint64_t derive_key(uint64_t parent, uint64_t index) {
    return rngdetail::mix(rngdetail::mix(parent + rngdetail::kGolden) ^
                          (index + rngdetail::kGolden * 0x632BE59BD9B4E019ull));
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
    return rngdetail::mix(h ^ (v + rngdetail::kGolden + (h << 6) + (h >> 2)));
}

// Sequential view of one counter stream.
class CounterRng {
public:
    CounterRng() : key_(0) {}
    explicit CounterRng(uint64_t key) : key_(key) {}

    uint64_t key() const { return key_; }
    uint64_t counter() const { return ctr_; }

    uint64_t next_u64() { return counter_u64(key_, ctr_++); }

    double uniform() { return u64_to_unit(next_u64()); }  // (0,1)

    // unbiased-enough integer in [0,n) via 128-bit multiply-shift
    uint64_t uniform_below(uint64_t n) {
        return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double exponential() { return -std::log(uniform()); }

private:
    uint64_t key_;
    uint64_t ctr_ = 0;
};

}  // namespace abrw
