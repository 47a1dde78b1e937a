#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "abrw/lattice.hpp"
#include "abrw/offspring.hpp"
#include "abrw/rng.hpp"

namespace abrw {

struct SimClock {
    double time = 0;
    uint64_t event_count = 0;
    CounterRng rng;

    explicit SimClock(uint64_t seed = 0) : rng(seed) {}
};

// Online colour watcher for one site. A site's colour is its last nonzero
// sign; zero interludes do not reset it, so "+1,0,+1" counts no change and
// "+1,0,-1" counts one.
struct ColourTracker {
    Site site;
    int8_t last_sign = 0;  // from the initial configuration
    uint32_t change_count = 0;
    double last_red_time = -1;   // when the colour last switched to red (0 if initially red)
    double last_blue_time = -1;
    bool record_times = false;
    std::vector<double> change_times;

    void init(const Site& s, int64_t initial_value) {
        site = s;
        last_sign = initial_value > 0 ? 1 : initial_value < 0 ? -1 : 0;
        if (last_sign > 0) last_red_time = 0;
        if (last_sign < 0) last_blue_time = 0;
    }

    void observe(double t, int64_t value) {
        int8_t sign = value > 0 ? 1 : value < 0 ? -1 : 0;
        if (sign == 0 || sign == last_sign) return;
        if (last_sign != 0) {
            ++change_count;
            if (record_times) change_times.push_back(t);
        }
        (sign > 0 ? last_red_time : last_blue_time) = t;
        last_sign = sign;
    }
};

// Count colour changes in a recorded stream of signed values at one site,
// matching ColourTracker semantics.
uint32_t colour_change_count(const std::vector<int64_t>& signs);

// Initial data: every site of [-r,r]^d gets +1 w.p. p and -1 otherwise
// (two_type), or +1 w.p. p and 0 otherwise (monochromatic). One uniform per
// site, box traversed in lexicographic order.
enum class InitVariant { two_type, monochromatic };
SignedLattice init_bernoulli(int dim, double p, int radius, InitVariant variant, CounterRng& rng);

struct RunOptions {
    uint64_t max_events = std::numeric_limits<uint64_t>::max();
    // strictly increasing sample times; the callback sees the state holding
    // at each time (all events before it applied, none at or after)
    std::vector<double> sample_times;
    std::function<void(double, const SignedLattice&)> on_sample;
    ColourTracker* tracker = nullptr;
};

// One event: exponential holding time at rate total_balls, uniform ball,
// one offspring draw, signed placement (annihilation by arithmetic), with
// the parent removed first in death mode. Throws Extinct on an empty state.
void step(SignedLattice& state, const OffspringLaw& law, SimClock& clock);

// Drive the state to the horizon, firing samples on the way. Stops early on
// extinction (remaining samples read the empty state). Throws Budget when
// max_events is exceeded.
void run_until(SignedLattice& state, const OffspringLaw& law, SimClock& clock, double horizon,
               const RunOptions& options = {});

struct TriRunOptions {
    uint64_t max_events = std::numeric_limits<uint64_t>::max();
    std::vector<double> sample_times;
    std::function<void(double, const TriLattice&, const SignedLattice& shadow)> on_sample;
};

// Conservative run: simulates the merge dynamics and, in lockstep under the
// same events, the signed process; verifies Z = R - B on every touched site
// after every event (integer identity). Returns the number of identity
// violations, which must be zero.
struct ConservativeRun {
    TriLattice tri;
    SignedLattice shadow;  // the derived annihilating state
    uint64_t identity_violations = 0;

    ConservativeRun(const SignedLattice& initial_two_type);
};

void run_conservative(ConservativeRun& run, const OffspringLaw& law, SimClock& clock,
                      double horizon, const TriRunOptions& options = {});

}  // namespace abrw
