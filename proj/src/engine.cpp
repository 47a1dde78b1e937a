#include "abrw/engine.hpp"

#include <algorithm>

namespace abrw {

uint32_t colour_change_count(const std::vector<int64_t>& signs) {
    uint32_t changes = 0;
    int8_t last = 0;
    for (int64_t v : signs) {
        int8_t s = v > 0 ? 1 : v < 0 ? -1 : 0;
        if (s == 0 || s == last) continue;
        if (last != 0) ++changes;
        last = s;
    }
    return changes;
}

SignedLattice init_bernoulli(int dim, double p, int radius, InitVariant variant, CounterRng& rng) {
    StateMode mode =
        variant == InitVariant::monochromatic ? StateMode::monochromatic : StateMode::annihilating;
    SignedLattice state(dim, radius, mode);
    for_each_in_box(radius, dim, [&](const Site& s) {
        double u = rng.uniform();
        if (variant == InitVariant::two_type)
            state.deposit(s, u < p ? 1 : -1);
        else if (u < p)
            state.deposit(s, 1);
    });
    return state;
}

namespace {

// one nucleation at the already-advanced clock time
inline void apply_event(SignedLattice& state, const OffspringLaw& law, SimClock& clock,
                        ColourTracker* tracker) {
    uint64_t total = state.total_balls();
    size_t slot = state.sample_slot(int64_t(clock.rng.uniform_below(total)));
    int64_t c = state.slot_count(slot);
    int sign = c > 0 ? 1 : -1;
    const Site parent = state.slot_site(slot);
    const Configuration& cfg = law.sample(clock.rng);

    bool touched = false;
    const int d = state.dim();
    if (law.is_death()) {
        state.deposit_slot(slot, -sign);
        touched |= tracker && parent == tracker->site;
    }
    for (const auto& b : cfg.balls) {
        Site target = add(parent, b.offset, d);
        state.deposit(target, sign * b.count);
        touched |= tracker && target == tracker->site;
    }
    ++clock.event_count;
    if (touched) tracker->observe(clock.time, state.at(tracker->site));
}

}  // namespace

void step(SignedLattice& state, const OffspringLaw& law, SimClock& clock) {
    uint64_t total = state.total_balls();
    if (total == 0) throw Error(Error::Code::Extinct, "no balls left");
    clock.time += clock.rng.exponential() / double(total);
    apply_event(state, law, clock, nullptr);
}

void run_until(SignedLattice& state, const OffspringLaw& law, SimClock& clock, double horizon,
               const RunOptions& options) {
    size_t next_sample = 0;
    auto flush_samples = [&](double up_to) {
        while (next_sample < options.sample_times.size() &&
               options.sample_times[next_sample] <= up_to) {
            if (options.on_sample) options.on_sample(options.sample_times[next_sample], state);
            ++next_sample;
        }
    };

    while (true) {
        uint64_t total = state.total_balls();
        if (total == 0) {
            flush_samples(horizon);
            clock.time = horizon;
            return;
        }
        double next_time = clock.time + clock.rng.exponential() / double(total);
        if (next_time >= horizon) {
            flush_samples(horizon);
            clock.time = horizon;
            return;
        }
        // samples at or before the event time read the pre-event state: the
        // event at next_time is not an event strictly before the sample
        flush_samples(next_time);
        clock.time = next_time;
        if (clock.event_count >= options.max_events)
            throw Error(Error::Code::Budget, "event budget exceeded");
        apply_event(state, law, clock, options.tracker);
    }
}

ConservativeRun::ConservativeRun(const SignedLattice& initial_two_type)
    : tri(initial_two_type.dim(), std::max(1, initial_two_type.box_radius())),
      shadow(initial_two_type.dim(), std::max(1, initial_two_type.box_radius()),
             StateMode::annihilating) {
    initial_two_type.for_each([&](const Site& s, int64_t c) {
        tri.deposit(s, c > 0 ? 1 : -1, std::abs(c));
        shadow.deposit(s, c);
    });
}

namespace {

inline void apply_tri_event(ConservativeRun& run, const OffspringLaw& law, SimClock& clock) {
    uint64_t total = run.tri.total_balls();
    size_t slot = run.tri.sample_slot(int64_t(clock.rng.uniform_below(total)));
    TriLattice::Cell cell = run.tri.slot_cell(slot);
    int64_t w = int64_t(clock.rng.uniform_below(uint64_t(cell.total())));
    int colour = w < cell.red ? 1 : (w < cell.red + cell.blue ? -1 : 0);

    const Site parent = run.tri.slot_site(slot);
    const Configuration& cfg = law.sample(clock.rng);
    const int d = run.tri.dim();

    auto verify = [&](const Site& s) {
        TriLattice::Cell c = run.tri.at(s);
        if (c.red - c.blue != run.shadow.at(s)) ++run.identity_violations;
    };

    if (law.is_death()) {
        run.tri.deposit(parent, colour, -1);
        if (colour != 0) run.shadow.deposit(parent, -colour);
    }
    for (const auto& b : cfg.balls) {
        Site target = add(parent, b.offset, d);
        run.tri.deposit(target, colour, b.count);
        if (colour != 0) run.shadow.deposit(target, colour * b.count);
    }
    ++clock.event_count;

    verify(parent);
    for (const auto& b : cfg.balls) verify(add(parent, b.offset, d));
}

}  // namespace

void run_conservative(ConservativeRun& run, const OffspringLaw& law, SimClock& clock,
                      double horizon, const TriRunOptions& options) {
    size_t next_sample = 0;
    auto flush_samples = [&](double up_to) {
        while (next_sample < options.sample_times.size() &&
               options.sample_times[next_sample] <= up_to) {
            if (options.on_sample)
                options.on_sample(options.sample_times[next_sample], run.tri, run.shadow);
            ++next_sample;
        }
    };

    while (true) {
        uint64_t total = run.tri.total_balls();
        if (total == 0) {
            flush_samples(horizon);
            clock.time = horizon;
            return;
        }
        double next_time = clock.time + clock.rng.exponential() / double(total);
        if (next_time >= horizon) {
            flush_samples(horizon);
            clock.time = horizon;
            return;
        }
        flush_samples(next_time);
        clock.time = next_time;
        if (clock.event_count >= options.max_events)
            throw Error(Error::Code::Budget, "event budget exceeded");
        apply_tri_event(run, law, clock);
    }
}

}  // namespace abrw
