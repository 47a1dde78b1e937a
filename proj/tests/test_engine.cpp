#include <doctest.h>

#include <cmath>

#include "abrw/engine.hpp"
#include "abrw/stats.hpp"
#include "helpers.hpp"

using namespace abrw;

namespace {

// Independent total-count oracle: a continuous-time branching process over
// the population size only, sharing nothing with the engine's state or
// sampling machinery.
double gw_total_at(const OffspringLaw& law, double horizon, CounterRng& rng) {
    double n = 1;
    double t = 0;
    while (n > 0) {
        t += -std::log(rng.uniform()) / n;
        if (t >= horizon) break;
        double u = rng.uniform();
        double acc = 0;
        for (const auto& atom : law.atoms()) {
            acc += atom.probability;
            if (u < acc || &atom == &law.atoms().back()) {
                n += double(atom.config.total()) - (law.is_death() ? 1.0 : 0.0);
                break;
            }
        }
    }
    return n;
}

SignedLattice single_ball(int dim) {
    SignedLattice state(dim, 2, StateMode::annihilating);
    state.deposit(Site(), 1);
    return state;
}

}  // namespace

TEST_CASE("bernoulli initial data") {
    CounterRng rng(1);
    SignedLattice full = init_bernoulli(1, 1.0, 2, InitVariant::monochromatic, rng);
    CHECK(full.total_balls() == 5);
    for (int z = -2; z <= 2; ++z) CHECK(full.at(Site(z)) == 1);

    SignedLattice blue = init_bernoulli(1, 0.0, 1, InitVariant::two_type, rng);
    CHECK(blue.total_balls() == 3);
    for (int z = -1; z <= 1; ++z) CHECK(blue.at(Site(z)) == -1);

    // binomial concentration of the red fraction at p = 1/2
    const int r = 5000;
    SignedLattice big = init_bernoulli(1, 0.5, r, InitVariant::two_type, rng);
    int64_t reds = 0;
    big.for_each([&](const Site&, int64_t c) { reds += (c > 0); });
    double n_sites = double(2 * r + 1);
    double frac = double(reds) / n_sites;
    CHECK(std::abs(frac - 0.5) <= 3.0 / (2.0 * std::sqrt(n_sites)));
}

TEST_CASE("one event from a single ball under the deterministic law") {
    OffspringLaw law = testutil::nn1();
    SimClock clock(7);
    SignedLattice state = single_ball(1);
    step(state, law, clock);
    CHECK(state.total_balls() == 3);
    CHECK(state.at(Site(-1)) == 1);
    CHECK(state.at(Site(0)) == 1);
    CHECK(state.at(Site(1)) == 1);
    CHECK(clock.event_count == 1);
    CHECK(clock.time > 0);
}

TEST_CASE("annihilation during placement") {
    OffspringLaw law = testutil::nn1();
    // {0:+1, 1:-1}: whichever ball rings, its opposite neighbour site empties
    for (uint64_t seed = 0; seed < 8; ++seed) {
        SimClock clock(seed);
        SignedLattice state(1, 2, StateMode::annihilating);
        state.deposit(Site(0), 1);
        state.deposit(Site(1), -1);
        step(state, law, clock);
        CHECK(state.total_balls() == 2);
        bool red_rang = state.at(Site(-1)) == 1;
        if (red_rang) {
            CHECK(state.at(Site(0)) == 1);
            CHECK(state.at(Site(1)) == 0);
        } else {
            CHECK(state.at(Site(1)) == -1);
            CHECK(state.at(Site(2)) == -1);
            CHECK(state.at(Site(0)) == 0);
        }
    }
}

TEST_CASE("death mode removes the parent atomically") {
    OffspringLaw law = testutil::death1();
    for (uint64_t seed = 0; seed < 32; ++seed) {
        SimClock clock(seed);
        SignedLattice state = single_ball(1);
        step(state, law, clock);
        // either the branching atom fired (2 balls at +-1) or extinction
        if (state.total_balls() == 2) {
            CHECK(state.at(Site(-1)) == 1);
            CHECK(state.at(Site(1)) == 1);
            CHECK(state.at(Site(0)) == 0);
        } else {
            CHECK(state.total_balls() == 0);
        }
    }
    SignedLattice empty(1, 2, StateMode::annihilating);
    SimClock clock(0);
    CHECK_THROWS_AS(step(empty, law, clock), Error);
}

TEST_CASE("zero horizon leaves the state untouched") {
    OffspringLaw law = testutil::nn1();
    SimClock clock(3);
    SignedLattice state = single_ball(1);
    run_until(state, law, clock, 0.0, {});
    CHECK(state.total_balls() == 1);
    CHECK(clock.event_count == 0);
}

TEST_CASE("runs are reproducible from the seed") {
    OffspringLaw law = testutil::nn1();
    auto final_state = [&](uint64_t seed) {
        SimClock clock(seed);
        SignedLattice state = single_ball(1);
        run_until(state, law, clock, 2.0, {});
        std::vector<std::pair<int, int64_t>> out;
        state.for_each([&](const Site& s, int64_t c) { out.emplace_back(s[0], c); });
        return std::make_pair(out, clock.event_count);
    };
    CHECK(final_state(99) == final_state(99));
    CHECK(final_state(99) != final_state(100));
}

TEST_CASE("probe reads the left limit at the sample time") {
    OffspringLaw law = testutil::nn1();
    SimClock clock(5);
    SignedLattice state = single_ball(1);
    std::vector<double> norms;
    RunOptions options;
    options.sample_times = {0.0, 1e-12};  // before any event can fire
    options.on_sample = [&](double, const SignedLattice& s) {
        norms.push_back(double(s.total_balls()));
    };
    run_until(state, law, clock, 1.0, options);
    REQUIRE(norms.size() == 2);
    CHECK(norms[0] == 1);
    CHECK(norms[1] == 1);
}

TEST_CASE("event budget trips") {
    OffspringLaw law = testutil::nn1();
    SimClock clock(17);
    SignedLattice state = single_ball(1);
    RunOptions options;
    options.max_events = 3;
    CHECK_THROWS_AS(run_until(state, law, clock, 50.0, options), Error);
}

TEST_CASE("population martingale: mean of e^{-lambda t} ||X(t)|| is 1") {
    OffspringLaw nn1 = testutil::nn1();
    const uint64_t R = 20000;
    for (double t : {0.5, 1.0, 2.0}) {
        std::vector<double> values(R);
        for (uint64_t k = 0; k < R; ++k) {
            SimClock clock(derive_key(555, k));
            SignedLattice state = single_ball(1);
            run_until(state, nn1, clock, t, {});
            values[k] = std::exp(-2.0 * t) * double(state.total_balls());
        }
        Summary s = summarize(values);
        CHECK(std::abs(s.mean - 1.0) <= 3 * s.se);
    }

    OffspringLaw death1 = testutil::death1();
    for (double t : {5.0, 20.0}) {
        std::vector<double> values(R);
        for (uint64_t k = 0; k < R; ++k) {
            SimClock clock(derive_key(556, k));
            SignedLattice state = single_ball(1);
            run_until(state, death1, clock, t, {});
            values[k] = std::exp(-0.1 * t) * double(state.total_balls());
        }
        Summary s = summarize(values);
        CHECK(std::abs(s.mean - 1.0) <= 3 * s.se);
    }
}

TEST_CASE("single-site law matches the independent total-count oracle") {
    OffspringLaw law = testutil::nn1();
    const uint64_t R = 10000;
    std::vector<double> engine_totals(R), oracle_totals(R);
    for (uint64_t k = 0; k < R; ++k) {
        SimClock clock(derive_key(808, k));
        SignedLattice state = single_ball(1);
        run_until(state, law, clock, 1.0, {});
        engine_totals[k] = double(state.total_balls());

        CounterRng rng(derive_key(809, k));
        oracle_totals[k] = gw_total_at(law, 1.0, rng);
    }
    KsResult ks = ks_two_sample(engine_totals, oracle_totals);
    CHECK(ks.p_value > 0.01);
    // and the same for the death-mode law, where extinction matters
    OffspringLaw death = testutil::death1();
    for (uint64_t k = 0; k < R; ++k) {
        SimClock clock(derive_key(818, k));
        SignedLattice state = single_ball(1);
        run_until(state, death, clock, 5.0, {});
        engine_totals[k] = double(state.total_balls());
        CounterRng rng(derive_key(819, k));
        oracle_totals[k] = gw_total_at(death, 5.0, rng);
    }
    ks = ks_two_sample(engine_totals, oracle_totals);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("colour change counting") {
    CHECK(colour_change_count({1, 1, 0, 1}) == 0);
    CHECK(colour_change_count({1, 0, -1, 1}) == 2);
    CHECK(colour_change_count({}) == 0);
    CHECK(colour_change_count({0, 0, 0}) == 0);
    CHECK(colour_change_count({0, -2, 2, -2, 2}) == 3);

    ColourTracker tracker;
    tracker.init(Site(), 1);
    tracker.observe(0.5, 1);
    tracker.observe(0.7, 0);
    tracker.observe(0.9, 1);
    CHECK(tracker.change_count == 0);
    tracker.observe(1.1, -2);
    CHECK(tracker.change_count == 1);
    CHECK(tracker.last_blue_time == doctest::Approx(1.1));
    tracker.observe(1.5, 3);
    CHECK(tracker.change_count == 2);
    CHECK(tracker.last_red_time == doctest::Approx(1.5));
}

TEST_CASE("conservative run keeps Z = R - B and the merge invariants") {
    OffspringLaw law = testutil::nn1();
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SimClock clock(derive_key(42, seed));
        SignedLattice initial = init_bernoulli(1, 0.5, 4, InitVariant::two_type, clock.rng);
        ConservativeRun run(initial);
        run_conservative(run, law, clock, 1.5, {});
        CHECK(run.identity_violations == 0);
        CHECK(run.tri.check_invariants());
        // full-state identity at the end, not just touched sites
        run.tri.for_each([&](const Site& s, TriLattice::Cell cell) {
            CHECK(cell.red - cell.blue == run.shadow.at(s));
        });
    }
}

TEST_CASE("conservative run from an all-red block never makes purple") {
    OffspringLaw law = testutil::nn1();
    SimClock clock(9);
    SignedLattice initial = init_bernoulli(1, 1.0, 3, InitVariant::two_type, clock.rng);
    ConservativeRun run(initial);
    run_conservative(run, law, clock, 1.0, {});
    CHECK(run.identity_violations == 0);
    run.tri.for_each([&](const Site&, TriLattice::Cell cell) {
        CHECK(cell.blue == 0);
        CHECK(cell.purple == 0);
    });
}
