#include <doctest.h>

#include "abrw/lattice.hpp"
#include "abrw/rng.hpp"

using namespace abrw;

TEST_CASE("fenwick add, total, and sampling") {
    Fenwick f(8);
    f.add(0, 3);
    f.add(2, 5);
    f.add(7, 2);
    CHECK(f.total() == 10);
    // prefix cells: [0,3) -> slot 0, [3,8) -> slot 2, [8,10) -> slot 7
    CHECK(f.sample(0) == 0);
    CHECK(f.sample(2) == 0);
    CHECK(f.sample(3) == 2);
    CHECK(f.sample(7) == 2);
    CHECK(f.sample(8) == 7);
    CHECK(f.sample(9) == 7);
    f.add(2, -5);
    CHECK(f.total() == 5);
    CHECK(f.sample(3) == 7);
}

TEST_CASE("fenwick sampling frequencies follow the weights") {
    Fenwick f(16);
    f.add(1, 1);
    f.add(5, 2);
    f.add(9, 7);
    CounterRng rng(11);
    int hits[16] = {0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++hits[f.sample(int64_t(rng.uniform_below(10)))];
    CHECK(hits[1] / double(n) == doctest::Approx(0.1).epsilon(0.1));
    CHECK(hits[5] / double(n) == doctest::Approx(0.2).epsilon(0.08));
    CHECK(hits[9] / double(n) == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("box indexer round trip in one and two dimensions") {
    BoxIndexer one(1, 5);
    for (int z = -5; z <= 5; ++z) {
        Site s(z);
        CHECK(one.contains(s));
        CHECK(one.site(one.slot(s)) == s);
    }
    CHECK(!one.contains(Site(6)));

    BoxIndexer two(2, 3);
    CHECK(two.size() == 49);
    for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b) {
            Site s(a, b);
            CHECK(two.site(two.slot(s)) == s);
        }
}

TEST_CASE("signed lattice annihilates by arithmetic and keeps totals") {
    SignedLattice state(1, 2, StateMode::annihilating);
    state.deposit(Site(0), 3);
    state.deposit(Site(1), -2);
    CHECK(state.total_balls() == 5);
    state.deposit(Site(1), 2);  // annihilation: +2 meets -2
    CHECK(state.at(Site(1)) == 0);
    CHECK(state.total_balls() == 3);
    state.deposit(Site(1), -5);
    CHECK(state.at(Site(1)) == -5);
    CHECK(state.total_balls() == 8);
    CHECK(state.check_total());
}

TEST_CASE("signed lattice grows when a ball escapes the box") {
    SignedLattice state(1, 2, StateMode::annihilating);
    state.deposit(Site(0), 1);
    state.deposit(Site(9), -4);  // outside the initial radius
    CHECK(state.at(Site(9)) == -4);
    CHECK(state.at(Site(0)) == 1);
    CHECK(state.total_balls() == 5);
    CHECK(state.box_radius() >= 9);
    CHECK(state.check_total());
}

TEST_CASE("signed lattice iterates nonzero sites in lexicographic order") {
    SignedLattice state(1, 4, StateMode::annihilating);
    state.deposit(Site(2), 1);
    state.deposit(Site(-3), -2);
    state.deposit(Site(0), 4);
    std::vector<int> order;
    state.for_each([&](const Site& s, int64_t) { order.push_back(s[0]); });
    CHECK(order == std::vector<int>{-3, 0, 2});
}

TEST_CASE("monochromatic mode rejects negative counts") {
    SignedLattice state(1, 2, StateMode::monochromatic);
    state.deposit(Site(0), 2);
    CHECK_THROWS_AS(state.deposit(Site(0), -3), Error);
}

TEST_CASE("tri lattice merge rule") {
    TriLattice tri(1, 3);
    tri.deposit(Site(0), 1, 1);   // one red at 0
    tri.deposit(Site(1), -1, 1);  // one blue at 1
    CHECK(tri.total_balls() == 2);

    // red arrival at 1 merges with the blue into purple
    tri.deposit(Site(1), 1, 1);
    auto cell = tri.at(Site(1));
    CHECK(cell.red == 0);
    CHECK(cell.blue == 0);
    CHECK(cell.purple == 1);
    CHECK(tri.total_balls() == 2);

    // three blues arrive at 0: one merges with the red, two remain
    tri.deposit(Site(0), -1, 3);
    cell = tri.at(Site(0));
    CHECK(cell.red == 0);
    CHECK(cell.blue == 2);
    CHECK(cell.purple == 1);
    CHECK(tri.check_invariants());
}

TEST_CASE("tri lattice purple balls do not interact") {
    TriLattice tri(1, 2);
    tri.deposit(Site(0), 0, 4);
    tri.deposit(Site(0), 1, 2);
    auto cell = tri.at(Site(0));
    CHECK(cell.purple == 4);
    CHECK(cell.red == 2);
    CHECK(tri.check_invariants());
}

TEST_CASE("overflow guard trips near the cap") {
    SignedLattice state(1, 1, StateMode::annihilating);
    state.deposit(Site(0), kCountCap - 1);
    CHECK_THROWS_AS(state.deposit(Site(0), 1), Error);
}
