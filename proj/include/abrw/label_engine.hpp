#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abrw/offspring.hpp"
#include "abrw/rng.hpp"

namespace abrw {

// Labelled construction: every ball is identified by (origin site, child-index
// path); each label owns a Poisson clock and one offspring draw per tick, all
// derived as pure functions of (seed, label, counter). Coupled processes share
// those streams by construction, which is what makes the monotonicity and
// stabilization experiments exact rather than statistical.
//
// Counter layout per label stream: tick k (1-based) consumes counter 2k for
// its exponential spacing and counter 2k+1 for the offspring draw at that
// tick. A ball born at time s starts at the first tick strictly after s;
// earlier ticks of its clock are ignored.

using LabelId = uint32_t;
inline constexpr LabelId kNoLabel = 0xFFFFFFFFu;

// initial configurations map site -> {-1, 0, +1}
using InitialConfig = std::map<Site, int>;

struct LabelledOptions {
    uint64_t max_events = 1'000'000;   // nucleation budget
    bool keep_log = false;             // JSONL event log for process 0
    // containment checks (Lmon): for each pair (a,b), require
    // A^R(a) subset A^R(b) and A^B(b) subset A^B(a) at touched sites
    std::vector<std::pair<int, int>> containment_pairs;
    bool check_value_order = false;    // Z^{(0)} <= Z^{(1)} <= ... at touched sites
    std::optional<Site> watch_site;    // record per-event values at this site
    bool stop_on_watch_disagreement = false;  // early exit when watch values split
};

struct WatchPoint {
    double time;
    std::vector<int64_t> values;  // Z at the watch site, one per process
};

struct Violation {
    double time;
    Site site;
    std::string what;
};

struct LabelledResult {
    uint64_t nucleations = 0;
    std::vector<std::map<Site, int64_t>> final_counts;  // per process, nonzero sites
    std::vector<Violation> violations;
    std::vector<WatchPoint> watch_trace;
    bool watch_disagreed = false;
    double watch_disagreement_time = -1;
    std::vector<std::string> log_lines;  // process 0, when keep_log
    uint64_t log_hash = 0;
};

// Run K coupled processes on shared label randomness.
LabelledResult run_coupled(const OffspringLaw& law, const std::vector<InitialConfig>& initials,
                           double horizon, uint64_t seed, const LabelledOptions& options = {});

// Single labelled run with an event log.
LabelledResult run_labelled(const OffspringLaw& law, const InitialConfig& initial, double horizon,
                            uint64_t seed, const LabelledOptions& options = {});

// Coupled pair for zeta <= zeta_prime; throws PrecondOrder if not ordered.
// The result's violations list is empty exactly when the Lmon containments
// held at every event.
LabelledResult couple(const OffspringLaw& law, const InitialConfig& zeta,
                      const InitialConfig& zeta_prime, double horizon, uint64_t seed,
                      const LabelledOptions& options = {});

// The three initials zeta^{-,r} <= zeta|_r <= zeta^{+,r}, with the +-1
// exterior realized on B(0,R) only.
struct SandwichConfigs {
    InitialConfig minus, restricted, plus;
};
SandwichConfigs sandwich_configs(const InitialConfig& zeta, int r, int big_radius, int dim);

struct SandwichResult {
    uint64_t nucleations = 0;
    std::vector<WatchPoint> origin_trace;  // (t, Z_0 in minus/restricted/plus)
    bool bounds_differ = false;            // minus vs plus split at the origin
    double first_difference_time = -1;
};

// Throws OrderViolation if the pointwise ordering ever breaks.
SandwichResult sandwich(const OffspringLaw& law, const InitialConfig& zeta, int r, int big_radius,
                        double horizon, uint64_t seed, const LabelledOptions& options = {});

struct StabilizationResult {
    bool found = false;
    int radius = -1;
};

// Smallest r <= r_max with Z_z agreement of zeta^{+,r} and zeta^{-,r} on
// [0,T]; exterior realized on B(0,big_radius).
StabilizationResult stabilization_radius(const OffspringLaw& law, const InitialConfig& zeta,
                                         const Site& z, double horizon, uint64_t seed, int r_max,
                                         int big_radius, const LabelledOptions& options = {});

}  // namespace abrw
