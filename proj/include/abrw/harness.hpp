#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "abrw/analytics.hpp"
#include "abrw/engine.hpp"
#include "abrw/label_engine.hpp"
#include "abrw/offspring.hpp"
#include "abrw/stats.hpp"

namespace abrw {

inline constexpr uint64_t kDefaultSeed = 424243;

// One observable estimate; serialized as a JSON line with exactly these
// fields plus the free-form detail string.
struct EstimateRecord {
    std::string observable;
    double estimate = 0;
    double se = 0;
    uint64_t replicates = 0;
    double epsilon = 0;  // trust-region certificate for origin observables
    uint64_t seed = 0;
    bool pass = true;
    std::string detail;
};

struct ExperimentResult {
    std::string name;
    std::vector<EstimateRecord> records;
    bool pass = true;
    std::vector<std::string> notes;
};

// Parsed experiment configuration (one JSON object per experiment; law inline
// under "law" or referenced by "law_path").
struct ExperimentConfig {
    std::string name;
    std::optional<OffspringLaw> law;
    double p = 0.5;
    std::vector<double> p_values;
    std::vector<double> times;
    uint64_t replicates = 1000;
    std::vector<uint64_t> replicates_per_time;  // optional per-time override
    uint64_t seed = kDefaultSeed;
    bool seed_from_config = false;
    uint64_t event_budget = 4'000'000'000ull;  // total events per experiment
    int threads = 0;                            // 0 = hardware
    int init_radius = -1;                       // -1 = trust policy
    double window_fraction = 0.5;               // fixation
    int box_n = 20;                             // density
    uint64_t box_replicates = 200;              // density spatial runs
    double threshold_percentile = 0.70;         // deviation
    double floor_probability = 0.05;            // deviation
    uint64_t samples = 10000;                   // clt draws
    uint64_t pairs = 1000;                      // coupling
    int pair_radius = 3;                        // coupling box
    int sandwich_big_radius = 12;               // couple subcommand
    std::vector<int> sandwich_r_values{2, 4, 8};
    uint64_t sandwich_seeds = 100;
    int output_radius = 10;                     // simulate CSV window
    std::string variant = "monochromatic";      // simulate
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& base_dir);

// replicate k runs on stream derive_key(master, k); deterministic regardless
// of thread count
void parallel_replicates(uint64_t count, int threads,
                         const std::function<void(uint64_t)>& body);

// --- experiments (names match the CLI) ---
ExperimentResult run_mean_growth(const ExperimentConfig& cfg);
ExperimentResult run_variance_scaling(const ExperimentConfig& cfg);
ExperimentResult run_fixation(const ExperimentConfig& cfg);
ExperimentResult run_nonfixation(const ExperimentConfig& cfg);
ExperimentResult run_deviation(const ExperimentConfig& cfg);
ExperimentResult run_clt(const ExperimentConfig& cfg);
ExperimentResult run_coupling(const ExperimentConfig& cfg);
ExperimentResult run_conservative_experiment(const ExperimentConfig& cfg);
ExperimentResult run_density(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& cfg);
std::vector<std::string> experiment_names();

// trajectory CSV for the simulate subcommand
std::string simulate_trajectories(const ExperimentConfig& cfg);

// serialization
std::string records_jsonl(const ExperimentResult& result);
std::string records_csv(const ExperimentResult& result);
void atomic_write(const std::string& path, const std::string& content);

// helpers shared with the acceptance suite
double mean_growth_trust_epsilon(const OffspringLaw& law, double p, double t, uint64_t R,
                                 int& radius_out);
uint64_t predicted_events(const OffspringLaw& law, uint64_t sites, double horizon);

}  // namespace abrw
