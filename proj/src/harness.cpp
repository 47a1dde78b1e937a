#include "abrw/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace abrw {

namespace {

int effective_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? int(hw) : 1;
}

uint64_t replicate_seed(uint64_t master, uint64_t k) { return derive_key(master, k); }

// monochromatic spread scale of p_z(t)
double diffusion_sigma(const OffspringLaw& law, double t) {
    return std::sqrt(std::max(1e-9, law.moment_m2() * t));
}

// radius capturing all but ~1% of the variance share sum p_z^2, uniform rule
// across t so that log-log slopes stay unbiased
int variance_radius(const OffspringLaw& law, double t) {
    return std::max(4, int(std::ceil(1.82 * diffusion_sigma(law, t))));
}

// safety-net per-replicate cap well above the expected cost
uint64_t generous_budget(uint64_t predicted) {
    if (predicted > UINT64_MAX / 64) return UINT64_MAX;
    return predicted * 50 + 1'000'000;
}

struct OriginSamples {
    // values[time index][replicate]
    std::vector<std::vector<double>> origin_counts;
    std::vector<std::vector<double>> tracker_changes;   // colour changes up to each time
    std::vector<std::vector<double>> red_throughout;    // 1 if red on [w*t, t]
    uint64_t radius = 0;
};

struct OriginRunSpec {
    const OffspringLaw* law;
    double p;
    int radius;
    InitVariant variant;
    std::vector<double> times;
    uint64_t replicates;
    uint64_t master_seed;
    uint64_t sub_experiment;  // distinct streams for distinct legs
    uint64_t per_rep_budget;
    int threads;
    bool with_tracker = false;
    double window_fraction = 0.5;
};

OriginSamples run_origin_probes(const OriginRunSpec& spec) {
    OriginSamples out;
    const size_t nt = spec.times.size();
    out.origin_counts.assign(nt, std::vector<double>(spec.replicates, 0.0));
    if (spec.with_tracker) {
        out.tracker_changes.assign(nt, std::vector<double>(spec.replicates, 0.0));
        out.red_throughout.assign(nt, std::vector<double>(spec.replicates, 0.0));
    }
    out.radius = uint64_t(spec.radius);
    const double horizon = spec.times.empty() ? 0.0 : spec.times.back();
    const Site origin;

    parallel_replicates(spec.replicates, spec.threads, [&](uint64_t k) {
        SimClock clock(derive_key(replicate_seed(spec.master_seed, k), spec.sub_experiment));
        SignedLattice state =
            init_bernoulli(spec.law->dimension(), spec.p, spec.radius, spec.variant, clock.rng);
        ColourTracker tracker;
        tracker.init(origin, state.at(origin));

        RunOptions options;
        options.max_events = spec.per_rep_budget;
        options.sample_times = spec.times;
        if (spec.with_tracker) options.tracker = &tracker;
        size_t ti = 0;
        options.on_sample = [&](double t, const SignedLattice& s) {
            out.origin_counts[ti][k] = double(s.at(origin));
            if (spec.with_tracker) {
                out.tracker_changes[ti][k] = double(tracker.change_count);
                bool red_now = tracker.last_sign > 0;
                bool blue_inside_window = tracker.last_blue_time >= spec.window_fraction * t;
                out.red_throughout[ti][k] = (red_now && !blue_inside_window) ? 1.0 : 0.0;
            }
            ++ti;
        };
        run_until(state, *spec.law, clock, horizon, options);
    });
    return out;
}

std::string format_key(const std::string& base, double p, double t) {
    std::ostringstream os;
    os << base << "[p=" << p << ",t=" << t << "]";
    return os.str();
}

}  // namespace

void parallel_replicates(uint64_t count, int threads, const std::function<void(uint64_t)>& body) {
    threads = effective_threads(threads);
    if (threads <= 1 || count < 2) {
        for (uint64_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::atomic<uint64_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            uint64_t k = next.fetch_add(1);
            if (k >= count) return;
            try {
                body(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

uint64_t predicted_events(const OffspringLaw& law, uint64_t sites, double horizon) {
    double lambda = law.lambda();
    double expected = double(sites) * (std::exp(lambda * horizon) - 1.0) / lambda;
    if (expected > 9e18) return UINT64_MAX;
    return uint64_t(expected) + 1;
}

double mean_growth_trust_epsilon(const OffspringLaw& law, double p, double t, uint64_t R,
                                 int& radius_out) {
    // predicted 3*SE from the leading variance term, then the 1% trust rule
    double var_pred = p > 0 ? variance_prediction(law, p, t) : 0.0;
    var_pred = std::max(var_pred, p * (1 - p));
    double tol = 3.0 * std::sqrt(std::max(var_pred, 1e-6) / double(std::max<uint64_t>(R, 1)));
    double target = std::max(1e-10, 0.01 * tol);
    radius_out = trust_radius(law, t, target);
    return tail_bound(law, radius_out, t);
}

// ---------------------------------------------------------------- mean growth

ExperimentResult run_mean_growth(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "mean-growth";
    const OffspringLaw& law = *cfg.law;
    std::vector<double> ps = cfg.p_values.empty() ? std::vector<double>{cfg.p} : cfg.p_values;
    const double lambda = law.lambda();

    uint64_t sub = 0;
    for (double p : ps) {
        int radius = cfg.init_radius;
        double epsilon = 0;
        if (p > 0) {
            if (radius < 0)
                epsilon = mean_growth_trust_epsilon(law, p, cfg.times.back(), cfg.replicates, radius);
            else
                epsilon = tail_bound(law, radius, cfg.times.back());
        } else if (radius < 0) {
            radius = 2;
        }

        OriginRunSpec spec{&law,          p,           radius, InitVariant::monochromatic,
                           cfg.times,     cfg.replicates, cfg.seed, ++sub,
                           0,             cfg.threads};
        spec.per_rep_budget = generous_budget(
            predicted_events(law, uint64_t(box_volume(radius, law.dimension())), cfg.times.back()));
        OriginSamples samples = run_origin_probes(spec);

        for (size_t ti = 0; ti < cfg.times.size(); ++ti) {
            double t = cfg.times[ti];
            std::vector<double> scaled = samples.origin_counts[ti];
            double factor = std::exp(-lambda * t);
            for (double& v : scaled) v *= factor;
            Summary s = summarize(scaled);
            double eps_t = p > 0 ? tail_bound(law, radius, t) : 0.0;
            EstimateRecord rec;
            rec.observable = format_key("mean_growth", p, t);
            rec.estimate = s.mean;
            rec.se = s.se;
            rec.replicates = cfg.replicates;
            rec.epsilon = eps_t;
            rec.seed = cfg.seed;
            rec.pass = std::abs(s.mean - p) <= 3.0 * s.se + eps_t;
            {
                std::ostringstream os;
                os << "target=" << p << " radius=" << radius;
                rec.detail = os.str();
            }
            result.pass = result.pass && rec.pass;
            result.records.push_back(std::move(rec));
        }
        (void)epsilon;
    }
    return result;
}

// ----------------------------------------------------------- variance scaling

ExperimentResult run_variance_scaling(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "variance-scaling";
    const OffspringLaw& law = *cfg.law;
    const double lambda = law.lambda();
    const double p = cfg.p;

    std::vector<std::pair<double, double>> completed;  // (t, var)
    uint64_t sub = 0;
    for (size_t ti = 0; ti < cfg.times.size(); ++ti) {
        double t = cfg.times[ti];
        uint64_t R = cfg.replicates_per_time.size() == cfg.times.size()
                         ? cfg.replicates_per_time[ti]
                         : cfg.replicates;
        int radius = cfg.init_radius >= 0 ? cfg.init_radius : variance_radius(law, t);
        uint64_t sites = uint64_t(box_volume(radius, law.dimension()));
        uint64_t predicted = predicted_events(law, sites, t);
        ++sub;

        EstimateRecord rec;
        rec.observable = format_key("variance", p, t);
        rec.replicates = R;
        rec.seed = cfg.seed;
        rec.epsilon = tail_bound(law, radius, t);  // pathwise certificate, may be vacuous

        if (predicted == UINT64_MAX || predicted > cfg.event_budget / std::max<uint64_t>(R, 1)) {
            rec.estimate = std::nan("");
            rec.se = 0;
            rec.pass = false;
            std::ostringstream os;
            os << "BUDGET FAIL: predicted " << double(predicted) << " events/replicate x " << R
               << " replicates exceeds budget " << double(cfg.event_budget);
            rec.detail = os.str();
            result.pass = false;
            result.notes.push_back(rec.observable + ": " + rec.detail);
            result.records.push_back(std::move(rec));
            continue;
        }

        OriginRunSpec spec{&law, p,   radius, InitVariant::monochromatic, {t}, R, cfg.seed,
                           sub,  0,   cfg.threads};
        spec.per_rep_budget = generous_budget(predicted);
        OriginSamples samples = run_origin_probes(spec);

        std::vector<double> scaled = samples.origin_counts[0];
        double factor = std::exp(-lambda * t);
        for (double& v : scaled) v *= factor;
        VarianceEstimate ve = variance_estimate(scaled);
        rec.estimate = ve.variance;
        rec.se = ve.se;
        rec.pass = true;
        {
            std::ostringstream os;
            os << "radius=" << radius << " prediction=" << variance_prediction(law, p, t);
            rec.detail = os.str();
        }
        completed.emplace_back(t, ve.variance);
        result.records.push_back(std::move(rec));
    }

    // slope over the full grid; missing legs already failed the experiment
    if (completed.size() >= 2) {
        SlopeFit fit = slope_loglog(completed);
        EstimateRecord rec;
        rec.observable = "variance_slope";
        rec.estimate = fit.slope;
        rec.se = fit.stderr_slope;
        rec.replicates = cfg.replicates;
        rec.seed = cfg.seed;
        double want = -double(law.dimension()) / 2.0;
        rec.pass = completed.size() == cfg.times.size() && std::abs(fit.slope - want) <= 0.15;
        std::ostringstream os;
        os << "target " << want << " +- 0.15 over " << completed.size() << "/" << cfg.times.size()
           << " grid points";
        rec.detail = os.str();
        result.pass = result.pass && rec.pass;
        result.records.push_back(std::move(rec));
    }
    if (!completed.empty()) {
        double t_last = completed.back().first;
        double ratio = completed.back().second / variance_prediction(law, p, t_last);
        EstimateRecord rec;
        rec.observable = "variance_ratio_at_t_max";
        rec.estimate = ratio;
        rec.se = 0;
        rec.replicates = cfg.replicates;
        rec.seed = cfg.seed;
        bool at_grid_end = t_last == cfg.times.back();
        rec.pass = at_grid_end && ratio >= 0.7 && ratio <= 1.3;
        std::ostringstream os;
        os << "C=" << variance_constant(law, p) << " at t=" << t_last
           << (at_grid_end ? "" : " (grid end unreachable)");
        rec.detail = os.str();
        result.pass = result.pass && rec.pass;
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ------------------------------------------------------------------- fixation

ExperimentResult run_fixation(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "fixation";
    const OffspringLaw& law = *cfg.law;
    double t_max = cfg.times.back();
    int radius = cfg.init_radius >= 0 ? cfg.init_radius
                                      : trust_radius(law, t_max, std::max(1e-10, 0.01 * 0.03));
    double epsilon = tail_bound(law, radius, t_max);

    OriginRunSpec spec{&law,      cfg.p,          radius,   InitVariant::two_type,
                       cfg.times, cfg.replicates, cfg.seed, 1,
                       0,         cfg.threads,    true,     cfg.window_fraction};
    spec.per_rep_budget = generous_budget(
        predicted_events(law, uint64_t(box_volume(radius, law.dimension())), t_max));
    OriginSamples samples = run_origin_probes(spec);

    std::vector<Summary> fractions;
    for (size_t ti = 0; ti < cfg.times.size(); ++ti)
        fractions.push_back(summarize(samples.red_throughout[ti]));

    bool increasing = true;
    for (size_t i = 0; i + 1 < fractions.size(); ++i)
        if (!(fractions[i].mean < fractions[i + 1].mean)) increasing = false;

    for (size_t ti = 0; ti < cfg.times.size(); ++ti) {
        EstimateRecord rec;
        rec.observable = format_key("red_throughout", cfg.p, cfg.times[ti]);
        rec.estimate = fractions[ti].mean;
        rec.se = fractions[ti].se;
        rec.replicates = cfg.replicates;
        rec.epsilon = epsilon;
        rec.seed = cfg.seed;
        bool last = ti + 1 == cfg.times.size();
        rec.pass = !last || (increasing && fractions[ti].mean >= 0.9 - epsilon);
        rec.detail = last ? "gate: increasing across grid and >= 0.9 at the last time" : "";
        result.pass = result.pass && rec.pass;
        result.records.push_back(std::move(rec));
    }
    if (!increasing) result.notes.push_back("red-throughout fractions are not increasing in T");
    return result;
}

// ---------------------------------------------------------------- nonfixation

ExperimentResult run_nonfixation(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "nonfixation";
    const OffspringLaw& law = *cfg.law;
    double t_max = cfg.times.back();
    int radius = cfg.init_radius >= 0 ? cfg.init_radius
                                      : trust_radius(law, t_max, std::max(1e-10, 0.01 * 0.3));
    double epsilon = tail_bound(law, radius, t_max);

    OriginRunSpec spec{&law,      cfg.p,          radius,   InitVariant::two_type,
                       cfg.times, cfg.replicates, cfg.seed, 1,
                       0,         cfg.threads,    true};
    spec.per_rep_budget = generous_budget(
        predicted_events(law, uint64_t(box_volume(radius, law.dimension())), t_max));
    OriginSamples samples = run_origin_probes(spec);

    std::vector<Summary> counts;
    for (size_t ti = 0; ti < cfg.times.size(); ++ti)
        counts.push_back(summarize(samples.tracker_changes[ti]));

    bool separated = true;
    for (size_t i = 0; i + 1 < counts.size(); ++i) {
        double hi = counts[i].mean + 2.0 * counts[i].se;
        double lo = counts[i + 1].mean - 2.0 * counts[i + 1].se;
        if (!(hi < lo)) separated = false;
    }

    for (size_t ti = 0; ti < cfg.times.size(); ++ti) {
        EstimateRecord rec;
        rec.observable = format_key("colour_changes", cfg.p, cfg.times[ti]);
        rec.estimate = counts[ti].mean;
        rec.se = counts[ti].se;
        rec.replicates = cfg.replicates;
        rec.epsilon = epsilon;
        rec.seed = cfg.seed;
        rec.pass = separated;
        rec.detail = "gate: strictly increasing with non-overlapping +-2SE intervals";
        result.pass = result.pass && rec.pass;
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ------------------------------------------------------------------ deviation

ExperimentResult run_deviation(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "deviation";
    const OffspringLaw& law = *cfg.law;
    const double lambda = law.lambda();
    const int d = law.dimension();

    double c_hat = 0;
    uint64_t sub = 0;
    for (size_t ti = 0; ti < cfg.times.size(); ++ti) {
        double t = cfg.times[ti];
        uint64_t R = cfg.replicates_per_time.size() == cfg.times.size()
                         ? cfg.replicates_per_time[ti]
                         : cfg.replicates;
        int radius = cfg.init_radius >= 0
                         ? cfg.init_radius
                         : trust_radius(law, t, std::max(1e-10, 0.01 * cfg.floor_probability));
        double epsilon = tail_bound(law, radius, t);
        ++sub;

        OriginRunSpec spec{&law, cfg.p, radius, InitVariant::two_type, {t}, R, cfg.seed, sub, 0,
                           cfg.threads};
        spec.per_rep_budget =
            generous_budget(predicted_events(law, uint64_t(box_volume(radius, d)), t));
        OriginSamples samples = run_origin_probes(spec);

        double factor = std::exp(-lambda * t) * std::pow(t, double(d) / 4.0);
        std::vector<double> rescaled = samples.origin_counts[0];
        for (double& v : rescaled) v *= factor;

        if (ti == 0) c_hat = percentile(rescaled, cfg.threshold_percentile);

        uint64_t above = 0, positive = 0;
        for (size_t k = 0; k < rescaled.size(); ++k) {
            if (rescaled[k] > c_hat) ++above;
            if (samples.origin_counts[0][k] > 0) ++positive;
        }
        double prob = double(above) / double(R);
        double prob_se = std::sqrt(std::max(prob * (1 - prob), 1e-12) / double(R));
        double pos = double(positive) / double(R);
        double pos_se = std::sqrt(std::max(pos * (1 - pos), 1e-12) / double(R));

        EstimateRecord rec;
        rec.observable = format_key("deviation_floor", cfg.p, t);
        rec.estimate = prob;
        rec.se = prob_se;
        rec.replicates = R;
        rec.epsilon = epsilon;
        rec.seed = cfg.seed;
        rec.pass = prob >= cfg.floor_probability;
        {
            std::ostringstream os;
            os << "c_hat=" << c_hat << " threshold=" << c_hat * std::pow(t, -double(d) / 4.0);
            rec.detail = os.str();
        }
        result.pass = result.pass && rec.pass;
        result.records.push_back(std::move(rec));

        EstimateRecord sym;
        sym.observable = format_key("prob_origin_positive", cfg.p, t);
        sym.estimate = pos;
        sym.se = pos_se;
        sym.replicates = R;
        sym.epsilon = epsilon;
        sym.seed = cfg.seed;
        sym.pass = pos <= 0.5 + 3.0 * pos_se + epsilon;
        sym.detail = "red/blue exchange symmetry: P(Z_0 > 0) <= 1/2";
        result.pass = result.pass && sym.pass;
        result.records.push_back(std::move(sym));
    }
    return result;
}

// ------------------------------------------------------------------------ clt

ExperimentResult run_clt(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "clt";
    const OffspringLaw& law = *cfg.law;
    const double t = cfg.times.empty() ? 5.0 : cfg.times.back();
    const double lambda = law.lambda();

    // S(t) draws need the table to cover essentially all of sum p_z
    int radius = std::max(8, int(std::ceil(6.5 * diffusion_sigma(law, t))));
    PzTable table = pz_table(law, t, radius, 1e-12);
    double variance = clt_params(law, t).variance;
    double sd = std::sqrt(variance);

    std::vector<double> standardized(cfg.samples);
    std::vector<double> raw(cfg.samples);
    parallel_replicates(cfg.samples, cfg.threads, [&](uint64_t k) {
        CounterRng rng(derive_key(replicate_seed(cfg.seed, k), 101));
        double s = 0;
        for (double v : table.values) s += (rng.uniform() < 0.5 ? 1.0 : -1.0) * v;
        raw[k] = s;
        standardized[k] = s / sd;
    });

    KsResult ks = ks_test_standard_normal(standardized);
    EstimateRecord rec;
    rec.observable = "clt_ks_pvalue[t=" + std::to_string(t) + "]";
    rec.estimate = ks.p_value;
    rec.se = 0;
    rec.replicates = cfg.samples;
    rec.seed = cfg.seed;
    rec.pass = ks.p_value > 0.01;
    rec.detail = "D=" + std::to_string(ks.statistic) + " variance=" + std::to_string(variance);
    result.pass = result.pass && rec.pass;
    result.records.push_back(std::move(rec));

    Skewness skew = skewness(raw);
    EstimateRecord srec;
    srec.observable = "clt_skewness[t=" + std::to_string(t) + "]";
    srec.estimate = skew.value;
    srec.se = skew.se;
    srec.replicates = cfg.samples;
    srec.seed = cfg.seed;
    srec.pass = std::abs(skew.value) <= 3.0 * skew.se;
    result.pass = result.pass && srec.pass;
    result.records.push_back(std::move(srec));

    // conditional mean check at zeta = delta_0: mean of e^{-lambda t1} Z_0
    // over fresh clocks equals p_0(t1)
    const double t1 = 1.0;
    PzTable table1 = pz_table(law, t1, 8, 1e-12);
    std::map<Site, int> delta0{{Site(), 1}};
    double target = conditional_mean_S(table1, delta0);
    uint64_t R = std::max<uint64_t>(cfg.replicates, 10000);
    std::vector<double> values(R);
    parallel_replicates(R, cfg.threads, [&](uint64_t k) {
        SimClock clock(derive_key(replicate_seed(cfg.seed, k), 202));
        SignedLattice state(law.dimension(), 2, StateMode::annihilating);
        state.deposit(Site(), 1);
        RunOptions options;
        options.max_events = 1'000'000;
        run_until(state, law, clock, t1, options);
        values[k] = std::exp(-lambda * t1) * double(state.at(Site()));
    });
    Summary s = summarize(values);
    EstimateRecord crec;
    crec.observable = "conditional_mean_delta0[t=" + std::to_string(t1) + "]";
    crec.estimate = s.mean;
    crec.se = s.se;
    crec.replicates = R;
    crec.seed = cfg.seed;
    crec.pass = std::abs(s.mean - target) <= 3.0 * s.se;
    crec.detail = "target=" + std::to_string(target);
    result.pass = result.pass && crec.pass;
    result.records.push_back(std::move(crec));
    return result;
}

// ------------------------------------------------------------------- coupling

ExperimentResult run_coupling(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "coupling";
    const OffspringLaw& law = *cfg.law;
    const double horizon = cfg.times.empty() ? 2.0 : cfg.times.back();
    const int box = cfg.pair_radius;

    std::atomic<uint64_t> violations{0};
    std::atomic<uint64_t> nucleations{0};
    parallel_replicates(cfg.pairs, cfg.threads, [&](uint64_t k) {
        CounterRng rng(derive_key(replicate_seed(cfg.seed, k), 303));
        InitialConfig zeta, zeta_prime;
        for_each_in_box(box, law.dimension(), [&](const Site& s) {
            // zeta' uniform on {-1,0,1}, zeta uniform on {-1..zeta'}
            int hi = int(rng.uniform_below(3)) - 1;
            int lo = -1 + int(rng.uniform_below(uint64_t(hi + 2)));
            if (hi != 0) zeta_prime[s] = hi;
            if (lo != 0) zeta[s] = lo;
        });
        LabelledOptions options;
        options.max_events = 2'000'000;
        LabelledResult run = couple(law, zeta, zeta_prime, horizon, replicate_seed(cfg.seed, k),
                                    options);
        violations += run.violations.size();
        nucleations += run.nucleations;
    });

    EstimateRecord rec;
    rec.observable = "coupling_containment_violations";
    rec.estimate = double(violations.load());
    rec.se = 0;
    rec.replicates = cfg.pairs;
    rec.seed = cfg.seed;
    rec.pass = violations.load() == 0;
    rec.detail = "nucleations=" + std::to_string(nucleations.load());
    result.pass = rec.pass;
    result.records.push_back(std::move(rec));
    return result;
}

// --------------------------------------------------------------- conservative

ExperimentResult run_conservative_experiment(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "conservative";
    const OffspringLaw& law = *cfg.law;
    const double t = cfg.times.empty() ? 2.0 : cfg.times.back();
    const double lambda = law.lambda();
    const uint64_t R = cfg.replicates;

    int radius = cfg.init_radius >= 0 ? cfg.init_radius
                                      : trust_radius(law, t, std::max(1e-10, 0.01 * 0.03));
    double epsilon = tail_bound(law, radius, t);
    uint64_t per_rep_budget = generous_budget(
        predicted_events(law, uint64_t(box_volume(radius, law.dimension())), t));

    std::vector<double> red_purple(R), blue_purple(R);
    std::atomic<uint64_t> identity_violations{0};
    parallel_replicates(R, cfg.threads, [&](uint64_t k) {
        SimClock clock(derive_key(replicate_seed(cfg.seed, k), 404));
        SignedLattice initial =
            init_bernoulli(law.dimension(), cfg.p, radius, InitVariant::two_type, clock.rng);
        ConservativeRun run(initial);
        TriRunOptions options;
        options.max_events = per_rep_budget;
        options.sample_times = {t};
        options.on_sample = [&](double, const TriLattice& tri, const SignedLattice&) {
            TriLattice::Cell cell = tri.at(Site());
            red_purple[k] = double(cell.red + cell.purple);
            blue_purple[k] = double(cell.blue + cell.purple);
        };
        run_conservative(run, law, clock, t, options);
        identity_violations += run.identity_violations;
    });

    // independent monochromatic reference started from zeta_+
    OriginRunSpec spec{&law, cfg.p, radius, InitVariant::monochromatic, {t}, R, cfg.seed, 505, 0,
                       cfg.threads};
    spec.per_rep_budget = per_rep_budget;
    OriginSamples reference = run_origin_probes(spec);

    double factor = std::exp(-lambda * t);
    std::vector<double> lhs = red_purple, ref = reference.origin_counts[0];
    for (double& v : lhs) v *= factor;
    for (double& v : ref) v *= factor;

    EstimateRecord idrec;
    idrec.observable = "conservative_identity_violations";
    idrec.estimate = double(identity_violations.load());
    idrec.replicates = R;
    idrec.seed = cfg.seed;
    idrec.pass = identity_violations.load() == 0;
    idrec.detail = "Z = R - B checked on every touched site of every event";
    result.pass = result.pass && idrec.pass;
    result.records.push_back(std::move(idrec));

    KsResult ks = ks_two_sample(lhs, ref);
    EstimateRecord ksrec;
    ksrec.observable = format_key("conservative_vs_mono_ks_pvalue", cfg.p, t);
    ksrec.estimate = ks.p_value;
    ksrec.replicates = R;
    ksrec.epsilon = epsilon;
    ksrec.seed = cfg.seed;
    ksrec.pass = ks.p_value > 0.01;
    ksrec.detail = "D=" + std::to_string(ks.statistic);
    result.pass = result.pass && ksrec.pass;
    result.records.push_back(std::move(ksrec));

    Summary lhs_summary = summarize(lhs), ref_summary = summarize(ref);
    EstimateRecord mrec;
    mrec.observable = format_key("red_purple_mean", cfg.p, t);
    mrec.estimate = lhs_summary.mean;
    mrec.se = lhs_summary.se;
    mrec.replicates = R;
    mrec.epsilon = epsilon;
    mrec.seed = cfg.seed;
    double comb = std::sqrt(lhs_summary.se * lhs_summary.se + ref_summary.se * ref_summary.se);
    mrec.pass = std::abs(lhs_summary.mean - ref_summary.mean) <= 3.0 * comb;
    mrec.detail = "reference_mean=" + std::to_string(ref_summary.mean);
    result.pass = result.pass && mrec.pass;
    result.records.push_back(std::move(mrec));

    Summary bp = summarize([&] {
        std::vector<double> v = blue_purple;
        for (double& x : v) x *= factor;
        return v;
    }());
    EstimateRecord brec;
    brec.observable = format_key("blue_purple_mean", cfg.p, t);
    brec.estimate = bp.mean;
    brec.se = bp.se;
    brec.replicates = R;
    brec.epsilon = epsilon;
    brec.seed = cfg.seed;
    brec.pass = std::abs(bp.mean - (1.0 - cfg.p)) <= 3.0 * bp.se + epsilon;
    brec.detail = "target=" + std::to_string(1.0 - cfg.p);
    result.pass = result.pass && brec.pass;
    result.records.push_back(std::move(brec));
    return result;
}

// -------------------------------------------------------------------- density

ExperimentResult run_density(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.name = "density";
    const OffspringLaw& law = *cfg.law;
    const int d = law.dimension();
    std::vector<double> ps = cfg.p_values.empty() ? std::vector<double>{cfg.p} : cfg.p_values;
    double t_max = cfg.times.back();

    int guard = trust_radius(law, std::max(t_max, 1e-6), std::max(1e-10, 0.01 * 0.03));
    int radius = cfg.init_radius >= 0 ? cfg.init_radius : cfg.box_n + guard;
    double epsilon = tail_bound(law, guard, t_max);
    uint64_t per_rep_budget = generous_budget(
        predicted_events(law, uint64_t(box_volume(radius, d)), t_max));

    uint64_t sub = 0;
    for (double p : ps) {
        ++sub;
        // cross-replicate origin probabilities
        const size_t nt = cfg.times.size();
        std::vector<std::vector<double>> origin_pos(nt, std::vector<double>(cfg.replicates, 0.0));
        parallel_replicates(cfg.replicates, cfg.threads, [&](uint64_t k) {
            SimClock clock(derive_key(replicate_seed(cfg.seed, k), 606 + sub));
            SignedLattice state = init_bernoulli(d, p, radius, InitVariant::two_type, clock.rng);
            RunOptions options;
            options.max_events = per_rep_budget;
            options.sample_times = cfg.times;
            size_t ti = 0;
            options.on_sample = [&](double, const SignedLattice& s) {
                origin_pos[ti][k] = s.at(Site()) > 0 ? 1.0 : 0.0;
                ++ti;
            };
            run_until(state, law, clock, t_max, options);
        });

        // spatial box averages from independent runs
        std::vector<std::vector<double>> box_avg(nt, std::vector<double>(cfg.box_replicates, 0.0));
        parallel_replicates(cfg.box_replicates, cfg.threads, [&](uint64_t k) {
            SimClock clock(derive_key(replicate_seed(cfg.seed, k), 707 + sub));
            SignedLattice state = init_bernoulli(d, p, radius, InitVariant::two_type, clock.rng);
            RunOptions options;
            options.max_events = per_rep_budget;
            options.sample_times = cfg.times;
            size_t ti = 0;
            options.on_sample = [&](double, const SignedLattice& s) {
                int64_t red_sites = 0;
                for_each_in_box(cfg.box_n, d, [&](const Site& z) {
                    if (s.at(z) > 0) ++red_sites;
                });
                box_avg[ti][k] = double(red_sites) / double(box_volume(cfg.box_n, d));
                ++ti;
            };
            run_until(state, law, clock, t_max, options);
        });

        for (size_t ti = 0; ti < nt; ++ti) {
            Summary prob = summarize(origin_pos[ti]);
            Summary box = summarize(box_avg[ti]);
            double comb = std::sqrt(prob.se * prob.se + box.se * box.se);
            EstimateRecord rec;
            rec.observable = format_key("density_box_avg", p, cfg.times[ti]);
            rec.estimate = box.mean;
            rec.se = box.se;
            rec.replicates = cfg.box_replicates;
            rec.epsilon = epsilon;
            rec.seed = cfg.seed;
            rec.pass = std::abs(box.mean - prob.mean) <= 3.0 * comb + 2.0 * epsilon;
            {
                std::ostringstream os;
                os << "prob_origin_red=" << prob.mean << " se=" << prob.se << " box_n=" << cfg.box_n;
                rec.detail = os.str();
            }
            result.pass = result.pass && rec.pass;
            result.records.push_back(std::move(rec));
        }
    }
    return result;
}

// ------------------------------------------------------------------ dispatch

ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& cfg) {
    if (!cfg.law) throw Error(Error::Code::BadDocument, "experiment config carries no law");
    if (name == "mean-growth") return run_mean_growth(cfg);
    if (name == "variance-scaling") return run_variance_scaling(cfg);
    if (name == "fixation") return run_fixation(cfg);
    if (name == "nonfixation") return run_nonfixation(cfg);
    if (name == "deviation") return run_deviation(cfg);
    if (name == "clt") return run_clt(cfg);
    if (name == "coupling") return run_coupling(cfg);
    if (name == "conservative") return run_conservative_experiment(cfg);
    if (name == "density") return run_density(cfg);
    throw Error(Error::Code::BadDocument, "unknown experiment: " + name);
}

std::vector<std::string> experiment_names() {
    return {"mean-growth", "variance-scaling", "fixation",     "nonfixation", "deviation",
            "clt",         "coupling",         "conservative", "density"};
}

// ------------------------------------------------------------------- simulate

std::string simulate_trajectories(const ExperimentConfig& cfg) {
    const OffspringLaw& law = *cfg.law;
    const int d = law.dimension();
    const double t_max = cfg.times.back();
    int radius = cfg.init_radius >= 0 ? cfg.init_radius : 10;
    InitVariant variant =
        cfg.variant == "monochromatic" ? InitVariant::monochromatic : InitVariant::two_type;
    int window = std::min(cfg.output_radius, radius + int(std::ceil(4 * diffusion_sigma(law, t_max))));

    std::ostringstream os;
    os << "replicate,seed,time,site,value,observable\n";
    os.precision(17);
    for (uint64_t k = 0; k < cfg.replicates; ++k) {
        uint64_t seed_k = replicate_seed(cfg.seed, k);
        SimClock clock(seed_k);
        SignedLattice state = init_bernoulli(d, cfg.p, radius, variant, clock.rng);
        RunOptions options;
        options.max_events = cfg.event_budget;
        options.sample_times = cfg.times;
        options.on_sample = [&](double t, const SignedLattice& s) {
            for_each_in_box(window, d, [&](const Site& z) {
                int64_t v = s.at(z);
                if (v == 0) return;
                os << k << "," << seed_k << "," << t << "," << format_site(z, d) << "," << v
                   << ",count\n";
            });
        };
        run_until(state, law, clock, t_max, options);
    }
    return os.str();
}

// -------------------------------------------------------------- serialization

std::string records_jsonl(const ExperimentResult& result) {
    std::ostringstream os;
    for (const auto& rec : result.records) {
        nlohmann::json j;
        j["observable"] = rec.observable;
        if (std::isnan(rec.estimate))
            j["estimate"] = nullptr;
        else
            j["estimate"] = rec.estimate;
        j["se"] = rec.se;
        j["replicates"] = rec.replicates;
        j["epsilon"] = rec.epsilon;
        j["seed"] = rec.seed;
        j["pass"] = rec.pass;
        if (!rec.detail.empty()) j["detail"] = rec.detail;
        os << j.dump() << "\n";
    }
    return os.str();
}

std::string records_csv(const ExperimentResult& result) {
    std::ostringstream os;
    os << "observable,estimate,se,replicates,epsilon,seed,pass\n";
    os.precision(17);
    for (const auto& rec : result.records) {
        os << rec.observable << "," << rec.estimate << "," << rec.se << "," << rec.replicates
           << "," << rec.epsilon << "," << rec.seed << "," << (rec.pass ? 1 : 0) << "\n";
    }
    return os.str();
}

void atomic_write(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Error::Code::Io, "cannot open for writing: " + tmp);
        out << content;
        if (!out) throw Error(Error::Code::Io, "write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Error::Code::Io, "rename failed: " + path + " (" + ec.message() + ")");
}

// -------------------------------------------------------------------- config

namespace {
std::vector<double> to_doubles(const nlohmann::json& arr) {
    std::vector<double> out;
    for (const auto& v : arr) out.push_back(v.get<double>());
    return out;
}
}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw Error(Error::Code::BadDocument, std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    if (j.contains("name")) cfg.name = j["name"].get<std::string>();
    if (j.contains("law"))
        cfg.law = parse_law_json(j["law"].dump());
    else if (j.contains("law_path")) {
        std::filesystem::path p = j["law_path"].get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        cfg.law = load_law_file(p.string());
    }
    if (j.contains("p")) cfg.p = j["p"].get<double>();
    if (j.contains("p_values")) cfg.p_values = to_doubles(j["p_values"]);
    if (j.contains("times")) cfg.times = to_doubles(j["times"]);
    if (j.contains("replicates")) {
        if (j["replicates"].is_array()) {
            for (const auto& v : j["replicates"])
                cfg.replicates_per_time.push_back(v.get<uint64_t>());
            if (!cfg.replicates_per_time.empty()) cfg.replicates = cfg.replicates_per_time.front();
        } else {
            cfg.replicates = j["replicates"].get<uint64_t>();
        }
    }
    if (j.contains("seed")) {
        cfg.seed = j["seed"].get<uint64_t>();
        cfg.seed_from_config = true;
    }
    if (j.contains("event_budget")) cfg.event_budget = uint64_t(j["event_budget"].get<double>());
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("init_radius")) cfg.init_radius = j["init_radius"].get<int>();
    if (j.contains("window_fraction")) cfg.window_fraction = j["window_fraction"].get<double>();
    if (j.contains("box_n")) cfg.box_n = j["box_n"].get<int>();
    if (j.contains("box_replicates")) cfg.box_replicates = j["box_replicates"].get<uint64_t>();
    if (j.contains("threshold_percentile"))
        cfg.threshold_percentile = j["threshold_percentile"].get<double>();
    if (j.contains("floor_probability"))
        cfg.floor_probability = j["floor_probability"].get<double>();
    if (j.contains("samples")) cfg.samples = j["samples"].get<uint64_t>();
    if (j.contains("pairs")) cfg.pairs = j["pairs"].get<uint64_t>();
    if (j.contains("pair_radius")) cfg.pair_radius = j["pair_radius"].get<int>();
    if (j.contains("sandwich_big_radius"))
        cfg.sandwich_big_radius = j["sandwich_big_radius"].get<int>();
    if (j.contains("sandwich_r_values")) {
        cfg.sandwich_r_values.clear();
        for (const auto& v : j["sandwich_r_values"]) cfg.sandwich_r_values.push_back(v.get<int>());
    }
    if (j.contains("sandwich_seeds")) cfg.sandwich_seeds = j["sandwich_seeds"].get<uint64_t>();
    if (j.contains("output_radius")) cfg.output_radius = j["output_radius"].get<int>();
    if (j.contains("variant")) cfg.variant = j["variant"].get<std::string>();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Error::Code::Io, "cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str(),
                                   std::filesystem::path(path).parent_path().string());
}

}  // namespace abrw
