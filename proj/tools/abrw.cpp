#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "abrw/analytics.hpp"
#include "abrw/harness.hpp"
#include "abrw/label_engine.hpp"
#include "abrw/offspring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : data) h = (h ^ uint64_t(uint8_t(c))) * 0x100000001b3ull;
    return h;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw abrw::Error(abrw::Error::Code::Io, "cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// precedence: --seed flag > ABRW_SEED > config > default
uint64_t effective_seed(bool flag_set, uint64_t flag_value, const abrw::ExperimentConfig& cfg) {
    if (flag_set) return flag_value;
    if (const char* env = std::getenv("ABRW_SEED")) return std::strtoull(env, nullptr, 10);
    if (cfg.seed_from_config) return cfg.seed;
    return abrw::kDefaultSeed;
}

int cmd_law_check(const std::string& path) {
    try {
        abrw::OffspringLaw law = abrw::load_law_file(path);
        std::cout << abrw::law_summary(law);
        return 0;
    } catch (const abrw::Error& e) {
        std::cerr << e.code_name() << ": " << e.what() << "\n";
        return 2;
    }
}

void write_or_print(const std::string& out_path, const std::string& content) {
    if (out_path.empty())
        std::cout << content;
    else
        abrw::atomic_write(out_path, content);
}

int cmd_analytics(const std::string& subtask, const std::string& law_path, double t, int radius,
                  int r, double T, double tol, double p, const std::string& series_path,
                  const std::string& quantity, double tmin, double tmax, int points,
                  const std::string& out_path) {
    if (subtask == "exponent" && !series_path.empty()) {
        // fixture series: CSV with header, columns t,value
        std::vector<std::pair<double, double>> series;
        std::istringstream in(slurp(series_path));
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto comma = line.find(',');
            series.emplace_back(std::stod(line.substr(0, comma)),
                                std::stod(line.substr(comma + 1)));
        }
        abrw::SlopeFit fit = abrw::scaling_exponent(series);
        json out{{"slope", fit.slope}, {"stderr", fit.stderr_slope}, {"points", fit.points}};
        write_or_print(out_path, out.dump(2) + "\n");
        return 0;
    }

    abrw::OffspringLaw law = abrw::load_law_file(law_path);
    if (subtask == "pz") {
        abrw::PzTable table = abrw::pz_table(law, t, radius, tol);
        write_or_print(out_path, abrw::pz_table_csv(table));
        std::cerr << "p_0(" << t << ") = " << table.at(abrw::Site()) << "  grid=" << table.grid_size
                  << "  wrap_error=" << table.wrap_error << "\n";
        return 0;
    }
    if (subtask == "parseval") {
        double v = abrw::parseval_sum(law, t);
        json out{{"t", t}, {"parseval", v}};
        write_or_print(out_path, out.dump(2) + "\n");
        return 0;
    }
    if (subtask == "variance") {
        int rad = radius > 0 ? radius : std::max(8, int(6 * std::sqrt(law.moment_m2() * t)) + 2);
        abrw::PzTable table = abrw::pz_table(law, t, rad, tol);
        double parseval = abrw::parseval_sum(law, t);
        json out;
        out["lambda"] = law.lambda();
        out["C"] = abrw::variance_constant(law, p);
        out["parseval"] = parseval;
        out["sup_pz"] = table.sup();
        out["var_S"] = parseval;
        out["tail_bound"] = r >= 0 ? json(abrw::tail_bound(law, r, T > 0 ? T : t)) : json();
        write_or_print(out_path, out.dump(2) + "\n");
        return 0;
    }
    if (subtask == "tailbound") {
        double v = abrw::tail_bound(law, r, T);
        json out{{"r", r}, {"T", T}, {"tail_bound", v}};
        write_or_print(out_path, out.dump(2) + "\n");
        return 0;
    }
    if (subtask == "exponent") {
        std::vector<std::pair<double, double>> series;
        double ratio = std::pow(tmax / tmin, 1.0 / double(points - 1));
        double tv = tmin;
        for (int i = 0; i < points; ++i, tv *= ratio) {
            double value;
            if (quantity == "parseval") {
                value = abrw::parseval_sum(law, tv);
            } else {  // sup_pz
                int rad = std::max(6, int(2 * std::sqrt(law.moment_m2() * tv)));
                value = abrw::pz_table(law, tv, rad, tol).sup();
            }
            series.emplace_back(tv, value);
        }
        abrw::SlopeFit fit = abrw::scaling_exponent(series);
        json out{{"quantity", quantity},
                 {"slope", fit.slope},
                 {"stderr", fit.stderr_slope},
                 {"points", fit.points}};
        write_or_print(out_path, out.dump(2) + "\n");
        return 0;
    }
    throw abrw::Error(abrw::Error::Code::BadDocument, "unknown analytics subtask: " + subtask);
}

int cmd_simulate(const std::string& config_path, bool seed_set, uint64_t seed_flag,
                 const std::string& out_dir) {
    abrw::ExperimentConfig cfg = abrw::load_experiment_config(config_path);
    cfg.seed = effective_seed(seed_set, seed_flag, cfg);
    std::string csv = abrw::simulate_trajectories(cfg);
    std::cerr << "seed: " << cfg.seed << "\n";
    if (out_dir.empty()) {
        std::cout << csv;
    } else {
        fs::create_directories(out_dir);
        abrw::atomic_write((fs::path(out_dir) / "trajectories.csv").string(), csv);
    }
    return 0;
}

int cmd_couple(const std::string& config_path, bool seed_set, uint64_t seed_flag,
               const std::string& out_dir, const std::string& mode) {
    abrw::ExperimentConfig cfg = abrw::load_experiment_config(config_path);
    cfg.seed = effective_seed(seed_set, seed_flag, cfg);
    const abrw::OffspringLaw& law = *cfg.law;
    double horizon = cfg.times.empty() ? 2.0 : cfg.times.back();
    json report;
    report["mode"] = mode;
    report["seed"] = cfg.seed;

    if (mode == "couple") {
        abrw::ExperimentConfig run_cfg = cfg;
        abrw::ExperimentResult res = abrw::run_coupling(run_cfg);
        report["violations"] = res.records.front().estimate;
        report["pairs"] = cfg.pairs;
        report["pass"] = res.pass;
    } else if (mode == "sandwich") {
        abrw::InitialConfig zeta;
        abrw::CounterRng rng(abrw::derive_key(cfg.seed, 7));
        abrw::for_each_in_box(cfg.sandwich_big_radius, law.dimension(), [&](const abrw::Site& s) {
            zeta[s] = rng.uniform() < 0.5 ? 1 : -1;
        });
        json per_r = json::array();
        for (int r : cfg.sandwich_r_values) {
            uint64_t differ = 0;
            for (uint64_t k = 0; k < cfg.sandwich_seeds; ++k) {
                abrw::SandwichResult sw = abrw::sandwich(law, zeta, r, cfg.sandwich_big_radius,
                                                         horizon, abrw::derive_key(cfg.seed, k));
                if (sw.bounds_differ) ++differ;
            }
            double bound = abrw::tail_bound(law, r, horizon);
            per_r.push_back({{"r", r},
                             {"disagreement_fraction", double(differ) / double(cfg.sandwich_seeds)},
                             {"tail_bound", bound}});
        }
        report["sandwich"] = per_r;
        report["pass"] = true;
    } else if (mode == "stabilization") {
        abrw::InitialConfig zeta;
        abrw::CounterRng rng(abrw::derive_key(cfg.seed, 7));
        abrw::for_each_in_box(cfg.sandwich_big_radius, law.dimension(), [&](const abrw::Site& s) {
            zeta[s] = rng.uniform() < 0.5 ? 1 : -1;
        });
        json radii = json::array();
        for (uint64_t k = 0; k < cfg.sandwich_seeds; ++k) {
            abrw::StabilizationResult st = abrw::stabilization_radius(
                law, zeta, abrw::Site(), horizon, abrw::derive_key(cfg.seed, k),
                cfg.sandwich_big_radius, cfg.sandwich_big_radius);
            radii.push_back(st.found ? json(st.radius) : json());
        }
        report["radii"] = radii;
        report["pass"] = true;
    } else {
        throw abrw::Error(abrw::Error::Code::BadDocument, "unknown couple mode: " + mode);
    }

    std::string text = report.dump(2) + "\n";
    if (out_dir.empty()) {
        std::cout << text;
    } else {
        fs::create_directories(out_dir);
        abrw::atomic_write((fs::path(out_dir) / ("couple_" + mode + ".json")).string(), text);
    }
    return report["pass"].get<bool>() ? 0 : 4;
}

int cmd_experiment(const std::string& name, const std::string& config_path, bool seed_set,
                   uint64_t seed_flag, int threads, const std::string& out_dir) {
    std::string config_text = slurp(config_path);
    abrw::ExperimentConfig cfg =
        abrw::parse_experiment_config(config_text, fs::path(config_path).parent_path().string());
    cfg.seed = effective_seed(seed_set, seed_flag, cfg);
    if (threads > 0) cfg.threads = threads;

    std::cout << "experiment: " << name << "\n";
    std::cout << "config_hash: " << std::hex << fnv1a(config_text) << std::dec << "\n";
    std::cout << "seed: " << cfg.seed << "\n";

    abrw::ExperimentResult result = abrw::run_experiment(name, cfg);
    for (const auto& rec : result.records) {
        std::cout << (rec.pass ? "[PASS] " : "[FAIL] ") << rec.observable
                  << " estimate=" << rec.estimate << " se=" << rec.se << " eps=" << rec.epsilon
                  << (rec.detail.empty() ? "" : "  " + rec.detail) << "\n";
    }
    for (const auto& note : result.notes) std::cout << "note: " << note << "\n";
    std::cout << (result.pass ? "RESULT: PASS" : "RESULT: FAIL") << "\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        abrw::atomic_write((fs::path(out_dir) / (name + ".jsonl")).string(),
                           abrw::records_jsonl(result));
        abrw::atomic_write((fs::path(out_dir) / (name + ".csv")).string(),
                           abrw::records_csv(result));
    }
    return result.pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-type annihilating branching random walks: simulation and analytics"};
    app.require_subcommand(1);

    // law check <file>
    auto* law = app.add_subcommand("law", "offspring law utilities");
    law->require_subcommand(1);
    auto* law_check = law->add_subcommand("check", "validate a law document");
    std::string law_file;
    law_check->add_option("file", law_file, "law JSON document")->required();

    // analytics <subtask>
    auto* analytics = app.add_subcommand("analytics", "closed-form evaluations");
    std::string subtask, a_law, a_series, a_quantity = "sup_pz", a_out;
    double a_t = 1.0, a_T = -1, a_tol = 1e-10, a_p = 0.5, a_tmin = 10, a_tmax = 100;
    int a_radius = 10, a_r = -1, a_points = 5;
    analytics->add_option("subtask", subtask, "pz | parseval | variance | tailbound | exponent")
        ->required();
    analytics->add_option("--law", a_law, "law JSON document");
    analytics->add_option("--t", a_t, "time");
    analytics->add_option("--radius", a_radius, "table radius");
    analytics->add_option("--r", a_r, "tail bound radius");
    analytics->add_option("--T", a_T, "tail bound horizon");
    analytics->add_option("--tol", a_tol, "grid-doubling tolerance");
    analytics->add_option("--p", a_p, "initial density (variance constant)");
    analytics->add_option("--series", a_series, "CSV fixture (t,value) for exponent");
    analytics->add_option("--quantity", a_quantity, "exponent quantity: sup_pz | parseval");
    analytics->add_option("--tmin", a_tmin, "exponent grid start");
    analytics->add_option("--tmax", a_tmax, "exponent grid end");
    analytics->add_option("--points", a_points, "exponent grid points");
    analytics->add_option("--out", a_out, "output file (default stdout)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "trajectory probes to CSV");
    std::string s_config, s_out;
    uint64_t s_seed = 0;
    bool s_seed_set = false;
    simulate->add_option("--config", s_config, "experiment config JSON")->required();
    simulate->add_option("--seed", s_seed, "seed override")->each([&](const std::string&) {
        s_seed_set = true;
    });
    simulate->add_option("--out", s_out, "output directory");

    // couple
    auto* couple = app.add_subcommand("couple", "labelled coupling runs");
    std::string c_config, c_out, c_mode = "couple";
    uint64_t c_seed = 0;
    bool c_seed_set = false;
    couple->add_option("--config", c_config, "config JSON")->required();
    couple->add_option("--seed", c_seed, "seed override")->each([&](const std::string&) {
        c_seed_set = true;
    });
    couple->add_option("--mode", c_mode, "couple | sandwich | stabilization");
    couple->add_option("--out", c_out, "output directory");

    // experiment
    auto* experiment = app.add_subcommand("experiment", "statistical acceptance experiments");
    std::string e_name, e_config, e_out;
    uint64_t e_seed = 0;
    bool e_seed_set = false;
    int e_threads = 0;
    experiment->add_option("name", e_name, "one of the named experiments")->required();
    experiment->add_option("--config", e_config, "experiment config JSON")->required();
    experiment->add_option("--seed", e_seed, "seed override")->each([&](const std::string&) {
        e_seed_set = true;
    });
    experiment->add_option("--threads", e_threads, "worker cap");
    experiment->add_option("--out", e_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (law_check->parsed()) return cmd_law_check(law_file);
        if (analytics->parsed())
            return cmd_analytics(subtask, a_law, a_t, a_radius, a_r, a_T, a_tol, a_p, a_series,
                                 a_quantity, a_tmin, a_tmax, a_points, a_out);
        if (simulate->parsed()) return cmd_simulate(s_config, s_seed_set, s_seed, s_out);
        if (couple->parsed()) return cmd_couple(c_config, c_seed_set, c_seed, c_out, c_mode);
        if (experiment->parsed())
            return cmd_experiment(e_name, e_config, e_seed_set, e_seed, e_threads, e_out);
    } catch (const abrw::Error& e) {
        std::cerr << e.code_name() << ": " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
