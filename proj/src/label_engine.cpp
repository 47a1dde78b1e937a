#include "abrw/label_engine.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "abrw/errors.hpp"

namespace abrw {

namespace {

constexpr int kMaxProcesses = 3;

struct LabelRecord {
    Site site;                 // position (shared across processes)
    LabelId parent = kNoLabel;
    Site origin;               // root site of the genealogy
    std::vector<int32_t> key;  // [origin coords..., i1, ..., im] for lexicographic order
    uint64_t stream = 0;
    uint64_t ticks_used = 0;   // last consumed tick index
    double next_time = 0;      // absolute time of tick ticks_used + 1
    uint64_t children = 0;
    std::array<int8_t, kMaxProcesses> colour{0, 0, 0};  // 0 absent, +1 red, -1 blue

    bool alive_anywhere(int k) const {
        for (int p = 0; p < k; ++p)
            if (colour[size_t(p)] != 0) return true;
        return false;
    }
};

class LabelPool {
public:
    explicit LabelPool(int dim) : dim_(dim) {}

    LabelId make_root(const Site& z, uint64_t seed) {
        LabelRecord rec;
        rec.site = z;
        rec.origin = z;
        rec.key.reserve(size_t(dim_));
        for (int i = 0; i < dim_; ++i) rec.key.push_back(z[i]);
        uint64_t h = rngdetail::mix(seed ^ 0xA5A5A5A55A5A5A5Aull);
        for (int i = 0; i < dim_; ++i) h = hash_combine(h, uint64_t(int64_t(z[i])));
        rec.stream = h;
        records_.push_back(std::move(rec));
        return LabelId(records_.size() - 1);
    }

    LabelId make_child(LabelId parent, uint32_t child_index, const Site& site) {
        LabelRecord rec;
        const LabelRecord& pr = records_[parent];
        rec.site = site;
        rec.parent = parent;
        rec.origin = pr.origin;
        rec.key = pr.key;
        rec.key.push_back(int32_t(child_index));
        rec.stream = hash_combine(pr.stream, child_index);
        records_.push_back(std::move(rec));
        return LabelId(records_.size() - 1);
    }

    LabelRecord& operator[](LabelId id) { return records_[id]; }
    const LabelRecord& operator[](LabelId id) const { return records_[id]; }

    bool less(LabelId a, LabelId b) const { return records_[a].key < records_[b].key; }

    int dim() const { return dim_; }
    size_t size() const { return records_.size(); }

private:
    int dim_;
    std::vector<LabelRecord> records_;
};

struct LabelLess {
    const LabelPool* pool;
    bool operator()(LabelId a, LabelId b) const { return pool->less(a, b); }
};

using LabelSet = std::set<LabelId, LabelLess>;

struct SiteBalls {
    LabelSet red, blue;
    explicit SiteBalls(const LabelPool* pool) : red(LabelLess{pool}), blue(LabelLess{pool}) {}
    LabelSet& of(int colour) { return colour > 0 ? red : blue; }
};

struct ProcessState {
    std::unordered_map<uint64_t, SiteBalls, SiteHash> sites;
    int64_t total = 0;

    SiteBalls& cell(uint64_t key, const LabelPool* pool) {
        auto it = sites.find(key);
        if (it == sites.end()) it = sites.emplace(key, SiteBalls(pool)).first;
        return it->second;
    }
};

// ticks are partial sums of unit exponentials; counters 2k / 2k+1 per tick
double tick_spacing(const LabelRecord& rec, uint64_t tick) {
    return -std::log(counter_uniform(rec.stream, 2 * tick));
}
double draw_uniform(const LabelRecord& rec, uint64_t tick) {
    return counter_uniform(rec.stream, 2 * tick + 1);
}

// advance the clock cursor so next_time is the first tick strictly after t
void catch_up(LabelRecord& rec, double t) {
    if (rec.ticks_used == 0 && rec.next_time == 0) rec.next_time = tick_spacing(rec, 1);
    while (rec.next_time <= t) {
        ++rec.ticks_used;
        rec.next_time += tick_spacing(rec, rec.ticks_used + 1);
    }
}

struct QueueEntry {
    double time;
    LabelId id;
};

// min-heap on time; float-coincident times break by lexicographic label order
struct QueueLater {
    const LabelPool* pool;
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
        if (a.time != b.time) return a.time > b.time;
        return pool->less(b.id, a.id);
    }
};

nlohmann::json label_json(const LabelPool& pool, LabelId id) {
    const LabelRecord& rec = pool[id];
    nlohmann::json arr = nlohmann::json::array();
    nlohmann::json origin = nlohmann::json::array();
    for (int i = 0; i < pool.dim(); ++i) origin.push_back(rec.origin[i]);
    arr.push_back(origin);
    for (size_t i = size_t(pool.dim()); i < rec.key.size(); ++i) arr.push_back(rec.key[i]);
    return arr;
}

class CoupledLabelled {
public:
    CoupledLabelled(const OffspringLaw& law, const std::vector<InitialConfig>& initials,
                    uint64_t seed, const LabelledOptions& options)
        : law_(law),
          options_(options),
          pool_(law.dimension()),
          k_(int(initials.size())),
          queue_(QueueLater{&pool_}) {
        if (k_ < 1 || k_ > kMaxProcesses)
            throw Error(Error::Code::BadDocument, "1..3 coupled processes supported");
        for (int p = 0; p < k_; ++p) procs_.push_back(ProcessState{});

        // union of initial sites; one label per site, colour per process
        std::map<Site, std::array<int, kMaxProcesses>> merged;
        for (int p = 0; p < k_; ++p) {
            for (const auto& [site, v] : initials[size_t(p)]) {
                if (v < -1 || v > 1)
                    throw Error(Error::Code::BadDocument,
                                "initial configurations must take values in {-1,0,1}");
                if (v != 0) merged[site][size_t(p)] = v;
            }
        }
        for (const auto& [site, colours] : merged) {
            LabelId id = pool_.make_root(site, seed);
            bool any = false;
            for (int p = 0; p < k_; ++p) {
                if (colours[size_t(p)] == 0) continue;
                insert_ball(p, id, int(colours[size_t(p)]));
                any = true;
            }
            if (any) schedule(id, 0.0);
        }
    }

    LabelledResult run(double horizon) {
        if (options_.watch_site) watch(0.0);  // initial values are part of the trajectory
        while (!queue_.empty() && !stop_) {
            QueueEntry top = queue_.top();
            if (top.time >= horizon) break;
            queue_.pop();
            LabelRecord& rec = pool_[top.id];
            if (!rec.alive_anywhere(k_)) continue;  // lazily dropped
            if (result_.nucleations >= options_.max_events)
                throw Error(Error::Code::Budget, "label engine nucleation budget exceeded");
            fire(top.id, top.time);
            if (stop_) break;
        }
        for (int p = 0; p < k_; ++p) {
            std::map<Site, int64_t> counts;
            for (const auto& [key, cell] : procs_[size_t(p)].sites) {
                int64_t z = int64_t(cell.red.size()) - int64_t(cell.blue.size());
                if (z != 0) counts[site_of(key, cell)] = z;
            }
            result_.final_counts.push_back(std::move(counts));
        }
        if (options_.keep_log) {
            uint64_t h = 0xcbf29ce484222325ull;
            for (const auto& line : result_.log_lines)
                for (char c : line) h = (h ^ uint64_t(uint8_t(c))) * 0x100000001b3ull;
            result_.log_hash = h;
        }
        return std::move(result_);
    }

private:
    Site site_of(uint64_t key, const SiteBalls& cell) const {
        // any member has the site cached; cells are created non-empty
        if (!cell.red.empty()) return pool_[*cell.red.begin()].site;
        if (!cell.blue.empty()) return pool_[*cell.blue.begin()].site;
        // emptied cell: reconstruct from the packed key
        Site s;
        for (int i = 0; i < pool_.dim(); ++i)
            s[i] = int32_t(int64_t((key >> (16 * i)) & 0xFFFF) - 32768);
        return s;
    }

    void insert_ball(int p, LabelId id, int colour) {
        LabelRecord& rec = pool_[id];
        rec.colour[size_t(p)] = int8_t(colour);
        auto& cell = procs_[size_t(p)].cell(pack_site(rec.site, pool_.dim()), &pool_);
        cell.of(colour).insert(id);
        procs_[size_t(p)].total += 1;
    }

    void remove_ball(int p, LabelId id) {
        LabelRecord& rec = pool_[id];
        int colour = rec.colour[size_t(p)];
        auto& cell = procs_[size_t(p)].cell(pack_site(rec.site, pool_.dim()), &pool_);
        cell.of(colour).erase(id);
        rec.colour[size_t(p)] = 0;
        procs_[size_t(p)].total -= 1;
    }

    void schedule(LabelId id, double born_at) {
        LabelRecord& rec = pool_[id];
        catch_up(rec, born_at);
        queue_.push({rec.next_time, id});
    }

    int64_t signed_count_at(int p, uint64_t key) {
        auto it = procs_[size_t(p)].sites.find(key);
        if (it == procs_[size_t(p)].sites.end()) return 0;
        return int64_t(it->second.red.size()) - int64_t(it->second.blue.size());
    }

    void check_site(double t, const Site& site) {
        uint64_t key = pack_site(site, pool_.dim());
        for (auto [a, b] : options_.containment_pairs) {
            auto ia = procs_[size_t(a)].sites.find(key);
            auto ib = procs_[size_t(b)].sites.find(key);
            const LabelSet* ra = ia == procs_[size_t(a)].sites.end() ? nullptr : &ia->second.red;
            const LabelSet* rb = ib == procs_[size_t(b)].sites.end() ? nullptr : &ib->second.red;
            const LabelSet* ba = ia == procs_[size_t(a)].sites.end() ? nullptr : &ia->second.blue;
            const LabelSet* bb = ib == procs_[size_t(b)].sites.end() ? nullptr : &ib->second.blue;
            // red of a inside red of b
            if (ra)
                for (LabelId id : *ra)
                    if (!rb || !rb->count(id)) {
                        result_.violations.push_back({t, site, "red containment failed"});
                        break;
                    }
            // blue of b inside blue of a
            if (bb)
                for (LabelId id : *bb)
                    if (!ba || !ba->count(id)) {
                        result_.violations.push_back({t, site, "blue containment failed"});
                        break;
                    }
        }
        if (options_.check_value_order) {
            for (int p = 0; p + 1 < k_; ++p) {
                if (signed_count_at(p, key) > signed_count_at(p + 1, key)) {
                    result_.violations.push_back({t, site, "value ordering failed"});
                    break;
                }
            }
        }
    }

    void watch(double t) {
        if (!options_.watch_site) return;
        WatchPoint wp;
        wp.time = t;
        uint64_t key = pack_site(*options_.watch_site, pool_.dim());
        for (int p = 0; p < k_; ++p) wp.values.push_back(signed_count_at(p, key));
        bool disagree = false;
        for (size_t i = 1; i < wp.values.size(); ++i)
            if (wp.values[i] != wp.values[0]) disagree = true;
        result_.watch_trace.push_back(std::move(wp));
        if (disagree && !result_.watch_disagreed) {
            result_.watch_disagreed = true;
            result_.watch_disagreement_time = t;
            if (options_.stop_on_watch_disagreement) stop_ = true;
        }
    }

    void fire(LabelId id, double t) {
        LabelRecord& rec = pool_[id];
        uint64_t tick = rec.ticks_used + 1;
        size_t atom = law_.pick_index(draw_uniform(rec, tick));
        const Configuration& cfg = law_.atoms()[atom].config;
        const int d = pool_.dim();

        // placements in lexicographic offset order, balls numbered within
        std::vector<Placement> placements(cfg.balls.begin(), cfg.balls.end());
        std::sort(placements.begin(), placements.end(),
                  [](const Placement& a, const Placement& b) { return a.offset < b.offset; });

        // child labels are global entities, allocated once per ring
        std::vector<LabelId> children;
        Site parent_site = rec.site;
        for (const auto& pl : placements) {
            Site target = add(parent_site, pl.offset, d);
            for (int64_t i = 0; i < pl.count; ++i) {
                uint32_t index = uint32_t(pool_[id].children + uint64_t(children.size()) + 1);
                children.push_back(pool_.make_child(id, index, target));
            }
        }

        std::array<int8_t, kMaxProcesses> parent_colour{0, 0, 0};
        for (int p = 0; p < k_; ++p) parent_colour[size_t(p)] = pool_[id].colour[size_t(p)];

        nlohmann::json annihilated = nlohmann::json::array();
        bool logging = options_.keep_log && parent_colour[0] != 0;

        for (int p = 0; p < k_; ++p) {
            int c = parent_colour[size_t(p)];
            if (c == 0) continue;
            if (law_.is_death()) remove_ball(p, id);
            for (LabelId child : children) {
                const Site& target = pool_[child].site;
                auto& cell = procs_[size_t(p)].cell(pack_site(target, d), &pool_);
                LabelSet& opposite = cell.of(-c);
                if (!opposite.empty()) {
                    LabelId victim = *opposite.begin();  // lexicographic minimum
                    remove_ball(p, victim);
                    if (logging && p == 0) annihilated.push_back(label_json(pool_, victim));
                } else {
                    insert_ball(p, child, c);
                }
            }
        }

        // consume the tick and reschedule the survivors
        LabelRecord& recAfter = pool_[id];
        recAfter.children += children.size();
        recAfter.ticks_used = tick;
        recAfter.next_time += tick_spacing(recAfter, tick + 1);
        if (recAfter.alive_anywhere(k_)) queue_.push({recAfter.next_time, id});
        for (LabelId child : children)
            if (pool_[child].alive_anywhere(k_)) schedule(child, t);

        ++result_.nucleations;

        if (logging) {
            nlohmann::json line;
            line["t"] = t;
            line["label"] = label_json(pool_, id);
            line["colour"] = parent_colour[0] > 0 ? "R" : "B";
            line["draw"] = atom;
            nlohmann::json pls = nlohmann::json::array();
            for (const auto& pl : placements) {
                Site target = add(parent_site, pl.offset, d);
                nlohmann::json site = nlohmann::json::array();
                for (int i = 0; i < d; ++i) site.push_back(target[i]);
                pls.push_back(nlohmann::json::array({site, pl.count}));
            }
            line["placements"] = pls;
            line["annihilated"] = annihilated;
            result_.log_lines.push_back(line.dump());
        }

        // checks on touched sites
        bool watch_touched = false;
        auto touched = [&](const Site& s) {
            check_site(t, s);
            if (options_.watch_site && s == *options_.watch_site) watch_touched = true;
        };
        if (law_.is_death()) touched(parent_site);
        Site last{};
        bool have_last = false;
        for (const auto& pl : placements) {
            Site target = add(parent_site, pl.offset, d);
            if (have_last && target == last) continue;
            touched(target);
            last = target;
            have_last = true;
        }
        if (watch_touched) watch(t);
    }

    const OffspringLaw& law_;
    LabelledOptions options_;
    LabelPool pool_;
    int k_;
    std::vector<ProcessState> procs_;
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueLater> queue_;
    LabelledResult result_;
    bool stop_ = false;
};

}  // namespace

LabelledResult run_coupled(const OffspringLaw& law, const std::vector<InitialConfig>& initials,
                           double horizon, uint64_t seed, const LabelledOptions& options) {
    CoupledLabelled system(law, initials, seed, options);
    return system.run(horizon);
}

LabelledResult run_labelled(const OffspringLaw& law, const InitialConfig& initial, double horizon,
                            uint64_t seed, const LabelledOptions& options) {
    LabelledOptions opts = options;
    opts.keep_log = true;
    return run_coupled(law, {initial}, horizon, seed, opts);
}

LabelledResult couple(const OffspringLaw& law, const InitialConfig& zeta,
                      const InitialConfig& zeta_prime, double horizon, uint64_t seed,
                      const LabelledOptions& options) {
    // pointwise order over the union of supports
    auto value = [](const InitialConfig& cfg, const Site& s) {
        auto it = cfg.find(s);
        return it == cfg.end() ? 0 : it->second;
    };
    for (const auto& [site, v] : zeta)
        if (v > value(zeta_prime, site))
            throw Error(Error::Code::PrecondOrder, "zeta exceeds zeta_prime at a site");
    for (const auto& [site, v] : zeta_prime)
        if (value(zeta, site) > v)
            throw Error(Error::Code::PrecondOrder, "zeta exceeds zeta_prime at a site");

    LabelledOptions opts = options;
    opts.containment_pairs = {{0, 1}};
    return run_coupled(law, {zeta, zeta_prime}, horizon, seed, opts);
}

SandwichConfigs sandwich_configs(const InitialConfig& zeta, int r, int big_radius, int dim) {
    SandwichConfigs out;
    for_each_in_box(big_radius, dim, [&](const Site& s) {
        auto it = zeta.find(s);
        int v = it == zeta.end() ? 0 : it->second;
        if (linf_norm(s, dim) <= r) {
            if (v != 0) {
                out.minus[s] = v;
                out.restricted[s] = v;
                out.plus[s] = v;
            }
        } else {
            out.minus[s] = -1;
            out.plus[s] = 1;
        }
    });
    return out;
}

SandwichResult sandwich(const OffspringLaw& law, const InitialConfig& zeta, int r, int big_radius,
                        double horizon, uint64_t seed, const LabelledOptions& options) {
    SandwichConfigs configs = sandwich_configs(zeta, r, big_radius, law.dimension());
    LabelledOptions opts = options;
    opts.check_value_order = true;
    opts.watch_site = Site();
    LabelledResult run = run_coupled(law, {configs.minus, configs.restricted, configs.plus},
                                     horizon, seed, opts);
    if (!run.violations.empty())
        throw Error(Error::Code::OrderViolation, "sandwich ordering violated at t=" +
                                                     std::to_string(run.violations.front().time));
    SandwichResult out;
    out.nucleations = run.nucleations;
    out.origin_trace = std::move(run.watch_trace);
    for (const auto& wp : out.origin_trace) {
        if (wp.values.front() != wp.values.back()) {
            out.bounds_differ = true;
            out.first_difference_time = wp.time;
            break;
        }
    }
    return out;
}

StabilizationResult stabilization_radius(const OffspringLaw& law, const InitialConfig& zeta,
                                         const Site& z, double horizon, uint64_t seed, int r_max,
                                         int big_radius, const LabelledOptions& options) {
    for (int r = 0; r <= r_max; ++r) {
        SandwichConfigs configs = sandwich_configs(zeta, r, big_radius, law.dimension());
        LabelledOptions opts = options;
        opts.watch_site = z;
        opts.stop_on_watch_disagreement = true;
        LabelledResult run =
            run_coupled(law, {configs.minus, configs.plus}, horizon, seed, opts);
        if (!run.watch_disagreed) return {true, r};
    }
    return {false, -1};
}

}  // namespace abrw
