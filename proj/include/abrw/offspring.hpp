#pragma once

#include <complex>
#include <string>
#include <vector>

#include "abrw/geometry.hpp"
#include "abrw/rng.hpp"

namespace abrw {

// One ball placement inside an offspring configuration.
struct Placement {
    Site offset;
    int64_t count = 0;  // >= 1
};

struct WeightedSite {
    Site offset;
    double weight = 0;
};

// A finite non-negative configuration phi: distinct offsets, positive counts.
// The empty configuration is legal only for death-mode laws.
struct Configuration {
    std::vector<Placement> balls;

    int64_t total() const {
        int64_t n = 0;
        for (const auto& b : balls) n += b.count;
        return n;
    }
};

enum class LawMode { stay, death };

// The offspring law Phi: a finite list of (probability, configuration) atoms
// plus its dimension and reproduction mode. Immutable after construction;
// derived quantities (lambda, cumulative sampling cells, support) are
// precomputed. In death mode the parent is removed on reproduction and the
// malthusian rate is E||phi|| - 1; every spectral quantity below applies the
// matching substitution (phi' = phi - delta_0, mu' = mu - delta_0) so that
// callers never branch on mode.
class OffspringLaw {
public:
    struct Atom {
        double probability = 0;
        Configuration config;
    };

    OffspringLaw(int dimension, std::vector<Atom> atoms, LawMode mode);

    int dimension() const { return dim_; }
    LawMode mode() const { return mode_; }
    bool is_death() const { return mode_ == LawMode::death; }
    const std::vector<Atom>& atoms() const { return atoms_; }

    // malthusian rate: E||phi|| in stay mode, E||phi|| - 1 in death mode
    double lambda() const { return lambda_; }

    // raw moments of the atom list
    double mean_total() const { return mean_total_; }        // E||phi||
    double moment_total(int r) const;                        // E||phi||^r, r in {1,2,3}
    double moment_m1_sq() const;                             // E[m1(phi)^2], m1 = sum |z|_2 phi(z)
    double moment_m2() const;                                // E[m2(phi)],  m2 = sum |z|_2^2 phi(z)

    // mode-consistent second moment E[phi_hat(0)^2]; equals E||phi||^2 in
    // stay mode and E[(||phi||-1)^2] in death mode
    double second_moment_at_zero() const;

    // sparse mean measure mu (raw, without the death-mode delta subtraction)
    const std::vector<WeightedSite>& mean_measure() const { return mu_; }
    double mean_measure_total() const { return mean_total_; }

    // Fourier transform of the (mode-substituted) mean measure;
    // mu_hat(0) == lambda in both modes
    std::complex<double> mu_hat(const std::array<double, kMaxDim>& u) const;
    std::complex<double> mu_hat1(double u) const;  // d=1 convenience

    // spectral gap g(u) = lambda - Re mu_hat(u); identical for both modes
    double gap(const std::array<double, kMaxDim>& u) const;

    // E[phi_hat(u) phi_hat(v)] with the mode substitution; v = -u gives
    // E|phi_hat(u)|^2 (non-negative real)
    std::complex<double> phi_hat_product_mean(const std::array<double, kMaxDim>& u,
                                              const std::array<double, kMaxDim>& v) const;

    // true iff the support offsets generate Z^d as a group
    bool irreducible() const { return irreducible_; }

    // union of support offsets over all atoms
    const std::vector<Site>& support() const { return support_; }

    // Sample one configuration. Exactly one uniform is consumed per draw,
    // cells are the cumulative probabilities in document order.
    const Configuration& sample(CounterRng& rng) const { return pick(rng.uniform()); }
    const Configuration& pick(double u) const;
    size_t pick_index(double u) const;

private:
    int dim_;
    LawMode mode_;
    std::vector<Atom> atoms_;
    std::vector<double> cumulative_;
    std::vector<WeightedSite> mu_;
    std::vector<Site> support_;
    double lambda_ = 0;
    double mean_total_ = 0;
    bool irreducible_ = false;
};

// Scan g(u) = lambda - Re mu_hat(u) over the uniform M^d torus grid.
struct GapScan {
    double min_gap_nonzero;    // min over grid points u != 0
    double quad_coefficient;   // min of g(u)/|u|^2 over grid points with 0 < |u|_2 <= 1
};
GapScan spectral_gap_scan(const OffspringLaw& law, int grid_size);

// Decide whether integer vectors generate Z^d (Hermite-style column reduction).
bool lattice_generates_zd(const std::vector<Site>& vectors, int dim);

// JSON document parsing; see the schema in the README. Throws abrw::Error.
OffspringLaw parse_law_json(const std::string& text);
OffspringLaw load_law_file(const std::string& path);
std::string law_summary(const OffspringLaw& law);

}  // namespace abrw
