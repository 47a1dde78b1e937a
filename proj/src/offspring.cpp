#include "abrw/offspring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace abrw {

namespace {
constexpr double kProbTol = 1e-12;

inline double dot(const std::array<double, kMaxDim>& u, const Site& z, int dim) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += u[size_t(i)] * z[i];
    return s;
}
}  // namespace

OffspringLaw::OffspringLaw(int dimension, std::vector<Atom> atoms, LawMode mode)
    : dim_(dimension), mode_(mode), atoms_(std::move(atoms)) {
    if (dim_ < 1 || dim_ > kMaxDim)
        throw Error(Error::Code::BadDocument, "dimension must be in [1," + std::to_string(kMaxDim) + "]");
    if (atoms_.empty()) throw Error(Error::Code::BadDocument, "law has no atoms");

    double wsum = 0;
    std::map<Site, double> mu_map;
    for (const auto& a : atoms_) {
        if (!(a.probability > 0) || a.probability > 1.0 + kProbTol)
            throw Error(Error::Code::NonProbability, "atom probability outside (0,1]");
        wsum += a.probability;
        std::vector<Site> seen;
        for (const auto& b : a.config.balls) {
            if (b.count < 1) throw Error(Error::Code::BadDocument, "ball count must be >= 1");
            for (const auto& s : seen)
                if (s == b.offset)
                    throw Error(Error::Code::BadDocument, "duplicate offset within one atom");
            seen.push_back(b.offset);
            mu_map[b.offset] += a.probability * double(b.count);
        }
        if (a.config.balls.empty() && mode_ != LawMode::death)
            throw Error(Error::Code::BadDocument, "empty configuration only allowed in death mode");
    }
    if (std::abs(wsum - 1.0) > kProbTol)
        throw Error(Error::Code::NonProbability,
                    "atom probabilities sum to " + std::to_string(wsum) + ", not 1");

    // renormalize the sub-tolerance residue and build cumulative cells in
    // document order
    cumulative_.reserve(atoms_.size());
    double acc = 0;
    for (auto& a : atoms_) {
        a.probability /= wsum;
        acc += a.probability;
        cumulative_.push_back(acc);
    }
    cumulative_.back() = 1.0;

    mean_total_ = 0;
    for (const auto& a : atoms_) mean_total_ += a.probability * double(a.config.total());

    if (mode_ == LawMode::stay) {
        if (!(mean_total_ > 0))
            throw Error(Error::Code::BadMode, "stay mode requires E||phi|| > 0");
        lambda_ = mean_total_;
    } else {
        if (!(mean_total_ > 1.0))
            throw Error(Error::Code::BadMode, "death mode requires E||phi|| > 1");
        lambda_ = mean_total_ - 1.0;
    }

    mu_.reserve(mu_map.size());
    support_.reserve(mu_map.size());
    for (const auto& [site, m] : mu_map) {
        mu_.push_back({site, m});
        support_.push_back(site);
    }

    irreducible_ = lattice_generates_zd(support_, dim_);
}

double OffspringLaw::moment_total(int r) const {
    if (r < 1 || r > 3) throw Error(Error::Code::BadDocument, "moment order must be 1..3");
    double s = 0;
    for (const auto& a : atoms_) s += a.probability * std::pow(double(a.config.total()), r);
    return s;
}

double OffspringLaw::moment_m1_sq() const {
    double s = 0;
    for (const auto& a : atoms_) {
        double m1 = 0;
        for (const auto& b : a.config.balls) m1 += double(b.count) * l2_norm(b.offset, dim_);
        s += a.probability * m1 * m1;
    }
    return s;
}

double OffspringLaw::moment_m2() const {
    double s = 0;
    for (const auto& a : atoms_) {
        double m2 = 0;
        for (const auto& b : a.config.balls) {
            double n = l2_norm(b.offset, dim_);
            m2 += double(b.count) * n * n;
        }
        s += a.probability * m2;
    }
    return s;
}

double OffspringLaw::second_moment_at_zero() const {
    double shift = is_death() ? 1.0 : 0.0;
    double s = 0;
    for (const auto& a : atoms_) {
        double v = double(a.config.total()) - shift;
        s += a.probability * v * v;
    }
    return s;
}

std::complex<double> OffspringLaw::mu_hat(const std::array<double, kMaxDim>& u) const {
    std::complex<double> s{0, 0};
    for (const auto& w : mu_) {
        double ph = dot(u, w.offset, dim_);
        s += w.weight * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    if (is_death()) s -= 1.0;
    return s;
}

std::complex<double> OffspringLaw::mu_hat1(double u) const {
    return mu_hat({u, 0, 0, 0});
}

double OffspringLaw::gap(const std::array<double, kMaxDim>& u) const {
    return lambda_ - mu_hat(u).real();
}

std::complex<double> OffspringLaw::phi_hat_product_mean(
    const std::array<double, kMaxDim>& u, const std::array<double, kMaxDim>& v) const {
    std::complex<double> shift = is_death() ? std::complex<double>{1, 0} : std::complex<double>{0, 0};
    std::complex<double> s{0, 0};
    for (const auto& a : atoms_) {
        std::complex<double> fu{0, 0}, fv{0, 0};
        for (const auto& b : a.config.balls) {
            double pu = dot(u, b.offset, dim_);
            double pv = dot(v, b.offset, dim_);
            fu += double(b.count) * std::complex<double>(std::cos(pu), std::sin(pu));
            fv += double(b.count) * std::complex<double>(std::cos(pv), std::sin(pv));
        }
        s += a.probability * (fu - shift) * (fv - shift);
    }
    return s;
}

const Configuration& OffspringLaw::pick(double u) const { return atoms_[pick_index(u)].config; }

size_t OffspringLaw::pick_index(double u) const {
    // cumulative cells in document order; u in (0,1)
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return size_t(it - cumulative_.begin());
}

GapScan spectral_gap_scan(const OffspringLaw& law, int grid_size) {
    if (grid_size < 8) throw Error(Error::Code::BadDocument, "grid size must be >= 8");
    const int d = law.dimension();
    const int M = grid_size;
    GapScan out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};

    std::array<int, kMaxDim> idx{};
    std::array<double, kMaxDim> u{};
    const double step = 2.0 * M_PI / M;
    int64_t total = 1;
    for (int i = 0; i < d; ++i) total *= M;
    for (int64_t flat = 0; flat < total; ++flat) {
        int64_t rest = flat;
        bool zero = true;
        double norm_sq = 0;
        for (int i = 0; i < d; ++i) {
            idx[size_t(i)] = int(rest % M);
            rest /= M;
            int k = idx[size_t(i)];
            if (k > M / 2) k -= M;  // map to (-pi, pi]
            u[size_t(i)] = step * k;
            if (k != 0) zero = false;
            norm_sq += u[size_t(i)] * u[size_t(i)];
        }
        if (zero) continue;
        double g = law.gap(u);
        if (g <= 0)
            throw Error(Error::Code::GapNonPositive,
                        "non-positive spectral gap at a nonzero grid point");
        out.min_gap_nonzero = std::min(out.min_gap_nonzero, g);
        if (norm_sq <= 1.0) out.quad_coefficient = std::min(out.quad_coefficient, g / norm_sq);
    }
    return out;
}

bool lattice_generates_zd(const std::vector<Site>& vectors, int dim) {
    if (vectors.empty()) return false;
    // column vectors of the d x n matrix; integer column reduction to a
    // lower-triangular Hermite form, then the lattice is Z^d iff every
    // diagonal entry has absolute value 1
    std::vector<std::array<int64_t, kMaxDim>> cols;
    for (const auto& v : vectors) {
        std::array<int64_t, kMaxDim> c{};
        for (int i = 0; i < dim; ++i) c[size_t(i)] = v[i];
        cols.push_back(c);
    }
    for (int row = 0; row < dim; ++row) {
        // gcd-eliminate row entries across columns >= row
        while (true) {
            int pivot = -1;
            for (size_t j = size_t(row); j < cols.size(); ++j)
                if (cols[j][size_t(row)] != 0 &&
                    (pivot < 0 ||
                     std::abs(cols[j][size_t(row)]) < std::abs(cols[size_t(pivot)][size_t(row)])))
                    pivot = int(j);
            if (pivot < 0) return false;  // rank-deficient
            std::swap(cols[size_t(row)], cols[size_t(pivot)]);
            bool reduced = true;
            int64_t p = cols[size_t(row)][size_t(row)];
            for (size_t j = size_t(row) + 1; j < cols.size(); ++j) {
                int64_t v = cols[j][size_t(row)];
                if (v == 0) continue;
                int64_t q = v / p;
                for (int i = 0; i < dim; ++i) cols[j][size_t(i)] -= q * cols[size_t(row)][size_t(i)];
                if (cols[j][size_t(row)] != 0) reduced = false;
            }
            if (reduced) break;
        }
    }
    // lower-triangular now; the index of the generated lattice is |prod of
    // diagonal entries|
    int64_t det = 1;
    for (int i = 0; i < dim; ++i) det *= cols[size_t(i)][size_t(i)];
    return std::abs(det) == 1;
}

namespace {
Site parse_offset(const nlohmann::json& arr, int dim) {
    if (!arr.is_array() || int(arr.size()) != dim)
        throw Error(Error::Code::BadDocument, "offset must be an array of length d");
    Site s;
    for (int i = 0; i < dim; ++i) {
        if (!arr[size_t(i)].is_number_integer())
            throw Error(Error::Code::BadDocument, "offset entries must be integers");
        int64_t v = arr[size_t(i)].get<int64_t>();
        if (v < -kMaxCoord || v > kMaxCoord)
            throw Error(Error::Code::BadDocument, "offset coordinate out of range");
        s[i] = int32_t(v);
    }
    return s;
}
}  // namespace

OffspringLaw parse_law_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw Error(Error::Code::BadDocument, std::string("law document is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(Error::Code::BadDocument, "law document must be a JSON object");
    if (!j.contains("dimension") || !j["dimension"].is_number_integer())
        throw Error(Error::Code::BadDocument, "missing integer field 'dimension'");
    int dim = j["dimension"].get<int>();

    LawMode mode = LawMode::stay;
    if (j.contains("mode")) {
        std::string m = j["mode"].get<std::string>();
        if (m == "stay")
            mode = LawMode::stay;
        else if (m == "death")
            mode = LawMode::death;
        else
            throw Error(Error::Code::BadDocument, "mode must be \"stay\" or \"death\"");
    }

    if (!j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty())
        throw Error(Error::Code::BadDocument, "missing non-empty array field 'atoms'");

    std::vector<OffspringLaw::Atom> atoms;
    for (const auto& ja : j["atoms"]) {
        OffspringLaw::Atom atom;
        if (!ja.contains("p") || !ja["p"].is_number())
            throw Error(Error::Code::BadDocument, "atom missing numeric field 'p'");
        atom.probability = ja["p"].get<double>();
        if (!ja.contains("balls") || !ja["balls"].is_array())
            throw Error(Error::Code::BadDocument, "atom missing array field 'balls'");
        for (const auto& jb : ja["balls"]) {
            Placement b;
            if (!jb.contains("offset"))
                throw Error(Error::Code::BadDocument, "ball missing field 'offset'");
            b.offset = parse_offset(jb["offset"], dim);
            b.count = jb.value("count", int64_t(1));
            atom.config.balls.push_back(b);
        }
        atoms.push_back(std::move(atom));
    }

    OffspringLaw law(dim, std::move(atoms), mode);
    if (!law.irreducible())
        throw Error(Error::Code::Reducible, "support offsets generate a proper subgroup of Z^d");
    return law;
}

OffspringLaw load_law_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Error::Code::Io, "cannot open law file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_law_json(ss.str());
}

std::string law_summary(const OffspringLaw& law) {
    std::ostringstream os;
    os << "dimension: " << law.dimension() << "\n";
    os << "mode: " << (law.is_death() ? "death" : "stay") << "\n";
    os << "atoms: " << law.atoms().size() << "\n";
    os << "lambda: " << law.lambda() << "\n";
    os << "E_total: " << law.mean_total() << "\n";
    os << "E_total_sq: " << law.moment_total(2) << "\n";
    os << "E_total_cube: " << law.moment_total(3) << "\n";
    os << "E_m1_sq: " << law.moment_m1_sq() << "\n";
    os << "E_m2: " << law.moment_m2() << "\n";
    os << "irreducible: " << (law.irreducible() ? "yes" : "no") << "\n";
    GapScan scan = spectral_gap_scan(law, 64);
    os << "min_gap_M64: " << scan.min_gap_nonzero << "\n";
    os << "quad_coefficient_M64: " << scan.quad_coefficient << "\n";
    return os.str();
}

}  // namespace abrw
