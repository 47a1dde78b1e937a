#include "abrw/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace abrw {

namespace {

int64_t window_volume(int radius, int dim) { return box_volume(radius, dim); }

size_t window_index(const Site& z, int radius, int dim) {
    size_t idx = 0;
    for (int i = 0; i < dim; ++i) idx = idx * size_t(2 * radius + 1) + size_t(z[i] + radius);
    return idx;
}

}  // namespace

size_t PzTable::index(const Site& z) const {
    if (linf_norm(z, dim) > radius)
        throw Error(Error::Code::CoverageGap, "site outside the table window");
    return window_index(z, radius, dim);
}

double PzTable::at(const Site& z) const { return values[index(z)]; }

double PzTable::sum_window() const {
    double s = 0;
    for (double v : values) s += v;
    return s;
}

double PzTable::sum_within(int r) const {
    if (r > radius) throw Error(Error::Code::CoverageGap, "radius exceeds the table window");
    double s = 0;
    for_each_in_box(r, dim, [&](const Site& z) { s += values[window_index(z, radius, dim)]; });
    return s;
}

double PzTable::sup() const {
    double m = 0;
    for (double v : values) m = std::max(m, v);
    return m;
}

double PzTable::sum_sq() const {
    double s = 0;
    for (double v : values) s += v * v;
    return s;
}

namespace {

// Accumulate w * e^{i u . z} over the window into out (real parts); phases
// advance by incremental unit rotations per axis.
void accumulate_window(std::vector<double>& out, const std::array<double, kMaxDim>& u,
                       std::complex<double> w, int radius, int dim) {
    const int side = 2 * radius + 1;
    // per-axis rotation and starting phase at z = -radius
    std::array<std::complex<double>, kMaxDim> rot, start;
    for (int i = 0; i < dim; ++i) {
        rot[size_t(i)] = std::polar(1.0, u[size_t(i)]);
        start[size_t(i)] = std::polar(1.0, -u[size_t(i)] * radius);
    }
    if (dim == 1) {
        std::complex<double> cur = w * start[0];
        for (int k = 0; k < side; ++k) {
            out[size_t(k)] += cur.real();
            cur *= rot[0];
        }
        return;
    }
    // generic: recurse over leading axes, innermost loop stays tight
    std::function<void(int, std::complex<double>, size_t)> walk =
        [&](int axis, std::complex<double> phase, size_t base) {
            if (axis == dim - 1) {
                std::complex<double> cur = phase * start[size_t(axis)];
                for (int k = 0; k < side; ++k) {
                    out[base + size_t(k)] += cur.real();
                    cur *= rot[size_t(axis)];
                }
                return;
            }
            std::complex<double> cur = phase * start[size_t(axis)];
            for (int k = 0; k < side; ++k) {
                walk(axis + 1, cur, (base + size_t(k)) * size_t(side));
                cur *= rot[size_t(axis)];
            }
        };
    walk(0, w, 0);
}

// one periodized table at a fixed grid size
std::vector<double> pz_grid_pass(const OffspringLaw& law, double t, int radius, int M) {
    const int d = law.dimension();
    const double lambda = law.lambda();
    std::vector<double> out(size_t(window_volume(radius, d)), 0.0);
    const double step = 2.0 * M_PI / M;
    int64_t total = 1;
    for (int i = 0; i < d; ++i) total *= M;
    const double inv = 1.0 / double(total);
    std::array<double, kMaxDim> u{};
    for (int64_t flat = 0; flat < total; ++flat) {
        int64_t rest = flat;
        for (int i = 0; i < d; ++i) {
            int k = int(rest % M);
            rest /= M;
            if (k > M / 2) k -= M;
            u[size_t(i)] = step * k;
        }
        std::complex<double> mh = law.mu_hat(u);
        // w = exp(-(lambda - mu_hat(u)) t), magnitude exp(-gap t)
        std::complex<double> w =
            std::polar(std::exp(-(lambda - mh.real()) * t), mh.imag() * t) * inv;
        accumulate_window(out, u, w, radius, d);
    }
    return out;
}

}  // namespace

PzTable pz_table(const OffspringLaw& law, double t, int radius, double tol) {
    if (t < 0) throw Error(Error::Code::BadDocument, "t must be >= 0");
    if (!(tol > 0)) throw Error(Error::Code::BadDocument, "tol must be > 0");
    const int d = law.dimension();
    const int64_t cap = 1 << 16;

    int M = 16;
    while (M < 2 * radius + 2) M <<= 1;
    // total grid work is M^d; keep the d>=2 start modest
    std::vector<double> coarse = pz_grid_pass(law, t, radius, M);
    while (true) {
        if (int64_t(M) * 2 > cap)
            throw Error(Error::Code::NoConvergence, "pz_table grid doubling hit its cap");
        int M2 = M * 2;
        std::vector<double> fine = pz_grid_pass(law, t, radius, M2);
        double diff = 0;
        for (size_t i = 0; i < fine.size(); ++i) diff = std::max(diff, std::abs(fine[i] - coarse[i]));
        if (diff < tol) {
            PzTable table;
            table.dim = d;
            table.t = t;
            table.radius = radius;
            table.grid_size = M2;
            table.wrap_error = diff;
            table.values = std::move(fine);
            return table;
        }
        coarse = std::move(fine);
        M = M2;
    }
}

namespace {

struct ConvOp {
    // offsets and weights of mu' (mode-substituted), plus lambda
    std::vector<Site> offsets;
    std::vector<double> weights;
    double lambda = 0;
    int dim = 1;
    int radius = 0;

    void rhs(const std::vector<double>& q, std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        const int side = 2 * radius + 1;
        // out[x] = sum_j w_j q[x - off_j] - lambda q[x]
        for (size_t j = 0; j < offsets.size(); ++j) {
            const Site& off = offsets[j];
            const double w = weights[j];
            // iterate x with x - off inside the box
            std::array<int, kMaxDim> lo{}, hi{};
            for (int i = 0; i < dim; ++i) {
                lo[size_t(i)] = std::max(-radius, -radius + off[i]);
                hi[size_t(i)] = std::min(radius, radius + off[i]);
            }
            std::array<int, kMaxDim> x{};
            for (int i = 0; i < dim; ++i) x[size_t(i)] = lo[size_t(i)];
            while (true) {
                size_t xi = 0, si = 0;
                for (int i = 0; i < dim; ++i) {
                    xi = xi * size_t(side) + size_t(x[size_t(i)] + radius);
                    si = si * size_t(side) + size_t(x[size_t(i)] - off[i] + radius);
                }
                out[xi] += w * q[si];
                int axis = dim - 1;
                while (axis >= 0) {
                    if (++x[size_t(axis)] <= hi[size_t(axis)]) break;
                    x[size_t(axis)] = lo[size_t(axis)];
                    --axis;
                }
                if (axis < 0) break;
            }
        }
        for (size_t i = 0; i < q.size(); ++i) out[i] -= lambda * q[i];
    }
};

}  // namespace

PzTable pz_ode_oracle(const OffspringLaw& law, double t, int box_radius, double step_tol) {
    const int d = law.dimension();
    ConvOp op;
    op.dim = d;
    op.radius = box_radius;
    op.lambda = law.lambda();
    for (const auto& w : law.mean_measure()) {
        op.offsets.push_back(w.offset);
        op.weights.push_back(w.weight);
    }
    if (law.is_death()) {
        // mu' = mu - delta_0
        Site zero;
        bool merged = false;
        for (size_t j = 0; j < op.offsets.size(); ++j)
            if (op.offsets[j] == zero) {
                op.weights[j] -= 1.0;
                merged = true;
            }
        if (!merged) {
            op.offsets.push_back(zero);
            op.weights.push_back(-1.0);
        }
    }

    const size_t n = size_t(window_volume(box_radius, d));
    std::vector<double> q(n, 0.0);
    q[window_index(Site(), box_radius, d)] = 1.0;

    // Cash-Karp embedded pair
    static const double a[6] = {0, 1. / 5, 3. / 10, 3. / 5, 1., 7. / 8};
    static const double b2[] = {1. / 5};
    static const double b3[] = {3. / 40, 9. / 40};
    static const double b4[] = {3. / 10, -9. / 10, 6. / 5};
    static const double b5[] = {-11. / 54, 5. / 2, -70. / 27, 35. / 27};
    static const double b6[] = {1631. / 55296, 175. / 512, 575. / 13824, 44275. / 110592,
                                253. / 4096};
    static const double c5[6] = {37. / 378, 0, 250. / 621, 125. / 594, 0, 512. / 1771};
    static const double c4[6] = {2825. / 27648, 0, 18575. / 48384, 13525. / 55296, 277. / 14336,
                                 1. / 4};
    (void)a;

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n), y5(n);
    const double rtol = step_tol;
    const double atol = step_tol * 1e-4;

    double time = 0;
    double dt = std::min(0.1, t > 0 ? t : 0.1);
    while (time < t) {
        dt = std::min(dt, t - time);
        op.rhs(q, k1);
        for (size_t i = 0; i < n; ++i) tmp[i] = q[i] + dt * b2[0] * k1[i];
        op.rhs(tmp, k2);
        for (size_t i = 0; i < n; ++i) tmp[i] = q[i] + dt * (b3[0] * k1[i] + b3[1] * k2[i]);
        op.rhs(tmp, k3);
        for (size_t i = 0; i < n; ++i)
            tmp[i] = q[i] + dt * (b4[0] * k1[i] + b4[1] * k2[i] + b4[2] * k3[i]);
        op.rhs(tmp, k4);
        for (size_t i = 0; i < n; ++i)
            tmp[i] = q[i] + dt * (b5[0] * k1[i] + b5[1] * k2[i] + b5[2] * k3[i] + b5[3] * k4[i]);
        op.rhs(tmp, k5);
        for (size_t i = 0; i < n; ++i)
            tmp[i] = q[i] + dt * (b6[0] * k1[i] + b6[1] * k2[i] + b6[2] * k3[i] + b6[3] * k4[i] +
                                  b6[4] * k5[i]);
        op.rhs(tmp, k6);

        double err = 0;
        for (size_t i = 0; i < n; ++i) {
            double v5 = q[i] + dt * (c5[0] * k1[i] + c5[2] * k3[i] + c5[3] * k4[i] + c5[5] * k6[i]);
            double v4 = q[i] + dt * (c4[0] * k1[i] + c4[2] * k3[i] + c4[3] * k4[i] + c4[4] * k5[i] +
                                     c4[5] * k6[i]);
            y5[i] = v5;
            double scale = atol + rtol * std::max(std::abs(v5), std::abs(q[i]));
            err = std::max(err, std::abs(v5 - v4) / scale);
        }
        if (err <= 1.0) {
            q.swap(y5);
            time += dt;
        }
        double factor = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        dt *= std::clamp(factor, 0.2, 5.0);
        if (dt < 1e-12)
            throw Error(Error::Code::NoConvergence, "ode oracle step size collapsed");
    }

    double mass = 0;
    for (double v : q) mass += v;
    if (t > 0 && 1.0 - mass > 10.0 * step_tol)
        throw Error(Error::Code::LeakTooLarge,
                    "box lost mass " + std::to_string(1.0 - mass) + " > 10*step_tol");

    // p_z = q_{-z}
    PzTable table;
    table.dim = d;
    table.t = t;
    table.radius = box_radius;
    table.grid_size = 0;
    table.wrap_error = 0;
    table.values.assign(n, 0.0);
    for_each_in_box(box_radius, d, [&](const Site& z) {
        Site neg;
        for (int i = 0; i < d; ++i) neg[i] = -z[i];
        table.values[window_index(z, box_radius, d)] = q[window_index(neg, box_radius, d)];
    });
    return table;
}

double parseval_sum(const OffspringLaw& law, double t) {
    const int d = law.dimension();
    const int64_t cap = d == 1 ? (1 << 16) : (1 << 12);
    auto pass = [&](int M) {
        const double step = 2.0 * M_PI / M;
        int64_t total = 1;
        for (int i = 0; i < d; ++i) total *= M;
        std::array<double, kMaxDim> u{};
        double s = 0;
        for (int64_t flat = 0; flat < total; ++flat) {
            int64_t rest = flat;
            for (int i = 0; i < d; ++i) {
                int k = int(rest % M);
                rest /= M;
                if (k > M / 2) k -= M;
                u[size_t(i)] = step * k;
            }
            s += std::exp(-2.0 * law.gap(u) * t);
        }
        return s / double(total);
    };
    int M = 16;
    double coarse = pass(M);
    while (true) {
        if (int64_t(M) * 2 > cap)
            throw Error(Error::Code::NoConvergence, "parseval grid doubling hit its cap");
        M *= 2;
        double fine = pass(M);
        if (std::abs(fine - coarse) <= 1e-8 * std::max(std::abs(fine), 1e-300)) return fine;
        coarse = fine;
    }
}

std::complex<double> second_moment_M(const OffspringLaw& law,
                                     const std::array<double, kMaxDim>& u,
                                     const std::array<double, kMaxDim>& v, double t) {
    std::array<double, kMaxDim> upv{};
    for (int i = 0; i < law.dimension(); ++i) upv[size_t(i)] = u[size_t(i)] + v[size_t(i)];
    std::complex<double> a = law.mu_hat(upv) - law.mu_hat(u) - law.mu_hat(v);
    std::complex<double> integral;
    if (std::abs(a) < 1e-12)
        integral = t;  // analytic limit of (e^{at}-1)/a
    else
        integral = (std::exp(a * t) - 1.0) / a;
    return 1.0 + law.phi_hat_product_mean(u, v) * integral;
}

double variance_constant(const OffspringLaw& law, double p) {
    if (!(p > 0) || p > 1)
        throw Error(Error::Code::BadDocument, "p must be in (0,1] for the variance constant");
    double ew2 = 1.0 + law.second_moment_at_zero() / law.lambda();
    return p * ew2 - p * p;
}

double variance_prediction(const OffspringLaw& law, double p, double t) {
    return variance_constant(law, p) * parseval_sum(law, t);
}

double conditional_mean_S(const PzTable& table, const std::map<Site, int>& zeta) {
    double s = 0;
    for (const auto& [site, value] : zeta) {
        if (value == 0) continue;
        s += table.at(site) * value;
    }
    return s;
}

CltParams clt_params(const OffspringLaw& law, double t) {
    return {0.0, parseval_sum(law, t)};
}

double tail_bound(const OffspringLaw& law, const PzTable& table, int r) {
    double head = table.sum_within(r);
    double padding = double(window_volume(r, table.dim)) * table.wrap_error;
    double tail = std::max(0.0, 1.0 - head) + padding;
    return 2.0 * std::exp(law.lambda() * table.t) * tail;
}

double tail_bound(const OffspringLaw& law, int r, double T, double tol) {
    PzTable table = pz_table(law, T, r, tol);
    return tail_bound(law, table, r);
}

int trust_radius(const OffspringLaw& law, double T, double target, int r_max) {
    // width heuristic for the first table; grow if the bound hasn't dropped
    double sigma = std::sqrt(std::max(1.0, law.moment_m2() * T));
    int radius = std::max(8, int(2 * sigma));
    while (radius <= r_max) {
        PzTable table = pz_table(law, T, radius, std::min(1e-12, target * 1e-3));
        for (int r = 0; r <= radius; ++r)
            if (tail_bound(law, table, r) <= target) return r;
        radius *= 2;
    }
    throw Error(Error::Code::NoConvergence, "trust radius search exceeded r_max");
}

SlopeFit slope_loglog(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 2) throw Error(Error::Code::BadSpan, "need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(series.size());
    for (const auto& [t, v] : series) {
        if (!(t > 0) || !(v > 0))
            throw Error(Error::Code::BadSpan, "log-log fit needs positive values");
        double x = std::log(t), y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double denom = sxx - sx * sx / n;
    double slope = (sxy - sx * sy / n) / denom;
    double intercept = (sy - slope * sx) / n;
    double rss = 0;
    for (const auto& [t, v] : series) {
        double r = std::log(v) - (intercept + slope * std::log(t));
        rss += r * r;
    }
    SlopeFit fit;
    fit.slope = slope;
    fit.points = series.size();
    fit.stderr_slope = series.size() > 2 ? std::sqrt(rss / (n - 2) / denom) : 0.0;
    return fit;
}

SlopeFit scaling_exponent(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 5)
        throw Error(Error::Code::BadSpan, "need at least 5 points for an exponent fit");
    double tmin = series.front().first, tmax = series.front().first;
    for (const auto& [t, v] : series) {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
    }
    if (tmax < 10.0 * tmin * (1.0 - 1e-12))
        throw Error(Error::Code::BadSpan, "t values must span at least one decade");
    return slope_loglog(series);
}

std::string pz_table_csv(const PzTable& table) {
    std::ostringstream os;
    for (int i = 0; i < table.dim; ++i) os << "z_" << (i + 1) << ",";
    os << "p\n";
    os.precision(17);
    for_each_in_box(table.radius, table.dim, [&](const Site& z) {
        for (int i = 0; i < table.dim; ++i) os << z[i] << ",";
        os << table.values[window_index(z, table.radius, table.dim)] << "\n";
    });
    return os.str();
}

}  // namespace abrw
