#pragma once

#include "dltl/activation.hpp"
#include "dltl/netcore.hpp"
#include "dltl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace dltl {

struct LengthMapResult {
    double q_next = 0.0;
    std::optional<double> derivative;
};

namespace detail {

// E phi(z)^2 and E phi'(z)^2 for unit-variance z, homogeneous kinds only.
inline double homog_second_moment(const Activation& a) {
    switch (a.kind) {
        case Activation::Kind::linear: return 1.0;
        case Activation::Kind::relu: return 0.5;
        case Activation::Kind::leaky_relu: return 0.5 * (1.0 + a.alpha * a.alpha);
        default: break;
    }
    throw DomainError("not homogeneous");
}

}  // namespace detail

inline LengthMapResult length_map(double q, double sigma_w2, const Activation& act, bool with_derivative = false,
                                  int nodes = 64) {
    require(q >= 0.0, "length_map: q must be non-negative");
    require(sigma_w2 > 0.0, "length_map: sigma_w2 must be positive");
    LengthMapResult r;
    if (act.homogeneous()) {
        const double c = detail::homog_second_moment(act);
        r.q_next = sigma_w2 * c * q;
        if (with_derivative) r.derivative = sigma_w2 * c;
        return r;
    }
    const double sq = std::sqrt(q);
    r.q_next = sigma_w2 * gauss_expect([&](double z) { double p = act.value(sq * z); return p * p; }, nodes);
    if (with_derivative)
        r.derivative = sigma_w2 * gauss_expect([&](double z) {
                           double u = sq * z, d = act.deriv(u);
                           return d * d + act.value(u) * act.deriv2(u);
                       }, nodes);
    return r;
}

struct FixedPoint {
    double q_inf = 0.0;
    bool marginal = false;  // the map is the identity, every q is fixed
    int iterations = 0;
};

struct FixedPointDivergence : NumericalError {
    double last_iterate;
    FixedPointDivergence(const std::string& msg, double last) : NumericalError(msg), last_iterate(last) {}
};

inline FixedPoint length_fixed_point(double sigma_w2, const Activation& act, double q0, double tol = 1e-10,
                                     int max_iter = 10000) {
    require(sigma_w2 > 0.0 && q0 > 0.0, "length_fixed_point: sigma_w2 and q0 must be positive");
    FixedPoint fp;
    if (act.homogeneous()) {
        const double slope = sigma_w2 * detail::homog_second_moment(act);
        if (std::abs(slope - 1.0) <= 1e-14) {
            fp.q_inf = q0;
            fp.marginal = true;
            return fp;
        }
    }
    if (act.kind == Activation::Kind::tanh && sigma_w2 <= 1.0) {
        // tanh^2(x) < x^2 gives V(q) < q for q > 0: the iterates fall to 0, only algebraically at sigma_w2 = 1
        fp.q_inf = 0.0;
        return fp;
    }
    double q = q0;
    for (int k = 1; k <= max_iter; ++k) {
        double qn = length_map(q, sigma_w2, act).q_next;
        if (!std::isfinite(qn))
            throw FixedPointDivergence("length map iterate became non-finite", q);
        double dq = std::abs(qn - q);
        q = qn;
        if (dq <= tol) {
            fp.q_inf = q;
            fp.iterations = k;
            return fp;
        }
    }
    throw FixedPointDivergence("length map did not converge in " + std::to_string(max_iter) +
                                   " iterations, last iterate " + std::to_string(q),
                               q);
}

enum class Which { phi_phi, dphi_dphi };

// E g(u1) g(u2) with u1 = sqrt(q11) z1, u2 = sqrt(q22)(c z1 + sqrt(1-c^2) z2),
// g = phi or phi'. Homogeneous kinds integrate the angular part exactly
// between kinks; tanh uses the tensor Gauss-Hermite grid.
inline double pair_expect(const Activation& act, double q11, double q22, double c, Which which, int nodes = 64) {
    require(std::abs(c) <= 1.0 + 1e-12, "correlation must lie in [-1,1]");
    require(q11 >= 0.0 && q22 >= 0.0, "variances must be non-negative");
    c = std::clamp(c, -1.0, 1.0);
    const double a = std::sqrt(q11), b = std::sqrt(q22);
    auto g = [&](double u) { return which == Which::phi_phi ? act.value(u) : act.deriv(u); };
    if (act.kind == Activation::Kind::linear)
        return which == Which::phi_phi ? a * b * c : 1.0;
    if (std::abs(c) == 1.0)
        return gauss_expect([&](double z) { return g(a * z) * g(c * b * z); }, nodes);
    const double s = std::sqrt(1.0 - c * c);
    if (!act.homogeneous())
        return gauss_expect2([&](double z1, double z2) { return g(a * z1) * g(b * (c * z1 + s * z2)); }, nodes);

    // Polar form: phi-phi has radial moment 2 / (2 pi), phi'-phi' has 1 / (2 pi).
    // Use unit scales; homogeneity restores a, b for phi and leaves phi' unchanged.
    auto ang = [&](double t) {
        double u = std::cos(t), v = c * std::cos(t) + s * std::sin(t);
        return g(u) * g(v);
    };
    std::vector<double> cuts{-std::numbers::pi, -std::numbers::pi / 2, std::numbers::pi / 2, std::numbers::pi};
    double t0 = std::atan2(-c, s);  // v = 0 at t0 and t0 + pi
    for (double t : {t0, t0 + std::numbers::pi, t0 - std::numbers::pi})
        if (t > -std::numbers::pi && t < std::numbers::pi) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) integral += legendre(ang, cuts[i], cuts[i + 1]);
    if (which == Which::phi_phi) return a * b * integral / std::numbers::pi;
    return integral / (2.0 * std::numbers::pi);
}

inline double corr_map(double c, double q11, double q22, double sigma_w2, const Activation& act, int nodes = 64) {
    require(std::abs(c) <= 1.0, "corr_map: |c| must not exceed 1");
    require(sigma_w2 > 0.0, "corr_map: sigma_w2 must be positive");
    return sigma_w2 * pair_expect(act, q11, q22, c, Which::phi_phi, nodes);
}

inline double chi1(double sigma_w2, double q_inf, const Activation& act, int nodes = 64) {
    require(q_inf >= 0.0, "chi1: q_inf must be non-negative");
    if (act.homogeneous()) return sigma_w2 * detail::homog_second_moment(act);
    const double sq = std::sqrt(q_inf);
    return sigma_w2 * gauss_expect([&](double z) { double d = act.deriv(sq * z); return d * d; }, nodes);
}

enum class Phase { ordered, chaotic, edge };

inline std::string phase_name(Phase p) {
    switch (p) {
        case Phase::ordered: return "ordered";
        case Phase::chaotic: return "chaotic";
        case Phase::edge: return "edge";
    }
    return "";
}

struct PhasePoint {
    double sigma_w2 = 0.0;
    double q_inf = 0.0;
    double chi1 = 0.0;
    Phase phase = Phase::edge;
    bool marginal = false;
};

inline PhasePoint phase_classify(double sigma_w2, const Activation& act, double q0 = 1.0, double tol = 1e-6) {
    require(sigma_w2 > 0.0, "phase_classify: sigma_w2 must be positive");
    PhasePoint p;
    p.sigma_w2 = sigma_w2;
    if (act.homogeneous()) {
        // the length map is linear: q decays to 0, stays put, or grows without bound
        const double slope = sigma_w2 * detail::homog_second_moment(act);
        if (std::abs(slope - 1.0) <= 1e-14) {
            p.q_inf = q0;
            p.marginal = true;
        } else {
            p.q_inf = slope < 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
        }
        p.chi1 = chi1(sigma_w2, 1.0, act);
    } else {
        FixedPoint fp = length_fixed_point(sigma_w2, act, q0);
        p.q_inf = fp.q_inf;
        p.marginal = fp.marginal;
        p.chi1 = chi1(sigma_w2, fp.q_inf, act);
    }
    p.phase = p.chi1 < 1.0 - tol ? Phase::ordered : (p.chi1 > 1.0 + tol ? Phase::chaotic : Phase::edge);
    return p;
}

// Bisection on chi1 - 1 over sigma_w2 in [lo, hi].
inline double edge_of_chaos(const Activation& act, double lo = 1.0, double hi = 4.0, double tol = 1e-8) {
    auto f = [&](double s2) { return phase_classify(s2, act).chi1 - 1.0; };
    double flo = f(lo), fhi = f(hi);
    if (std::abs(flo) <= tol) return lo;
    if (std::abs(fhi) <= tol) return hi;
    if ((flo < 0) == (fhi < 0)) throw NumericalError("edge_of_chaos: chi1 - 1 does not change sign on the bracket");
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi), fm = f(mid);
        if (std::abs(fm) <= tol) return mid;
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    throw NumericalError("edge_of_chaos: bisection did not reach tolerance");
}

struct MomentProfile {
    std::vector<double> q, q_se;          // l = 1..L+1
    std::vector<double> delta, delta_se;  // l = 1..L+1
};

// Per-layer mean squared preactivation and backward signal over a weight ensemble.
// The backward pass is seeded with the all-ones vector at the output.
inline MomentProfile simulate_moments(const NetConfig& cfg, const Vec& x, int replicates, std::uint64_t seed) {
    require(replicates >= 2, "simulate_moments: need at least two replicates");
    const int nl = cfg.matrices();
    std::vector<std::vector<double>> q(nl, std::vector<double>(replicates));
    std::vector<std::vector<double>> d(nl, std::vector<double>(replicates));
    parallel_for(replicates, [&](std::size_t r) {
        WeightSet w = init_weights(cfg, seed + r);
        auto [f, b] = forward_backward(cfg, w, x, Vec(Vec::Ones(cfg.widths.back())));
        for (int l = 0; l < nl; ++l) {
            q[l][r] = f.h[l].squaredNorm() / f.h[l].size();
            d[l][r] = b.g[l].squaredNorm() / b.g[l].size();
        }
    });
    MomentProfile m;
    for (int l = 0; l < nl; ++l) {
        MeanSe a = mean_se(q[l]), c = mean_se(d[l]);
        m.q.push_back(a.mean);
        m.q_se.push_back(a.se);
        m.delta.push_back(c.mean);
        m.delta_se.push_back(c.se);
    }
    return m;
}

}  // namespace dltl
