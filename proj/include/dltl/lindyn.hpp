#pragma once

#include "dltl/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dltl {

// Single decoupled mode: target singular value s, product u = a_0 ... a_L.
struct ModeState {
    double s = 1.0;
    double u = 0.0;
    int L = 1;
    double eta = 1.0;
};

struct ModeTime {
    double closed_form = 0.0;  // exact log formula for L = 1, exponent-2 approximation otherwise
    double rk4 = 0.0;          // numeric integration with the exact exponent 2L/(L+1)
    bool approximate = false;
};

namespace detail {

inline void check_mode_args(double u0, double uf, double s, double eta, int L) {
    require(L >= 1, "L must be at least 1");
    require(eta > 0.0, "eta must be positive");
    require(s > 0.0, "s must be positive");
    require(u0 > 0.0, "u0 = 0 is a fixed point of the mode dynamics");
    require(uf < s, "uf >= s is not reached in finite time");
    require(u0 <= uf, "u0 must not exceed uf");
}

inline double log_term(double u0, double uf, double s) { return std::log(uf * (u0 - s) / (u0 * (uf - s))); }

}  // namespace detail

inline double mode_exponent(int L) { return 2.0 * L / (L + 1.0); }

// Time for udot = eta (L+1) u^p (s-u), p = 2L/(L+1), to carry u0 to uf.
// Integrated as dt/dv in the logit variable v = ln(u/(s-u)), where the integrand is smooth.
inline double mode_time_rk4(double u0, double uf, double s, double eta, int L, int steps = 4000) {
    detail::check_mode_args(u0, uf, s, eta, L);
    if (u0 == uf) return 0.0;
    const double p = mode_exponent(L);
    auto rate = [&](double v) {
        double u = s / (1.0 + std::exp(-v));
        return std::pow(u, 1.0 - p) / (s * eta * (L + 1));
    };
    const double v0 = std::log(u0 / (s - u0)), v1 = std::log(uf / (s - uf)), h = (v1 - v0) / steps;
    double t = 0.0;
    for (int k = 0; k < steps; ++k) {
        double v = v0 + k * h;
        // the right-hand side depends on v only, so RK4 reduces to Simpson's weights
        t += h / 6.0 * (rate(v) + 4.0 * rate(v + 0.5 * h) + rate(v + h));
    }
    return t;
}

inline ModeTime mode_time(double u0, double uf, double s, double eta, int L) {
    detail::check_mode_args(u0, uf, s, eta, L);
    ModeTime r;
    r.approximate = L >= 2;
    if (u0 == uf) return r;
    const double lg = detail::log_term(u0, uf, s);
    if (L == 1)
        r.closed_form = lg / (2.0 * s * eta);
    else
        r.closed_form = (1.0 / u0 - 1.0 / uf + lg / s) / ((L + 1) * s * eta);
    r.rk4 = mode_time_rk4(u0, uf, s, eta, L);
    return r;
}

struct HessianEigs {
    double lambda1 = 0.0;      // along (1, ..., 1)
    double lambda_rest = 0.0;  // the remaining L-fold eigenvalue
};

// Hessian of (s - prod a_l)^2 / 2 at the balanced point a_0 = ... = a_L = a.
inline HessianEigs hessian_mode_eigs(double a, double s, int L) {
    require(a >= 0.0, "hessian_mode_eigs: a must be non-negative");
    require(L >= 1, "hessian_mode_eigs: L must be at least 1");
    HessianEigs e;
    const double a2L = std::pow(a, 2 * L), aLm1 = std::pow(a, L - 1);
    e.lambda1 = (1.0 + 2.0 * L) * a2L - s * L * aLm1;
    e.lambda_rest = s * aLm1 - a2L;
    return e;
}

struct HessianMax {
    double a_argmax = 0.0;
    double lambda1_max = 0.0;
};

// Grid maximum of lambda1 over [0, s^{1/(L+1)}], endpoints included.
inline HessianMax hessian_lambda1_max(double s, int L, int points = 4001) {
    require(points >= 2, "hessian_lambda1_max: need at least two grid points");
    const double top = std::pow(s, 1.0 / (L + 1));
    HessianMax m{0.0, -std::numeric_limits<double>::infinity()};
    for (int i = 0; i < points; ++i) {
        double a = top * i / (points - 1), v = hessian_mode_eigs(a, s, L).lambda1;
        if (v > m.lambda1_max) m = {a, v};
    }
    return m;
}

inline double hessian_critical_point(double s, int L) {
    return std::pow(s, 1.0 / (L + 1)) * std::pow((L - 1.0) / (2.0 * (1.0 + 2.0 * L)), 1.0 / (L + 1));
}

struct OptSchedule {
    double eta_opt = 0.0;
    double t_opt = 0.0;
};

// Proportionality constant of the optimal rate taken as 1.
inline double eta_opt(double s, int L) { return 1.0 / ((L + 1) * std::pow(s, mode_exponent(L))); }

inline OptSchedule opt_schedule(double u0, double uf, double s, int L) {
    detail::check_mode_args(u0, uf, s, 1.0, L);
    OptSchedule o;
    o.eta_opt = eta_opt(s, L);
    if (u0 == uf) return o;
    o.t_opt = std::pow(s, (L - 1.0) / (L + 1.0)) * (1.0 / u0 - 1.0 / uf + detail::log_term(u0, uf, s) / s);
    return o;
}

// u(k) for k = 0..steps of the balanced mode ODE, RK4 with `sub` substeps per unit time.
inline std::vector<double> mode_trajectory_rk4(double u0, double s, double eta, int L, int steps, int sub = 20) {
    require(u0 >= 0.0 && steps >= 0 && sub >= 1, "mode_trajectory_rk4: bad arguments");
    const double p = mode_exponent(L), h = 1.0 / sub;
    auto f = [&](double u) { return eta * (L + 1) * std::pow(std::max(u, 0.0), p) * (s - u); };
    std::vector<double> out{u0};
    double u = u0;
    for (int k = 0; k < steps; ++k) {
        for (int j = 0; j < sub; ++j) {
            double k1 = f(u), k2 = f(u + 0.5 * h * k1), k3 = f(u + 0.5 * h * k2), k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        out.push_back(u);
    }
    return out;
}

struct ShallowState {
    double a = 0.0, b = 0.0;
};

// adot = eta (s - ab) b, bdot = eta (s - ab) a.
inline std::vector<ShallowState> shallow_rk4(ShallowState x0, double s, double eta, double t_end, int steps) {
    require(steps >= 1 && t_end >= 0.0, "shallow_rk4: bad arguments");
    auto f = [&](ShallowState x) {
        double r = eta * (s - x.a * x.b);
        return ShallowState{r * x.b, r * x.a};
    };
    auto axpy = [](ShallowState x, double h, ShallowState d) { return ShallowState{x.a + h * d.a, x.b + h * d.b}; };
    const double h = t_end / steps;
    std::vector<ShallowState> out{x0};
    ShallowState x = x0;
    for (int k = 0; k < steps; ++k) {
        auto k1 = f(x), k2 = f(axpy(x, h / 2, k1)), k3 = f(axpy(x, h / 2, k2)), k4 = f(axpy(x, h, k3));
        x.a += h / 6 * (k1.a + 2 * k2.a + 2 * k3.a + k4.a);
        x.b += h / 6 * (k1.b + 2 * k2.b + 2 * k3.b + k4.b);
        out.push_back(x);
    }
    return out;
}

struct DeepLinearOptions {
    std::optional<double> tol_loss;    // default 1e-4 * max s^2
    double u0_frac = 0.1;              // balanced init: every D_l = (u0_frac * max s)^{1/(L+1)} I
    std::optional<Vec> init_diag;      // overrides the balanced scalar, one entry per mode
    int max_steps = 200000;
};

struct DeepLinearResult {
    int steps = 0;
    bool converged = false;
    std::vector<double> loss;           // loss[k] after k steps
    std::vector<std::vector<double>> u; // u[k][i] = mode i after k steps
};

// Full-matrix GD on (1/2)||U S V^T - W_L ... W_0||_F^2 with W_l = R_{l+1} D_l R_l^T.
inline DeepLinearResult simulate_deep_linear_gd(int L, const std::vector<double>& svals, double eta, std::uint64_t seed,
                                                const DeepLinearOptions& opt = {}) {
    require(L >= 1, "simulate_deep_linear_gd: L must be at least 1");
    require(!svals.empty(), "simulate_deep_linear_gd: need at least one mode");
    require(eta > 0.0, "simulate_deep_linear_gd: eta must be positive");
    const int n = static_cast<int>(svals.size());
    const double smax = *std::max_element(svals.begin(), svals.end());
    const double tol = opt.tol_loss.value_or(1e-4 * smax * smax);

    Rng rng = make_rng(seed);
    std::vector<Mat> R;
    for (int l = 0; l <= L + 1; ++l) R.push_back(haar_orthogonal(n, rng));
    Vec d0;
    if (opt.init_diag) {
        require(opt.init_diag->size() == n, "simulate_deep_linear_gd: init_diag size must match svals");
        d0 = *opt.init_diag;
    } else {
        d0 = Vec::Constant(n, std::pow(opt.u0_frac * smax, 1.0 / (L + 1)));
    }
    std::vector<Mat> W;
    for (int l = 0; l <= L; ++l) W.push_back(R[l + 1] * d0.asDiagonal() * R[l].transpose());
    const Mat& U = R[L + 1];
    const Mat& V = R[0];
    Vec sv = Eigen::Map<const Vec>(svals.data(), n);
    const Mat T = U * sv.asDiagonal() * V.transpose();

    auto product = [&] {
        Mat P = W[0];
        for (int l = 1; l <= L; ++l) P = W[l] * P;
        return P;
    };
    DeepLinearResult res;
    auto record = [&](const Mat& P) {
        double loss = 0.5 * (T - P).squaredNorm();
        Mat M = U.transpose() * P * V;
        res.loss.push_back(loss);
        res.u.emplace_back(n);
        for (int i = 0; i < n; ++i) res.u.back()[i] = M(i, i);
        return loss;
    };
    Mat P = product();
    const double loss0 = record(P);
    if (loss0 <= tol) {
        res.converged = true;
        return res;
    }
    std::vector<Mat> below(L + 1), above(L + 1);
    for (int k = 1; k <= opt.max_steps; ++k) {
        const Mat E = T - P;
        // below[l] = W_{l-1} ... W_0, above[l] = W_L ... W_{l+1}
        below[0] = Mat::Identity(n, n);
        for (int l = 1; l <= L; ++l) below[l] = W[l - 1] * below[l - 1];
        above[L] = Mat::Identity(n, n);
        for (int l = L - 1; l >= 0; --l) above[l] = above[l + 1] * W[l + 1];
        for (int l = 0; l <= L; ++l) W[l] += eta * above[l].transpose() * E * below[l].transpose();
        P = product();
        double loss = record(P);
        if (!std::isfinite(loss) || loss > 10.0 * loss0)
            throw NumericalError("simulate_deep_linear_gd: loss diverged at eta = " + std::to_string(eta));
        if (loss <= tol) {
            res.steps = k;
            res.converged = true;
            return res;
        }
    }
    res.steps = opt.max_steps;
    return res;
}

}  // namespace dltl
