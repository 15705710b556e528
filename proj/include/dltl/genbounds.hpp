#pragma once

#include "dltl/landscape.hpp"

#include <boost/math/special_functions/binomial.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dltl {

struct ClassicBounds {
    double hoeffding_eps = 0.0;
    std::optional<double> sauer_growth;  // (e m / d)^d
    std::optional<double> sauer_sum;     // sum_{k <= d} binom(m, k)
    std::optional<double> vc_rademacher;
};

inline double hoeffding_eps(double m, double delta) {
    require(m >= 1, "m must be at least 1");
    require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
    return std::sqrt(std::log(1.0 / delta) / (2.0 * m));
}

inline double vc_rademacher(double m, double d) {
    require(m >= 1, "m must be at least 1");
    require(d >= 1 && d < m, "VC dimension must satisfy 1 <= d < m");
    return std::sqrt(2.0 / m * (std::log(2.0) + d * (1.0 + std::log(m) - std::log(d))));
}

inline ClassicBounds classic_bounds(int m, double delta, std::optional<int> d = std::nullopt) {
    ClassicBounds c;
    c.hoeffding_eps = hoeffding_eps(m, delta);
    if (d) {
        c.vc_rademacher = vc_rademacher(m, *d);
        c.sauer_growth = std::pow(std::numbers::e * m / *d, *d);
        double s = 0.0;
        for (int k = 0; k <= *d; ++k) s += boost::math::binomial_coefficient<double>(m, k);
        c.sauer_sum = s;
    }
    return c;
}

struct NormProfile {
    std::vector<double> spectral, frobenius, l21;  // l21 = ||W^T||_{2,1}: sum of column norms of W
    int layers() const { return static_cast<int>(spectral.size()); }
};

inline NormProfile norm_profile(const WeightSet& w) {
    NormProfile p;
    for (const auto& W : w) {
        double s = 0.0;
        if (W.size() > 0) {
            Eigen::JacobiSVD<Mat> svd(W);
            s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
        }
        p.spectral.push_back(s);
        p.frobenius.push_back(W.norm());
        p.l21.push_back(W.colwise().norm().sum());
    }
    return p;
}

struct BoundReport {
    std::string family;
    std::map<std::string, double> inputs;
    std::map<std::string, double> quantities;
    std::vector<std::string> flags;
    double bound = 0.0;

    nlohmann::json to_json() const {
        return {{"family", family}, {"inputs", inputs}, {"quantities", quantities}, {"flags", flags}, {"bound", bound}};
    }
};

namespace detail {

// Risk bounds above 1 say nothing; keep the raw value and report min(1, raw).
inline void finish(BoundReport& r, double raw) {
    r.quantities["raw_bound"] = raw;
    if (!std::isfinite(raw) || raw > 1.0) r.flags.push_back("vacuous: clamped to 1");
    r.bound = std::isfinite(raw) ? std::clamp(raw, 0.0, 1.0) : 1.0;
}

}  // namespace detail

inline double spectral_complexity(const std::vector<double>& s, const std::vector<double>& b) {
    require(s.size() == b.size() && !s.empty(), "need matching non-empty s and b");
    double sum = 0.0;
    for (std::size_t l = 0; l < s.size(); ++l) {
        double prod = b[l];
        for (std::size_t k = 0; k < s.size(); ++k)
            if (k != l) prod *= s[k];
        sum += std::pow(prod, 2.0 / 3.0);
    }
    return std::pow(sum, 1.5);
}

// Margin bound through covering numbers and the Dudley integral at the optimal cutoff.
inline BoundReport bartlett_from_complexity(double R, double C, double x_norm_f, double gamma, double m, double delta,
                                            double empirical_margin_risk = 0.0, double log_inv_delta = -1.0) {
    require(gamma > 0, "gamma must be positive");
    require(R > 0 && C > 0 && x_norm_f > 0, "norms must be positive");
    require(m >= 1, "m must be at least 1");
    require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
    BoundReport r;
    r.family = "bartlett";
    r.inputs = {{"m", m}, {"delta", delta}, {"gamma", gamma}, {"x_norm_f", x_norm_f}};
    const double k = C * x_norm_f / gamma * R;
    const double u = 6.0 / m * k;
    const double lid = log_inv_delta >= 0 ? log_inv_delta : std::log(1.0 / delta);
    r.quantities = {{"complexity", R}, {"C", C}, {"eps_opt", 3.0 / std::sqrt(m) * k}, {"log_argument", u},
                    {"empirical_margin_risk", empirical_margin_risk}, {"log_inv_delta", lid}};
    if (u >= 1.0) {
        r.flags.push_back("log argument >= 1: outside the validity regime");
        r.quantities["rademacher"] = std::numeric_limits<double>::infinity();
        r.quantities["raw_bound"] = std::numeric_limits<double>::infinity();
        r.flags.push_back("vacuous: clamped to 1");
        r.bound = 1.0;
        return r;
    }
    const double rad = 12.0 / m * k * (1.0 - std::log(u));
    r.quantities["rademacher"] = rad;
    detail::finish(r, empirical_margin_risk + 2.0 * rad + std::sqrt(lid / (2.0 * m)));
    return r;
}

inline double width_constant(const std::vector<int>& widths) {
    require(!widths.empty(), "need layer widths");
    const double n = *std::max_element(widths.begin(), widths.end());
    return std::sqrt(std::log(2.0 * n * n));
}

inline BoundReport bartlett_bound(const NormProfile& norms, const std::vector<int>& widths, double x_norm_f, double gamma,
                                  int m, double delta, double empirical_margin_risk = 0.0) {
    for (std::size_t l = 0; l < norms.spectral.size(); ++l)
        require(norms.spectral[l] > 0 && norms.l21[l] > 0, "all layer norms must be positive");
    BoundReport r = bartlett_from_complexity(spectral_complexity(norms.spectral, norms.l21), width_constant(widths),
                                             x_norm_f, gamma, m, delta, empirical_margin_risk);
    r.inputs["max_width"] = *std::max_element(widths.begin(), widths.end());
    return r;
}

struct GridChoice {
    std::vector<int> i_star, j_star;
    std::vector<double> s_star, b_star;
    double delta_star = 0.0;
    double log_inv_delta_star = 0.0;
};

// Grid s_l(i) = i / L, b_l(j) = j / L; L is the number of hidden layers (at least 1).
inline double grid_delta(double delta, const std::vector<int>& i, const std::vector<int>& j) {
    double log_den = 0.0;
    for (std::size_t l = 0; l < i.size(); ++l)
        log_den += std::log(double(i[l])) + std::log(i[l] + 1.0) + std::log(double(j[l])) + std::log(j[l] + 1.0);
    return delta * std::exp(-log_den);
}

inline GridChoice a_posteriori_grid(const NormProfile& norms, double delta, int L) {
    require(L >= 1, "grid needs L >= 1");
    require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
    GridChoice g;
    double log_den = 0.0;
    for (int l = 0; l < norms.layers(); ++l) {
        require(std::isfinite(norms.spectral[l]) && std::isfinite(norms.l21[l]), "norms must be finite");
        int i = static_cast<int>(std::floor(norms.spectral[l] * L)) + 1;
        int j = static_cast<int>(std::floor(norms.l21[l] * L)) + 1;
        g.i_star.push_back(i);
        g.j_star.push_back(j);
        g.s_star.push_back(double(i) / L);
        g.b_star.push_back(double(j) / L);
        log_den += std::log(double(i)) + std::log(i + 1.0) + std::log(double(j)) + std::log(j + 1.0);
    }
    g.log_inv_delta_star = std::log(1.0 / delta) + log_den;
    g.delta_star = std::exp(-g.log_inv_delta_star);
    return g;
}

// Spectral margin bound valid for the learned weights: complexity at the grid point, union-bound penalty.
inline BoundReport bartlett_a_posteriori(const WeightSet& w, const std::vector<int>& widths, double x_norm_f,
                                         double gamma, int m, double delta, double empirical_margin_risk = 0.0) {
    NormProfile np = norm_profile(w);
    const int L = std::max(1, np.layers() - 1);
    GridChoice g = a_posteriori_grid(np, delta, L);
    BoundReport r = bartlett_from_complexity(spectral_complexity(g.s_star, g.b_star), width_constant(widths), x_norm_f,
                                             gamma, m, delta, empirical_margin_risk, g.log_inv_delta_star);
    r.quantities["complexity_at_weights"] = spectral_complexity(np.spectral, np.l21);
    for (std::size_t l = 0; l < g.i_star.size(); ++l) {
        r.quantities["i_star_" + std::to_string(l)] = g.i_star[l];
        r.quantities["j_star_" + std::to_string(l)] = g.j_star[l];
    }
    return r;
}

inline double neyshabur_complexity(const NormProfile& p) {
    double prod = 1.0, ratio = 0.0;
    for (int l = 0; l < p.layers(); ++l) {
        if (p.spectral[l] == 0.0) throw DomainError("layer " + std::to_string(l) + " has zero spectral norm");
        prod *= p.spectral[l];
        ratio += p.frobenius[l] * p.frobenius[l] / (p.spectral[l] * p.spectral[l]);
    }
    return prod * std::sqrt(ratio);
}

inline BoundReport neyshabur_from_complexity(double R, double B, double gamma, double m, double delta, int L, int n,
                                             double empirical_margin_risk = 0.0) {
    require(gamma > 0 && B > 0, "gamma and B must be positive");
    require(m >= 1 && L >= 1 && n >= 1, "m, L, n must be positive");
    require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
    BoundReport r;
    r.family = "neyshabur";
    r.inputs = {{"m", m}, {"delta", delta}, {"gamma", gamma}, {"B", B}, {"L", L}, {"n", n}};
    const double e4 = std::pow(std::numbers::e, 4);
    const double a = std::log(8.0 * L * m / delta) + std::log(m) / (2.0 * L) +
                     8.0 * e4 * std::pow(B * R / gamma, 2) * L * L * n * std::log(2.0 * L * n);
    const double gap = std::sqrt(a / (2.0 * m - 1.0));
    r.quantities = {{"complexity", R}, {"gap", gap}, {"empirical_margin_risk", empirical_margin_risk}};
    detail::finish(r, empirical_margin_risk + gap);
    return r;
}

inline BoundReport neyshabur_bound(const WeightSet& w, double gamma, double B, int m, double delta,
                                   double empirical_margin_risk = 0.0) {
    require(!w.empty(), "need weights");
    int n = 0;
    for (const auto& W : w) n = std::max<int>(n, std::max<int>(W.rows(), W.cols()));
    return neyshabur_from_complexity(neyshabur_complexity(norm_profile(w)), B, gamma, m, delta,
                                     static_cast<int>(w.size()), n, empirical_margin_risk);
}

inline double pacbayes_mcallester(double kl, double m, double delta) {
    if (kl < 0) throw DomainError("KL must be non-negative");
    require(m >= 1, "m must be at least 1");
    require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
    return std::sqrt((std::log(4.0 * m / delta) + kl) / (2.0 * m - 1.0));
}

// Q = N(mu, diag(exp lambda)), P = N(prior_mean, exp(prior_logvar) I).
struct GaussianPosterior {
    WeightSet mean, logvar, prior_mean;
    double prior_logvar = 0.0;

    void validate() const {
        require(mean.size() == logvar.size() && mean.size() == prior_mean.size(), "posterior shapes differ");
        for (std::size_t l = 0; l < mean.size(); ++l) {
            require(mean[l].rows() == logvar[l].rows() && mean[l].cols() == logvar[l].cols(), "posterior shapes differ");
            require(mean[l].rows() == prior_mean[l].rows() && mean[l].cols() == prior_mean[l].cols(),
                    "posterior shapes differ");
            require(mean[l].allFinite() && logvar[l].allFinite() && prior_mean[l].allFinite(), "non-finite posterior");
        }
        require(std::isfinite(prior_logvar), "non-finite prior log-variance");
    }

    WeightSet sample(std::uint64_t seed) const {
        Rng rng = make_rng(seed);
        WeightSet w = mean;
        for (std::size_t l = 0; l < w.size(); ++l)
            w[l] += (0.5 * logvar[l].array()).exp().matrix().cwiseProduct(gaussian_matrix(w[l].rows(), w[l].cols(), 1.0, rng));
        return w;
    }
};

inline GaussianPosterior isotropic_posterior(const WeightSet& mean, const WeightSet& prior_mean, double logvar) {
    GaussianPosterior q{mean, {}, prior_mean, logvar};
    for (const auto& W : mean) q.logvar.push_back(Mat::Constant(W.rows(), W.cols(), logvar));
    return q;
}

inline double gaussian_kl(const GaussianPosterior& q) {
    q.validate();
    double tr = 0.0, dist = 0.0, sum_lambda = 0.0, d = 0.0;
    for (std::size_t l = 0; l < q.mean.size(); ++l) {
        tr += q.logvar[l].array().exp().sum();
        dist += (q.mean[l] - q.prior_mean[l]).squaredNorm();
        sum_lambda += q.logvar[l].sum();
        d += q.mean[l].size();
    }
    return 0.5 * (std::exp(-q.prior_logvar) * (tr + dist) + d * q.prior_logvar - sum_lambda - d);
}

struct MarginStats {
    std::vector<double> margins;
    double hard_risk = 0.0;  // fraction with y f(x) < gamma
    double ramp_loss = 0.0;
    double gamma = 0.0;
};

inline void require_binary(const Vec& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 1.0 && y(i) != -1.0) throw DomainError("labels must be +1 or -1");
}

inline double ramp(double yz, double gamma) {
    if (yz <= 0) return 1.0;
    if (yz >= gamma) return 0.0;
    return 1.0 - yz / gamma;
}

inline MarginStats margin_stats(const NetConfig& cfg, const WeightSet& w, const Mat& X, const Vec& y, double gamma) {
    require(cfg.widths.back() == 1, "margins need a scalar output");
    require(gamma >= 0, "gamma must be non-negative");
    require(X.cols() == y.size(), "one label per column of X");
    require_binary(y);
    Mat out = forward_batch(cfg, w, X);
    MarginStats s;
    s.gamma = gamma;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double yz = y(i) * out(0, i);
        s.margins.push_back(yz);
        s.hard_risk += yz < gamma;
        s.ramp_loss += ramp(yz, gamma);
    }
    s.hard_risk /= double(y.size());
    s.ramp_loss /= double(y.size());
    return s;
}

// PAC-Bayes bound for a Gaussian posterior; the empirical 0/1 risk of Q is estimated by sampling.
inline BoundReport pacbayes_posterior_bound(const NetConfig& cfg, const GaussianPosterior& q, const Mat& X,
                                            const Vec& y, double delta, int samples = 256, std::uint64_t seed = 0) {
    q.validate();
    require(samples >= 2, "need at least two posterior samples");
    std::vector<double> risks(samples);
    parallel_for(samples, [&](std::size_t k) { risks[k] = margin_stats(cfg, q.sample(seed + k), X, y, 0.0).hard_risk; });
    MeanSe r = mean_se(risks);
    const double kl = gaussian_kl(q);
    BoundReport rep;
    rep.family = "pacbayes";
    rep.inputs = {{"m", double(y.size())}, {"delta", delta}, {"samples", samples}};
    const double gap = pacbayes_mcallester(kl, y.size(), delta);
    rep.quantities = {{"kl", kl}, {"empirical_risk", r.mean}, {"empirical_risk_se", r.se}, {"gap", gap}};
    detail::finish(rep, r.mean + gap);
    return rep;
}

inline double code_length_kl(int code_bits, double mass, double Z = 1.0) {
    require(code_bits >= 1, "code length must be at least 1");
    require(Z > 0, "Z must be positive");
    if (mass <= 0.0) throw DomainError("mass function vanishes at the code length");
    require(mass <= 1.0, "mass must be a probability");
    return std::log(Z) + code_bits * std::log(2.0) - std::log(mass);
}

// Naive size in bits of a pruned and quantized net: k nonzeros, each an index and a codebook entry, plus the codebook.
inline double compressed_size_bits(double k, double dim_theta, double r) {
    require(k >= 0 && dim_theta >= 1 && r >= 1, "bad compression sizes");
    return k * (std::log2(dim_theta) + std::log2(r)) + 32.0 * r;
}

// ---- bound optimization over diagonal Gaussian posteriors ----

struct DrOptions {
    double b = 100.0, c = 0.1, delta = 0.05;
    int steps = 200;
    double lr = 0.1;
    int noise_samples = 16;  // fixed reparameterization draws: the objective is deterministic
    int risk_samples = 256;
    std::uint64_t seed = 0;
};

struct DrResult {
    std::vector<double> objective;  // per iteration, starting with the initial value
    GaussianPosterior posterior;    // prior log-variance rounded to the grid
    double lambda_star_continuous = 0.0;
    int j = 1;
    double objective_before_rounding = 0.0, objective_after_rounding = 0.0;
    BoundReport report;
};

inline double dr_grid_lambda(int j, double b, double c) { return std::log(c) - j / b; }

namespace detail {

struct DrState {
    WeightSet mu, lambda;
    double lambda_star;
};

inline double dr_log_term(double m, double delta, double j) {
    return std::log(2.0 * std::numbers::pi * std::numbers::pi * m * j * j / (3.0 * delta));
}

struct DrEval {
    double value = std::numeric_limits<double>::infinity();
    WeightSet g_mu, g_lambda;
    double g_lambda_star = 0.0;
};

inline DrEval dr_eval(const NetConfig& cfg, const DrState& z, const WeightSet& prior_mean, const Mat& X, const Mat& Y,
                      const std::vector<WeightSet>& eps, const DrOptions& o, bool grad) {
    DrEval e;
    const double m = static_cast<double>(X.cols());
    double j = o.b * (std::log(o.c) - z.lambda_star);
    if (!(j >= 1.0 - 1e-9)) return e;
    j = std::max(j, 1.0);  // grid points carry rounding error
    GaussianPosterior q{z.mu, z.lambda, prior_mean, z.lambda_star};
    const double kl = gaussian_kl(q);
    const double a = dr_log_term(m, o.delta, j) + kl;
    if (!(a > 0) || !std::isfinite(a)) return e;
    const double ln2 = std::log(2.0);
    const std::size_t K = eps.size();
    std::vector<double> losses(K);
    std::vector<WeightSet> gm(K), gl(K);
    parallel_for(K, [&](std::size_t k) {
        WeightSet th = z.mu;
        std::vector<Mat> sd(th.size());
        for (std::size_t l = 0; l < th.size(); ++l) {
            sd[l] = (0.5 * z.lambda[l].array()).exp().matrix();
            th[l] += sd[l].cwiseProduct(eps[k][l]);
        }
        losses[k] = network_loss(cfg, th, X, Y, LossKind::logistic) / ln2;
        if (grad) {
            gm[k] = network_gradient(cfg, th, X, Y, LossKind::logistic);
            gl[k].resize(th.size());
            for (std::size_t l = 0; l < th.size(); ++l) {
                gm[k][l] /= ln2;
                gl[k][l] = 0.5 * gm[k][l].cwiseProduct(eps[k][l]).cwiseProduct(sd[l]);
            }
        }
    });
    double surrogate = 0.0;
    for (double v : losses) surrogate += v / K;
    const double gap = std::sqrt(a / (2.0 * m - 1.0));
    e.value = surrogate + gap;
    if (!std::isfinite(e.value)) {
        e.value = std::numeric_limits<double>::infinity();
        return e;
    }
    if (!grad) return e;
    const double dgap = 1.0 / (2.0 * std::sqrt(a * (2.0 * m - 1.0)));  // d gap / d a
    const double ipv = std::exp(-z.lambda_star);
    double tr = 0.0, dist = 0.0, d = 0.0;
    e.g_mu.resize(z.mu.size());
    e.g_lambda.resize(z.mu.size());
    for (std::size_t l = 0; l < z.mu.size(); ++l) {
        Mat diff = z.mu[l] - prior_mean[l];
        Mat var = z.lambda[l].array().exp().matrix();
        tr += var.sum();
        dist += diff.squaredNorm();
        d += diff.size();
        e.g_mu[l] = dgap * ipv * diff;
        e.g_lambda[l] = dgap * 0.5 * (ipv * var.array() - 1.0).matrix();
        for (std::size_t k = 0; k < K; ++k) {
            e.g_mu[l] += gm[k][l] / double(K);
            e.g_lambda[l] += gl[k][l] / double(K);
        }
    }
    const double dkl = 0.5 * (-ipv * (tr + dist) + d);
    e.g_lambda_star = dgap * (dkl - 2.0 * o.b / j);
    return e;
}

inline DrState dr_step(const DrState& z, const DrEval& g, double t) {
    DrState n = z;
    for (std::size_t l = 0; l < z.mu.size(); ++l) {
        n.mu[l] -= t * g.g_mu[l];
        n.lambda[l] -= t * g.g_lambda[l];
    }
    n.lambda_star -= t * g.g_lambda_star;
    return n;
}

inline double grad_sq(const DrEval& g) {
    double s = g.g_lambda_star * g.g_lambda_star;
    for (std::size_t l = 0; l < g.g_mu.size(); ++l) s += g.g_mu[l].squaredNorm() + g.g_lambda[l].squaredNorm();
    return s;
}

}  // namespace detail

// Minimizes surrogate risk + PAC-Bayes gap over (mu, lambda, prior log-variance) with backtracking GD,
// then rounds the prior log-variance to the grid log c - j / b and recomputes the bound there.
inline DrResult dziugaite_roy_optimize(const NetConfig& cfg, const GaussianPosterior& init, const Mat& X, const Vec& y,
                                       const DrOptions& o = {}) {
    init.validate();
    require(o.b > 0 && o.c > 0, "b and c must be positive");
    require(o.steps >= 0 && o.noise_samples >= 1, "bad optimization sizes");
    require_binary(y);
    const Mat Y = y.transpose();
    std::vector<WeightSet> eps(o.noise_samples);
    for (int k = 0; k < o.noise_samples; ++k) {
        Rng rng = make_rng(o.seed + 7919ULL * (k + 1));
        for (const auto& W : init.mean) eps[k].push_back(gaussian_matrix(W.rows(), W.cols(), 1.0, rng));
    }
    detail::DrState z{init.mean, init.logvar, init.prior_logvar};
    DrResult res;
    auto cur = detail::dr_eval(cfg, z, init.prior_mean, X, Y, eps, o, true);
    if (!std::isfinite(cur.value)) throw NumericalError("non-finite objective at the initial posterior");
    res.objective.push_back(cur.value);
    double t = o.lr;
    for (int it = 0; it < o.steps; ++it) {
        const double gs = detail::grad_sq(cur);
        bool moved = false;
        for (int h = 0; h < 60 && gs > 0; ++h, t *= 0.5) {
            auto next = detail::dr_step(z, cur, t);
            auto val = detail::dr_eval(cfg, next, init.prior_mean, X, Y, eps, o, false);
            if (val.value <= cur.value - 1e-4 * t * gs) {
                z = std::move(next);
                cur = detail::dr_eval(cfg, z, init.prior_mean, X, Y, eps, o, true);
                moved = true;
                t *= 2.0;
                break;
            }
        }
        res.objective.push_back(cur.value);
        if (!moved) t = o.lr;
    }
    res.objective_before_rounding = cur.value;
    res.lambda_star_continuous = z.lambda_star;
    res.j = std::max(1, static_cast<int>(std::lround(o.b * (std::log(o.c) - z.lambda_star))));
    z.lambda_star = dr_grid_lambda(res.j, o.b, o.c);
    res.objective_after_rounding = detail::dr_eval(cfg, z, init.prior_mean, X, Y, eps, o, false).value;
    res.posterior = GaussianPosterior{z.mu, z.lambda, init.prior_mean, z.lambda_star};
    const double delta_j = 6.0 * o.delta / (std::numbers::pi * std::numbers::pi * res.j * res.j);
    res.report = pacbayes_posterior_bound(cfg, res.posterior, X, y, delta_j, o.risk_samples, o.seed);
    res.report.family = "dziugaite_roy";
    res.report.inputs["b"] = o.b;
    res.report.inputs["c"] = o.c;
    res.report.inputs["delta_total"] = o.delta;
    res.report.quantities["j"] = res.j;
    res.report.quantities["lambda_star"] = z.lambda_star;
    res.report.quantities["rounding_change"] = res.objective_after_rounding - res.objective_before_rounding;
    res.report.quantities["objective_final"] = res.objective_before_rounding;
    return res;
}

// ---- property checks shared by tests and the acceptance binary ----

struct MonotonicityReport {
    int checks = 0;
    std::vector<std::string> violations;
};

inline MonotonicityReport monotonicity_suite(int grids, std::uint64_t seed) {
    MonotonicityReport rep;
    auto check = [&](bool ok, const std::string& what) {
        ++rep.checks;
        if (!ok) rep.violations.push_back(what);
    };
    const double tol = 1e-12;
    for (int g = 0; g < grids; ++g) {
        Rng rng = make_rng(seed + g);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const double m = std::round(std::exp(std::log(100.0) + U(rng) * std::log(1000.0)));
        const double delta = 0.001 + 0.4 * U(rng), gamma = 0.1 + 10 * U(rng);
        const double R = 0.05 + 5 * U(rng), kl = 100 * U(rng);
        const double d = std::floor(1 + 40 * U(rng));
        const std::string tag = " (grid " + std::to_string(g) + ")";

        auto hoef = [](double m, double dl) { return hoeffding_eps(m, dl); };
        check(hoef(1.5 * m, delta) <= hoef(m, delta) + tol, "hoeffding m" + tag);
        check(hoef(m, 1.5 * delta) <= hoef(m, delta) + tol, "hoeffding delta" + tag);

        check(vc_rademacher(1.5 * m, d) <= vc_rademacher(m, d) + tol, "vc m" + tag);
        check(vc_rademacher(m, d + 1) >= vc_rademacher(m, d) - tol, "vc d" + tag);

        auto bart = [](double R, double gm, double m, double dl) {
            return bartlett_from_complexity(R, 2.0, std::sqrt(m), gm, m, dl).bound;
        };
        const double b0 = bart(R, gamma, m, delta);
        check(bart(R, gamma, 1.5 * m, delta) <= b0 + tol, "bartlett m" + tag);
        check(bart(1.5 * R, gamma, m, delta) >= b0 - tol, "bartlett complexity" + tag);
        check(bart(R, 1.5 * gamma, m, delta) <= b0 + tol, "bartlett gamma" + tag);
        check(bart(R, gamma, m, 1.5 * delta) <= b0 + tol, "bartlett delta" + tag);

        auto ney = [](double R, double gm, double m, double dl) {
            return neyshabur_from_complexity(R, 1.0, gm, m, dl, 2, 16).quantities.at("raw_bound");
        };
        const double n0 = ney(R / 50, gamma, m, delta);
        check(ney(R / 50, gamma, 1.5 * m, delta) <= n0 + tol, "neyshabur m" + tag);
        check(ney(1.5 * R / 50, gamma, m, delta) >= n0 - tol, "neyshabur complexity" + tag);
        check(ney(R / 50, 1.5 * gamma, m, delta) <= n0 + tol, "neyshabur gamma" + tag);
        check(ney(R / 50, gamma, m, 1.5 * delta) <= n0 + tol, "neyshabur delta" + tag);

        const double p0 = pacbayes_mcallester(kl, m, delta);
        check(pacbayes_mcallester(kl, 1.5 * m, delta) <= p0 + tol, "mcallester m" + tag);
        check(pacbayes_mcallester(kl + 1, m, delta) >= p0 - tol, "mcallester kl" + tag);
        check(pacbayes_mcallester(kl, m, 1.5 * delta) <= p0 + tol, "mcallester delta" + tag);
    }
    return rep;
}

struct CoverageReport {
    double eps = 0.0;
    double violation_fraction = 0.0;  // trials where some class member violates the gap
    double pair_fraction = 0.0;       // over (member, trial) pairs
    double allowed = 0.0;             // delta plus the one-sided 99% allowance
};

// Finite class of threshold predictors h_t(x) = [x > t] on x ~ U(0, 1) with labels [x > 1/2]: R(h_t) = |t - 1/2|.
inline CoverageReport coverage_simulation(int classes, int m, double delta, int trials, std::uint64_t seed) {
    require(classes >= 1 && m >= 1 && trials >= 1, "bad coverage sizes");
    CoverageReport rep;
    rep.eps = hoeffding_eps(m, delta / classes);
    std::vector<double> t(classes);
    {
        Rng rng = make_rng(seed);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (auto& v : t) v = U(rng);
    }
    std::vector<int> any(trials, 0), pairs(trials, 0);
    parallel_for(trials, [&](std::size_t k) {
        Rng rng = make_rng(seed + 1 + k);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::vector<double> xs(m);
        for (auto& x : xs) x = U(rng);
        for (int c = 0; c < classes; ++c) {
            int err = 0;
            for (double x : xs) err += (x > t[c]) != (x > 0.5);
            const double gap = std::abs(t[c] - 0.5) - double(err) / m;
            if (gap > rep.eps) {
                any[k] = 1;
                ++pairs[k];
            }
        }
    });
    rep.violation_fraction = std::accumulate(any.begin(), any.end(), 0.0) / trials;
    rep.pair_fraction = std::accumulate(pairs.begin(), pairs.end(), 0.0) / (double(trials) * classes);
    rep.allowed = delta + 2.326 * std::sqrt(delta * (1 - delta) / trials);
    return rep;
}

// ---- data ----

struct Dataset {
    Mat X;  // d x m
    Vec y;
};

// CSV with header y,x1,...,xd.
inline Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DomainError("dataset: empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) header.push_back(f);
    }
    if (header.empty() || header[0] != "y") throw DomainError("dataset: header must start with y");
    const int d = static_cast<int>(header.size()) - 1;
    require(d >= 1, "dataset: need at least one feature");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f;
        std::vector<double> r;
        while (std::getline(ss, f, ',')) {
            try {
                r.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw DomainError("dataset: bad number '" + f + "'");
            }
        }
        if (static_cast<int>(r.size()) != d + 1) throw DomainError("dataset: row has wrong number of fields");
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), "dataset: no rows");
    Dataset ds{Mat(d, rows.size()), Vec(rows.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ds.y(i) = rows[i][0];
        for (int k = 0; k < d; ++k) ds.X(k, i) = rows[i][k + 1];
    }
    return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open dataset " + path);
    return read_dataset_csv(f);
}

// Two Gaussian blobs in the plane with labels +-1, a small separable-ish task.
inline Dataset toy_2d(int m, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    Dataset ds{Mat(2, m), Vec(m)};
    for (int i = 0; i < m; ++i) {
        const double lab = i % 2 ? 1.0 : -1.0;
        ds.y(i) = lab;
        ds.X(0, i) = 1.5 * lab + 0.7 * N(rng);
        ds.X(1, i) = 0.5 * lab + 0.7 * N(rng);
    }
    return ds;
}

}  // namespace dltl
