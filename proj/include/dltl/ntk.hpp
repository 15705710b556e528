#pragma once

#include "dltl/meanfield.hpp"
#include "dltl/netcore.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace dltl {

struct KernelGram {
    Mat K;
    std::string tag;

    double asymmetry() const { return (K - K.transpose()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const {
        Mat s = 0.5 * (K + K.transpose());
        return Eigen::SelfAdjointEigenSolver<Mat>(s, Eigen::EigenvaluesOnly).eigenvalues()(0);
    }
};

namespace detail {

// Backward signals d f_a / d h_l (l = 1..L+1) without forming the weight gradients.
inline std::vector<Vec> output_signals(const NetConfig& cfg, const WeightSet& w, const ForwardTrace& f, int a) {
    const int nm = cfg.matrices();
    std::vector<Vec> g(nm);
    g[nm - 1] = Vec::Zero(cfg.widths.back());
    g[nm - 1](a) = 1.0;
    for (int l = nm - 1; l >= 1; --l)
        g[l - 1] = (cfg.scale(l) * (w[l].transpose() * g[l])).cwiseProduct(cfg.act.apply_deriv(f.h[l - 1]));
    return g;
}

}  // namespace detail

// Gram of parameter gradients over the columns of X. For k outputs the matrix is (m k) x (m k)
// with row index i * k + a.
inline KernelGram empirical_ntk(const NetConfig& cfg, const WeightSet& w, const Mat& X, const std::string& t_tag = "0") {
    check_shapes(cfg, w);
    const int m = static_cast<int>(X.cols()), k = cfg.widths.back(), nm = cfg.matrices();
    std::vector<ForwardTrace> fs;
    std::vector<std::vector<std::vector<Vec>>> gs(m);
    for (int i = 0; i < m; ++i) {
        fs.push_back(forward(cfg, w, X.col(i)));
        for (int a = 0; a < k; ++a) gs[i].push_back(detail::output_signals(cfg, w, fs.back(), a));
    }
    KernelGram g{Mat::Zero(m * k, m * k), "empirical_ntk(" + t_tag + ")"};
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j)
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) {
                    double v = 0.0;
                    for (int l = 0; l < nm; ++l) {
                        double s = cfg.scale(l);
                        v += s * s * fs[i].acts[l].dot(fs[j].acts[l]) * gs[i][a][l].dot(gs[j][b][l]);
                    }
                    g.K(i * k + a, j * k + b) = v;
                    g.K(j * k + b, i * k + a) = v;
                }
    return g;
}

struct KernelRecursionState {
    // index l - 1 holds layer l = 1..L+1
    std::vector<double> q_xx, q_xy, q_yy;
    std::vector<double> chi;  // chi_l(x, x') for l = 1..L+1, from the joint law of (h_l(x), h_l(x'))
};

// Infinite-width pre-activation covariances of the two inputs through every layer.
inline KernelRecursionState nngp_recursion(const Vec& x, const Vec& xp, const NetConfig& cfg, int nodes = 64) {
    cfg.validate();
    if (x.size() != cfg.widths[0] || xp.size() != cfg.widths[0]) throw ShapeError("input dimension != n_0");
    const double s2 = cfg.init.sigma_w * cfg.init.sigma_w, n0 = cfg.widths[0];
    KernelRecursionState st;
    double a = s2 * x.squaredNorm() / n0, b = s2 * x.dot(xp) / n0, c = s2 * xp.squaredNorm() / n0;
    const int layers = cfg.matrices();
    for (int l = 1; l <= layers; ++l) {
        st.q_xx.push_back(a);
        st.q_xy.push_back(b);
        st.q_yy.push_back(c);
        double denom = std::sqrt(a * c);
        double rho = denom > 0 ? std::clamp(b / denom, -1.0, 1.0) : 0.0;
        st.chi.push_back(s2 * pair_expect(cfg.act, a, c, rho, Which::dphi_dphi, nodes));
        if (l == layers) break;
        double na = length_map(a, s2, cfg.act, false, nodes).q_next;
        double nc = length_map(c, s2, cfg.act, false, nodes).q_next;
        b = s2 * pair_expect(cfg.act, a, c, rho, Which::phi_phi, nodes);
        a = na;
        c = nc;
    }
    return st;
}

// Theta_0(x, x') = sum_{l=1}^{L+1} q_l prod_{l'=l}^{L} chi_{l'}.
inline double limiting_ntk_entry(const KernelRecursionState& st) {
    const int n = static_cast<int>(st.q_xy.size());
    double theta = 0.0;
    for (int l = 0; l < n; ++l) {
        double prod = 1.0;
        for (int lp = l; lp < n - 1; ++lp) prod *= st.chi[lp];
        theta += st.q_xy[l] * prod;
    }
    return theta;
}

inline KernelGram nngp_gram(const Mat& X, const NetConfig& cfg, int nodes = 64) {
    const int m = static_cast<int>(X.cols());
    KernelGram g{Mat(m, m), "nngp"};
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) g.K(i, j) = g.K(j, i) = nngp_recursion(X.col(i), X.col(j), cfg, nodes).q_xy.back();
    return g;
}

// Scalar limiting kernel; a network with k outputs has this kernel times I_k.
inline KernelGram limiting_ntk(const Mat& X, const NetConfig& cfg, bool last_layer_only = false, int nodes = 64) {
    if (cfg.param != Param::ntk) throw DomainError("limiting_ntk requires the ntk parameterization");
    if (last_layer_only) {
        KernelGram g = nngp_gram(X, cfg, nodes);
        g.tag = "limiting_ntk(last_layer)";
        return g;
    }
    const int m = static_cast<int>(X.cols());
    KernelGram g{Mat(m, m), "limiting_ntk"};
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) g.K(i, j) = g.K(j, i) = limiting_ntk_entry(nngp_recursion(X.col(i), X.col(j), cfg, nodes));
    return g;
}

// Relative Frobenius deviation of the empirical kernel from the limit, median over seeds.
struct KernelDeviation {
    std::vector<double> per_seed;
    double median = 0.0;
};

inline KernelDeviation kernel_deviation(const NetConfig& cfg, const Mat& X, int seeds, std::uint64_t base_seed) {
    require(seeds >= 1, "kernel_deviation: need at least one seed");
    const Mat theta0 = limiting_ntk(X, cfg).K;
    KernelDeviation d;
    d.per_seed.assign(seeds, 0.0);
    parallel_for(seeds, [&](std::size_t s) {
        Mat e = empirical_ntk(cfg, init_weights(cfg, base_seed + s), X).K;
        d.per_seed[s] = (e - theta0).norm() / theta0.norm();
    });
    std::vector<double> v = d.per_seed;
    std::sort(v.begin(), v.end());
    d.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    return d;
}

struct LinearizedSolution {
    Mat gram;   // Theta_0 on the training inputs
    Vec evals;  // ascending
    Mat evecs;
    Vec f0;
    Vec y;
    double eta = 1.0;
    int m = 0;
};

inline LinearizedSolution make_linearized(const Mat& gram, const Vec& f0, const Vec& y, double eta) {
    require(gram.rows() == gram.cols() && gram.rows() == f0.size() && f0.size() == y.size(),
            "make_linearized: gram, f0 and y sizes differ");
    require(eta > 0.0, "make_linearized: eta must be positive");
    LinearizedSolution s;
    s.gram = 0.5 * (gram + gram.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(s.gram);
    s.evals = es.eigenvalues();
    s.evecs = es.eigenvectors();
    if (s.evals(0) <= 1e-10)
        throw NumericalError("train gram is singular: lambda_min = " + std::to_string(s.evals(0)));
    s.f0 = f0;
    s.y = y;
    s.eta = eta;
    s.m = static_cast<int>(y.size());
    return s;
}

// Theta^{-1} (I - exp(-eta Theta t / m)) on the training set; t = nullopt is the limit.
inline Mat linearized_operator(const LinearizedSolution& s, std::optional<double> t) {
    Vec d(s.evals.size());
    for (Eigen::Index i = 0; i < d.size(); ++i)
        d(i) = (t ? -std::expm1(-s.eta * s.evals(i) * *t / s.m) : 1.0) / s.evals(i);
    return s.evecs * d.asDiagonal() * s.evecs.transpose();
}

// Predictions at query points given Theta(x_q, x_train) (q x m) and f_0(x_q).
inline Vec linearized_predict(const LinearizedSolution& s, const Mat& theta_qx, const Vec& f0_q, std::optional<double> t) {
    require(theta_qx.cols() == s.m && theta_qx.rows() == f0_q.size(), "linearized_predict: shape mismatch");
    return f0_q - theta_qx * (linearized_operator(s, t) * (s.f0 - s.y));
}

struct GpMoments {
    Vec mean;
    Mat cov;
};

// Output law at time t when f_0 is a centred GP with covariance K.
inline GpMoments linearized_gp(const LinearizedSolution& s, const Mat& theta_qx, const Mat& K_qx, const Mat& K_qq,
                               const Mat& K_xx, std::optional<double> t) {
    Mat T = theta_qx * linearized_operator(s, t);
    GpMoments g;
    g.mean = T * s.y;
    Mat cross = T * K_qx.transpose();
    g.cov = K_qq - cross - cross.transpose() + T * K_xx * T.transpose();
    return g;
}

inline GpMoments bayes_posterior(const Mat& K_xx, const Vec& y, const Mat& K_qx, const Mat& K_qq) {
    require(K_xx.rows() == y.size() && K_qx.cols() == y.size(), "bayes_posterior: shape mismatch");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (K_xx + K_xx.transpose()));
    if (es.eigenvalues()(0) <= 1e-12)
        throw NumericalError("prior gram is singular: lambda_min = " + std::to_string(es.eigenvalues()(0)));
    Mat inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    GpMoments g;
    g.mean = K_qx * (inv * y);
    g.cov = K_qq - K_qx * inv * K_qx.transpose();
    return g;
}

// E[x_k . x_l 1{w.x_k > 0} 1{w.x_l > 0}] for w ~ N(0, I).
inline Mat h_infinity(const Mat& X) {
    const int m = static_cast<int>(X.cols());
    Mat H(m, m);
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            double ip = X.col(k).dot(X.col(l)), nn = X.col(k).norm() * X.col(l).norm();
            double c = nn > 0 ? std::clamp(ip / nn, -1.0, 1.0) : 0.0;
            H(k, l) = ip * (std::numbers::pi - std::acos(c)) / (2 * std::numbers::pi);
        }
    return H;
}

inline Mat h_infinity_mc(const Mat& X, int samples, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const int m = static_cast<int>(X.cols());
    Mat H = Mat::Zero(m, m), G = X.transpose() * X;
    for (int s = 0; s < samples; ++s) {
        Vec act = ((X.transpose() * gaussian_vector(X.rows(), 1.0, rng)).array() > 0).cast<double>();
        H += (act * act.transpose()).cwiseProduct(G);
    }
    return H / samples;
}

// Gram of the two-layer model at weights W (n x d): (1/n) sum_i 1[w_i.x_k > 0] 1[w_i.x_l > 0] x_k.x_l.
inline Mat h_gram(const Mat& W, const Mat& X) {
    Mat A = ((W * X).array() > 0).cast<double>();  // strict indicator
    return (A.transpose() * A).cwiseProduct(X.transpose() * X) / W.rows();
}

struct DuTrajectory {
    std::vector<double> t, loss, lambda_min, max_displacement, kernel_drift;
    Mat H_inf, H_inf_mc;
    double lambda0 = 0.0;
    double radius_bound = 0.0;  // (2/lambda0) sqrt(m/n) |y - f_0|
};

struct DuOptions {
    double eta = 0.1;
    double T = 20.0;
    int mc_samples = 200000;
    int record_every = 1;
};

// Two-layer relu net f(x) = n^{-1/2} sum a_i relu(w_i.x), a_i uniform on {-1, 1} and fixed, w_i ~ N(0, I).
// Loss |y - f|^2 / 2, GD on the w_i, time t = step * eta.
inline DuTrajectory du_convergence_monitor(const Mat& X, const Vec& y, int n, std::uint64_t seed, const DuOptions& o = {}) {
    const int m = static_cast<int>(X.cols()), d = static_cast<int>(X.rows());
    require(y.size() == m, "du_convergence_monitor: label count != input count");
    require(n >= 1 && o.eta > 0 && o.T >= 0, "du_convergence_monitor: bad width, eta or T");
    for (int k = 0; k < m; ++k) require(X.col(k).norm() <= 1.0 + 1e-12, "inputs must lie in the unit ball");
    require(y.cwiseAbs().maxCoeff() < 1.0, "labels must satisfy |y| < 1");

    Rng rng = make_rng(seed);
    Mat W = gaussian_matrix(n, d, 1.0, rng);
    Vec a(n);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < n; ++i) a(i) = coin(rng) ? 1.0 : -1.0;
    const Mat W0 = W;
    const double rn = 1.0 / std::sqrt(double(n));

    DuTrajectory tr;
    tr.H_inf = h_infinity(X);
    tr.H_inf_mc = h_infinity_mc(X, o.mc_samples, seed + 0x9e3779b9ULL);
    tr.lambda0 = Eigen::SelfAdjointEigenSolver<Mat>(tr.H_inf, Eigen::EigenvaluesOnly).eigenvalues()(0);

    auto outputs = [&](const Mat& Wc) {
        Mat Z = Wc * X;
        return Vec(rn * (Z.array().max(0.0).matrix().transpose() * a));
    };
    const Mat Hstart = h_gram(W0, X);
    auto record = [&](double t, const Vec& u) {
        Mat H = h_gram(W, X);
        tr.t.push_back(t);
        tr.loss.push_back((y - u).squaredNorm());
        tr.lambda_min.push_back(Eigen::SelfAdjointEigenSolver<Mat>(H, Eigen::EigenvaluesOnly).eigenvalues()(0));
        tr.max_displacement.push_back((W - W0).rowwise().norm().maxCoeff());
        tr.kernel_drift.push_back((H - Hstart).norm());
    };
    Vec u = outputs(W);
    tr.radius_bound = 2.0 / tr.lambda0 * std::sqrt(double(m) / n) * (y - u).norm();
    record(0.0, u);
    const int steps = static_cast<int>(std::llround(o.T / o.eta));
    for (int s = 1; s <= steps; ++s) {
        Mat A = ((W * X).array() > 0).cast<double>();  // n x m
        Vec r = u - y;
        // dL/dw_i = n^{-1/2} a_i sum_k r_k 1[w_i.x_k > 0] x_k
        Mat grad = rn * (a.asDiagonal() * (A * r.asDiagonal())) * X.transpose();
        W -= o.eta * grad;
        u = outputs(W);
        if (s % o.record_every == 0 || s == steps) record(s * o.eta, u);
    }
    return tr;
}

struct AlignmentReport {
    Vec lambda;  // descending
    Mat v;
    Vec p;       // v_k . (y - u0)
    std::vector<double> t, curve;

    double predicted(double t) const { return (p.array().square() * (-2.0 * lambda.array() * t).exp()).sum(); }

    // First t where the predicted error falls to frac of its initial value.
    double time_to_fraction(double frac) const {
        const double target = frac * predicted(0.0);
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 200 && predicted(hi) > target; ++i) hi *= 2;
        if (predicted(hi) > target) return std::numeric_limits<double>::infinity();
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            (predicted(mid) > target ? lo : hi) = mid;
        }
        return hi;
    }
};

inline std::vector<double> log_grid(double lo, double hi, int count) {
    require(lo > 0 && hi > lo && count >= 2, "log_grid: need 0 < lo < hi and count >= 2");
    std::vector<double> g;
    for (int i = 0; i < count; ++i) g.push_back(lo * std::pow(hi / lo, double(i) / (count - 1)));
    return g;
}

inline AlignmentReport alignment(const Mat& H, const Vec& y, const Vec& u0, std::vector<double> tgrid = {}) {
    require(H.rows() == H.cols() && H.rows() == y.size() && y.size() == u0.size(), "alignment: shape mismatch");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
    AlignmentReport r;
    r.lambda = es.eigenvalues().reverse();
    r.v = es.eigenvectors().rowwise().reverse();
    r.p = r.v.transpose() * (y - u0);
    r.t = tgrid.empty() ? log_grid(1e-3, 1e3, 61) : std::move(tgrid);
    for (double t : r.t) r.curve.push_back(r.predicted(t));
    return r;
}

}  // namespace dltl
