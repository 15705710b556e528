#pragma once

#include "dltl/netcore.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dltl {

enum class LossKind { square, logistic };

inline LossKind parse_loss(const std::string& s) {
    if (s == "square") return LossKind::square;
    if (s == "logistic") return LossKind::logistic;
    throw DomainError("unknown loss '" + s + "' (expected square or logistic)");
}

// Mean over examples (columns). Square: |h - y|^2 / 2. Logistic: sum_k log(1 + exp(-y_k h_k)), y in {-1, 1}.
inline double loss_value(LossKind k, const Mat& H, const Mat& Y) {
    if (H.rows() != Y.rows() || H.cols() != Y.cols()) throw ShapeError("loss: output and label shapes differ");
    const double m = static_cast<double>(H.cols());
    if (k == LossKind::square) return 0.5 * (H - Y).squaredNorm() / m;
    double s = 0.0;
    for (Eigen::Index j = 0; j < H.cols(); ++j)
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
            double z = -Y(i, j) * H(i, j);
            s += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        }
    return s / m;
}

inline Mat loss_gradient(LossKind k, const Mat& H, const Mat& Y) {
    const double m = static_cast<double>(H.cols());
    if (k == LossKind::square) return (H - Y) / m;
    Mat G(H.rows(), H.cols());
    for (Eigen::Index j = 0; j < H.cols(); ++j)
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
            double z = Y(i, j) * H(i, j);
            G(i, j) = -Y(i, j) / (1.0 + std::exp(z)) / m;
        }
    return G;
}

inline double network_loss(const NetConfig& cfg, const WeightSet& w, const Mat& X, const Mat& Y, LossKind k) {
    return loss_value(k, forward_batch(cfg, w, X), Y);
}

// Pre-activations H_1..H_{L+1} and activations X_0..X_L for the columns of X.
inline std::pair<std::vector<Mat>, std::vector<Mat>> forward_trace_batch(const NetConfig& cfg, const WeightSet& w,
                                                                         const Mat& X) {
    std::vector<Mat> H, A{X};
    for (int l = 0; l < cfg.matrices(); ++l) {
        H.push_back(cfg.scale(l) * (w[l] * A.back()));
        if (l + 1 < cfg.matrices()) A.push_back(cfg.act.apply(H.back()));
    }
    return {H, A};
}

// Full-batch gradient descent. Returns the trained weights.
// Gradient of the mean loss with respect to every weight matrix.
inline WeightSet network_gradient(const NetConfig& cfg, const WeightSet& w, const Mat& X, const Mat& Y, LossKind k) {
    check_shapes(cfg, w);
    const int nm = cfg.matrices();
    auto [H, A] = forward_trace_batch(cfg, w, X);
    Mat G = loss_gradient(k, H.back(), Y);
    WeightSet grads(nm);
    for (int l = nm - 1; l >= 0; --l) {
        grads[l] = cfg.scale(l) * G * A[l].transpose();
        if (l > 0) G = (cfg.scale(l) * (w[l].transpose() * G)).cwiseProduct(cfg.act.apply_deriv(H[l - 1]));
    }
    return grads;
}

inline WeightSet train_gd(const NetConfig& cfg, WeightSet w, const Mat& X, const Mat& Y, LossKind k, double eta,
                          int steps) {
    for (int it = 0; it < steps; ++it) {
        WeightSet g = network_gradient(cfg, w, X, Y, k);
        for (std::size_t l = 0; l < w.size(); ++l) w[l] -= eta * g[l];
    }
    return w;
}

struct RankCheck {
    bool full = false;
    double ratio = 0.0;  // smallest / largest singular value
};

inline RankCheck rank_check(const Mat& M, double threshold = 1e-8) {
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& s = svd.singularValues();
    RankCheck r;
    if (s.size() == 0 || s[0] == 0.0) return r;
    r.ratio = s[s.size() - 1] / s[0];
    r.full = r.ratio > threshold;
    return r;
}

// X^dagger with X^dagger X = I (full column rank) and W^dagger with W W^dagger = I (full row rank).
inline Mat left_inverse(const Mat& X) { return (X.transpose() * X).ldlt().solve(X.transpose()); }
inline Mat right_inverse(const Mat& W) { return W.transpose() * (W * W.transpose()).ldlt().solve(Mat::Identity(W.rows(), W.rows())); }

inline void require_reconstructible(const NetConfig& cfg, const WeightSet& w, const Mat& X, double threshold = 1e-8) {
    check_shapes(cfg, w);
    if (!cfg.act.invertible()) throw DomainError("activation " + cfg.act.name() + " is not a bijection of R");
    if (X.rows() != cfg.widths[0]) throw ShapeError("data rows != n_0");
    if (X.cols() > X.rows() || !rank_check(X, threshold).full)
        throw DomainError("data matrix X is not of full column rank");
    for (int l = 1; l < cfg.matrices(); ++l)
        if (w[l].rows() > w[l].cols() || !rank_check(w[l], threshold).full)
            throw DomainError("W_" + std::to_string(l) + " is not of full row rank");
}

// First layer W_0 with H_{L+1}(W_0, W_{1:L}; X) = target. w[0] is ignored.
inline Mat reconstruct_first_layer(const NetConfig& cfg, const WeightSet& w, const Mat& X, const Mat& target) {
    require_reconstructible(cfg, w, X);
    const int nm = cfg.matrices();
    if (target.rows() != cfg.widths.back() || target.cols() != X.cols())
        throw ShapeError("target must be n_{L+1} x m");
    Mat Ht = target;
    for (int l = nm - 1; l >= 1; --l) {
        Mat Xl = right_inverse(cfg.scale(l) * w[l]) * Ht;
        Ht = cfg.act.apply_inverse(Xl);
    }
    return Ht * left_inverse(X) / cfg.scale(0);
}

struct PathPoint {
    int segment = 0;
    double t = 0.0;
    double loss = 0.0;
    bool from_b = false;  // segment built from the B endpoint and traversed in reverse
};

struct PathTrace {
    std::vector<PathPoint> points;
    std::vector<WeightSet> thetas;
    double repair_loss_change_a = 0.0;
    double repair_loss_change_b = 0.0;
    double meeting_loss = 0.0;

    // Largest loss increase over a segment start, measured in construction direction.
    double max_segment_rise() const {
        double worst = 0.0;
        std::size_t i = 0;
        while (i < points.size()) {
            std::size_t j = i;
            while (j < points.size() && points[j].segment == points[i].segment) ++j;
            if (points[i].from_b) {
                double start = points[j - 1].loss;
                for (std::size_t k = i; k < j; ++k) worst = std::max(worst, points[k].loss - start);
            } else {
                double start = points[i].loss;
                for (std::size_t k = i; k < j; ++k) worst = std::max(worst, points[k].loss - start);
            }
            i = j;
        }
        return worst;
    }

    void write_csv(std::ostream& os) const {
        os << "segment,t,loss\n";
        os.precision(17);
        for (const auto& p : points) os << p.segment << ',' << p.t << ',' << p.loss << '\n';
    }
};

struct PathOptions {
    LossKind loss = LossKind::square;
    double epsilon = 1e-6;
    int points_per_segment = 64;
    double rank_threshold = 1e-8;
    std::uint64_t seed = 0;  // for rank repair and subdivision midpoints
    int max_subdivisions = 8;
};

namespace detail {

inline WeightSet lerp(const WeightSet& a, const WeightSet& b, double t) {
    WeightSet r(a.size());
    for (std::size_t l = 0; l < a.size(); ++l) r[l] = (1.0 - t) * a[l] + t * b[l];
    return r;
}

inline bool upper_full_rank(const WeightSet& w, double thr) {
    for (std::size_t l = 1; l < w.size(); ++l)
        if (!rank_check(w[l], thr).full) return false;
    return true;
}

inline WeightSet repair_rank(WeightSet w, double thr, Rng& rng) {
    for (int attempt = 0; attempt < 10 && !upper_full_rank(w, thr); ++attempt)
        for (std::size_t l = 1; l < w.size(); ++l)
            if (!rank_check(w[l], thr).full) {
                double sd = 1e-6 * std::max(w[l].norm(), 1.0) / std::sqrt(double(w[l].size()));
                w[l] += gaussian_matrix(w[l].rows(), w[l].cols(), sd, rng);
            }
    if (!upper_full_rank(w, thr)) throw NumericalError("rank repair failed");
    return w;
}

// W_0(t) joining w[0] (t = 0) to reconstruct_first_layer(w, H_{L+1}) (t = 1) with the output fixed.
// Each hidden matrix moves inside the preimage set of the layer above it:
// X_l(t) = (I - W_l^+ W_l)((1-t) X_l + t X~_l) + W_l^+ H_{l+1}(t).
inline Mat first_layer_bridge(const NetConfig& cfg, const WeightSet& w, const Mat& X, double t) {
    const int nm = cfg.matrices();
    auto f = forward_trace_batch(cfg, w, X);  // f.first = H_1..H_{L+1}, f.second = X_0..X_L
    Mat Ht = f.first.back(), Hs = f.first.back();
    for (int l = nm - 1; l >= 1; --l) {
        Mat Wl = cfg.scale(l) * w[l], Wp = right_inverse(Wl);
        Mat Xt = Wp * Ht;  // reconstruction endpoint at this layer
        Mat proj = Mat::Identity(Wl.cols(), Wl.cols()) - Wp * Wl;
        Mat Xs = proj * ((1.0 - t) * f.second[l] + t * Xt) + Wp * Hs;
        Ht = cfg.act.apply_inverse(Xt);
        Hs = cfg.act.apply_inverse(Xs);
    }
    Mat Xp = left_inverse(X);
    Mat W0 = cfg.scale(0) * w[0];
    return (Hs * Xp + (1.0 - t) * W0 * (Mat::Identity(X.rows(), X.rows()) - X * Xp)) / cfg.scale(0);
}

// Waypoints for the upper layers from `from` to `to`; straight lines, subdivided through a
// random full-rank midpoint whenever a sampled point loses rank.
inline std::vector<WeightSet> upper_waypoints(const NetConfig& cfg, const WeightSet& from, const WeightSet& to,
                                              const PathOptions& opt, Rng& rng, int depth = 0) {
    const int n = opt.points_per_segment;
    for (int k = 0; k < n; ++k) {
        double t = double(k) / (n - 1);
        if (!upper_full_rank(lerp(from, to, t), opt.rank_threshold)) {
            if (depth >= opt.max_subdivisions)
                throw NumericalError("interpolated upper layers lose full row rank at t = " + std::to_string(t));
            WeightSet mid = lerp(from, to, 0.5);
            for (std::size_t l = 1; l < mid.size(); ++l)
                mid[l] += gaussian_matrix(mid[l].rows(), mid[l].cols(), std::max(mid[l].norm(), 1.0) / std::sqrt(double(mid[l].size())), rng);
            auto a = upper_waypoints(cfg, from, mid, opt, rng, depth + 1);
            auto b = upper_waypoints(cfg, mid, to, opt, rng, depth + 1);
            a.insert(a.end(), b.begin() + 1, b.end());
            return a;
        }
    }
    return {from, to};
}

// One side of the path: snap W_0, move the upper layers at constant output, descend in output space.
// Returns the segments in construction order.
inline std::vector<std::vector<WeightSet>> build_side(const NetConfig& cfg, const WeightSet& start,
                                                      const WeightSet& upper_end, const Mat& X, const Mat& target,
                                                      const PathOptions& opt, Rng& rng) {
    const int n = opt.points_per_segment;
    auto grid = [&](int k) { return double(k) / (n - 1); };
    std::vector<std::vector<WeightSet>> segs;
    const Mat H0 = forward_batch(cfg, start, X);

    // 1. W_0 to the reconstructed first layer at fixed upper layers and fixed output
    WeightSet snapped = start;
    snapped[0] = reconstruct_first_layer(cfg, start, X, H0);
    std::vector<WeightSet> s1;
    for (int k = 0; k < n; ++k) {
        WeightSet w = start;
        w[0] = first_layer_bridge(cfg, start, X, grid(k));
        s1.push_back(std::move(w));
    }
    segs.push_back(std::move(s1));

    // 2. upper layers to upper_end, W_0 re-solved so the output stays H0
    auto way = upper_waypoints(cfg, snapped, upper_end, opt, rng);
    std::vector<WeightSet> s2;
    const int legs = static_cast<int>(way.size()) - 1;
    for (int k = 0; k < n; ++k) {
        double t = grid(k) * legs;
        int leg = std::min(static_cast<int>(t), legs - 1);
        WeightSet w = lerp(way[leg], way[leg + 1], t - leg);
        try {
            w[0] = reconstruct_first_layer(cfg, w, X, H0);
        } catch (const DomainError&) {
            throw NumericalError("interpolated upper layers lose full row rank at t = " + std::to_string(grid(k)));
        }
        s2.push_back(std::move(w));
    }
    segs.push_back(std::move(s2));

    // 3. output descent along the straight line H(t) toward the target
    std::vector<WeightSet> s3;
    WeightSet w = segs.back().back();
    for (int k = 0; k < n; ++k) {
        Mat H = (1.0 - grid(k)) * H0 + grid(k) * target;
        w[0] = reconstruct_first_layer(cfg, w, X, H);
        s3.push_back(w);
    }
    segs.push_back(std::move(s3));
    return segs;
}

}  // namespace detail

// Output matrix with loss below epsilon.
inline Mat low_loss_target(LossKind k, const Mat& Y, double epsilon) {
    if (k == LossKind::square) return Y;
    // per-entry loss log(1 + e^{-c}) < epsilon / n_out
    const double per = epsilon / std::max<Eigen::Index>(1, Y.rows());
    const double c = -std::log(std::expm1(per)) + 1.0;
    return c * Y;
}

inline PathTrace constant_loss_path(const NetConfig& cfg, const WeightSet& theta_a, const WeightSet& theta_b,
                                    const Mat& X, const Mat& Y, const PathOptions& opt = {}) {
    require(opt.epsilon > 0.0, "epsilon must be positive");
    require(opt.points_per_segment >= 2, "need at least two points per segment");
    check_shapes(cfg, theta_a);
    check_shapes(cfg, theta_b);
    PathTrace trace;
    auto push = [&](int seg, double t, const WeightSet& w, bool from_b) {
        trace.points.push_back({seg, t, network_loss(cfg, w, X, Y, opt.loss), from_b});
        trace.thetas.push_back(w);
    };
    bool same = true;
    for (int l = 0; l < cfg.matrices(); ++l) same = same && theta_a[l] == theta_b[l];
    if (same) {
        push(0, 0.0, theta_a, false);
        trace.meeting_loss = trace.points[0].loss;
        return trace;
    }

    Rng rng = make_rng(opt.seed);
    if (X.cols() > X.rows() || !rank_check(X, opt.rank_threshold).full)
        throw DomainError("data matrix X is not of full column rank");
    WeightSet a = detail::repair_rank(theta_a, opt.rank_threshold, rng);
    WeightSet b = detail::repair_rank(theta_b, opt.rank_threshold, rng);
    trace.repair_loss_change_a = network_loss(cfg, a, X, Y, opt.loss) - network_loss(cfg, theta_a, X, Y, opt.loss);
    trace.repair_loss_change_b = network_loss(cfg, b, X, Y, opt.loss) - network_loss(cfg, theta_b, X, Y, opt.loss);
    require_reconstructible(cfg, a, X, opt.rank_threshold);

    const Mat target = low_loss_target(opt.loss, Y, opt.epsilon);
    // A moves its upper layers onto B's; B keeps its own, so both sides end at the same point
    auto side_a = detail::build_side(cfg, a, b, X, target, opt, rng);
    auto side_b = detail::build_side(cfg, b, b, X, target, opt, rng);

    const int n = opt.points_per_segment;
    int seg = 0;
    if (a != theta_a) {
        push(seg, 0.0, theta_a, false);
        push(seg++, 1.0, a, false);
    }
    for (auto& s : side_a) {
        for (int k = 0; k < n; ++k) push(seg, double(k) / (n - 1), s[k], false);
        ++seg;
    }
    for (auto it = side_b.rbegin(); it != side_b.rend(); ++it) {
        for (int k = n - 1; k >= 0; --k) push(seg, double(n - 1 - k) / (n - 1), (*it)[k], true);
        ++seg;
    }
    if (b != theta_b) {
        push(seg, 0.0, b, true);
        push(seg, 1.0, theta_b, true);
    }
    trace.meeting_loss = network_loss(cfg, side_b.back().back(), X, Y, opt.loss);
    return trace;
}

}  // namespace dltl
