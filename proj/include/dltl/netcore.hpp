#pragma once

#include "dltl/activation.hpp"
#include "dltl/core.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dltl {

enum class Param { standard, ntk };

struct Init {
    enum class Kind { gaussian, glorot, he, orthogonal };
    Kind kind = Kind::gaussian;
    double sigma_w = 1.0;

    static Init gaussian(double s) { return {Kind::gaussian, s}; }
    static Init glorot() { return {Kind::glorot, 1.0}; }
    static Init he() { return {Kind::he, 1.0}; }
    static Init orthogonal(double s) { return {Kind::orthogonal, s}; }
};

// widths = n_0 (input), n_1..n_L (hidden), n_{L+1} (output)
struct NetConfig {
    std::vector<int> widths;
    Activation act = Activation::linear();
    Param param = Param::standard;
    Init init = Init::gaussian(1.0);

    int hidden() const { return static_cast<int>(widths.size()) - 2; }
    int matrices() const { return static_cast<int>(widths.size()) - 1; }

    void validate() const {
        require(widths.size() >= 2, "need at least input and output widths");
        for (int w : widths) require(w >= 1, "all widths must be >= 1");
        require(init.sigma_w > 0.0, "sigma_w must be positive");
    }

    // Multiplier applied to W_l in the forward pass.
    double scale(int l) const {
        return param == Param::ntk ? init.sigma_w / std::sqrt(static_cast<double>(widths[l])) : 1.0;
    }
};

using WeightSet = std::vector<Mat>;

inline void check_shapes(const NetConfig& cfg, const WeightSet& w) {
    if (static_cast<int>(w.size()) != cfg.matrices())
        throw ShapeError("weight count " + std::to_string(w.size()) + " != " + std::to_string(cfg.matrices()));
    for (int l = 0; l < cfg.matrices(); ++l)
        if (w[l].rows() != cfg.widths[l + 1] || w[l].cols() != cfg.widths[l])
            throw ShapeError("W_" + std::to_string(l) + " has shape " + std::to_string(w[l].rows()) + "x" +
                             std::to_string(w[l].cols()));
}

inline WeightSet init_weights(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = make_rng(seed);
    WeightSet w;
    for (int l = 0; l < cfg.matrices(); ++l) {
        const int in = cfg.widths[l], out = cfg.widths[l + 1];
        const double sw = cfg.init.sigma_w;
        switch (cfg.init.kind) {
            case Init::Kind::gaussian:
                w.push_back(gaussian_matrix(out, in, cfg.param == Param::ntk ? 1.0 : sw / std::sqrt(double(in)), rng));
                break;
            case Init::Kind::glorot:
                w.push_back(gaussian_matrix(out, in, std::sqrt(2.0 / (in + out)), rng));
                break;
            case Init::Kind::he:
                w.push_back(gaussian_matrix(out, in, std::sqrt(2.0 / in), rng));
                break;
            case Init::Kind::orthogonal:
                if (in != out)
                    throw ShapeError("orthogonal init needs square W_" + std::to_string(l) + " (" +
                                     std::to_string(out) + "x" + std::to_string(in) + ")");
                w.push_back((cfg.param == Param::ntk ? 1.0 : sw) * haar_orthogonal(in, rng));
                break;
        }
    }
    return w;
}

struct ForwardTrace {
    Vec x;
    std::vector<Vec> h;     // h[l-1] = h_l, l = 1..L+1
    std::vector<Vec> acts;  // acts[0] = x, acts[l] = x_l = phi(h_l)

    const Vec& output() const { return h.back(); }
};

struct BackwardTrace {
    std::vector<Vec> g;      // g[l-1] = g_l, l = 1..L+1 (B_l in output-seeded mode)
    std::vector<Mat> grads;  // grads[l] = dLoss/dW_l

    const Vec& at(int l) const { return g[l - 1]; }
};

inline ForwardTrace forward(const NetConfig& cfg, const WeightSet& w, const Vec& x) {
    check_shapes(cfg, w);
    if (x.size() != cfg.widths[0])
        throw ShapeError("input dimension " + std::to_string(x.size()) + " != " + std::to_string(cfg.widths[0]));
    ForwardTrace t;
    t.x = x;
    t.acts.push_back(x);
    for (int l = 0; l < cfg.matrices(); ++l) {
        t.h.push_back(cfg.scale(l) * (w[l] * t.acts.back()));
        if (l + 1 < cfg.matrices()) t.acts.push_back(cfg.act.apply(t.h.back()));
    }
    return t;
}

// Outputs for the columns of X.
inline Mat forward_batch(const NetConfig& cfg, const WeightSet& w, const Mat& X) {
    check_shapes(cfg, w);
    if (X.rows() != cfg.widths[0]) throw ShapeError("input rows != n_0");
    Mat a = X;
    for (int l = 0; l < cfg.matrices(); ++l) {
        Mat h = cfg.scale(l) * (w[l] * a);
        a = (l + 1 < cfg.matrices()) ? cfg.act.apply(h) : h;
    }
    return a;
}

inline BackwardTrace backward(const NetConfig& cfg, const WeightSet& w, const ForwardTrace& f, const Vec& seed) {
    const int nm = cfg.matrices();
    if (seed.size() != cfg.widths.back()) throw ShapeError("seed dimension != output width");
    BackwardTrace b;
    b.g.assign(nm, Vec());
    b.grads.assign(nm, Mat());
    b.g[nm - 1] = seed;
    for (int l = nm - 1; l >= 0; --l) {
        b.grads[l] = cfg.scale(l) * b.g[l] * f.acts[l].transpose();
        if (l >= 1) {
            Vec back = cfg.scale(l) * (w[l].transpose() * b.g[l]);
            b.g[l - 1] = back.cwiseProduct(cfg.act.apply_deriv(f.h[l - 1]));
        }
    }
    return b;
}

struct OutputIndex {
    int i = 0;
};

using BackwardSeed = std::variant<Vec, OutputIndex>;

inline std::pair<ForwardTrace, BackwardTrace> forward_backward(const NetConfig& cfg, const WeightSet& w,
                                                               const Vec& x, const BackwardSeed& seed) {
    ForwardTrace f = forward(cfg, w, x);
    Vec s;
    if (const auto* oi = std::get_if<OutputIndex>(&seed)) {
        if (oi->i < 0 || oi->i >= cfg.widths.back()) throw ShapeError("output index out of range");
        s = Vec::Zero(cfg.widths.back());
        s(oi->i) = 1.0;
    } else {
        s = std::get<Vec>(seed);
    }
    BackwardTrace b = backward(cfg, w, f, s);
    return {std::move(f), std::move(b)};
}

// dh_{L+1}/dh_1, shape n_{L+1} x n_1.
inline Mat jacobian(const NetConfig& cfg, const WeightSet& w, const Vec& x) {
    ForwardTrace f = forward(cfg, w, x);
    const int nm = cfg.matrices();
    Mat j = Mat::Identity(cfg.widths.back(), cfg.widths.back());
    for (int l = nm - 1; l >= 1; --l) {
        Mat wl = cfg.scale(l) * w[l];
        Vec d = cfg.act.apply_deriv(f.h[l - 1]);
        j = (j * wl) * d.asDiagonal();
    }
    return j;
}

// Flattened parameter gradient of output coordinate i, layers in order, each column-major.
inline Vec param_gradient(const NetConfig& cfg, const WeightSet& w, const Vec& x, int i = 0) {
    auto [f, b] = forward_backward(cfg, w, x, OutputIndex{i});
    Eigen::Index total = 0;
    for (const auto& g : b.grads) total += g.size();
    Vec out(total);
    Eigen::Index off = 0;
    for (const auto& g : b.grads) {
        out.segment(off, g.size()) = Eigen::Map<const Vec>(g.data(), g.size());
        off += g.size();
    }
    return out;
}

inline Eigen::Index param_count(const NetConfig& cfg) {
    Eigen::Index p = 0;
    for (int l = 0; l < cfg.matrices(); ++l) p += Eigen::Index(cfg.widths[l]) * cfg.widths[l + 1];
    return p;
}

inline Vec flatten(const WeightSet& w) {
    Eigen::Index total = 0;
    for (const auto& m : w) total += m.size();
    Vec out(total);
    Eigen::Index off = 0;
    for (const auto& m : w) {
        out.segment(off, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        off += m.size();
    }
    return out;
}

inline WeightSet unflatten(const NetConfig& cfg, const Vec& theta) {
    require(theta.size() == param_count(cfg), "parameter vector has wrong length");
    WeightSet w;
    Eigen::Index off = 0;
    for (int l = 0; l < cfg.matrices(); ++l) {
        Mat m(cfg.widths[l + 1], cfg.widths[l]);
        m = Eigen::Map<const Mat>(theta.data() + off, m.rows(), m.cols());
        off += m.size();
        w.push_back(std::move(m));
    }
    return w;
}

// ---- weight file ----

inline nlohmann::json weights_to_json(const NetConfig& cfg, const WeightSet& w) {
    check_shapes(cfg, w);
    nlohmann::json j;
    j["version"] = 1;
    j["widths"] = cfg.widths;
    j["activation"] = cfg.act.name();
    j["parameterization"] = cfg.param == Param::ntk ? "ntk" : "standard";
    if (cfg.param == Param::ntk && cfg.init.sigma_w != 1.0) j["sigma_w"] = cfg.init.sigma_w;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& m : w) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::vector<double> row(m.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
            rows.push_back(row);
        }
        layers.push_back(rows);
    }
    j["weights"] = layers;
    return j;
}

inline std::pair<NetConfig, WeightSet> weights_from_json(const nlohmann::json& j) {
    try {
        require(j.at("version").get<int>() == 1, "unsupported weight file version");
        NetConfig cfg;
        cfg.widths = j.at("widths").get<std::vector<int>>();
        cfg.act = Activation::parse(j.at("activation").get<std::string>());
        const auto p = j.at("parameterization").get<std::string>();
        require(p == "standard" || p == "ntk", "unknown parameterization '" + p + "'");
        cfg.param = p == "ntk" ? Param::ntk : Param::standard;
        if (j.contains("sigma_w")) cfg.init.sigma_w = j.at("sigma_w").get<double>();
        cfg.validate();
        WeightSet w;
        for (const auto& layer : j.at("weights")) {
            const std::size_t rows = layer.size();
            const std::size_t cols = rows ? layer[0].size() : 0;
            Mat m(rows, cols);
            for (std::size_t r = 0; r < rows; ++r) {
                if (layer[r].size() != cols) throw ShapeError("ragged weight matrix");
                for (std::size_t c = 0; c < cols; ++c) m(r, c) = layer[r][c].get<double>();
            }
            w.push_back(std::move(m));
        }
        check_shapes(cfg, w);
        return {cfg, w};
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("malformed weight file: ") + e.what());
    }
}

}  // namespace dltl
