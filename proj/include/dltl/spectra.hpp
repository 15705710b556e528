#pragma once

#include "dltl/core.hpp"
#include "dltl/netcore.hpp"
#include "dltl/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dltl {

using cplx = std::complex<double>;

struct Atom {
    double x;
    double mass;
};

// A spectral measure: point masses plus an absolutely continuous part given as
// a curve theta -> (x(theta), w(theta)) on [t0, t1], where w dtheta is the mass
// element. Grid densities (from inversion) carry samples instead.
struct Density1D {
    std::string tag;
    std::vector<Atom> atoms;
    std::function<std::pair<double, double>(double)> curve;
    double t0 = 0.0, t1 = 0.0;
    double support_lo = 0.0, support_hi = 0.0;
    std::function<double(double)> pdf;  // closed form of the continuous part, if any

    std::vector<double> grid, values;  // grid form

    bool has_curve() const { return static_cast<bool>(curve); }

    double mass() const {
        double m = 0.0;
        for (const auto& a : atoms) m += a.mass;
        if (has_curve())
            m += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                [&](double t) { return curve(t).second; }, t0, t1, 20, 1e-12);
        if (!grid.empty())
            for (std::size_t i = 0; i + 1 < grid.size(); ++i)
                m += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
        return m;
    }

    // E g(X)
    double expect(const std::function<double(double)>& g) const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.mass * g(a.x);
        if (has_curve())
            s += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                [&](double t) {
                    auto [x, w] = curve(t);
                    return w * g(x);
                },
                t0, t1, 20, 1e-12);
        return s;
    }
};

inline Density1D marchenko_pastur() {
    Density1D d;
    d.tag = "marchenko_pastur";
    // x = 4 sin^2 t removes the inverse square-root singularity at 0
    d.curve = [](double t) {
        double s = std::sin(t), c = std::cos(t);
        return std::pair{4.0 * s * s, 4.0 / std::numbers::pi * c * c};
    };
    d.t0 = 0.0;
    d.t1 = std::numbers::pi / 2;
    d.support_lo = 0.0;
    d.support_hi = 4.0;
    d.pdf = [](double x) { return (x > 0 && x < 4) ? std::sqrt(4.0 / x - 1.0) / (2.0 * std::numbers::pi) : 0.0; };
    return d;
}

inline Density1D dirac(double x) {
    Density1D d;
    d.tag = "dirac";
    d.atoms = {{x, 1.0}};
    d.support_lo = d.support_hi = x;
    return d;
}

// Spectrum of the squared ReLU mask with half the units active.
inline Density1D d_squared_relu() {
    Density1D d;
    d.tag = "d_squared";
    d.atoms = {{0.0, 0.5}, {1.0, 0.5}};
    d.support_lo = 0.0;
    d.support_hi = 1.0;
    return d;
}

// Closed-form Stieltjes transform of the MP law, branch with G ~ 1/z.
inline cplx mp_stieltjes(cplx z) {
    cplx r = std::sqrt(z) * std::sqrt(z - 4.0);
    return (z - r) / (2.0 * z);
}

struct StieltjesToolkit {
    Density1D density;

    cplx G(cplx z) const {
        const Density1D& d = density;
        cplx s = 0.0;
        for (const auto& a : d.atoms) s += a.mass / (z - a.x);
        if (d.has_curve()) {
            if (z.imag() == 0.0 && z.real() > d.support_lo && z.real() < d.support_hi)
                throw DomainError("G evaluated on the support");
            using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
            double re = GK::integrate(
                [&](double t) {
                    auto [x, w] = d.curve(t);
                    return (w / (z - x)).real();
                },
                d.t0, d.t1, 30, 1e-9);
            double im = z.imag() == 0.0 ? 0.0
                                        : GK::integrate(
                                              [&](double t) {
                                                  auto [x, w] = d.curve(t);
                                                  return (w / (z - x)).imag();
                                              },
                                              d.t0, d.t1, 30, 1e-9);
            s += cplx(re, im);
        } else {
            for (const auto& a : d.atoms)
                if (z.imag() == 0.0 && z.real() == a.x) throw DomainError("G evaluated at an atom");
        }
        return s;
    }

    double G(double z) const { return G(cplx(z, 0.0)).real(); }
    double M(double z) const { return z * G(z) - 1.0; }

    // Inverse of a decreasing function on (support_hi, inf).
    double invert_right(const std::function<double(double)>& f, double target, const char* what) const {
        const double top = density.support_hi;
        bool atom_at_top = false;
        for (const auto& a : density.atoms)
            if (a.x == top && a.mass > 0) atom_at_top = true;
        double lo = atom_at_top || !density.has_curve() ? top + 1e-12 * std::max(1.0, std::abs(top)) : top;
        double flo = f(lo);
        if (std::abs(flo - target) <= 1e-12) return lo;
        if (flo < target) {
            if (flo >= target - 1e-9) return lo;
            throw DomainError(std::string(what) + ": value outside the range on the real axis");
        }
        double hi = std::max(2.0 * std::abs(top), 1.0) + top;
        while (f(hi) > target) {
            hi = top + 2.0 * (hi - top);
            if (hi > 1e15) throw DomainError(std::string(what) + ": value too small to invert");
        }
        // monotonicity on a coarse grid before bisecting
        double prev = flo;
        for (int i = 1; i <= 32; ++i) {
            double x = lo + (hi - lo) * i / 32.0, fx = f(x);
            if (fx > prev + 1e-12) throw NumericalError(std::string(what) + " is not monotone on the segment");
            prev = fx;
        }
        std::uintmax_t iters = 200;
        auto r = boost::math::tools::bisect([&](double x) { return f(x) - target; }, lo, hi,
                                            boost::math::tools::eps_tolerance<double>(50), iters);
        return 0.5 * (r.first + r.second);
    }

    double M_inverse(double zeta) const {
        return invert_right([this](double z) { return M(z); }, zeta, "M inverse");
    }
    double G_inverse(double zeta) const {
        return invert_right([this](double z) { return G(z); }, zeta, "G inverse");
    }

    double S(double z) const {
        require(z > 0.0, "S-transform argument must be positive");
        return (1.0 + z) / (z * M_inverse(z));
    }

    double R(double zeta) const {
        require(zeta > 0.0, "R-transform argument must be positive");
        return G_inverse(zeta) - 1.0 / zeta;
    }
};

inline StieltjesToolkit stieltjes_toolkit(const Density1D& d) {
    if (d.has_curve()) {
        double m = d.mass();
        if (std::abs(m - 1.0) > 1e-6) throw DomainError("density is not normalized");
    }
    return StieltjesToolkit{d};
}

struct RTransform {
    StieltjesToolkit tk;
    double operator()(double zeta) const { return tk.R(zeta); }
};

inline RTransform r_transform(const Density1D& d) { return RTransform{stieltjes_toolkit(d)}; }

// ---- product of L gaussian factors ----

struct WishartPoint {
    double lambda;
    double rho;
    double mass;  // rho |d lambda / d phi|
};

inline WishartPoint product_wishart_point(int L, double phi) {
    require(L >= 1, "product_wishart: L must be >= 1");
    const double sp = std::sin(phi), sl = std::sin(L * phi), sl1 = std::sin((L + 1) * phi);
    WishartPoint p;
    p.lambda = std::pow(sl1, L + 1) / (sp * std::pow(sl, L));
    p.rho = sp * sp * std::pow(sl, L - 1) / (std::numbers::pi * std::pow(sl1, L));
    const double bracket = (L + 1.0) * (L + 1.0) / std::tan((L + 1) * phi) - 1.0 / std::tan(phi) -
                           double(L) * L / std::tan(L * phi);
    p.mass = sp * sl1 / (std::numbers::pi * sl) * std::abs(bracket);
    return p;
}

inline double product_wishart_lambda_max(int L) {
    require(L >= 1, "product_wishart: L must be >= 1");
    return std::pow(L + 1.0, L + 1) / std::pow(double(L), L);
}

struct ParamSpectrum {
    int L = 1;
    std::vector<double> phi, lambda, rho;
};

inline ParamSpectrum product_wishart_spectrum(int L, int points = 512) {
    require(L >= 1, "product_wishart_spectrum: L must be >= 1");
    require(points >= 2, "product_wishart_spectrum: need at least two points");
    ParamSpectrum s;
    s.L = L;
    const double a = 1e-8, b = std::numbers::pi / (L + 1) - 1e-8;
    for (int i = 0; i < points; ++i) {
        double phi = a + (b - a) * i / (points - 1);
        auto p = product_wishart_point(L, phi);
        s.phi.push_back(phi);
        s.lambda.push_back(p.lambda);
        s.rho.push_back(p.rho);
    }
    return s;
}

inline Density1D product_wishart_density(int L) {
    Density1D d;
    d.tag = "product_wishart";
    d.curve = [L](double phi) {
        auto p = product_wishart_point(L, phi);
        return std::pair{p.lambda, p.mass};
    };
    d.t0 = 0.0;
    d.t1 = std::numbers::pi / (L + 1);
    d.support_lo = 0.0;
    d.support_hi = product_wishart_lambda_max(L);
    return d;
}

// Quantiles at (i + 1/2)/count of a curve density whose x(theta) is monotone.
inline std::vector<double> curve_quantiles(const Density1D& d, std::size_t count, int panels = 20000) {
    require(d.has_curve() && d.atoms.empty(), "curve_quantiles needs a purely continuous density");
    std::vector<double> xs(panels + 1), cdf(panels + 1, 0.0);
    const double h = (d.t1 - d.t0) / panels;
    for (int i = 0; i <= panels; ++i) xs[i] = d.curve(std::clamp(d.t0 + i * h, d.t0 + 1e-12, d.t1 - 1e-12)).first;
    for (int i = 0; i < panels; ++i)
        cdf[i + 1] = cdf[i] + legendre([&](double t) { return d.curve(t).second; }, d.t0 + i * h, d.t0 + (i + 1) * h);
    const double total = cdf.back();
    const bool increasing = xs.back() > xs.front();
    std::vector<double> q(count);
    for (std::size_t k = 0; k < count; ++k) {
        double p = (k + 0.5) / count;
        // mass measured from the low-x end
        double target = increasing ? p * total : (1.0 - p) * total;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
        std::size_t j = std::clamp<std::size_t>(it - cdf.begin(), 1, panels);
        double f = (target - cdf[j - 1]) / std::max(cdf[j] - cdf[j - 1], 1e-300);
        q[k] = xs[j - 1] + f * (xs[j] - xs[j - 1]);
    }
    if (!increasing) std::reverse(q.begin(), q.end());
    std::sort(q.begin(), q.end());
    return q;
}

inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
    require(a.size() == b.size() && !a.empty(), "wasserstein1 needs equal-size samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / a.size();
}

struct InversionError : NumericalError {
    std::vector<double> eps_values;
    InversionError(const std::string& m, std::vector<double> v) : NumericalError(m), eps_values(std::move(v)) {}
};

// rho(l) = -(1/pi) Im G(l + i eps), Richardson over eps = 1e-2, 1e-3, 1e-4.
inline Density1D invert_stieltjes(const std::function<cplx(cplx)>& G, const std::vector<double>& grid) {
    Density1D d;
    d.tag = "grid";
    d.grid = grid;
    d.values.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double r[3];
        const double eps[3] = {1e-2, 1e-3, 1e-4};
        for (int k = 0; k < 3; ++k) r[k] = -G(cplx(grid[i], eps[k])).imag() / std::numbers::pi;
        double a = (10.0 * r[1] - r[0]) / 9.0, b = (10.0 * r[2] - r[1]) / 9.0;
        double v = (100.0 * b - a) / 99.0;
        if (!std::isfinite(v))
            throw InversionError("Stieltjes inversion did not converge at " + std::to_string(grid[i]),
                                 {r[0], r[1], r[2]});
        if (v < 0.0 && v > -1e-6) v = 0.0;
        d.values[i] = v;
    }
    if (!grid.empty()) {
        d.support_lo = grid.front();
        d.support_hi = grid.back();
    }
    return d;
}

inline double relu_orth_edge(int L) {
    require(L >= 3, "relu_orth_edge: formula needs L >= 3");
    return L * std::pow(double(L) / (L - 1), L - 1);
}

struct EmpiricalSpectrum {
    std::vector<double> eigenvalues;  // sorted, pooled over replicates
    int n = 0, L = 0, replicates = 0;
    std::string init;
};

// Eigenvalues of J J^T. For non-linear activations the masks come from a forward
// pass on x, or on a fresh gaussian input per replicate when x is absent.
inline EmpiricalSpectrum empirical_spectrum(const NetConfig& cfg, const std::optional<Vec>& x, int replicates,
                                            std::uint64_t seed) {
    require(replicates >= 1, "empirical_spectrum: need at least one replicate");
    require(cfg.hidden() >= 1, "empirical_spectrum: need at least one hidden layer");
    std::vector<std::vector<double>> per(replicates);
    parallel_for(replicates, [&](std::size_t r) {
        WeightSet w = init_weights(cfg, seed + r);
        Vec in;
        if (x) {
            in = *x;
        } else {
            Rng rng = make_rng(seed + r + 0x5bd1e995ull);
            in = gaussian_vector(cfg.widths[0], 1.0, rng);
        }
        Mat j = jacobian(cfg, w, in);
        Eigen::SelfAdjointEigenSolver<Mat> es(j * j.transpose(), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
        per[r].assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    });
    EmpiricalSpectrum s;
    for (auto& v : per) s.eigenvalues.insert(s.eigenvalues.end(), v.begin(), v.end());
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
    s.n = cfg.widths[1];
    s.L = cfg.hidden();
    s.replicates = replicates;
    switch (cfg.init.kind) {
        case Init::Kind::gaussian: s.init = "gaussian"; break;
        case Init::Kind::glorot: s.init = "glorot"; break;
        case Init::Kind::he: s.init = "he"; break;
        case Init::Kind::orthogonal: s.init = "orthogonal"; break;
    }
    return s;
}

}  // namespace dltl
