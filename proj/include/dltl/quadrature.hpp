#pragma once

#include "dltl/core.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace dltl {

// Nodes and weights for E f(z), z ~ N(0,1).
struct GaussRule {
    Vec nodes;
    Vec weights;
};

namespace detail {

// Golub-Welsch start, then Newton polish on the orthonormal Hermite recurrence.
inline GaussRule build_hermite(int n) {
    Mat jac = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(jac, Eigen::EigenvaluesOnly);
    Vec x = es.eigenvalues();
    Vec w(n);
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    for (int i = 0; i < n; ++i) {
        double z = x(i), pp = 0.0;
        for (int it = 0; it < 8; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x(i) = z;
        w(i) = 2.0 / (pp * pp);  // weight for exp(-x^2)
    }
    GaussRule r;
    r.nodes = std::sqrt(2.0) * x;
    r.weights = w / std::sqrt(std::numbers::pi);
    return r;
}

}  // namespace detail

inline const GaussRule& gauss_hermite(int n) {
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::build_hermite(n)).first;
    return it->second;
}

template <class F>
double gauss_expect(F&& f, int n = 64) {
    const GaussRule& r = gauss_hermite(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.weights(i) * f(r.nodes(i));
    return s;
}

// E f(z1, z2) for independent standard normals on the tensor grid.
template <class F>
double gauss_expect2(F&& f, int n = 64) {
    const GaussRule& r = gauss_hermite(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        double si = 0.0;
        for (int j = 0; j < n; ++j) si += r.weights(j) * f(r.nodes(i), r.nodes(j));
        s += r.weights(i) * si;
    }
    return s;
}

// Gauss-Legendre on [a,b].
template <class F>
double legendre(F&& f, double a, double b) {
    return boost::math::quadrature::gauss<double, 30>::integrate(f, a, b);
}

}  // namespace dltl
