#pragma once

#include "dltl/core.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace dltl {

struct Activation {
    enum class Kind { linear, relu, leaky_relu, tanh };

    Kind kind = Kind::linear;
    double alpha = 0.0;  // leaky slope

    static Activation linear() { return {Kind::linear, 0.0}; }
    static Activation relu() { return {Kind::relu, 0.0}; }
    static Activation tanh() { return {Kind::tanh, 0.0}; }
    static Activation leaky_relu(double a) {
        require(a > 0.0 && a < 1.0, "leaky_relu slope must lie in (0,1)");
        return {Kind::leaky_relu, a};
    }

    double value(double z) const {
        switch (kind) {
            case Kind::linear: return z;
            case Kind::relu: return z > 0 ? z : 0.0;
            case Kind::leaky_relu: return z > 0 ? z : alpha * z;
            case Kind::tanh: return std::tanh(z);
        }
        return 0.0;
    }

    // Left value at the kink.
    double deriv(double z) const {
        switch (kind) {
            case Kind::linear: return 1.0;
            case Kind::relu: return z > 0 ? 1.0 : 0.0;
            case Kind::leaky_relu: return z > 0 ? 1.0 : alpha;
            case Kind::tanh: {
                double t = std::tanh(z);
                return 1.0 - t * t;
            }
        }
        return 0.0;
    }

    // Second derivative away from kinks.
    double deriv2(double z) const {
        if (kind == Kind::tanh) {
            double t = std::tanh(z);
            return -2.0 * t * (1.0 - t * t);
        }
        return 0.0;
    }

    bool invertible() const { return kind != Kind::relu; }

    double inverse(double y) const {
        switch (kind) {
            case Kind::linear: return y;
            case Kind::leaky_relu: return y > 0 ? y : y / alpha;
            case Kind::tanh:
                if (!(std::abs(y) < 1.0)) throw DomainError("tanh inverse outside (-1,1)");
                return std::atanh(y);
            case Kind::relu: break;
        }
        throw DomainError("relu has no inverse");
    }

    // Positively homogeneous of degree one: phi(cz) = c phi(z) for c > 0.
    bool homogeneous() const { return kind != Kind::tanh; }

    Mat apply(const Mat& z) const { return z.unaryExpr([this](double v) { return value(v); }); }
    Mat apply_deriv(const Mat& z) const { return z.unaryExpr([this](double v) { return deriv(v); }); }
    Mat apply_inverse(const Mat& z) const { return z.unaryExpr([this](double v) { return inverse(v); }); }

    std::string name() const {
        switch (kind) {
            case Kind::linear: return "linear";
            case Kind::relu: return "relu";
            case Kind::tanh: return "tanh";
            case Kind::leaky_relu: {
                char buf[64];
                std::snprintf(buf, sizeof buf, "leaky_relu:%.17g", alpha);
                return buf;
            }
        }
        return "";
    }

    static Activation parse(const std::string& s) {
        if (s == "linear") return linear();
        if (s == "relu") return relu();
        if (s == "tanh") return tanh();
        const std::string pre = "leaky_relu:";
        if (s.rfind(pre, 0) == 0) {
            std::size_t pos = 0;
            double a = 0;
            try {
                a = std::stod(s.substr(pre.size()), &pos);
            } catch (const std::exception&) {
                throw DomainError("bad leaky_relu slope in '" + s + "'");
            }
            if (pos != s.size() - pre.size()) throw DomainError("bad leaky_relu slope in '" + s + "'");
            return leaky_relu(a);
        }
        throw DomainError("unknown activation '" + s + "'");
    }
};

}  // namespace dltl
