// One line per acceptance criterion: number, PASS/FAIL, wall time, limit, details.
#include "dltl/genbounds.hpp"
#include "dltl/landscape.hpp"
#include "dltl/lindyn.hpp"
#include "dltl/meanfield.hpp"
#include "dltl/ntk.hpp"
#include "dltl/spectra.hpp"
#include "dltl/wick.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

using namespace dltl;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream msg;
    // records a failed condition; the message is kept short
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            if (!ok) msg << "; ";
            msg << what;
            ok = false;
        }
    }
};

std::string fmt(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return b;
}

Mat unit_columns(int d, int m, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Mat X = gaussian_matrix(d, m, 1.0, rng);
    X.colwise().normalize();
    return X;
}

NetConfig net(std::vector<int> widths, Activation act, Init init, Param p = Param::standard) {
    NetConfig c;
    c.widths = std::move(widths);
    c.act = act;
    c.init = init;
    c.param = p;
    return c;
}

void c1(Check& c) {
    double r = chi1(2.0, 1.0, Activation::relu()), l = chi1(1.0, 1.0, Activation::linear());
    c.expect(std::abs(r - 1) <= 1e-10, "relu chi1 " + fmt(r));
    c.expect(std::abs(l - 1) <= 1e-10, "linear chi1 " + fmt(l));
}

void c2(Check& c) {
    const int n = 256, L = 8;
    for (auto [act, s2] : {std::pair{Activation::linear(), 1.0}, std::pair{Activation::relu(), 2.0}}) {
        auto cfg = net(std::vector<int>(L + 2, n), act, Init::gaussian(std::sqrt(s2)));
        auto m = simulate_moments(cfg, Vec::Ones(n), 200, 7);
        // q_1 = s2 for unit inputs and the normalized maps keep it there
        for (std::size_t l = 0; l < m.q.size(); ++l)
            c.expect(std::abs(m.q[l] - s2) <= 3 * m.q_se[l], act.name() + " layer " + std::to_string(l + 1) + " q=" + fmt(m.q[l]));
    }
}

void c3(Check& c) {
    for (int L = 1; L <= 5; ++L) {
        auto d = product_wishart_density(L);
        double mass = d.mass(), mean = d.expect([](double x) { return x; });
        c.expect(std::abs(mass - 1) <= 1e-4, "L=" + std::to_string(L) + " mass " + fmt(mass));
        c.expect(std::abs(mean - 1) <= 1e-4, "L=" + std::to_string(L) + " mean " + fmt(mean));
        double want = std::pow(L + 1.0, L + 1) / std::pow(double(L), L);
        c.expect(std::abs(product_wishart_lambda_max(L) - want) <= 1e-10, "lambda_max L=" + std::to_string(L));
    }
    auto s = product_wishart_spectrum(1, 512);
    auto mp = marchenko_pastur();
    double worst = 0;
    for (std::size_t i = 0; i < s.phi.size(); ++i)
        if (s.lambda[i] > 0) worst = std::max(worst, std::abs(s.rho[i] - mp.pdf(s.lambda[i])) / std::max(1.0, s.rho[i]));
    c.expect(worst <= 1e-8, "MP mismatch " + fmt(worst));
}

void c4(Check& c) {
    auto g = empirical_spectrum(net({256, 256, 256}, Activation::linear(), Init::gaussian(1.0)), std::nullopt, 50, 100);
    double w = wasserstein1(g.eigenvalues, curve_quantiles(marchenko_pastur(), g.eigenvalues.size()));
    c.expect(w <= 0.08, "W1 " + fmt(w));
    auto o = empirical_spectrum(net({256, 256, 256}, Activation::linear(), Init::orthogonal(1.0)), std::nullopt, 50, 100);
    double dev = 0;
    for (double e : o.eigenvalues) dev = std::max(dev, std::abs(e - 1));
    c.expect(dev <= 1e-8, "orthogonal deviation " + fmt(dev));
    if (c.ok) c.msg << "W1=" << fmt(w);
}

void c5(Check& c) {
    double big = relu_orth_edge(100), e = std::exp(1.0) * 100;
    c.expect(std::abs(big / e - 1) <= 0.03, "L=100 ratio " + fmt(big / e));
    c.expect(std::abs(relu_orth_edge(3) - 6.75) <= 1e-12, "L=3 " + fmt(relu_orth_edge(3)));
}

void c6(Check& c) {
    std::vector<double> sv{1.0, 0.8, 0.5, 0.3};
    std::vector<int> steps;
    for (int L : {8, 16, 32}) {
        auto r = simulate_deep_linear_gd(L, sv, eta_opt(1.0, L), 11);
        c.expect(r.converged, "L=" + std::to_string(L) + " did not converge");
        steps.push_back(r.steps);
    }
    auto [lo, hi] = std::minmax_element(steps.begin(), steps.end());
    c.expect(double(*hi) / *lo <= 1.5, "step ratio " + fmt(double(*hi) / *lo));
    auto m = mode_time(0.01, 0.99, 1.0, 1.0, 1);
    c.expect(std::abs(m.closed_form - std::log(99.0)) <= 1e-12, "closed form");
    c.expect(std::abs(m.rk4 / m.closed_form - 1) <= 1e-6, "rk4 " + fmt(m.rk4));
    if (c.ok) c.msg << "steps " << steps[0] << "/" << steps[1] << "/" << steps[2];
}

void c7(Check& c) {
    auto cfg = net({12, 10, 6, 4}, Activation::linear(), Init::gaussian(1.0));
    Rng rng = make_rng(9);
    Mat X = gaussian_matrix(12, 8, 1.0, rng), Y = gaussian_matrix(4, 8, 1.0, rng);
    auto a = train_gd(cfg, init_weights(cfg, 1), X, Y, LossKind::square, 0.05, 200);
    auto b = train_gd(cfg, init_weights(cfg, 2), X, Y, LossKind::square, 0.05, 200);
    auto p = constant_loss_path(cfg, a, b, X, Y);
    c.expect(p.max_segment_rise() <= 1e-6, "rise " + fmt(p.max_segment_rise()));
    c.expect(p.meeting_loss < 1e-6, "meeting loss " + fmt(p.meeting_loss));
    if (c.ok) c.msg << "rise=" << fmt(p.max_segment_rise()) << " meeting=" << fmt(p.meeting_loss);
}

void c8(Check& c) {
    auto cfg = net({5, 10, 10, 1}, Activation::relu(), Init::gaussian(std::sqrt(2.0)), Param::ntk);
    Mat all(5, 11);
    all << unit_columns(5, 8, 1), unit_columns(5, 3, 2);
    Mat T = limiting_ntk(all, cfg).K, K = nngp_gram(all, cfg).K;
    Mat th = T.topLeftCorner(8, 8), th_qx = T.bottomLeftCorner(3, 8);
    Mat k = K.topLeftCorner(8, 8), k_qx = K.bottomLeftCorner(3, 8), k_qq = K.bottomRightCorner(3, 3);
    Rng rng = make_rng(3);
    Vec y = gaussian_vector(8, 1.0, rng), f0 = gaussian_vector(8, 0.3, rng), f0q = gaussian_vector(3, 0.3, rng);

    const double eta = 0.7, m = 8, dt = eta * 1e-3;
    auto sol = make_linearized(th, f0, y, eta);
    double interp = (linearized_predict(sol, th, f0, std::nullopt) - y).cwiseAbs().maxCoeff();
    c.expect(interp <= 1e-8, "interpolation " + fmt(interp));
    Vec f = f0, fq = f0q;
    for (int s = 0; s < int(std::llround(1.0 / dt)); ++s) {
        Vec r = f - y;
        fq -= dt * eta / m * th_qx * r;
        f -= dt * eta / m * th * r;
    }
    double euler = std::max((linearized_predict(sol, th, f0, 1.0) - f).cwiseAbs().maxCoeff(),
                            (linearized_predict(sol, th_qx, f0q, 1.0) - fq).cwiseAbs().maxCoeff());
    c.expect(euler <= 1e-4, "euler gap " + fmt(euler));

    auto last = make_linearized(k, f0, y, 1.0);
    auto gp = linearized_gp(last, k_qx, k_qx, k_qq, k, std::nullopt);
    auto post = bayes_posterior(k, y, k_qx, k_qq);
    double dm = (gp.mean - post.mean).cwiseAbs().maxCoeff(), dc = (gp.cov - post.cov).cwiseAbs().maxCoeff();
    c.expect(dm <= 1e-8 && dc <= 1e-8, "posterior gap " + fmt(dm) + "/" + fmt(dc));
}

void c9(Check& c) {
    Mat X = unit_columns(8, 5, 7);
    std::vector<double> med;
    for (int n : {64, 256, 1024})
        med.push_back(kernel_deviation(net({8, n, n, 1}, Activation::relu(), Init::gaussian(std::sqrt(2.0)), Param::ntk), X, 20, 100).median);
    c.expect(med[1] < med[0] && med[2] < med[1], "not decreasing");
    c.msg << (c.ok ? "" : " ") << "medians " << fmt(med[0]) << "/" << fmt(med[1]) << "/" << fmt(med[2]);
}

void c10(Check& c) {
    Mat X = unit_columns(10, 8, 3);
    Rng rng = make_rng(4);
    Vec y(8);
    std::uniform_real_distribution<double> U(-0.9, 0.9);
    for (int i = 0; i < 8; ++i) y(i) = U(rng);
    auto tr = du_convergence_monitor(X, y, 4096, 5);
    c.expect(tr.lambda0 > 0, "lambda0 " + fmt(tr.lambda0));
    double worst_loss = 0, worst_disp = 0;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        worst_loss = std::max(worst_loss, tr.loss[k] / (std::exp(-tr.lambda0 * tr.t[k]) * tr.loss[0]));
        worst_disp = std::max(worst_disp, tr.max_displacement[k] / tr.radius_bound);
    }
    c.expect(worst_loss <= 1.1, "loss envelope ratio " + fmt(worst_loss));
    c.expect(worst_disp <= 1.1, "displacement ratio " + fmt(worst_disp));
    if (c.ok) c.msg << "envelope ratio " << fmt(worst_loss) << ", displacement ratio " << fmt(worst_disp);
}

void c11(Check& c) {
    Vec x(3);
    x << 0.6, -0.4, 0.9;
    ContractionSpec f4{4, {}, Mat(3, 4)};
    for (int i = 0; i < 4; ++i) f4.inputs.col(i) = x;
    const double q2 = std::pow(x.squaredNorm(), 2);
    auto bp = exact_correlation(f4, 1).by_power(f4.inputs.transpose() * f4.inputs);
    c.expect(bp.size() == 2 && std::abs(bp[0] - 3 * q2) <= 1e-12 && std::abs(bp[-1] - 6 * q2) <= 1e-12, "fourth moment");
    ContractionSpec ft = f4;
    ft.contractions = {{2, 3}};
    auto bt = exact_correlation(ft, 1).by_power(ft.inputs.transpose() * ft.inputs);
    c.expect(bt.size() == 2 && std::abs(bt[0] - 2 * q2) <= 1e-12 && std::abs(bt[-1] - 4 * q2) <= 1e-12, "f^2 Theta");

    auto s4 = mc_scaling_check(f4, 1, {8, 32, 128}, 40000, 101);
    for (std::size_t i = 0; i < s4.widths.size(); ++i)
        c.expect(std::abs(s4.mc[i].mean - s4.exact[i]) <= 3 * s4.mc[i].se, "f^4 MC n=" + std::to_string(s4.widths[i]));
    Mat X(3, 4);
    X << 0.6, 0.6, -0.2, 0.5, -0.4, -0.4, 0.8, 0.3, 0.9, 0.9, 0.1, -0.7;
    auto sd = mc_scaling_check(ContractionSpec{4, {{1, 2}, {2, 3}}, X}, 1, {8, 32, 128}, 20000, 7);
    for (std::size_t i = 0; i < sd.widths.size(); ++i)
        c.expect(std::abs(sd.mc[i].mean - sd.exact[i]) <= 3 * sd.mc[i].se, "dTheta MC n=" + std::to_string(sd.widths[i]));
    c.expect(sd.slope >= -1.4 && sd.slope <= -0.6, "slope " + fmt(sd.slope));
    c.msg << (c.ok ? "" : " ") << "slope " << fmt(sd.slope);
}

void c12(Check& c) {
    c.expect(std::abs(spectral_complexity({1, 1}, {1, 1}) - 2 * std::sqrt(2.0)) <= 1e-4, "spectral complexity");
    WeightSet eye{Mat::Identity(2, 2), Mat::Identity(2, 2)};
    c.expect(std::abs(neyshabur_complexity(norm_profile(eye)) - 2) <= 1e-4, "Neyshabur complexity");
    c.expect(std::abs(pacbayes_mcallester(0, 1000, 0.05) - 0.07517) <= 1e-4, "McAllester");
    c.expect(std::abs(hoeffding_eps(10000, 0.01) - 0.015174) <= 1e-4, "Hoeffding");
    auto mono = monotonicity_suite(100, 2024);
    c.expect(mono.violations.empty(), std::to_string(mono.violations.size()) + " monotonicity violations");

    NetConfig cfg = net({2, 8, 1}, Activation::tanh(), Init::glorot());
    Dataset data = toy_2d(200, 12);
    WeightSet theta0 = init_weights(cfg, 21);
    WeightSet trained = train_gd(cfg, theta0, data.X, data.y.transpose(), LossKind::logistic, 0.5, 300);
    DrOptions o;
    auto r = dziugaite_roy_optimize(cfg, isotropic_posterior(trained, theta0, dr_grid_lambda(300, o.b, o.c)), data.X, data.y, o);
    bool mono_obj = true;
    for (std::size_t i = 1; i < r.objective.size(); ++i) mono_obj = mono_obj && r.objective[i] <= r.objective[i - 1];
    c.expect(mono_obj, "DR objective increased");
    if (c.ok) c.msg << "DR bound " << fmt(r.report.bound);
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        double limit_s;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> all{{1, 1, c1},    {2, 30, c2},   {3, 5, c3},   {4, 60, c4},
                                     {5, 1, c5},    {6, 60, c6},   {7, 30, c7},  {8, 10, c8},
                                     {9, 300, c9},  {10, 300, c10}, {11, 180, c11}, {12, 120, c12}};
    int failed = 0;
    for (const auto& cr : all) {
        Check c;
        auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.expect(secs < cr.limit_s, "over time limit");
        if (!c.ok) ++failed;
        std::printf("criterion %2d: %s  %.2fs (limit %gs)  %s\n", cr.id, c.ok ? "PASS" : "FAIL", secs, cr.limit_s, c.msg.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
