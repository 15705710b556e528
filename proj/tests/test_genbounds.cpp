#include "dltl/genbounds.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace dltl;

namespace {

NetConfig toy_net() {
    NetConfig c;
    c.widths = {2, 8, 1};
    c.act = Activation::tanh();
    c.init = Init::glorot();
    return c;
}

// number of distinct labelings of sorted points by thresholds [x > t]
int threshold_labelings(int m) {
    std::set<std::vector<int>> seen;
    for (int cut = -1; cut <= m; ++cut) {
        std::vector<int> lab(m);
        for (int i = 0; i < m; ++i) lab[i] = i > cut;
        seen.insert(lab);
    }
    return static_cast<int>(seen.size());
}

}  // namespace

TEST(Classic, HoeffdingValue) {
    EXPECT_NEAR(classic_bounds(10000, 0.01).hoeffding_eps, std::sqrt(std::log(100.0) / 20000.0), 1e-15);
    EXPECT_NEAR(classic_bounds(10000, 0.01).hoeffding_eps, 0.015174, 1e-6);
    EXPECT_LT(hoeffding_eps(100, 1 - 1e-12), 1e-6);
    EXPECT_FALSE(classic_bounds(100, 0.1).vc_rademacher.has_value());
}

TEST(Classic, SauerAgainstThresholds) {
    auto c = classic_bounds(10, 0.1, 1);
    EXPECT_NEAR(*c.sauer_growth, std::numbers::e * 10, 1e-12);
    EXPECT_EQ(threshold_labelings(10), 11);
    EXPECT_EQ(*c.sauer_sum, 11.0);
    EXPECT_GE(*c.sauer_growth, *c.sauer_sum);
    EXPECT_NEAR(*c.vc_rademacher, std::sqrt(0.2 * (std::log(2.0) + 1 + std::log(10.0))), 1e-14);
}

TEST(Classic, Errors) {
    EXPECT_THROW(classic_bounds(0, 0.1), DomainError);
    EXPECT_THROW(classic_bounds(10, 1.0), DomainError);
    EXPECT_THROW(classic_bounds(10, 0.1, 10), DomainError);
    EXPECT_THROW(classic_bounds(10, 0.1, 0), DomainError);
}

TEST(Norms, HandExamples) {
    auto p = norm_profile({Mat::Identity(2, 2), Eigen::Vector2d(3, 4).asDiagonal().toDenseMatrix(), Mat::Zero(3, 2)});
    EXPECT_NEAR(p.spectral[0], 1, 1e-14);
    EXPECT_NEAR(p.frobenius[0], std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(p.l21[0], 2, 1e-14);
    EXPECT_NEAR(p.spectral[1], 4, 1e-14);
    EXPECT_NEAR(p.frobenius[1], 5, 1e-14);
    EXPECT_NEAR(p.l21[1], 7, 1e-14);
    EXPECT_EQ(p.spectral[2], 0.0);
    EXPECT_EQ(p.frobenius[2], 0.0);
    EXPECT_EQ(p.l21[2], 0.0);
}

TEST(Norms, Chain) {
    Rng rng = make_rng(4);
    WeightSet w;
    for (int k = 0; k < 20; ++k) w.push_back(gaussian_matrix(2 + k % 5, 3 + k % 4, 1.0, rng));
    auto p = norm_profile(w);
    for (int l = 0; l < p.layers(); ++l) {
        EXPECT_LE(p.spectral[l], p.frobenius[l] + 1e-12);
        EXPECT_LE(p.frobenius[l], p.l21[l] + 1e-12);
    }
}

TEST(Bartlett, ComplexityHandValue) {
    EXPECT_NEAR(spectral_complexity({1, 1}, {1, 1}), 2 * std::sqrt(2.0), 1e-14);
    // homogeneity: scaling every s and b by beta scales the complexity by beta^(L+1)
    std::vector<double> s{0.7, 1.3, 2.0}, b{1.1, 2.5, 3.0};
    const double beta = 1.7, r0 = spectral_complexity(s, b);
    for (auto& v : s) v *= beta;
    for (auto& v : b) v *= beta;
    EXPECT_NEAR(spectral_complexity(s, b), std::pow(beta, 3) * r0, 1e-10 * r0);
    // product form equals the sum form
    EXPECT_NEAR(r0, 0.7 * 1.3 * 2.0 * std::pow(std::pow(1.1 / 0.7, 2. / 3) + std::pow(2.5 / 1.3, 2. / 3) + std::pow(3.0 / 2.0, 2. / 3), 1.5),
                1e-12);
}

TEST(Bartlett, GammaAndRegime) {
    auto a = bartlett_from_complexity(2.0, 1.5, 10.0, 1.0, 100000, 0.05);
    auto b = bartlett_from_complexity(2.0, 1.5, 10.0, 2.0, 100000, 0.05);
    EXPECT_LT(b.quantities["rademacher"], a.quantities["rademacher"]);
    EXPECT_NEAR(a.quantities["eps_opt"], 3 / std::sqrt(1e5) * 1.5 * 10 * 2, 1e-12);
    EXPECT_TRUE(a.flags.empty());
    auto bad = bartlett_from_complexity(2.0, 1.5, 1e4, 1.0, 100, 0.05);
    EXPECT_EQ(bad.bound, 1.0);
    EXPECT_FALSE(bad.flags.empty());
    EXPECT_THROW(bartlett_from_complexity(2.0, 1.5, 10, 0.0, 100, 0.05), DomainError);
}

TEST(Bartlett, FromWeights) {
    WeightSet w{Mat::Identity(2, 2), Mat::Identity(2, 2)};
    auto r = bartlett_bound(norm_profile(w), {2, 2, 2}, 1.0, 1.0, 1000000, 0.05);
    EXPECT_NEAR(r.quantities["complexity"], spectral_complexity({1, 1}, {2, 2}), 1e-12);
    EXPECT_NEAR(r.quantities["C"], std::sqrt(std::log(8.0)), 1e-14);
    EXPECT_THROW(bartlett_bound(norm_profile({Mat::Zero(2, 2)}), {2, 2}, 1.0, 1.0, 10, 0.05), DomainError);
}

TEST(Grid, SmallestDominatingIndex) {
    NormProfile p{{0.9, 0.49}, {1, 1}, {1.2, 0.2}};
    auto g = a_posteriori_grid(p, 0.05, 2);
    EXPECT_EQ(g.i_star, (std::vector<int>{2, 1}));
    EXPECT_EQ(g.j_star, (std::vector<int>{3, 1}));
    for (int l = 0; l < 2; ++l) {
        EXPECT_GT(g.s_star[l], p.spectral[l]);
        EXPECT_GT(g.b_star[l], p.l21[l]);
        EXPECT_LE(g.s_star[l] - 0.5, p.spectral[l]);
    }
    EXPECT_NEAR(g.delta_star, grid_delta(0.05, g.i_star, g.j_star), 1e-18);
    EXPECT_NEAR(g.log_inv_delta_star, std::log(1 / g.delta_star), 1e-10);
}

TEST(Grid, TruncatedSumTelescopes) {
    const int N = 30;
    double sum = 0.0;
    for (int i0 = 1; i0 <= N; ++i0)
        for (int j0 = 1; j0 <= N; ++j0)
            for (int i1 = 1; i1 <= N; ++i1)
                for (int j1 = 1; j1 <= N; ++j1) sum += grid_delta(0.1, {i0, i1}, {j0, j1});
    EXPECT_NEAR(sum, 0.1 * std::pow(1.0 - 1.0 / (N + 1), 4), 1e-12);
}

TEST(Grid, TinyNorms) {
    NormProfile p{{1e-9, 1e-9}, {1e-9, 1e-9}, {1e-9, 1e-9}};
    auto g = a_posteriori_grid(p, 0.05, 1);
    EXPECT_EQ(g.i_star, (std::vector<int>{1, 1}));
    EXPECT_EQ(g.j_star, (std::vector<int>{1, 1}));
    EXPECT_NEAR(g.log_inv_delta_star, std::log(20.0) + 4 * std::log(2.0), 1e-12);
}

TEST(Neyshabur, IdentityComplexity) {
    WeightSet w{Mat::Identity(2, 2), Mat::Identity(2, 2)};
    EXPECT_NEAR(neyshabur_complexity(norm_profile(w)), 2.0, 1e-14);
}

TEST(Neyshabur, BalancedRescalingInvariance) {
    Rng rng = make_rng(9);
    WeightSet w{gaussian_matrix(5, 3, 1.0, rng), gaussian_matrix(4, 5, 0.3, rng), gaussian_matrix(1, 4, 2.0, rng)};
    auto p = norm_profile(w);
    double prod = 1.0;
    for (double s : p.spectral) prod *= s;
    const double beta = std::pow(prod, 1.0 / 3.0);
    WeightSet v = w;
    for (int l = 0; l < 3; ++l) v[l] *= beta / p.spectral[l];
    EXPECT_NEAR(neyshabur_complexity(norm_profile(v)), neyshabur_complexity(p), 1e-10 * neyshabur_complexity(p));
    auto r1 = neyshabur_bound(w, 1.0, 1.0, 1000, 0.05), r2 = neyshabur_bound(v, 1.0, 1.0, 1000, 0.05);
    EXPECT_NEAR(r1.quantities["raw_bound"], r2.quantities["raw_bound"], 1e-9);
}

TEST(Neyshabur, MonotoneAndErrors) {
    auto a = neyshabur_from_complexity(0.01, 1, 1, 1e6, 0.05, 2, 8);
    auto b = neyshabur_from_complexity(0.02, 1, 1, 1e6, 0.05, 2, 8);
    auto c = neyshabur_from_complexity(0.01, 1, 2, 1e6, 0.05, 2, 8);
    EXPECT_GT(b.quantities["raw_bound"], a.quantities["raw_bound"]);
    EXPECT_LT(c.quantities["raw_bound"], a.quantities["raw_bound"]);
    EXPECT_THROW(neyshabur_bound({Mat::Identity(2, 2), Mat::Zero(2, 2)}, 1, 1, 10, 0.1), DomainError);
}

TEST(PacBayes, McAllesterValue) {
    EXPECT_NEAR(pacbayes_mcallester(0, 1000, 0.05), std::sqrt(std::log(80000.0) / 1999.0), 1e-15);
    EXPECT_NEAR(pacbayes_mcallester(0, 1000, 0.05), 0.07517, 1e-4);
    EXPECT_THROW(pacbayes_mcallester(-1e-3, 1000, 0.05), DomainError);
}

TEST(PacBayes, GaussianKl) {
    WeightSet mu{Mat::Zero(2, 3), Mat::Zero(1, 2)};
    auto q = isotropic_posterior(mu, mu, -1.3);
    EXPECT_NEAR(gaussian_kl(q), 0.0, 1e-14);
    auto shifted = isotropic_posterior(mu, mu, 0.0);
    shifted.mean[0](1, 2) = 1.0;
    EXPECT_NEAR(gaussian_kl(shifted), 0.5, 1e-14);
    // one-dimensional oracle: KL(N(a, s2) || N(0, t2)) = (s2 + a^2)/(2 t2) + log(t/s) - 1/2
    GaussianPosterior one{{Mat::Constant(1, 1, 0.4)}, {Mat::Constant(1, 1, std::log(0.3))}, {Mat::Zero(1, 1)}, std::log(2.0)};
    EXPECT_NEAR(gaussian_kl(one), (0.3 + 0.16) / 4.0 + 0.5 * std::log(2.0 / 0.3) - 0.5, 1e-14);
}

TEST(PacBayes, PosteriorBoundDeterministic) {
    auto cfg = toy_net();
    auto data = toy_2d(100, 3);
    auto w = init_weights(cfg, 1);
    auto q = isotropic_posterior(w, w, -4.0);
    auto a = pacbayes_posterior_bound(cfg, q, data.X, data.y, 0.05, 64, 5);
    auto b = pacbayes_posterior_bound(cfg, q, data.X, data.y, 0.05, 64, 5);
    EXPECT_EQ(a.bound, b.bound);
    EXPECT_NEAR(a.quantities["gap"], pacbayes_mcallester(0, 100, 0.05), 1e-15);
}

TEST(CodeLength, Examples) {
    const int K = 50;
    EXPECT_NEAR(code_length_kl(12, 1.0 / K), 12 * std::log(2.0) + std::log(double(K)), 1e-12);
    EXPECT_NEAR(code_length_kl(1, 1.0), std::log(2.0), 1e-15);
    EXPECT_NEAR(compressed_size_bits(100, 1e6, 16), 100 * (std::log2(1e6) + 4) + 512, 1e-9);
    EXPECT_NEAR(compressed_size_bits(100, 1e6, 16), 2905, 1.0);
    EXPECT_THROW(code_length_kl(3, 0.0), DomainError);
    EXPECT_THROW(code_length_kl(0, 0.5), DomainError);
}

TEST(Margins, ZeroGammaIsZeroOne) {
    auto cfg = toy_net();
    auto data = toy_2d(200, 2);
    auto w = init_weights(cfg, 3);
    auto s = margin_stats(cfg, w, data.X, data.y, 0.0);
    Mat out = forward_batch(cfg, w, data.X);
    double wrong = 0;
    for (int i = 0; i < 200; ++i) wrong += (out(0, i) > 0 ? 1.0 : -1.0) != data.y(i);
    EXPECT_DOUBLE_EQ(s.hard_risk, wrong / 200);
    double prev = 0.0;
    for (double g : {0.0, 0.1, 0.5, 1.0, 5.0}) {
        double r = margin_stats(cfg, w, data.X, data.y, g).hard_risk;
        EXPECT_GE(r, prev);
        EXPECT_LE(r, 1.0);
        prev = r;
    }
}

TEST(Margins, SeparatedAndRamp) {
    NetConfig c;
    c.widths = {1, 1};
    WeightSet w{Mat::Constant(1, 1, 1.0)};
    Mat X(1, 4);
    X << 2, 3, -2, -5;
    Vec y(4);
    y << 1, 1, -1, -1;
    auto s = margin_stats(c, w, X, y, 1.0);
    EXPECT_EQ(s.hard_risk, 0.0);
    EXPECT_EQ(s.ramp_loss, 0.0);
    EXPECT_DOUBLE_EQ(ramp(0.25, 1.0), 0.75);
    EXPECT_EQ(ramp(-0.1, 1.0), 1.0);
    y(0) = 0.5;
    EXPECT_THROW(margin_stats(c, w, X, y, 1.0), DomainError);
}

TEST(Margins, RandomLabelsHalfRisk) {
    auto cfg = toy_net();
    auto data = toy_2d(4000, 8);
    Rng rng = make_rng(77);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < data.y.size(); ++i) data.y(i) = coin(rng) ? 1.0 : -1.0;
    auto s = margin_stats(cfg, init_weights(cfg, 6), data.X, data.y, 0.0);
    EXPECT_LE(std::abs(s.hard_risk - 0.5), 3 * std::sqrt(0.25 / 4000));
}

TEST(Properties, MonotonicitySuite) {
    auto rep = monotonicity_suite(100, 2024);
    EXPECT_EQ(rep.checks, 100 * 15);
    for (const auto& v : rep.violations) ADD_FAILURE() << v;
}

TEST(Properties, CoverageSimulation) {
    auto rep = coverage_simulation(32, 200, 0.1, 10000, 31);
    EXPECT_LE(rep.violation_fraction, rep.allowed);
    EXPECT_LE(rep.pair_fraction, 0.1 / 32 + 2.326 * std::sqrt(0.1 / 32 / (10000.0 * 32)));
}

class DrFixture : public ::testing::Test {
protected:
    NetConfig cfg = toy_net();
    Dataset data = toy_2d(200, 12);
    WeightSet theta0 = init_weights(cfg, 21);
    GaussianPosterior start() {
        WeightSet trained = train_gd(cfg, theta0, data.X, data.y.transpose(), LossKind::logistic, 0.5, 300);
        DrOptions o;
        return isotropic_posterior(trained, theta0, dr_grid_lambda(300, o.b, o.c));
    }
};

TEST_F(DrFixture, ZeroStepsIsMcAllester) {
    DrOptions o;
    o.steps = 0;
    auto q = start();
    auto r = dziugaite_roy_optimize(cfg, q, data.X, data.y, o);
    EXPECT_EQ(r.j, 300);
    const double delta_j = 6 * o.delta / (std::numbers::pi * std::numbers::pi * 300 * 300);
    auto direct = pacbayes_posterior_bound(cfg, q, data.X, data.y, delta_j, o.risk_samples, o.seed);
    EXPECT_DOUBLE_EQ(r.report.bound, direct.bound);
    EXPECT_EQ(r.objective.size(), 1u);
}

TEST_F(DrFixture, ObjectiveNonIncreasingAndBoundImproves) {
    DrOptions o;
    auto q = start();
    o.steps = 0;
    const double initial = dziugaite_roy_optimize(cfg, q, data.X, data.y, o).report.bound;
    o.steps = 200;
    auto r = dziugaite_roy_optimize(cfg, q, data.X, data.y, o);
    ASSERT_EQ(r.objective.size(), 201u);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1]);
    EXPECT_LT(r.objective.back(), r.objective.front());
    EXPECT_LE(r.report.bound, initial);
    EXPECT_LT(r.report.quantities["raw_bound"], 1.0);
    EXPECT_TRUE(std::isfinite(r.report.quantities["rounding_change"]));
    EXPECT_GE(r.j, 1);
}

TEST(Dataset, CsvRoundTrip) {
    std::istringstream in("y,x1,x2\n1,0.5,2\n-1,3,-4\n");
    auto ds = read_dataset_csv(in);
    EXPECT_EQ(ds.X.rows(), 2);
    EXPECT_EQ(ds.X.cols(), 2);
    EXPECT_EQ(ds.y(1), -1.0);
    EXPECT_EQ(ds.X(1, 1), -4.0);
    std::istringstream bad("x,y\n1,2\n");
    EXPECT_THROW(read_dataset_csv(bad), DomainError);
    std::istringstream ragged("y,x1\n1,2,3\n");
    EXPECT_THROW(read_dataset_csv(ragged), DomainError);
}
