#include "dltl/genbounds.hpp"
#include "dltl/landscape.hpp"
#include "dltl/lindyn.hpp"
#include "dltl/meanfield.hpp"
#include "dltl/ntk.hpp"
#include "dltl/spectra.hpp"
#include "dltl/wick.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

using namespace dltl;
using nlohmann::json;

namespace {

// ---- output ----

using Cell = std::variant<double, long long, std::string>;

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> r) { rows.push_back(std::move(r)); }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string cell_text(const Cell& c) {
    if (auto d = std::get_if<double>(&c)) return fmt(*d);
    if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

json cell_json(const Cell& c) {
    if (auto d = std::get_if<double>(&c)) return std::isfinite(*d) ? json(*d) : json(fmt(*d));
    if (auto i = std::get_if<long long>(&c)) return *i;
    return std::get<std::string>(c);
}

struct Common {
    std::uint64_t seed = 0;
    std::string out = "-";
    std::string format;
    int replicates = 0;
};

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot write " + path);
    f << text;
}

std::string render(const Table& t, const std::string& format) {
    std::ostringstream os;
    if (format == "json") {
        json arr = json::array();
        for (const auto& r : t.rows) {
            json o;
            for (std::size_t k = 0; k < r.size(); ++k) o[t.header[k]] = cell_json(r[k]);
            arr.push_back(o);
        }
        os << arr.dump(2) << '\n';
        return os.str();
    }
    for (std::size_t k = 0; k < t.header.size(); ++k) os << (k ? "," : "") << t.header[k];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << cell_text(r[k]);
        os << '\n';
    }
    return os.str();
}

void emit(const Table& t, const Common& c) { write_text(c.out, render(t, c.format.empty() ? "csv" : c.format)); }

void emit(const json& j, const Common& c) { write_text(c.out, j.dump(2) + "\n"); }

// ---- argument helpers ----

std::vector<double> parse_range(const std::string& s) {
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ':')) {
        try {
            parts.push_back(std::stod(f));
        } catch (const std::exception&) {
            throw CLI::ValidationError("range", "bad number '" + f + "' in " + s);
        }
    }
    if (parts.size() == 1) return parts;
    if (parts.size() != 3 || parts[2] <= 0 || parts[1] < parts[0])
        throw CLI::ValidationError("range", "expected lo:hi:step with step > 0, got " + s);
    const long count = std::lround((parts[1] - parts[0]) / parts[2]) + 1;
    std::vector<double> v;
    for (long i = 0; i < count; ++i) v.push_back(parts[0] + i * parts[2]);
    return v;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> v;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) {
        try {
            if constexpr (std::is_same_v<T, int>) v.push_back(std::stoi(f));
            else v.push_back(std::stod(f));
        } catch (const std::exception&) {
            throw CLI::ValidationError("list", "bad entry '" + f + "' in " + s);
        }
    }
    if (v.empty()) throw CLI::ValidationError("list", "empty list");
    return v;
}

json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw DomainError("malformed JSON in " + path + ": " + e.what());
    }
}

std::pair<NetConfig, WeightSet> read_weights(const std::string& path) { return weights_from_json(read_json(path)); }

NetConfig kernel_net(int d, const std::string& hidden, const std::string& act, double sigma_w) {
    NetConfig c;
    c.widths.push_back(d);
    for (int w : parse_list<int>(hidden)) c.widths.push_back(w);
    c.widths.push_back(1);
    c.act = Activation::parse(act);
    c.param = Param::ntk;
    c.init = Init::gaussian(sigma_w);
    c.validate();
    return c;
}

// Points on the unit sphere with labels in (-1, 1), for the two-layer relu monitor.
Dataset sphere_task(int m, int d, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> U(-0.9, 0.9);
    Dataset ds{Mat(d, m), Vec(m)};
    for (int i = 0; i < m; ++i) {
        Vec v = gaussian_vector(d, 1.0, rng);
        ds.X.col(i) = v / v.norm();
        ds.y(i) = U(rng);
    }
    return ds;
}

void add_common(CLI::App* sc, Common& c, const std::string& default_format) {
    sc->add_option("--seed", c.seed, "base seed; replicate r uses seed + r")->capture_default_str();
    sc->add_option("--out", c.out, "output path, - for stdout")->capture_default_str();
    c.format = default_format;
    sc->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

// ---- subcommands ----

struct PhaseArgs {
    Common c;
    std::string act = "tanh", sigma = "0.5:4.0:0.05";
    double q0 = 1.0;
};

void run_phase(const PhaseArgs& a) {
    Activation act = Activation::parse(a.act);
    Table t{{"sigma_w2", "q_inf", "chi1", "phase"}, {}};
    for (double s2 : parse_range(a.sigma)) {
        auto p = phase_classify(s2, act, a.q0);
        t.add({s2, p.q_inf, p.chi1, phase_name(p.phase)});
    }
    emit(t, a.c);
}

struct LengthArgs {
    Common c;
    std::string act = "tanh", q = "0:4:0.1";
    double sigma_w2 = 1.0;
};

void run_lengthmap(const LengthArgs& a) {
    Activation act = Activation::parse(a.act);
    Table t{{"q", "V"}, {}};
    for (double q : parse_range(a.q)) t.add({q, length_map(q, a.sigma_w2, act).q_next});
    emit(t, a.c);
}

struct SpectrumArgs {
    Common c;
    bool analytic = false, empirical = false;
    int depth = 1, points = 512, width = 256;
    std::string act = "linear", init = "gaussian", summary;
};

void run_spectrum(const SpectrumArgs& a) {
    if (a.analytic == a.empirical) throw CLI::ValidationError("spectrum", "choose exactly one of --analytic, --empirical");
    if (a.analytic) {
        auto s = product_wishart_spectrum(a.depth, a.points);
        Table t{{"phi", "lambda", "rho"}, {}};
        for (std::size_t i = 0; i < s.phi.size(); ++i) t.add({s.phi[i], s.lambda[i], s.rho[i]});
        emit(t, a.c);
        return;
    }
    NetConfig cfg;
    cfg.widths.assign(a.depth + 2, a.width);
    cfg.act = Activation::parse(a.act);
    if (a.init == "gaussian") cfg.init = Init::gaussian(1.0);
    else if (a.init == "orthogonal") cfg.init = Init::orthogonal(1.0);
    else throw DomainError("unknown init '" + a.init + "' (expected gaussian or orthogonal)");
    const int reps = a.c.replicates > 0 ? a.c.replicates : 50;
    auto s = empirical_spectrum(cfg, std::nullopt, reps, a.c.seed);
    Table t{{"eigenvalue"}, {}};
    for (double e : s.eigenvalues) t.add({e});
    emit(t, a.c);
    json summary = {{"n", s.n}, {"L", s.L}, {"replicates", reps}, {"init", s.init}, {"activation", cfg.act.name()}};
    if (cfg.act.kind == Activation::Kind::linear && a.init == "gaussian") {
        auto q = curve_quantiles(product_wishart_density(a.depth), s.eigenvalues.size());
        summary["wasserstein_to_analytic"] = wasserstein1(s.eigenvalues, q);
    } else {
        summary["wasserstein_to_analytic"] = nullptr;
    }
    std::string path = a.summary;
    if (path.empty()) path = a.c.out == "-" ? "" : a.c.out + ".summary.json";
    if (path.empty()) std::cerr << summary.dump(2) << '\n';
    else write_text(path, summary.dump(2) + "\n");
}

struct LindynArgs {
    Common c;
    std::string depths = "8,16,32", svals = "1,0.8,0.5,0.3";
    double u0_frac = 0.1;
};

void run_lindyn(const LindynArgs& a) {
    auto depths = parse_list<int>(a.depths);
    auto s = parse_list<double>(a.svals);
    const double smax = *std::max_element(s.begin(), s.end());
    Table t{{"L", "eta_opt", "steps", "t_opt_formula"}, {}};
    for (int L : depths) {
        const double eta = eta_opt(smax, L);
        DeepLinearOptions o;
        o.u0_frac = a.u0_frac;
        auto r = simulate_deep_linear_gd(L, s, eta, a.c.seed, o);
        // arrival of the top mode at the default loss threshold
        const double uf = smax * (1.0 - std::sqrt(2e-4));
        auto sched = opt_schedule(a.u0_frac * smax, uf, smax, L);
        t.add({(long long)L, eta, (long long)r.steps, sched.t_opt});
    }
    emit(t, a.c);
}

struct PathArgs {
    Common c;
    std::string a, b, data, loss = "square";
    double epsilon = 1e-6;
    int points = 64;
};

void run_path(const PathArgs& a) {
    auto [ca, wa] = read_weights(a.a);
    auto [cb, wb] = read_weights(a.b);
    if (ca.widths != cb.widths || ca.act.name() != cb.act.name() || ca.param != cb.param)
        throw DomainError("the two weight files describe different architectures");
    Dataset ds = read_dataset_csv(a.data);
    PathOptions o;
    o.loss = parse_loss(a.loss);
    o.epsilon = a.epsilon;
    o.points_per_segment = a.points;
    o.seed = a.c.seed;
    auto p = constant_loss_path(ca, wa, wb, ds.X, Mat(ds.y.transpose()), o);
    Table t{{"segment", "t", "loss"}, {}};
    for (const auto& q : p.points) t.add({(long long)q.segment, q.t, q.loss});
    emit(t, a.c);
}

struct KernelArgs {
    Common c;
    std::string data, hidden = "512,512", act = "relu", kind = "limiting";
    double sigma_w = 1.0;
};

void run_ntk_kernel(const KernelArgs& a) {
    Dataset ds = read_dataset_csv(a.data);
    NetConfig cfg = kernel_net(ds.X.rows(), a.hidden, a.act, a.sigma_w);
    Mat K;
    if (a.kind == "limiting") K = limiting_ntk(ds.X, cfg).K;
    else if (a.kind == "nngp") K = nngp_gram(ds.X, cfg).K;
    else if (a.kind == "empirical") K = empirical_ntk(cfg, init_weights(cfg, a.c.seed), ds.X).K;
    else throw DomainError("unknown kernel kind '" + a.kind + "'");
    Table t{{"i", "j", "value"}, {}};
    for (Eigen::Index i = 0; i < K.rows(); ++i)
        for (Eigen::Index j = 0; j < K.cols(); ++j) t.add({(long long)i, (long long)j, K(i, j)});
    emit(t, a.c);
}

struct TrainArgs {
    Common c;
    std::string data, query, hidden = "512", act = "relu", times = "0.1,1,10,inf";
    double eta = 1.0, sigma_w = 1.0;
};

void run_ntk_train(const TrainArgs& a) {
    Dataset tr = read_dataset_csv(a.data), q = read_dataset_csv(a.query);
    if (tr.X.rows() != q.X.rows()) throw DomainError("train and query inputs differ in dimension");
    NetConfig cfg = kernel_net(tr.X.rows(), a.hidden, a.act, a.sigma_w);
    const Eigen::Index m = tr.X.cols(), nq = q.X.cols();
    Mat all(tr.X.rows(), m + nq);
    all << tr.X, q.X;
    Mat K = limiting_ntk(all, cfg).K;
    auto sol = make_linearized(K.topLeftCorner(m, m), Vec::Zero(m), tr.y, a.eta);
    Mat kq = K.bottomLeftCorner(nq, m);
    Table t{{"t", "query", "prediction", "label"}, {}};
    std::stringstream ss(a.times);
    std::string f;
    while (std::getline(ss, f, ',')) {
        std::optional<double> tt;
        if (f != "inf") {
            try {
                tt = std::stod(f);
            } catch (const std::exception&) {
                throw CLI::ValidationError("--t", "bad time '" + f + "'");
            }
        }
        Vec pred = linearized_predict(sol, kq, Vec::Zero(nq), tt);
        for (Eigen::Index i = 0; i < nq; ++i)
            t.add({tt ? Cell(*tt) : Cell(std::string("inf")), (long long)i, pred(i), q.y(i)});
    }
    emit(t, a.c);
}

struct DuArgs {
    Common c;
    std::string data;
    int m = 8, d = 5, n = 4096, mc_samples = 200000;
    double eta = 0.1, T = 20.0;
};

void run_du(const DuArgs& a) {
    Dataset ds = a.data.empty() ? sphere_task(a.m, a.d, a.c.seed) : read_dataset_csv(a.data);
    DuOptions o;
    o.eta = a.eta;
    o.T = a.T;
    o.mc_samples = a.mc_samples;
    auto tr = du_convergence_monitor(ds.X, ds.y, a.n, a.c.seed, o);
    Table t{{"t", "loss", "envelope", "lambda_min", "max_displacement", "kernel_drift", "lambda0", "radius_bound"}, {}};
    for (std::size_t k = 0; k < tr.t.size(); ++k)
        t.add({tr.t[k], tr.loss[k], std::exp(-tr.lambda0 * tr.t[k]) * tr.loss[0], tr.lambda_min[k],
               tr.max_displacement[k], tr.kernel_drift[k], tr.lambda0, tr.radius_bound});
    emit(t, a.c);
}

struct AlignArgs {
    Common c;
    std::string data;
    int m = 16, d = 5;
};

void run_align(const AlignArgs& a) {
    Dataset ds = a.data.empty() ? sphere_task(a.m, a.d, a.c.seed) : read_dataset_csv(a.data);
    auto r = alignment(h_infinity(ds.X), ds.y, Vec::Zero(ds.y.size()));
    Table t{{"k", "lambda", "projection"}, {}};
    for (Eigen::Index k = 0; k < r.lambda.size(); ++k) t.add({(long long)k, r.lambda(k), r.p(k)});
    emit(t, a.c);
}

struct WickArgs {
    Common c;
    std::string spec, mc_widths, mc_out;
    int L = 1;
};

void run_wick(const WickArgs& a) {
    ContractionSpec s = spec_from_json(read_json(a.spec));
    auto poly = exact_correlation(s, a.L);
    if (a.c.format == "csv") {
        Table t{{"power_of_inv_n", "coefficient", "monomial"}, {}};
        for (const auto& term : poly.terms) {
            std::string mono;
            for (auto [i, j] : term.monomial) mono += (mono.empty() ? "" : " ") + std::to_string(i) + "-" + std::to_string(j);
            t.add({(long long)-term.power, (long long)term.coefficient, mono});
        }
        emit(t, a.c);
    } else {
        emit(poly.to_json(), a.c);
    }
    if (!a.mc_widths.empty()) {
        if (a.mc_out.empty()) throw CLI::ValidationError("--mc-out", "needed with --mc-widths");
        const int reps = a.c.replicates > 0 ? a.c.replicates : 20000;
        auto sc = mc_scaling_check(s, a.L, parse_list<int>(a.mc_widths), reps, a.c.seed);
        Table t{{"n", "mc_mean", "mc_se", "exact"}, {}};
        for (std::size_t i = 0; i < sc.widths.size(); ++i)
            t.add({(long long)sc.widths[i], sc.mc[i].mean, sc.mc[i].se, sc.exact[i]});
        write_text(a.mc_out, render(t, "csv"));
    }
}

struct BoundsArgs {
    Common c;
    std::string weights, data, family = "all", prior;
    double gamma = 1.0, delta = 0.05, logvar = -6.0;
    int samples = 256;
};

void run_bounds(const BoundsArgs& a) {
    auto [cfg, w] = read_weights(a.weights);
    Dataset ds = read_dataset_csv(a.data);
    const int m = static_cast<int>(ds.y.size());
    const double margin_risk = margin_stats(cfg, w, ds.X, ds.y, a.gamma).hard_risk;
    json out;
    auto want = [&](const char* f) { return a.family == "all" || a.family == f; };
    if (want("bartlett")) {
        auto r = bartlett_a_posteriori(w, cfg.widths, ds.X.norm(), a.gamma, m, a.delta, margin_risk);
        if (cfg.act.kind != Activation::Kind::relu) r.flags.push_back("activation is not relu");
        out["bartlett"] = r.to_json();
    }
    if (want("neyshabur")) {
        const double B = ds.X.colwise().norm().maxCoeff();
        auto r = neyshabur_bound(w, a.gamma, B, m, a.delta, margin_risk);
        if (cfg.act.kind != Activation::Kind::relu) r.flags.push_back("activation is not relu");
        out["neyshabur"] = r.to_json();
    }
    if (want("pacbayes")) {
        WeightSet prior;
        if (a.prior.empty()) {
            for (const auto& W : w) prior.push_back(Mat::Zero(W.rows(), W.cols()));
        } else {
            auto [cp, wp] = read_weights(a.prior);
            if (cp.widths != cfg.widths) throw DomainError("prior weights have a different architecture");
            prior = wp;
        }
        auto q = isotropic_posterior(w, prior, a.logvar);
        out["pacbayes"] = pacbayes_posterior_bound(cfg, q, ds.X, ds.y, a.delta, a.samples, a.c.seed).to_json();
    }
    if (out.is_null()) throw CLI::ValidationError("--family", "unknown family " + a.family);
    if (a.family != "all") out = out.begin().value();
    if (a.c.format == "csv") {
        Table t{{"family", "key", "value"}, {}};
        json fams = a.family == "all" ? out : json{{a.family, out}};
        for (auto& [fam, rep] : fams.items()) {
            t.add({fam, std::string("bound"), rep["bound"].get<double>()});
            for (auto& [k, v] : rep["quantities"].items())
                t.add({fam, k, v.is_number() ? Cell(v.get<double>()) : Cell(v.dump())});
        }
        emit(t, a.c);
    } else {
        emit(out, a.c);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dltl: numerical experiments on deep learning theory"};
    app.set_config("--config", "", "read options from a TOML file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    PhaseArgs phase;
    auto* sp = app.add_subcommand("phase", "ordered/chaotic phase over a sigma_w^2 grid");
    add_common(sp, phase.c, "csv");
    sp->add_option("--act", phase.act, "linear, relu, tanh or leaky_relu:ALPHA")->capture_default_str();
    sp->add_option("--sigma-w2", phase.sigma, "value or lo:hi:step")->capture_default_str();
    sp->add_option("--q0", phase.q0, "starting variance")->capture_default_str();

    LengthArgs lm;
    auto* sl = app.add_subcommand("lengthmap", "length map V(q) on a grid");
    add_common(sl, lm.c, "csv");
    sl->add_option("--act", lm.act)->capture_default_str();
    sl->add_option("--sigma-w2", lm.sigma_w2)->capture_default_str();
    sl->add_option("--q", lm.q, "value or lo:hi:step")->capture_default_str();

    SpectrumArgs spec;
    auto* ss = app.add_subcommand("spectrum", "input-output Jacobian spectra");
    add_common(ss, spec.c, "csv");
    ss->add_flag("--analytic", spec.analytic, "parametric product-Wishart curve (phi, lambda, rho)");
    ss->add_flag("--empirical", spec.empirical, "pooled eigenvalues of J J^T over replicates");
    ss->add_option("--depth", spec.depth, "number of hidden layers L")->capture_default_str();
    ss->add_option("--points", spec.points)->capture_default_str();
    ss->add_option("--width", spec.width)->capture_default_str();
    ss->add_option("--act", spec.act)->capture_default_str();
    ss->add_option("--init", spec.init, "gaussian or orthogonal")->capture_default_str();
    ss->add_option("--replicates", spec.c.replicates, "default 50");
    ss->add_option("--summary", spec.summary, "summary JSON path (default OUT.summary.json)");

    LindynArgs ld;
    auto* sd = app.add_subcommand("lindyn", "deep linear GD step counts at the optimal rate");
    add_common(sd, ld.c, "csv");
    sd->add_option("--scan-depth", ld.depths, "comma separated depths")->capture_default_str();
    sd->add_option("--svals", ld.svals, "target singular values")->capture_default_str();
    sd->add_option("--u0-frac", ld.u0_frac)->capture_default_str();

    PathArgs pa;
    auto* spa = app.add_subcommand("path", "non-increasing loss path between two nets");
    add_common(spa, pa.c, "csv");
    spa->add_option("--a", pa.a, "first weight file")->required();
    spa->add_option("--b", pa.b, "second weight file")->required();
    spa->add_option("--data", pa.data, "dataset CSV y,x1,...,xd")->required();
    spa->add_option("--loss", pa.loss, "square or logistic")->capture_default_str();
    spa->add_option("--epsilon", pa.epsilon)->capture_default_str();
    spa->add_option("--points", pa.points, "samples per segment")->capture_default_str();

    KernelArgs ka;
    auto* sk = app.add_subcommand("ntk-kernel", "tangent kernel Gram in long form (i, j, value)");
    add_common(sk, ka.c, "csv");
    sk->add_option("--data", ka.data)->required();
    sk->add_option("--hidden", ka.hidden, "hidden widths")->capture_default_str();
    sk->add_option("--act", ka.act)->capture_default_str();
    sk->add_option("--kind", ka.kind, "limiting, nngp or empirical")->capture_default_str();
    sk->add_option("--sigma-w", ka.sigma_w)->capture_default_str();

    TrainArgs ta;
    auto* st = app.add_subcommand("ntk-train", "closed-form kernel-regime predictions");
    add_common(st, ta.c, "csv");
    st->add_option("--data", ta.data)->required();
    st->add_option("--query", ta.query)->required();
    st->add_option("--hidden", ta.hidden)->capture_default_str();
    st->add_option("--act", ta.act)->capture_default_str();
    st->add_option("--t", ta.times, "comma separated times, inf for the limit")->capture_default_str();
    st->add_option("--eta", ta.eta)->capture_default_str();
    st->add_option("--sigma-w", ta.sigma_w)->capture_default_str();

    DuArgs du;
    auto* sdu = app.add_subcommand("du-monitor", "two-layer relu GD against the exponential envelope");
    add_common(sdu, du.c, "csv");
    sdu->add_option("--data", du.data, "dataset CSV (default: random points on the sphere)");
    sdu->add_option("--m", du.m)->capture_default_str();
    sdu->add_option("--d", du.d)->capture_default_str();
    sdu->add_option("--n", du.n, "hidden width")->capture_default_str();
    sdu->add_option("--eta", du.eta)->capture_default_str();
    sdu->add_option("--T", du.T)->capture_default_str();
    sdu->add_option("--mc-samples", du.mc_samples)->capture_default_str();

    AlignArgs al;
    auto* sa = app.add_subcommand("align", "residual projections on the kernel eigenbasis");
    add_common(sa, al.c, "csv");
    sa->add_option("--data", al.data, "dataset CSV (default: random points on the sphere)");
    sa->add_option("--m", al.m)->capture_default_str();
    sa->add_option("--d", al.d)->capture_default_str();

    WickArgs wk;
    auto* sw = app.add_subcommand("wick", "exact large-width correlator polynomial");
    add_common(sw, wk.c, "json");
    sw->add_option("--spec", wk.spec, "JSON {m, contractions, inputs}")->required();
    sw->add_option("--L", wk.L, "hidden layers")->capture_default_str();
    sw->add_option("--mc-widths", wk.mc_widths, "comma separated widths for a Monte Carlo comparison");
    sw->add_option("--mc-out", wk.mc_out, "CSV path for the comparison");
    sw->add_option("--replicates", wk.c.replicates, "default 20000");

    BoundsArgs bd;
    auto* sb = app.add_subcommand("bounds", "generalization bound report");
    add_common(sb, bd.c, "json");
    sb->add_option("--weights", bd.weights)->required();
    sb->add_option("--data", bd.data)->required();
    sb->add_option("--family", bd.family)->check(CLI::IsMember({"bartlett", "neyshabur", "pacbayes", "all"}))->capture_default_str();
    sb->add_option("--gamma", bd.gamma)->capture_default_str();
    sb->add_option("--delta", bd.delta)->capture_default_str();
    sb->add_option("--logvar", bd.logvar, "posterior and prior log-variance")->capture_default_str();
    sb->add_option("--prior", bd.prior, "prior mean weight file (default zero)");
    sb->add_option("--samples", bd.samples, "posterior samples for the empirical risk")->capture_default_str();

    if (argc <= 1) {
        std::cerr << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 2;
    }
    try {
        if (*sp) run_phase(phase);
        else if (*sl) run_lengthmap(lm);
        else if (*ss) run_spectrum(spec);
        else if (*sd) run_lindyn(ld);
        else if (*spa) run_path(pa);
        else if (*sk) run_ntk_kernel(ka);
        else if (*st) run_ntk_train(ta);
        else if (*sdu) run_du(du);
        else if (*sa) run_align(al);
        else if (*sw) run_wick(wk);
        else if (*sb) run_bounds(bd);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
