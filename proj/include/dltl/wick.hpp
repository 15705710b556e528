#pragma once

#include "dltl/netcore.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace dltl {

using Pair = std::pair<int, int>;
using Pairing = std::vector<Pair>;

// All perfect matchings of `items` (even size), each pair ordered (smaller first).
inline std::vector<Pairing> pairings_of(const std::vector<int>& items) {
    std::vector<Pairing> out;
    if (items.size() % 2) return out;
    if (items.empty()) {
        out.emplace_back();
        return out;
    }
    const int first = items[0];
    for (std::size_t j = 1; j < items.size(); ++j) {
        std::vector<int> rest;
        for (std::size_t k = 1; k < items.size(); ++k)
            if (k != j) rest.push_back(items[k]);
        for (auto& p : pairings_of(rest)) {
            p.insert(p.begin(), {std::min(first, items[j]), std::max(first, items[j])});
            out.push_back(std::move(p));
        }
    }
    return out;
}

inline std::vector<Pairing> enumerate_pairings(int k) {
    require(k >= 1, "enumerate_pairings: k must be at least 1");
    require(2 * k <= 12, "enumerate_pairings: 2k must not exceed 12");
    std::vector<int> items(2 * k);
    std::iota(items.begin(), items.end(), 0);
    return pairings_of(items);
}

// m factors f(x_i) (or derivative tensors), derivative indices contracted pairwise along `contractions`.
// The derivative order of factor i is its degree in the contraction multigraph.
struct ContractionSpec {
    int m = 0;
    std::vector<Pair> contractions;
    Mat inputs;  // n0 x m, column i is x_i

    std::vector<int> orders() const {
        std::vector<int> k(m, 0);
        for (auto [a, b] : contractions) {
            ++k[a];
            ++k[b];
        }
        return k;
    }

    void validate() const {
        require(m >= 1, "spec needs at least one factor");
        require(inputs.cols() == m, "spec needs one input column per factor");
        for (auto [a, b] : contractions)
            require(a >= 0 && b >= 0 && a < m && b < m, "contraction refers to a missing factor");
    }
};

namespace detail {

struct UnionFind {
    std::vector<int> p;
    explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
    void unite(int a, int b) { p[find(a)] = find(b); }
    int components() {
        int c = 0;
        for (int i = 0; i < static_cast<int>(p.size()); ++i) c += find(i) == i;
        return c;
    }
};

// Hidden levels (1-based) touched by weight type t in a net with L hidden layers.
inline std::vector<int> type_levels(int t, int L) {
    if (L == 1) return {1};
    if (t == 0) return {1};
    if (t == L) return {L};
    return {t, t + 1};
}

}  // namespace detail

struct ClusterStats {
    int n_even = 0, n_odd = 0;
    std::vector<int> sizes;
};

inline ClusterStats cluster_graph(const ContractionSpec& s) {
    detail::UnionFind uf(s.m);
    for (auto [a, b] : s.contractions) uf.unite(a, b);
    std::map<int, int> size;
    for (int i = 0; i < s.m; ++i) ++size[uf.find(i)];
    ClusterStats c;
    for (auto [root, k] : size) {
        c.sizes.push_back(k);
        (k % 2 ? c.n_odd : c.n_even)++;
    }
    return c;
}

inline double conjecture_exponent(const ContractionSpec& s) {
    auto c = cluster_graph(s);
    return c.n_even + c.n_odd / 2.0 - s.m / 2.0;
}

// A Feynman diagram: edges of every weight type, forced (from contractions) and Wick-paired alike.
struct Diagram {
    std::vector<Pairing> edges;  // edges[t] for weight types t = 0..L
    int loops = 0;               // loops of the double-line diagram (cycles for L = 1)
};

inline void check_wick_args(const ContractionSpec& s, int L) {
    s.validate();
    require(L >= 1, "L must be at least 1");
    require(s.m <= 8, "at most 8 factors are supported");
    if (L >= 2) require(s.inputs.rows() == 1, "deep correlators need scalar inputs");
}

inline int count_loops(const Diagram& d, int m, int L) {
    detail::UnionFind uf(m * L);
    for (int t = 0; t <= L; ++t)
        for (auto [a, b] : d.edges[t])
            for (int lev : detail::type_levels(t, L)) uf.unite(a * L + lev - 1, b * L + lev - 1);
    return uf.components();
}

// Calls visit(d) for each admissible diagram; returns the number visited.
inline long long enumerate_diagrams(const ContractionSpec& s, int L, const std::function<void(const Diagram&)>& visit,
                                    long long guard = 20000000) {
    check_wick_args(s, L);
    if (s.m % 2) return 0;
    const int e = static_cast<int>(s.contractions.size()), types = L + 1;
    long long assignments = 1;
    for (int i = 0; i < e; ++i) {
        assignments *= types;
        require(assignments <= guard, "too many contraction type assignments");
    }
    long long visited = 0;
    std::vector<int> type_of(e, 0);
    for (long long code = 0; code < assignments; ++code) {
        long long c = code;
        for (int i = 0; i < e; ++i) {
            type_of[i] = static_cast<int>(c % types);
            c /= types;
        }
        // each factor carries one weight of each type; a type is used at most once per factor
        std::vector<std::vector<char>> used(types, std::vector<char>(s.m, 0));
        bool ok = true;
        for (int i = 0; i < e && ok; ++i) {
            auto [a, b] = s.contractions[i];
            int t = type_of[i];
            if (a == b || used[t][a] || used[t][b]) ok = false;
            else used[t][a] = used[t][b] = 1;
        }
        if (!ok) continue;
        std::vector<std::vector<Pairing>> choices(types);
        long long combos = 1;
        for (int t = 0; t < types && ok; ++t) {
            std::vector<int> free;
            for (int f = 0; f < s.m; ++f)
                if (!used[t][f]) free.push_back(f);
            if (free.size() % 2) ok = false;
            else choices[t] = pairings_of(free);
            combos *= static_cast<long long>(choices[t].size());
        }
        if (!ok) continue;
        require(visited + combos <= guard, "diagram count exceeds the enumeration guard");
        Diagram d;
        d.edges.assign(types, {});
        std::vector<std::size_t> idx(types, 0);
        for (long long k = 0; k < combos; ++k) {
            long long r = k;
            for (int t = 0; t < types; ++t) {
                idx[t] = static_cast<std::size_t>(r % static_cast<long long>(choices[t].size()));
                r /= static_cast<long long>(choices[t].size());
            }
            for (int t = 0; t < types; ++t) {
                d.edges[t] = choices[t][idx[t]];
                for (int i = 0; i < e; ++i)
                    if (type_of[i] == t) {
                        auto [a, b] = s.contractions[i];
                        d.edges[t].push_back({std::min(a, b), std::max(a, b)});
                    }
            }
            d.loops = count_loops(d, s.m, L);
            visit(d);
            ++visited;
        }
    }
    return visited;
}

// Polynomial in n: sum of coefficient * n^power * prod_{(i,j) in monomial} x_i . x_j
struct WickTerm {
    int power = 0;
    Pairing monomial;
    long long coefficient = 0;
};

struct WickPolynomial {
    std::vector<WickTerm> terms;  // sorted by power descending, then monomial
    long long diagrams = 0;

    bool zero() const { return terms.empty(); }

    int leading_power() const {
        require(!terms.empty(), "zero polynomial has no leading power");
        return terms.front().power;
    }

    double evaluate(double n, const Mat& gram) const {
        double v = 0.0;
        for (const auto& t : terms) {
            double mono = 1.0;
            for (auto [a, b] : t.monomial) mono *= gram(a, b);
            v += t.coefficient * std::pow(n, t.power) * mono;
        }
        return v;
    }

    // power -> numeric coefficient, monomials evaluated on the gram
    std::map<int, double> by_power(const Mat& gram) const {
        std::map<int, double> out;
        for (const auto& t : terms) {
            double mono = 1.0;
            for (auto [a, b] : t.monomial) mono *= gram(a, b);
            out[t.power] += t.coefficient * mono;
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : terms) {
            nlohmann::json mono = nlohmann::json::array();
            for (auto [a, b] : t.monomial) mono.push_back({a, b});
            arr.push_back({{"coefficient", t.coefficient}, {"monomial", mono}, {"power_of_inv_n", -t.power}});
        }
        return arr;
    }
};

inline WickPolynomial exact_correlation(const ContractionSpec& s, int L) {
    check_wick_args(s, L);
    std::map<std::pair<int, Pairing>, long long, std::greater<>> acc;
    WickPolynomial poly;
    poly.diagrams = enumerate_diagrams(s, L, [&](const Diagram& d) {
        Pairing mono = d.edges[0];
        std::sort(mono.begin(), mono.end());
        ++acc[{d.loops - L * s.m / 2, mono}];
    });
    for (auto& [key, c] : acc) poly.terms.push_back({key.first, key.second, c});
    return poly;
}

struct ComponentStat {
    int factors = 0;
    int loops = 0;
};

// Connected components of the diagram on the factor set with their double-line loop counts.
inline std::vector<ComponentStat> diagram_components(const Diagram& d, int m, int L) {
    detail::UnionFind uf(m);
    for (const auto& es : d.edges)
        for (auto [a, b] : es) uf.unite(a, b);
    std::map<int, ComponentStat> comp;
    for (int i = 0; i < m; ++i) ++comp[uf.find(i)].factors;
    detail::UnionFind lv(m * L);
    for (int t = 0; t <= L; ++t)
        for (auto [a, b] : d.edges[t])
            for (int lev : detail::type_levels(t, L)) lv.unite(a * L + lev - 1, b * L + lev - 1);
    for (int node = 0; node < m * L; ++node)
        if (lv.find(node) == node) ++comp[uf.find(node / L)].loops;
    std::vector<ComponentStat> out;
    for (auto& [r, c] : comp) out.push_back(c);
    return out;
}

// ---- Monte Carlo over linear nets sampled by netcore ----

// ntk-parameterized linear net with unit weights; inputs are multiplied by sqrt(n0) so that
// f(x) = n^{-L/2} W_L ... W_0 x as in the diagram expansion.
inline NetConfig wick_net(int n0, int n, int L) {
    NetConfig c;
    c.widths.push_back(n0);
    for (int l = 0; l < L; ++l) c.widths.push_back(n);
    c.widths.push_back(1);
    c.act = Activation::linear();
    c.param = Param::ntk;
    c.init = Init::gaussian(1.0);
    return c;
}

namespace detail {

// Hessian-vector product of f(x) = n^{-1/2} a W x in the netcore flattened layout (W column-major, then a).
inline Vec shallow_hvp(int n, const Vec& x, const Vec& v) {
    const int n0 = static_cast<int>(x.size());
    const double r = 1.0 / std::sqrt(double(n));
    Eigen::Map<const Mat> vW(v.data(), n, n0);
    Vec va = v.tail(n);
    Vec out(v.size());
    Eigen::Map<Mat> oW(out.data(), n, n0);
    oW = r * va * x.transpose();
    out.tail(n) = r * (vW * x);
    return out;
}

struct SampleTensors {
    std::vector<double> f;
    std::vector<Vec> g;
};

// One sample of the contracted product. Components of the cluster graph are paths or cycles when every
// derivative order is at most 2: a path reads g^T H ... H g, a cycle reads trace(H ... H).
inline double contracted_value(const ContractionSpec& s, int n, const std::vector<Vec>& xs, const SampleTensors& st) {
    const int m = s.m;
    std::vector<std::vector<std::pair<int, int>>> adj(m);  // (neighbour, edge id)
    for (int i = 0; i < static_cast<int>(s.contractions.size()); ++i) {
        auto [a, b] = s.contractions[i];
        adj[a].push_back({b, i});
        adj[b].push_back({a, i});
    }
    std::vector<char> seen(m, 0), edge_used(s.contractions.size(), 0);
    double value = 1.0;
    auto walk = [&](int start, Vec v, bool cycle) {
        // v is the running vector leaving `start`; returns the end vertex contribution
        int cur = start;
        seen[cur] = 1;
        while (true) {
            int next = -1, eid = -1;
            for (auto [nb, id] : adj[cur])
                if (!edge_used[id]) {
                    next = nb;
                    eid = id;
                    break;
                }
            if (next < 0) return v;
            edge_used[eid] = 1;
            if (cycle && next == start) return v;
            seen[next] = 1;
            bool interior = false;
            for (auto [nb, id] : adj[next])
                if (!edge_used[id]) interior = true;
            if (!interior) {
                Vec end(1);
                end(0) = st.g[next].dot(v);
                return end;
            }
            v = shallow_hvp(n, xs[next], v);
            cur = next;
        }
    };
    for (int i = 0; i < m; ++i) {
        if (seen[i]) continue;
        if (adj[i].empty()) {
            seen[i] = 1;
            value *= st.f[i];
            continue;
        }
        if (adj[i].size() == 1) {
            value *= walk(i, st.g[i], false)(0);
            continue;
        }
    }
    // remaining unseen vertices lie on cycles
    for (int i = 0; i < m; ++i) {
        if (seen[i]) continue;
        const Eigen::Index P = st.g[i].size();
        double tr = 0.0;
        std::vector<char> seen0 = seen, used0 = edge_used;
        for (Eigen::Index mu = 0; mu < P; ++mu) {
            seen = seen0;
            edge_used = used0;
            Vec e = Vec::Zero(P);
            e(mu) = 1.0;
            Vec v = walk(i, shallow_hvp(n, xs[i], e), true);
            tr += v(mu);
        }
        value *= tr;
    }
    return value;
}

}  // namespace detail

struct McEstimate {
    double mean = 0.0, se = 0.0;
};

// Monte Carlo estimate of the correlator at width n. Derivatives need L = 1 and order <= 2 per factor.
inline McEstimate mc_correlation(const ContractionSpec& s, int L, int n, int replicates, std::uint64_t seed) {
    check_wick_args(s, L);
    require(replicates >= 2, "need at least two replicates");
    auto ord = s.orders();
    bool derivs = !s.contractions.empty();
    if (derivs) {
        require(L == 1, "Monte Carlo with derivative tensors is implemented for L = 1");
        for (int k : ord) require(k <= 2, "Monte Carlo supports derivative order at most 2 per factor");
    }
    const int n0 = static_cast<int>(s.inputs.rows());
    const NetConfig cfg = wick_net(n0, n, L);
    std::vector<Vec> xs;
    for (int i = 0; i < s.m; ++i) xs.push_back(std::sqrt(double(n0)) * s.inputs.col(i));
    std::vector<Vec> xraw;
    for (int i = 0; i < s.m; ++i) xraw.push_back(s.inputs.col(i));
    std::vector<double> vals(replicates);
    parallel_for(replicates, [&](std::size_t r) {
        WeightSet w = init_weights(cfg, seed + r);
        detail::SampleTensors st;
        for (int i = 0; i < s.m; ++i) {
            st.f.push_back(forward(cfg, w, xs[i]).output()(0));
            st.g.push_back(ord[i] >= 1 ? param_gradient(cfg, w, xs[i]) : Vec());
        }
        vals[r] = derivs ? detail::contracted_value(s, n, xraw, st)
                         : std::accumulate(st.f.begin(), st.f.end(), 1.0, std::multiplies<>());
    });
    MeanSe ms = mean_se(vals);
    return {ms.mean, ms.se};
}

struct ScalingCheck {
    std::vector<int> widths;
    std::vector<McEstimate> mc;
    std::vector<double> exact;
    double slope = 0.0;  // log |mean| against log n
};

inline ScalingCheck mc_scaling_check(const ContractionSpec& s, int L, const std::vector<int>& widths, int replicates,
                                     std::uint64_t seed, bool with_exact = true) {
    require(widths.size() >= 3, "need at least three widths");
    ScalingCheck sc;
    sc.widths = widths;
    WickPolynomial poly;
    if (with_exact) poly = exact_correlation(s, L);
    const Mat gram = s.inputs.transpose() * s.inputs;
    std::vector<double> ln, lv;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        sc.mc.push_back(mc_correlation(s, L, widths[i], replicates, seed + 1000003ULL * i));
        if (with_exact) sc.exact.push_back(poly.evaluate(widths[i], gram));
        ln.push_back(std::log(double(widths[i])));
        lv.push_back(std::log(std::abs(sc.mc.back().mean)));
    }
    sc.slope = ls_slope(ln, lv);
    return sc;
}

// Variance of the empirical tangent kernel Theta(x, x') of the shallow linear net.
struct KernelVariance {
    double variance = 0.0, se = 0.0;
    double exact = 0.0;  // connected part from the diagram expansion
};

inline KernelVariance mc_kernel_variance(const Vec& x, const Vec& xp, int n, int replicates, std::uint64_t seed) {
    require(x.size() == xp.size(), "inputs must have equal dimension");
    const int n0 = static_cast<int>(x.size());
    const NetConfig cfg = wick_net(n0, n, 1);
    const double sc = std::sqrt(double(n0));
    std::vector<double> th(replicates);
    parallel_for(replicates, [&](std::size_t r) {
        WeightSet w = init_weights(cfg, seed + r);
        th[r] = param_gradient(cfg, w, sc * x).dot(param_gradient(cfg, w, sc * xp));
    });
    MeanSe ms = mean_se(th);
    double m2 = 0.0, m4 = 0.0;
    for (double v : th) {
        double d = v - ms.mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= (replicates - 1);
    m4 /= replicates;
    KernelVariance kv;
    kv.variance = m2;
    kv.se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / replicates);

    ContractionSpec two{2, {{0, 1}}, Mat(n0, 2)};
    two.inputs << x, xp;
    ContractionSpec four{4, {{0, 1}, {2, 3}}, Mat(n0, 4)};
    four.inputs << x, xp, x, xp;
    double e2 = exact_correlation(two, 1).evaluate(n, two.inputs.transpose() * two.inputs);
    double e4 = exact_correlation(four, 1).evaluate(n, four.inputs.transpose() * four.inputs);
    kv.exact = e4 - e2 * e2;
    return kv;
}

inline ContractionSpec spec_from_json(const nlohmann::json& j) {
    try {
        ContractionSpec s;
        s.m = j.at("m").get<int>();
        for (const auto& c : j.value("contractions", nlohmann::json::array()))
            s.contractions.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
        const auto& in = j.at("inputs");
        require(static_cast<int>(in.size()) == s.m, "spec: need one input per factor");
        const int n0 = in[0].is_array() ? static_cast<int>(in[0].size()) : 1;
        s.inputs.resize(n0, s.m);
        for (int i = 0; i < s.m; ++i) {
            if (in[i].is_array()) {
                require(static_cast<int>(in[i].size()) == n0, "spec: inputs differ in dimension");
                for (int r = 0; r < n0; ++r) s.inputs(r, i) = in[i][r].get<double>();
            } else {
                s.inputs(0, i) = in[i].get<double>();
            }
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("bad wick spec: ") + e.what());
    }
}

}  // namespace dltl
