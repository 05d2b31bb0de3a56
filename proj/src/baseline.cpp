#include "symc/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "symc/error.hpp"

namespace symc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a (rows, scope) subproblem, so equal subproblems split identically
// whatever the surrounding recursion looked like.
std::uint64_t subproblem_seed(std::uint64_t seed, std::span<const std::size_t> rows, const Scope& scope) {
    std::uint64_t h = splitmix(seed);
    for (auto v : scope.members()) h = splitmix(h ^ v);
    h = splitmix(h ^ rows.size());
    for (auto r : rows) h = splitmix(h ^ r);
    return h;
}

std::vector<std::size_t> all_rows(const Dataset& data) {
    std::vector<std::size_t> r(data.rows());
    std::iota(r.begin(), r.end(), 0);
    return r;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

void SplitConfig::check() const {
    if (!(p_threshold > 0.0 && p_threshold < 1.0)) throw UsageError("p_threshold must be in (0, 1)");
    if (cluster_count < 2) throw UsageError("cluster_count must be at least 2");
    if (!(laplace_alpha > 0.0)) throw UsageError("laplace_alpha must be positive");
}

GTestResult g_test(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> rows) {
    double o[2][2] = {{0, 0}, {0, 0}};
    std::size_t n = 0;
    const auto tally = [&](std::size_t r) {
        const Row x = data.row(r);
        o[x[i]][x[j]] += 1.0;
        ++n;
    };
    if (rows.empty()) {
        for (std::size_t r = 0; r < data.rows(); ++r) tally(r);
    } else {
        for (auto r : rows) tally(r);
    }
    if (n < 2) throw DataError("g_test needs at least 2 rows");
    const double total = static_cast<double>(n);
    const double ra[2] = {o[0][0] + o[0][1], o[1][0] + o[1][1]};
    const double cb[2] = {o[0][0] + o[1][0], o[0][1] + o[1][1]};
    if (ra[0] == 0 || ra[1] == 0 || cb[0] == 0 || cb[1] == 0) return {0.0, 1.0};
    double g = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            if (o[a][b] > 0) g += o[a][b] * std::log(o[a][b] * total / (ra[a] * cb[b]));
    g = std::max(0.0, 2.0 * g);
    return {g, std::erfc(std::sqrt(g / 2.0))};
}

std::vector<Scope> partition_variables(const Dataset& data, std::span<const std::size_t> rows, const Scope& scope,
                                       const SplitConfig& config) {
    const auto vars = scope.members();
    UnionFind uf(vars.size());
    for (std::size_t a = 0; a < vars.size(); ++a)
        for (std::size_t b = a + 1; b < vars.size(); ++b) {
            if (uf.find(a) == uf.find(b)) continue;
            if (g_test(data, vars[a], vars[b], rows).p_value < config.p_threshold) uf.unite(a, b);
        }
    std::vector<Scope> groups;
    std::vector<std::size_t> slot(vars.size(), SIZE_MAX);
    for (std::size_t a = 0; a < vars.size(); ++a) {
        const std::size_t root = uf.find(a);
        if (slot[root] == SIZE_MAX) {
            slot[root] = groups.size();
            groups.emplace_back();
        }
        groups[slot[root]].insert(vars[a]);
    }
    return groups;
}

double smoothed_marginal(const Dataset& data, std::span<const std::size_t> rows, std::size_t v, double alpha) {
    double ones = 0.0;
    for (auto r : rows) ones += data.row(r)[v];
    return (ones + alpha) / (static_cast<double>(rows.size()) + 2.0 * alpha);
}

std::vector<std::vector<std::size_t>> cluster_rows(const Dataset& data, std::span<const std::size_t> rows,
                                                   const Scope& scope, std::size_t k, std::uint64_t seed,
                                                   double laplace_alpha) {
    if (k == 0) throw UsageError("cluster count must be positive");
    if (k == 1) return {std::vector<std::size_t>(rows.begin(), rows.end())};
    if (rows.size() < k) throw DataError("fewer rows than clusters");
    const auto vars = scope.members();
    const std::size_t n = rows.size();
    const std::size_t m = vars.size();
    std::mt19937_64 rng(seed);

    std::vector<std::size_t> assign(n);
    {
        // k distinct random rows as seeds, then nearest-seed by Hamming distance.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            std::size_t best_d = SIZE_MAX;
            for (std::size_t c = 0; c < k; ++c) {
                std::size_t dist = 0;
                for (auto v : vars) dist += data.row(rows[r])[v] != data.row(rows[idx[c]])[v];
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            assign[r] = best;
        }
    }

    std::vector<double> logp1(k * m), logp0(k * m), logw(k);
    std::vector<double> fit(n);
    const auto refit = [&] {
        std::vector<double> ones(k * m, 0.0);
        std::vector<double> count(k, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const Row x = data.row(rows[r]);
            count[assign[r]] += 1.0;
            for (std::size_t t = 0; t < m; ++t) ones[assign[r] * m + t] += x[vars[t]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            logw[c] = std::log((count[c] + laplace_alpha) / (static_cast<double>(n) + k * laplace_alpha));
            for (std::size_t t = 0; t < m; ++t) {
                const double p = (ones[c * m + t] + laplace_alpha) / (count[c] + 2.0 * laplace_alpha);
                logp1[c * m + t] = std::log(p);
                logp0[c * m + t] = std::log1p(-p);
            }
        }
    };
    const auto score = [&](std::size_t r, std::size_t c) {
        const Row x = data.row(rows[r]);
        double s = logw[c];
        for (std::size_t t = 0; t < m; ++t) s += x[vars[t]] ? logp1[c * m + t] : logp0[c * m + t];
        return s;
    };

    for (int iter = 0; iter < 100; ++iter) {
        refit();
        bool changed = false;
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = assign[r];
            double best_s = score(r, best);
            for (std::size_t c = 0; c < k; ++c) {
                const double s = score(r, c);
                if (s > best_s + 1e-12) {
                    best_s = s;
                    best = c;
                }
            }
            fit[r] = best_s;
            if (best != assign[r]) {
                assign[r] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }

    // Re-seed empty clusters with the worst-fitting half of the largest one.
    while (true) {
        std::vector<std::size_t> sizes(k, 0);
        for (auto a : assign) ++sizes[a];
        const auto empty = std::find(sizes.begin(), sizes.end(), 0);
        if (empty == sizes.end()) break;
        const auto largest = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
        std::vector<std::size_t> members;
        for (std::size_t r = 0; r < n; ++r)
            if (assign[r] == largest) members.push_back(r);
        std::stable_sort(members.begin(), members.end(), [&](auto a, auto b) { return fit[a] < fit[b]; });
        const auto target = static_cast<std::size_t>(empty - sizes.begin());
        for (std::size_t t = 0; t < members.size() / 2; ++t) assign[members[t]] = target;
    }

    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t r = 0; r < n; ++r) out[assign[r]].push_back(rows[r]);
    return out;
}

namespace {

struct Learner {
    const Dataset& data;
    const SplitConfig& config;
    Circuit circuit;

    NodeId leaf(std::span<const std::size_t> rows, std::size_t v) {
        return circuit.add_leaf(v, Bernoulli{smoothed_marginal(data, rows, v, config.laplace_alpha)});
    }

    NodeId factorize(std::span<const std::size_t> rows, const Scope& scope) {
        std::vector<NodeId> kids;
        for (auto v : scope.members()) kids.push_back(leaf(rows, v));
        return circuit.add_product(std::move(kids));
    }

    NodeId learn(std::span<const std::size_t> rows, const Scope& scope) {
        if (scope.size() == 1) return leaf(rows, scope.min());
        if (rows.size() >= 2) {
            const auto groups = partition_variables(data, rows, scope, config);
            if (groups.size() > 1) {
                std::vector<NodeId> kids;
                for (const auto& g : groups) kids.push_back(learn(rows, g));
                return circuit.add_product(std::move(kids));
            }
        }
        if (rows.size() > config.min_instances && rows.size() >= config.cluster_count) {
            const auto clusters = cluster_rows(data, rows, scope, config.cluster_count,
                                               subproblem_seed(config.seed, rows, scope), config.laplace_alpha);
            std::vector<NodeId> kids;
            std::vector<double> w;
            const double denom =
                static_cast<double>(rows.size()) + static_cast<double>(clusters.size()) * config.laplace_alpha;
            for (const auto& c : clusters) {
                kids.push_back(learn(c, scope));
                w.push_back((static_cast<double>(c.size()) + config.laplace_alpha) / denom);
            }
            double head = 0.0;
            for (std::size_t j = 0; j + 1 < w.size(); ++j) head += w[j];
            w.back() = 1.0 - head;
            return circuit.add_sum(std::move(kids), std::move(w));
        }
        return factorize(rows, scope);
    }
};

}  // namespace

Circuit learn_structure(const Dataset& data, const SplitConfig& config) {
    config.check();
    if (data.empty()) throw DataError("learn_structure on an empty dataset");
    if (data.num_vars > kMaxVars) throw DataError("too many variables");
    Learner l{data, config, Circuit(data.num_vars)};
    const auto rows = all_rows(data);
    const NodeId root = l.learn(rows, Scope::full(data.num_vars));
    l.circuit.set_root(root);
    l.circuit.finalize();
    return std::move(l.circuit);
}

std::vector<TokenSequence> generate_corpus(const Dataset& data, const CorpusConfig& corpus, const SplitConfig& split,
                                           const GrammarConfig& grammar) {
    split.check();
    if (!(corpus.threshold_lo > 0.0 && corpus.threshold_lo <= corpus.threshold_hi))
        throw UsageError("bad threshold jitter range");
    std::vector<TokenSequence> out;
    out.reserve(corpus.circuits);
    for (std::size_t i = 0; i < corpus.circuits; ++i) {
        std::mt19937_64 rng(splitmix(split.seed ^ splitmix(i)));
        SplitConfig cfg = split;
        cfg.seed = rng();
        const double lo = std::log(corpus.threshold_lo);
        const double hi = std::log(corpus.threshold_hi);
        cfg.p_threshold = std::exp(std::uniform_real_distribution<double>(lo, hi)(rng));
        Dataset sample = data;
        if (corpus.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
            std::vector<std::size_t> idx(data.rows());
            for (auto& r : idx) r = pick(rng);
            sample = data.select(idx);
        }
        const Circuit c = arity_decompose(learn_structure(sample, cfg), grammar.factorize_arity());
        out.push_back(serialize(c, grammar));
    }
    return out;
}

}  // namespace symc
