#include "symc/param_opt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "symc/error.hpp"

namespace symc {

namespace {

std::size_t batch_size(const Dataset& data, RowSet rows) { return rows.empty() ? data.rows() : rows.size(); }

void check_batch(const Circuit& c, const Dataset& data, RowSet rows) {
    c.require_finalized();
    if (data.num_vars != c.num_vars()) throw DataError("dataset width does not match the circuit");
    if (batch_size(data, rows) == 0) throw DataError("empty batch");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double to_logit(double p) { return std::log(p) - std::log1p(-p); }

void set_simplex(std::span<double> w, std::span<const double> target) {
    double head = 0.0;
    for (std::size_t j = 0; j + 1 < w.size(); ++j) {
        w[j] = target[j];
        head += w[j];
    }
    w[w.size() - 1] = std::max(0.0, 1.0 - head);
}

}  // namespace

void OptConfig::check() const {
    if (anemone_steps == 0) throw UsageError("anemone_steps must be at least 1");
    if (!(adam.lr >= 0.0)) throw UsageError("adam lr must be nonnegative");
    if (!(em_damping > 0.0 && em_damping <= 1.0)) throw UsageError("em_damping must be in (0, 1]");
    if (!(weight_floor >= 0.0 && weight_floor < 0.5)) throw UsageError("weight_floor out of range");
    if (!(laplace_alpha > 0.0)) throw UsageError("laplace_alpha must be positive");
    if (!(dirichlet_eta > 0.0)) throw UsageError("dirichlet_eta must be positive");
    if (!(prior_alpha0 > 0.0 && prior_alpha1 > 0.0)) throw UsageError("prior concentrations must be positive");
    if (!(init_jitter >= 0.0)) throw UsageError("init_jitter must be nonnegative");
}

std::vector<double> sum_edge_statistics(const Circuit& circuit, const Dataset& data, RowSet rows) {
    check_batch(circuit, data, rows);
    return batch_flow_statistics(circuit, data, rows).edge_flow;
}

void anemone_step(Circuit& circuit, const Dataset& data, RowSet rows, double damping, double floor) {
    const auto stats = sum_edge_statistics(circuit, data, rows);
    std::vector<double> target;
    for (NodeId n : circuit.sum_nodes()) {
        auto w = circuit.weights(n);
        const std::size_t off = circuit.sum_offset(n);
        double total = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) total += stats[off + j];
        if (!(total > 0.0)) continue;
        target.assign(w.size(), 0.0);
        double z = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            target[j] = std::max(stats[off + j] / total, floor);
            z += target[j];
        }
        for (std::size_t j = 0; j < w.size(); ++j) target[j] = (1.0 - damping) * w[j] + damping * target[j] / z;
        set_simplex(w, target);
    }
}

LeafAdamState LeafAdamState::from_circuit(const Circuit& circuit) {
    circuit.require_finalized();
    LeafAdamState s;
    for (NodeId id : circuit.leaf_nodes()) {
        const double p = std::clamp(leaf_probability(circuit.node(id).leaf), kLeafClampLo, kLeafClampHi);
        s.logit.push_back(to_logit(p));
    }
    s.m.assign(s.logit.size(), 0.0);
    s.v.assign(s.logit.size(), 0.0);
    return s;
}

std::vector<double> leaf_logit_gradient(const Circuit& circuit, const Dataset& data, RowSet rows) {
    check_batch(circuit, data, rows);
    const auto stats = batch_flow_statistics(circuit, data, rows);
    const auto& leaves = circuit.leaf_nodes();
    std::vector<double> g(leaves.size(), 0.0);
    const double n = static_cast<double>(stats.rows);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const double p = leaf_probability(circuit.node(leaves[i]).leaf);
        g[i] = (stats.node_flow_x1[leaves[i]] - p * stats.node_flow[leaves[i]]) / n;
    }
    return g;
}

void adam_leaf_step(Circuit& circuit, const Dataset& data, LeafAdamState& state, const AdamConfig& adam,
                    RowSet rows) {
    const auto& leaves = circuit.leaf_nodes();
    if (state.logit.size() != leaves.size()) throw UsageError("Adam state does not match the circuit");
    const auto grad = leaf_logit_gradient(circuit, data, rows);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    const double zlo = to_logit(kLeafClampLo);
    const double zhi = to_logit(kLeafClampHi);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const double g = -grad[i];  // minimise the negative log-likelihood
        state.m[i] = adam.beta1 * state.m[i] + (1.0 - adam.beta1) * g;
        state.v[i] = adam.beta2 * state.v[i] + (1.0 - adam.beta2) * g * g;
        state.logit[i] -= adam.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + adam.eps);
        state.logit[i] = std::clamp(state.logit[i], zlo, zhi);
        circuit.set_leaf(leaves[i], Bernoulli{std::clamp(sigmoid(state.logit[i]), kLeafClampLo, kLeafClampHi)});
    }
}

void leaf_em_step(Circuit& circuit, const Dataset& data, RowSet rows) {
    check_batch(circuit, data, rows);
    const auto stats = batch_flow_statistics(circuit, data, rows);
    for (NodeId id : circuit.leaf_nodes()) {
        if (!(stats.node_flow[id] > 0.0)) continue;
        circuit.set_leaf(id, Bernoulli{std::clamp(stats.node_flow_x1[id] / stats.node_flow[id], kLeafClampLo,
                                                  kLeafClampHi)});
    }
}

void init_leaves_from_marginals(Circuit& circuit, const Dataset& data, double alpha) {
    check_batch(circuit, data, {});
    std::vector<double> ones(data.num_vars, 0.0);
    for (std::size_t r = 0; r < data.rows(); ++r)
        for (std::size_t v = 0; v < data.num_vars; ++v) ones[v] += data.row(r)[v];
    const double n = static_cast<double>(data.rows());
    for (NodeId id : circuit.leaf_nodes()) {
        const std::size_t v = circuit.node(id).var;
        circuit.set_leaf(id, Bernoulli{std::clamp((ones[v] + alpha) / (n + 2.0 * alpha), kLeafClampLo, kLeafClampHi)});
    }
}

void jitter_leaves(Circuit& circuit, double sd, std::uint64_t seed) {
    circuit.require_finalized();
    if (sd == 0.0) return;
    const auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    std::vector<std::uint8_t> seen(circuit.size(), 0);
    const std::function<void(NodeId, std::uint64_t)> walk = [&](NodeId id, std::uint64_t path) {
        if (seen[id]) return;
        seen[id] = 1;
        const Node& node = circuit.node(id);
        if (node.kind == NodeKind::Leaf) {
            std::mt19937_64 rng(mix(path ^ mix(node.var)));
            const double z = to_logit(std::clamp(leaf_probability(node.leaf), kLeafClampLo, kLeafClampHi)) +
                             sd * std::normal_distribution<double>(0.0, 1.0)(rng);
            circuit.set_leaf(id, Bernoulli{std::clamp(sigmoid(z), kLeafClampLo, kLeafClampHi)});
            return;
        }
        for (std::size_t j = 0; j < node.children.size(); ++j)
            walk(node.children[j], node.kind == NodeKind::Sum ? mix(path * 31 + j + 1) : path);
    };
    walk(circuit.root(), mix(seed));
}

FitResult hybrid_fit(Circuit& circuit, const Dataset& data, const OptConfig& config) {
    config.check();
    check_batch(circuit, data, {});
    init_leaves_from_marginals(circuit, data, config.laplace_alpha);
    jitter_leaves(circuit, config.init_jitter, config.seed);
    LeafAdamState state = LeafAdamState::from_circuit(circuit);

    const std::size_t n = data.rows();
    const bool full = config.batch_size == 0 || config.batch_size >= n;
    const double damping = full ? 1.0 : config.em_damping;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::size_t cursor = n;

    FitResult out;
    for (std::size_t step = 0; step < config.anemone_steps; ++step) {
        RowSet batch;
        if (!full) {
            if (cursor + config.batch_size > n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch = RowSet(order.data() + cursor, config.batch_size);
            cursor += config.batch_size;
        }
        anemone_step(circuit, data, batch, damping, config.weight_floor);
        if (config.leaf_em) {
            leaf_em_step(circuit, data, batch);
        } else {
            adam_leaf_step(circuit, data, state, config.adam, batch);
        }
        if (config.trace) out.train_trace.push_back(avg_loglik(circuit, data));
    }
    out.final_loglik = config.trace ? out.train_trace.back() : avg_loglik(circuit, data);
    return out;
}

std::vector<std::array<double, 2>> dirichlet_counts(const Circuit& circuit, const Dataset& data, RowSet rows) {
    check_batch(circuit, data, rows);
    const auto stats = batch_flow_statistics(circuit, data, rows);
    std::vector<std::array<double, 2>> counts;
    for (NodeId id : circuit.leaf_nodes()) {
        const double n1 = stats.node_flow_x1[id];
        counts.push_back({std::max(0.0, stats.node_flow[id] - n1), n1});
    }
    return counts;
}

std::vector<std::array<double, 2>> dirichlet_update(Circuit& circuit, const Dataset& data, double eta, RowSet rows) {
    for (NodeId id : circuit.leaf_nodes())
        if (!std::holds_alternative<DirichletLeaf>(circuit.node(id).leaf))
            throw UsageError("dirichlet_update needs Dirichlet leaves");
    const auto counts = dirichlet_counts(circuit, data, rows);
    const auto& leaves = circuit.leaf_nodes();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        DirichletLeaf d = std::get<DirichletLeaf>(circuit.node(leaves[i]).leaf);
        d.alpha0 += eta * counts[i][0];
        d.alpha1 += eta * counts[i][1];
        circuit.set_leaf(leaves[i], d);
    }
    return counts;
}

void make_dirichlet_leaves(Circuit& circuit, double alpha0, double alpha1) {
    circuit.require_finalized();
    for (NodeId id : circuit.leaf_nodes()) circuit.set_leaf(id, DirichletLeaf{alpha0, alpha1});
}

}  // namespace symc
