#pragma once

// Test-only generators and brute-force oracles. Nothing here calls into the
// evaluation code paths it is used to check, except where noted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "symc/circuit.hpp"
#include "symc/dataset.hpp"

namespace symc::testing {

struct RandomCircuitOptions {
    std::size_t max_depth = 5;
    double sum_prob = 0.45;
    bool single_var_sums = true;
    std::size_t max_sum_arity = 3;
    std::size_t max_product_arity = 4;
    double leaf_lo = 0.05;
    double leaf_hi = 0.95;
};

inline std::vector<double> random_simplex(std::size_t k, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& x : w) {
        x = g(rng) + 1e-3;
        total += x;
    }
    for (auto& x : w) x /= total;
    // Exact simplex: fold rounding error into the last entry.
    double head = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) head += w[j];
    w[k - 1] = 1.0 - head;
    return w;
}

inline NodeId random_subtree(Circuit& c, std::vector<std::size_t> vars, std::size_t depth,
                             std::mt19937_64& rng, const RandomCircuitOptions& opt) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> leaf_p(opt.leaf_lo, opt.leaf_hi);
    const bool can_recurse = depth + 1 < opt.max_depth;
    if (vars.size() == 1) {
        if (opt.single_var_sums && can_recurse && u(rng) < opt.sum_prob * 0.5) {
            std::size_t k = 2 + rng() % (opt.max_sum_arity - 1);
            std::vector<NodeId> kids;
            for (std::size_t j = 0; j < k; ++j) kids.push_back(c.add_leaf(vars[0], Bernoulli{leaf_p(rng)}));
            return c.add_sum(kids, random_simplex(k, rng));
        }
        return c.add_leaf(vars[0], Bernoulli{leaf_p(rng)});
    }
    if (!can_recurse || depth + 2 >= opt.max_depth) {
        std::vector<NodeId> kids;
        for (auto v : vars) kids.push_back(c.add_leaf(v, Bernoulli{leaf_p(rng)}));
        return c.add_product(kids);
    }
    if (u(rng) < opt.sum_prob) {
        std::size_t k = 2 + rng() % (opt.max_sum_arity - 1);
        std::vector<NodeId> kids;
        for (std::size_t j = 0; j < k; ++j) kids.push_back(random_subtree(c, vars, depth + 1, rng, opt));
        return c.add_sum(kids, random_simplex(k, rng));
    }
    std::shuffle(vars.begin(), vars.end(), rng);
    std::size_t k = 2 + rng() % std::min(opt.max_product_arity - 1, vars.size() - 1);
    k = std::min(k, vars.size());
    // Random composition of vars.size() into k positive parts.
    std::vector<std::size_t> cuts(vars.size() - 1);
    std::iota(cuts.begin(), cuts.end(), std::size_t{1});
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(k - 1);
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(vars.size());
    std::vector<NodeId> kids;
    std::size_t start = 0;
    for (auto cut : cuts) {
        std::vector<std::size_t> part(vars.begin() + static_cast<long>(start), vars.begin() + static_cast<long>(cut));
        kids.push_back(random_subtree(c, part, depth + 1, rng, opt));
        start = cut;
    }
    return c.add_product(kids);
}

inline Circuit random_circuit(std::size_t d, std::uint64_t seed, const RandomCircuitOptions& opt = {}) {
    std::mt19937_64 rng(seed);
    Circuit c(d);
    std::vector<std::size_t> vars(d);
    std::iota(vars.begin(), vars.end(), std::size_t{0});
    c.set_root(random_subtree(c, vars, 0, rng, opt));
    c.finalize();
    return c;
}

// Linear-domain recursive evaluation, independent of the library's log-domain pass.
inline double naive_prob(const Circuit& c, NodeId id, const std::vector<int>& x) {
    const Node& n = c.node(id);
    switch (n.kind) {
        case NodeKind::Leaf: {
            if (x[n.var] < 0) return 1.0;
            const double p = leaf_probability(n.leaf);
            return x[n.var] ? p : 1.0 - p;
        }
        case NodeKind::Sum: {
            double s = 0.0;
            for (std::size_t j = 0; j < n.children.size(); ++j) s += n.weights[j] * naive_prob(c, n.children[j], x);
            return s;
        }
        case NodeKind::Product: {
            double s = 1.0;
            for (NodeId ch : n.children) s *= naive_prob(c, ch, x);
            return s;
        }
    }
    return 0.0;
}

inline double naive_prob(const Circuit& c, const std::vector<int>& x) { return naive_prob(c, c.root(), x); }

inline std::vector<std::uint8_t> bits_of(std::uint64_t mask, std::size_t d) {
    std::vector<std::uint8_t> x(d);
    for (std::size_t v = 0; v < d; ++v) x[v] = static_cast<std::uint8_t>((mask >> v) & 1u);
    return x;
}

// Sum of p(x) over all 2^d assignments.
inline double total_mass(const Circuit& c) {
    double total = 0.0;
    const std::uint64_t n = std::uint64_t{1} << c.num_vars();
    for (std::uint64_t m = 0; m < n; ++m) total += std::exp(evaluate_log(c, bits_of(m, c.num_vars())));
    return total;
}

inline Dataset random_dataset(std::size_t d, std::size_t n, std::uint64_t seed, double p = 0.5) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(p);
    Dataset data(d);
    data.cells.resize(n * d);
    for (auto& cell : data.cells) cell = b(rng) ? 1 : 0;
    return data;
}

// Variables split into blocks; each block copies its own latent fair coin,
// each cell flipped with probability `noise`. Blocks are mutually independent.
inline Dataset block_dataset(const std::vector<std::size_t>& block_sizes, std::size_t n, std::uint64_t seed,
                             double noise = 0.05) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5), flip(noise);
    std::size_t d = 0;
    for (auto b : block_sizes) d += b;
    Dataset data(d);
    data.cells.resize(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t v = 0;
        for (auto b : block_sizes) {
            const bool z = coin(rng);
            for (std::size_t t = 0; t < b; ++t, ++v) data.cells[r * d + v] = (z != flip(rng)) ? 1 : 0;
        }
    }
    return data;
}

// Two product-of-Bernoulli modes with P(X_v = 1) = p_hi or 1 - p_hi; labels returned.
inline Dataset two_mode_dataset(std::size_t d, std::size_t n, std::uint64_t seed, std::vector<int>& labels,
                                double p_hi = 0.9) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5), hi(p_hi), lo(1.0 - p_hi);
    Dataset data(d);
    data.cells.resize(n * d);
    labels.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        labels[r] = coin(rng) ? 1 : 0;
        for (std::size_t v = 0; v < d; ++v) data.cells[r * d + v] = (labels[r] ? hi(rng) : lo(rng)) ? 1 : 0;
    }
    return data;
}

// Central difference of p_C(x) in sum edge (node, j), weights left unnormalized.
inline double fd_weight_derivative(Circuit c, NodeId node, std::size_t j, Row x, double h = 1e-6) {
    const double w0 = c.weights(node)[j];
    c.weights(node)[j] = w0 + h;
    const double up = std::exp(evaluate_log(c, x));
    c.weights(node)[j] = w0 - h;
    const double down = std::exp(evaluate_log(c, x));
    return (up - down) / (2.0 * h);
}

}  // namespace symc::testing
