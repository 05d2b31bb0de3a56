#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "symc/circuit.hpp"
#include "symc/dataset.hpp"

namespace symc {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptConfig {
    std::size_t anemone_steps = 30;
    std::size_t batch_size = 0;  // 0 = full batch
    AdamConfig adam;
    double em_damping = 0.5;     // mini-batch sum-weight step size; full batch uses 1
    double weight_floor = 1e-8;
    double laplace_alpha = 0.1;  // leaf initialisation
    double dirichlet_eta = 1.0;
    double prior_alpha0 = 1.0;
    double prior_alpha1 = 1.0;
    bool leaf_em = false;        // ablation: undamped EM on leaves instead of Adam
    bool trace = true;           // record train avg_loglik after every step
    double init_jitter = 0.0;    // sd of seeded logit noise added to the initial leaves
    std::uint64_t seed = 0;

    void check() const;
};

// Rows of `data` to use; empty means every row.
using RowSet = std::span<const std::size_t>;

// Sum over the batch of each sum edge's flow, laid out by Circuit::sum_offset.
std::vector<double> sum_edge_statistics(const Circuit& circuit, const Dataset& data, RowSet rows = {});

// One flow-weighted EM step on every sum node: theta <- (1-g) theta + g theta_EM,
// with theta_EM proportional to max(stat/total, floor). Nodes with zero flow on
// the batch keep their weights.
void anemone_step(Circuit& circuit, const Dataset& data, RowSet rows = {}, double damping = 1.0,
                  double floor = 1e-8);

struct LeafAdamState {
    std::vector<double> logit;  // one per entry of Circuit::leaf_nodes()
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    static LeafAdamState from_circuit(const Circuit& circuit);
};

// d avg_loglik / d logit for every Bernoulli leaf, indexed like leaf_nodes().
std::vector<double> leaf_logit_gradient(const Circuit& circuit, const Dataset& data, RowSet rows = {});

// One Adam step on -avg_loglik in leaf logits; probabilities are re-clamped.
void adam_leaf_step(Circuit& circuit, const Dataset& data, LeafAdamState& state, const AdamConfig& adam,
                    RowSet rows = {});

// Closed-form flow-weighted EM for leaves: p = sum f x / sum f over the batch.
void leaf_em_step(Circuit& circuit, const Dataset& data, RowSet rows = {});

// Every leaf of variable v gets the Laplace-smoothed marginal of v.
void init_leaves_from_marginals(Circuit& circuit, const Dataset& data, double alpha);

// Adds N(0, sd) noise to every leaf logit. The draw for a leaf depends only on
// (seed, variable, sum-child indices on the first root path), so reordering
// product children leaves it unchanged while mixture components diverge.
void jitter_leaves(Circuit& circuit, double sd, std::uint64_t seed);

struct FitResult {
    std::vector<double> train_trace;  // avg_loglik after each step
    double final_loglik = 0.0;
};

// Leaves start at smoothed marginals (plus init_jitter); each step runs one sum-weight pass and
// one leaf pass on the same mini-batch.
FitResult hybrid_fit(Circuit& circuit, const Dataset& data, const OptConfig& config);

// Flow-weighted counts per Dirichlet leaf: counts[i] = {N0, N1} for leaf_nodes()[i].
std::vector<std::array<double, 2>> dirichlet_counts(const Circuit& circuit, const Dataset& data, RowSet rows = {});

// alpha_v += eta * N_v. Throws UsageError if a leaf is not Dirichlet.
std::vector<std::array<double, 2>> dirichlet_update(Circuit& circuit, const Dataset& data, double eta,
                                                    RowSet rows = {});

// Replaces every leaf by a Dirichlet leaf with the given prior concentrations.
void make_dirichlet_leaves(Circuit& circuit, double alpha0, double alpha1);

}  // namespace symc
