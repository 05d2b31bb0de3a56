#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "symc/circuit.hpp"
#include "symc/dataset.hpp"
#include "symc/grammar.hpp"
#include "symc/scope.hpp"

namespace symc {

struct SplitConfig {
    double p_threshold = 1e-3;       // independence rejected when p < threshold
    std::size_t min_instances = 50;  // clustering only above this many rows
    std::size_t cluster_count = 2;
    double laplace_alpha = 0.1;
    std::uint64_t seed = 0;

    void check() const;
};

struct GTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// 2x2 G-test of independence between columns i and j over `rows` (all rows when
// empty). A constant column gives statistic 0, p = 1.
GTestResult g_test(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> rows = {});

// Connected components of the dependence graph on `scope`; a single group means
// no split was found. Groups are ordered by their smallest variable.
std::vector<Scope> partition_variables(const Dataset& data, std::span<const std::size_t> rows, const Scope& scope,
                                       const SplitConfig& config);

// Hard EM over a k-component product-of-Bernoulli mixture restricted to `scope`.
// Returns row indices per cluster; no cluster is empty.
std::vector<std::vector<std::size_t>> cluster_rows(const Dataset& data, std::span<const std::size_t> rows,
                                                   const Scope& scope, std::size_t k, std::uint64_t seed,
                                                   double laplace_alpha = 0.1);

// Laplace-smoothed P(X_v = 1) over `rows`.
double smoothed_marginal(const Dataset& data, std::span<const std::size_t> rows, std::size_t v, double alpha);

Circuit learn_structure(const Dataset& data, const SplitConfig& config);

struct CorpusConfig {
    std::size_t circuits = 60;
    double threshold_lo = 1e-4;  // p-threshold jitter, log-uniform
    double threshold_hi = 1e-2;
    bool bootstrap = true;
};

// Bootstrap + threshold-jittered LearnSPN runs, decomposed to grammar arities
// and serialized. Throws GrammarError if a circuit falls outside `grammar`.
std::vector<TokenSequence> generate_corpus(const Dataset& data, const CorpusConfig& corpus, const SplitConfig& split,
                                           const GrammarConfig& grammar);

}  // namespace symc
