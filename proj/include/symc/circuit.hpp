#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "symc/dataset.hpp"
#include "symc/scope.hpp"

namespace symc {

using NodeId = std::uint32_t;

inline constexpr double kLeafClampLo = 1e-6;
inline constexpr double kLeafClampHi = 1.0 - 1e-6;
inline constexpr std::size_t kDefaultMaxNodes = 4096;

enum class NodeKind : std::uint8_t { Leaf, Sum, Product };

struct Bernoulli {
    double p = 0.5;  // P(X = 1)
};

// Beta posterior over a binary leaf's success probability.
struct DirichletLeaf {
    double alpha0 = 1.0;
    double alpha1 = 1.0;

    [[nodiscard]] double mean() const { return alpha1 / (alpha0 + alpha1); }
    [[nodiscard]] double variance() const {
        const double a = alpha0 + alpha1;
        return alpha0 * alpha1 / (a * a * (a + 1.0));
    }
};

using LeafParams = std::variant<Bernoulli, DirichletLeaf>;

// Point estimate of P(X = 1) used for evaluation.
double leaf_probability(const LeafParams& params);

struct Node {
    NodeKind kind = NodeKind::Leaf;
    std::size_t var = 0;                 // leaves only
    LeafParams leaf = Bernoulli{};       // leaves only
    std::vector<NodeId> children;        // sums and products
    std::vector<double> weights;         // sums only, one per child
};

// Arena of nodes with an explicit root. Structure edits invalidate the derived
// data (evaluation order, parents, scopes); call finalize() before evaluating.
class Circuit {
public:
    Circuit() = default;
    explicit Circuit(std::size_t num_vars) : num_vars_(num_vars) {}

    NodeId add_node(Node node);
    NodeId add_leaf(std::size_t var, LeafParams params = Bernoulli{});
    NodeId add_sum(std::vector<NodeId> children, std::vector<double> weights);
    NodeId add_product(std::vector<NodeId> children);
    void set_root(NodeId id);

    // Computes evaluation order, parents, scopes and the sum-parameter layout.
    // Throws UsageError on dangling ids or cycles; other structural problems are
    // left to validate().
    void finalize();

    [[nodiscard]] bool finalized() const { return finalized_; }
    [[nodiscard]] std::size_t num_vars() const { return num_vars_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] NodeId root() const {
        return has_root_ || nodes_.empty() ? root_ : static_cast<NodeId>(nodes_.size() - 1);
    }
    [[nodiscard]] const Node& node(NodeId id) const { return nodes_[id]; }
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }

    // Parameter edits keep the structure (and derived data) intact.
    [[nodiscard]] std::span<double> weights(NodeId id) { return nodes_[id].weights; }
    [[nodiscard]] std::span<const double> weights(NodeId id) const { return nodes_[id].weights; }
    void set_leaf(NodeId id, LeafParams params) { nodes_[id].leaf = params; }

    // Derived data; valid after finalize().
    [[nodiscard]] const std::vector<NodeId>& order() const { return order_; }  // children first
    [[nodiscard]] const std::vector<std::vector<NodeId>>& parents() const { return parents_; }
    [[nodiscard]] const Scope& scope(NodeId id) const { return scopes_[id]; }
    [[nodiscard]] const std::vector<NodeId>& sum_nodes() const { return sum_nodes_; }
    [[nodiscard]] const std::vector<NodeId>& leaf_nodes() const { return leaf_nodes_; }
    [[nodiscard]] std::size_t sum_offset(NodeId id) const { return sum_offset_[id]; }
    [[nodiscard]] std::size_t num_sum_params() const { return num_sum_params_; }
    [[nodiscard]] std::size_t depth() const { return depth_; }  // levels on the longest path
    [[nodiscard]] bool is_tree() const;

    void require_finalized() const;

private:
    std::size_t num_vars_ = 0;
    std::vector<Node> nodes_;
    NodeId root_ = 0;
    bool has_root_ = false;
    bool finalized_ = false;

    std::vector<NodeId> order_;
    std::vector<std::vector<NodeId>> parents_;
    std::vector<Scope> scopes_;
    std::vector<NodeId> sum_nodes_;
    std::vector<NodeId> leaf_nodes_;
    std::vector<std::size_t> sum_offset_;
    std::size_t num_sum_params_ = 0;
    std::size_t depth_ = 0;
};

// ---- validation -------------------------------------------------------------

enum class ViolationKind : std::uint8_t {
    BadId,
    BadRoot,
    Cycle,
    MultipleParents,
    Unreachable,
    Arity,
    WeightCount,
    Simplex,
    LeafVariable,
    LeafParameter,
    Decomposability,
    Smoothness,
    RootScope,
    Coverage,
    TooManyNodes,
};

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    NodeId node;
    std::string message;
};

struct ValidityReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const { return violations.empty(); }
    [[nodiscard]] bool has(ViolationKind kind) const;
    [[nodiscard]] std::string summary() const;
};

struct ValidateOptions {
    std::size_t max_nodes = kDefaultMaxNodes;
};

// Works on any arena, finalized or not.
ValidityReport validate(const Circuit& circuit, const ValidateOptions& options = {});

// ---- inference --------------------------------------------------------------

// Observed value per variable, or -1 when marginalized out.
using Evidence = std::span<const std::int8_t>;

double evaluate_log(const Circuit& circuit, Row x);
double evaluate_marginal(const Circuit& circuit, Evidence evidence);
double avg_loglik(const Circuit& circuit, const Dataset& data);

// Per-node log values for one row, written into `out` (size = circuit.size()).
void forward_log(const Circuit& circuit, Row x, std::span<double> out);

// Forward and backward quantities for one input row.
//  flow[n]           : probability that n is activated, flow[root] = 1.
//  log_derivative[n] : log dp_C/dp_n.
//  edge_flow[k]      : flow contribution of sum edge k (see Circuit::sum_offset);
//                      flow[n] * w_nc * p_c / p_n.
struct FlowCache {
    std::vector<double> log_value;
    std::vector<double> flow;
    std::vector<double> log_derivative;
    std::vector<double> edge_flow;
    double log_prob = 0.0;
};

FlowCache top_down_flows(const Circuit& circuit, Row x);
void top_down_flows(const Circuit& circuit, Row x, FlowCache& cache);

// Flow quantities summed over a set of rows (all rows when `rows` is empty),
// computed block-wise and vectorized across rows. node_flow_x1[n] is the sum
// of flow[n] * x[var(n)] for leaves and 0 elsewhere.
struct BatchFlowStats {
    std::size_t rows = 0;
    double loglik_sum = 0.0;
    std::vector<double> edge_flow;
    std::vector<double> node_flow;
    std::vector<double> node_flow_x1;
};

BatchFlowStats batch_flow_statistics(const Circuit& circuit, const Dataset& data,
                                     std::span<const std::size_t> rows = {});
// Forward pass only: sum of log p(x) over the rows.
double batch_loglik_sum(const Circuit& circuit, const Dataset& data, std::span<const std::size_t> rows = {});

// dp_C(x)/dw_{n,c} for every sum edge, linear domain, laid out by sum_offset.
std::vector<double> grad_sum_weights(const Circuit& circuit, Row x);
void grad_sum_weights(const Circuit& circuit, const FlowCache& cache, std::span<double> out);

// ---- utilities --------------------------------------------------------------

// Structure string with product children sorted by their smallest scope
// variable. With `with_params`, weights and leaf parameters are included.
std::string canonical_form(const Circuit& circuit, bool with_params = false);

// Clamps every Bernoulli leaf into [kLeafClampLo, kLeafClampHi].
void clamp_leaves(Circuit& circuit);

// Line-oriented text format. Nodes are renumbered so that ids ascend in
// evaluation order and the root is last.
void write_circuit(std::ostream& os, const Circuit& circuit);
std::string write_circuit(const Circuit& circuit);
Circuit read_circuit(std::istream& is);
Circuit read_circuit_string(const std::string& text);

}  // namespace symc
