#include "symc/circuit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "symc/error.hpp"

namespace symc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

double leaf_log_value(const Node& n, int value) {
    const double p = leaf_probability(n.leaf);
    if (value < 0) return 0.0;
    return value != 0 ? std::log(p) : std::log1p(-p);
}

double sum_log_value(const Node& n, std::span<const double> values) {
    double m = kNegInf;
    for (std::size_t j = 0; j < n.children.size(); ++j) {
        if (n.weights[j] > 0.0) m = std::max(m, values[n.children[j]]);
    }
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (std::size_t j = 0; j < n.children.size(); ++j) {
        if (n.weights[j] > 0.0) acc += n.weights[j] * std::exp(values[n.children[j]] - m);
    }
    return m + std::log(acc);
}

template <typename LeafValue>
void forward_impl(const Circuit& c, std::span<double> out, LeafValue&& leaf_value) {
    for (NodeId id : c.order()) {
        const Node& n = c.node(id);
        switch (n.kind) {
            case NodeKind::Leaf:
                out[id] = leaf_value(n);
                break;
            case NodeKind::Sum:
                out[id] = sum_log_value(n, out);
                break;
            case NodeKind::Product: {
                double acc = 0.0;
                for (NodeId ch : n.children) acc += out[ch];
                out[id] = acc;
                break;
            }
        }
    }
}

void append_double(std::string& s, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    s.append(buf, ptr);
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw DataError("circuit file line " + std::to_string(line) + ": bad number '" +
                        std::string(tok) + "'");
    }
    return v;
}

std::size_t parse_index(std::string_view tok, std::size_t line) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw DataError("circuit file line " + std::to_string(line) + ": bad index '" +
                        std::string(tok) + "'");
    }
    return v;
}

}  // namespace

double leaf_probability(const LeafParams& params) {
    if (const auto* b = std::get_if<Bernoulli>(&params)) return b->p;
    return std::get<DirichletLeaf>(params).mean();
}

// ---- Circuit ----------------------------------------------------------------

NodeId Circuit::add_node(Node node) {
    nodes_.push_back(std::move(node));
    finalized_ = false;
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Circuit::add_leaf(std::size_t var, LeafParams params) {
    Node n;
    n.kind = NodeKind::Leaf;
    n.var = var;
    n.leaf = params;
    return add_node(std::move(n));
}

NodeId Circuit::add_sum(std::vector<NodeId> children, std::vector<double> weights) {
    Node n;
    n.kind = NodeKind::Sum;
    n.children = std::move(children);
    n.weights = std::move(weights);
    return add_node(std::move(n));
}

NodeId Circuit::add_product(std::vector<NodeId> children) {
    Node n;
    n.kind = NodeKind::Product;
    n.children = std::move(children);
    return add_node(std::move(n));
}

void Circuit::set_root(NodeId id) {
    root_ = id;
    has_root_ = true;
    finalized_ = false;
}

void Circuit::require_finalized() const {
    if (!finalized_) throw UsageError("circuit is not finalized");
}

bool Circuit::is_tree() const {
    require_finalized();
    for (NodeId id : order_) {
        if (id != root_ && parents_[id].size() != 1) return false;
    }
    return true;
}

void Circuit::finalize() {
    if (nodes_.empty()) throw UsageError("circuit has no nodes");
    if (!has_root_) root_ = static_cast<NodeId>(nodes_.size() - 1);
    if (root_ >= nodes_.size()) throw UsageError("root id out of range");
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        for (NodeId ch : nodes_[id].children) {
            if (ch >= nodes_.size()) {
                throw UsageError("node " + std::to_string(id) + " has dangling child " +
                                 std::to_string(ch));
            }
        }
    }

    // Iterative post-order DFS from the root with cycle detection.
    const std::size_t n = nodes_.size();
    std::vector<std::uint8_t> state(n, 0);
    std::vector<std::size_t> level(n, 1);
    order_.clear();
    std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
    state[root_] = 1;
    while (!stack.empty()) {
        auto& [id, next] = stack.back();
        const auto& ch = nodes_[id].children;
        if (next < ch.size()) {
            NodeId c = ch[next++];
            if (state[c] == 1) throw UsageError("cycle through node " + std::to_string(c));
            if (state[c] == 0) {
                state[c] = 1;
                stack.emplace_back(c, 0);
            }
        } else {
            state[id] = 2;
            order_.push_back(id);
            stack.pop_back();
        }
    }

    parents_.assign(n, {});
    scopes_.assign(n, Scope{});
    sum_offset_.assign(n, std::numeric_limits<std::size_t>::max());
    sum_nodes_.clear();
    leaf_nodes_.clear();
    for (NodeId id : order_) {
        const Node& node = nodes_[id];
        if (node.kind == NodeKind::Leaf) {
            if (node.var < kMaxVars) scopes_[id] = Scope::single(node.var);
            leaf_nodes_.push_back(id);
        } else {
            std::size_t lv = 0;
            for (NodeId ch : node.children) {
                parents_[ch].push_back(id);
                scopes_[id] |= scopes_[ch];
                lv = std::max(lv, level[ch]);
            }
            level[id] = lv + 1;
            if (node.kind == NodeKind::Sum) sum_nodes_.push_back(id);
        }
    }
    std::sort(sum_nodes_.begin(), sum_nodes_.end());
    std::sort(leaf_nodes_.begin(), leaf_nodes_.end());
    num_sum_params_ = 0;
    for (NodeId id : sum_nodes_) {
        sum_offset_[id] = num_sum_params_;
        num_sum_params_ += nodes_[id].children.size();
    }
    depth_ = level[root_];
    finalized_ = true;
}

// ---- validation -------------------------------------------------------------

const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::BadId: return "bad-id";
        case ViolationKind::BadRoot: return "bad-root";
        case ViolationKind::Cycle: return "cycle";
        case ViolationKind::MultipleParents: return "multiple-parents";
        case ViolationKind::Unreachable: return "unreachable";
        case ViolationKind::Arity: return "arity";
        case ViolationKind::WeightCount: return "weight-count";
        case ViolationKind::Simplex: return "simplex";
        case ViolationKind::LeafVariable: return "leaf-variable";
        case ViolationKind::LeafParameter: return "leaf-parameter";
        case ViolationKind::Decomposability: return "decomposability";
        case ViolationKind::Smoothness: return "smoothness";
        case ViolationKind::RootScope: return "root-scope";
        case ViolationKind::Coverage: return "coverage";
        case ViolationKind::TooManyNodes: return "too-many-nodes";
    }
    return "unknown";
}

bool ValidityReport::has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const Violation& v) { return v.kind == kind; });
}

std::string ValidityReport::summary() const {
    std::ostringstream os;
    for (const auto& v : violations) {
        os << to_string(v.kind) << " @" << v.node << ": " << v.message << "\n";
    }
    return os.str();
}

ValidityReport validate(const Circuit& c, const ValidateOptions& options) {
    ValidityReport report;
    auto add = [&](ViolationKind k, NodeId id, std::string msg) {
        report.violations.push_back({k, id, std::move(msg)});
    };
    const auto& nodes = c.nodes();
    const std::size_t n = nodes.size();
    const std::size_t d = c.num_vars();

    if (n == 0) {
        add(ViolationKind::BadRoot, 0, "empty circuit");
        return report;
    }
    if (n > options.max_nodes) {
        add(ViolationKind::TooManyNodes, 0,
            std::to_string(n) + " nodes exceeds cap " + std::to_string(options.max_nodes));
    }
    const NodeId root = c.root();
    if (root >= n) {
        add(ViolationKind::BadRoot, root, "root id out of range");
        return report;
    }

    bool ids_ok = true;
    std::vector<std::size_t> parent_count(n, 0);
    for (std::size_t id = 0; id < n; ++id) {
        const Node& node = nodes[id];
        const auto nid = static_cast<NodeId>(id);
        for (NodeId ch : node.children) {
            if (ch >= n) {
                add(ViolationKind::BadId, nid, "child id " + std::to_string(ch) + " out of range");
                ids_ok = false;
            } else {
                ++parent_count[ch];
            }
        }
        switch (node.kind) {
            case NodeKind::Leaf: {
                if (node.var >= d) {
                    add(ViolationKind::LeafVariable, nid,
                        "variable " + std::to_string(node.var) + " >= d=" + std::to_string(d));
                }
                if (const auto* b = std::get_if<Bernoulli>(&node.leaf)) {
                    if (!(b->p > 0.0 && b->p < 1.0)) {
                        add(ViolationKind::LeafParameter, nid, "bernoulli p outside (0,1)");
                    }
                } else {
                    const auto& dl = std::get<DirichletLeaf>(node.leaf);
                    if (!(dl.alpha0 > 0.0 && dl.alpha1 > 0.0)) {
                        add(ViolationKind::LeafParameter, nid, "dirichlet concentration <= 0");
                    }
                }
                break;
            }
            case NodeKind::Sum: {
                if (node.children.size() < 2) {
                    add(ViolationKind::Arity, nid, "sum arity < 2");
                }
                if (node.weights.size() != node.children.size()) {
                    add(ViolationKind::WeightCount, nid, "weight count differs from arity");
                } else {
                    double total = 0.0;
                    bool negative = false;
                    for (double w : node.weights) {
                        total += w;
                        if (!(w >= 0.0)) negative = true;
                    }
                    if (negative || std::abs(total - 1.0) > 1e-12) {
                        add(ViolationKind::Simplex, nid, "weights not on the simplex");
                    }
                }
                break;
            }
            case NodeKind::Product:
                if (node.children.size() < 2) add(ViolationKind::Arity, nid, "product arity < 2");
                break;
        }
    }
    if (!ids_ok) return report;
    if (parent_count[root] != 0) add(ViolationKind::BadRoot, root, "root has a parent");

    // Reachability, cycle detection and post-order from the root.
    std::vector<std::uint8_t> state(n, 0);
    std::vector<NodeId> order;
    std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
    state[root] = 1;
    bool cyclic = false;
    while (!stack.empty()) {
        auto& [id, next] = stack.back();
        const auto& ch = nodes[id].children;
        if (next < ch.size()) {
            NodeId k = ch[next++];
            if (state[k] == 1) {
                add(ViolationKind::Cycle, k, "cycle through node");
                cyclic = true;
            } else if (state[k] == 0) {
                state[k] = 1;
                stack.emplace_back(k, 0);
            }
        } else {
            state[id] = 2;
            order.push_back(id);
            stack.pop_back();
        }
    }
    for (std::size_t id = 0; id < n; ++id) {
        if (state[id] == 0) add(ViolationKind::Unreachable, static_cast<NodeId>(id), "not reachable from root");
        if (id != root && parent_count[id] > 1) {
            add(ViolationKind::MultipleParents, static_cast<NodeId>(id),
                std::to_string(parent_count[id]) + " parents");
        }
    }
    if (cyclic) return report;

    std::vector<Scope> scopes(n);
    Scope covered;
    for (NodeId id : order) {
        const Node& node = nodes[id];
        if (node.kind == NodeKind::Leaf) {
            if (node.var < d) scopes[id] = Scope::single(node.var);
            covered |= scopes[id];
            continue;
        }
        for (NodeId ch : node.children) scopes[id] |= scopes[ch];
        if (node.kind == NodeKind::Product) {
            Scope seen;
            for (NodeId ch : node.children) {
                if (seen.intersects(scopes[ch])) {
                    add(ViolationKind::Decomposability, id,
                        "child " + std::to_string(ch) + " overlaps sibling scope on " +
                            (seen & scopes[ch]).to_string());
                    break;
                }
                seen |= scopes[ch];
            }
        } else {
            for (NodeId ch : node.children) {
                if (!(scopes[ch] == scopes[node.children.front()])) {
                    add(ViolationKind::Smoothness, id,
                        "child scopes " + scopes[node.children.front()].to_string() + " vs " +
                            scopes[ch].to_string());
                    break;
                }
            }
        }
    }
    const Scope full = Scope::full(d);
    if (!(scopes[root] == full)) {
        add(ViolationKind::RootScope, root, "root scope " + scopes[root].to_string() + " != full set");
    }
    for (std::size_t v = 0; v < d; ++v) {
        if (!covered.contains(v)) {
            add(ViolationKind::Coverage, root, "variable " + std::to_string(v) + " has no leaf");
        }
    }
    return report;
}

// ---- inference --------------------------------------------------------------

void forward_log(const Circuit& c, Row x, std::span<double> out) {
    forward_impl(c, out, [&](const Node& n) { return leaf_log_value(n, x[n.var]); });
}

double evaluate_log(const Circuit& c, Row x) {
    c.require_finalized();
    if (x.size() != c.num_vars()) {
        throw UsageError("row has " + std::to_string(x.size()) + " values, circuit expects " +
                         std::to_string(c.num_vars()));
    }
    std::vector<double> values(c.size());
    forward_log(c, x, values);
    return values[c.root()];
}

double evaluate_marginal(const Circuit& c, Evidence evidence) {
    c.require_finalized();
    if (evidence.size() != c.num_vars()) {
        throw UsageError("evidence has " + std::to_string(evidence.size()) +
                         " entries, circuit expects " + std::to_string(c.num_vars()));
    }
    std::vector<double> values(c.size());
    forward_impl(c, values, [&](const Node& n) { return leaf_log_value(n, evidence[n.var]); });
    return values[c.root()];
}

double avg_loglik(const Circuit& c, const Dataset& data) {
    c.require_finalized();
    if (data.rows() == 0) throw UsageError("avg_loglik on empty dataset");
    if (data.num_vars != c.num_vars()) throw UsageError("dataset width differs from circuit");
    return batch_loglik_sum(c, data) / static_cast<double>(data.rows());
}

void top_down_flows(const Circuit& c, Row x, FlowCache& cache) {
    c.require_finalized();
    if (x.size() != c.num_vars()) throw UsageError("row width differs from circuit");
    const std::size_t n = c.size();
    cache.log_value.resize(n);
    cache.flow.assign(n, 0.0);
    cache.log_derivative.assign(n, kNegInf);
    cache.edge_flow.assign(c.num_sum_params(), 0.0);
    forward_log(c, x, cache.log_value);

    const auto& lv = cache.log_value;
    auto& ld = cache.log_derivative;
    const NodeId root = c.root();
    const double total = lv[root];
    cache.log_prob = total;
    ld[root] = 0.0;

    const auto& order = c.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeId id = *it;
        const Node& node = c.node(id);
        if (ld[id] == kNegInf) continue;
        if (node.kind == NodeKind::Sum) {
            for (std::size_t j = 0; j < node.children.size(); ++j) {
                if (node.weights[j] <= 0.0) continue;
                const NodeId ch = node.children[j];
                ld[ch] = log_add(ld[ch], ld[id] + std::log(node.weights[j]));
            }
        } else if (node.kind == NodeKind::Product) {
            for (NodeId ch : node.children) {
                double others = 0.0;
                if (std::isfinite(lv[ch]) && std::isfinite(lv[id])) {
                    others = lv[id] - lv[ch];
                } else {
                    for (NodeId s : node.children) {
                        if (s != ch) others += lv[s];
                    }
                }
                ld[ch] = log_add(ld[ch], ld[id] + others);
            }
        }
    }

    if (total == kNegInf) {
        cache.flow[root] = 1.0;
        return;
    }
    for (NodeId id : order) {
        const double lf = ld[id] + lv[id] - total;
        cache.flow[id] = (lf == kNegInf || std::isnan(lf)) ? 0.0 : std::exp(lf);
    }
    cache.flow[root] = 1.0;
    for (NodeId id : c.sum_nodes()) {
        const Node& node = c.node(id);
        const std::size_t off = c.sum_offset(id);
        if (ld[id] == kNegInf || lv[id] == kNegInf) continue;
        for (std::size_t j = 0; j < node.children.size(); ++j) {
            if (node.weights[j] <= 0.0) continue;
            const double le = ld[id] + std::log(node.weights[j]) + lv[node.children[j]] - total;
            cache.edge_flow[off + j] = le == kNegInf ? 0.0 : std::exp(le);
        }
    }
}

FlowCache top_down_flows(const Circuit& c, Row x) {
    FlowCache cache;
    top_down_flows(c, x, cache);
    return cache;
}

void grad_sum_weights(const Circuit& c, const FlowCache& cache, std::span<double> out) {
    for (NodeId id : c.sum_nodes()) {
        const Node& node = c.node(id);
        const std::size_t off = c.sum_offset(id);
        for (std::size_t j = 0; j < node.children.size(); ++j) {
            const double lg = cache.log_derivative[id] + cache.log_value[node.children[j]];
            out[off + j] = lg == kNegInf ? 0.0 : std::exp(lg);
        }
    }
}

std::vector<double> grad_sum_weights(const Circuit& c, Row x) {
    FlowCache cache;
    top_down_flows(c, x, cache);
    std::vector<double> out(c.num_sum_params());
    grad_sum_weights(c, cache, out);
    return out;
}

// ---- utilities --------------------------------------------------------------

namespace {

void canonical_rec(const Circuit& c, NodeId id, bool with_params, std::string& out) {
    const Node& n = c.node(id);
    switch (n.kind) {
        case NodeKind::Leaf:
            out += "L" + std::to_string(n.var);
            if (with_params) {
                out += "[";
                if (const auto* b = std::get_if<Bernoulli>(&n.leaf)) {
                    append_double(out, b->p);
                } else {
                    const auto& dl = std::get<DirichletLeaf>(n.leaf);
                    append_double(out, dl.alpha0);
                    out += ",";
                    append_double(out, dl.alpha1);
                }
                out += "]";
            }
            return;
        case NodeKind::Sum:
            out += "S(";
            for (std::size_t j = 0; j < n.children.size(); ++j) {
                if (j > 0) out += " ";
                if (with_params) {
                    append_double(out, n.weights[j]);
                    out += ":";
                }
                canonical_rec(c, n.children[j], with_params, out);
            }
            out += ")";
            return;
        case NodeKind::Product: {
            std::vector<NodeId> kids = n.children;
            std::sort(kids.begin(), kids.end(), [&](NodeId a, NodeId b) {
                return c.scope(a).min() < c.scope(b).min();
            });
            out += "P(";
            for (std::size_t j = 0; j < kids.size(); ++j) {
                if (j > 0) out += " ";
                canonical_rec(c, kids[j], with_params, out);
            }
            out += ")";
            return;
        }
    }
}

}  // namespace

std::string canonical_form(const Circuit& c, bool with_params) {
    c.require_finalized();
    std::string out;
    canonical_rec(c, c.root(), with_params, out);
    return out;
}

void clamp_leaves(Circuit& c) {
    for (std::size_t id = 0; id < c.size(); ++id) {
        const Node& n = c.node(static_cast<NodeId>(id));
        if (n.kind != NodeKind::Leaf) continue;
        if (const auto* b = std::get_if<Bernoulli>(&n.leaf)) {
            c.set_leaf(static_cast<NodeId>(id), Bernoulli{std::clamp(b->p, kLeafClampLo, kLeafClampHi)});
        }
    }
}

void write_circuit(std::ostream& os, const Circuit& c) {
    os << write_circuit(c);
}

std::string write_circuit(const Circuit& c) {
    c.require_finalized();
    const auto& order = c.order();
    std::vector<std::size_t> new_id(c.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) new_id[order[i]] = i;

    std::string out = "pc " + std::to_string(c.num_vars()) + " " + std::to_string(order.size()) + "\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Node& n = c.node(order[i]);
        switch (n.kind) {
            case NodeKind::Leaf:
                out += "L " + std::to_string(i) + " " + std::to_string(n.var) + " ";
                if (const auto* b = std::get_if<Bernoulli>(&n.leaf)) {
                    append_double(out, b->p);
                } else {
                    const auto& dl = std::get<DirichletLeaf>(n.leaf);
                    append_double(out, dl.alpha0);
                    out += ",";
                    append_double(out, dl.alpha1);
                }
                break;
            case NodeKind::Sum:
                out += "S " + std::to_string(i);
                for (std::size_t j = 0; j < n.children.size(); ++j) {
                    out += " " + std::to_string(new_id[n.children[j]]) + ",";
                    append_double(out, n.weights[j]);
                }
                break;
            case NodeKind::Product:
                out += "P " + std::to_string(i);
                for (NodeId ch : n.children) out += " " + std::to_string(new_id[ch]);
                break;
        }
        out += "\n";
    }
    return out;
}

Circuit read_circuit(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };
    auto split = [](const std::string& s) {
        std::vector<std::string> toks;
        std::istringstream ss(s);
        std::string t;
        while (ss >> t) toks.push_back(t);
        return toks;
    };

    if (!next_line()) throw DataError("circuit file is empty");
    auto header = split(line);
    if (header.size() != 3 || header[0] != "pc") throw DataError("circuit file: bad header '" + line + "'");
    const std::size_t d = parse_index(header[1], lineno);
    const std::size_t count = parse_index(header[2], lineno);
    if (d > kMaxVars) throw DataError("circuit file: too many variables");

    Circuit c(d);
    NodeId last = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!next_line()) throw DataError("circuit file: expected " + std::to_string(count) + " nodes");
        auto toks = split(line);
        if (toks.size() < 2) throw DataError("circuit file line " + std::to_string(lineno) + ": too short");
        const std::size_t id = parse_index(toks[1], lineno);
        if (id != i) {
            throw DataError("circuit file line " + std::to_string(lineno) + ": ids must ascend from 0");
        }
        Node n;
        if (toks[0] == "L") {
            if (toks.size() != 4) throw DataError("circuit file line " + std::to_string(lineno) + ": bad leaf");
            n.kind = NodeKind::Leaf;
            n.var = parse_index(toks[2], lineno);
            const auto comma = toks[3].find(',');
            if (comma == std::string::npos) {
                n.leaf = Bernoulli{parse_double(toks[3], lineno)};
            } else {
                n.leaf = DirichletLeaf{parse_double(std::string_view(toks[3]).substr(0, comma), lineno),
                                       parse_double(std::string_view(toks[3]).substr(comma + 1), lineno)};
            }
        } else if (toks[0] == "S") {
            n.kind = NodeKind::Sum;
            for (std::size_t k = 2; k < toks.size(); ++k) {
                const auto comma = toks[k].find(',');
                if (comma == std::string::npos) {
                    throw DataError("circuit file line " + std::to_string(lineno) + ": sum edge needs child,weight");
                }
                n.children.push_back(static_cast<NodeId>(
                    parse_index(std::string_view(toks[k]).substr(0, comma), lineno)));
                n.weights.push_back(parse_double(std::string_view(toks[k]).substr(comma + 1), lineno));
            }
        } else if (toks[0] == "P") {
            n.kind = NodeKind::Product;
            for (std::size_t k = 2; k < toks.size(); ++k) {
                n.children.push_back(static_cast<NodeId>(parse_index(toks[k], lineno)));
            }
        } else {
            throw DataError("circuit file line " + std::to_string(lineno) + ": unknown node type '" + toks[0] + "'");
        }
        for (NodeId ch : n.children) {
            if (ch >= count) throw DataError("circuit file line " + std::to_string(lineno) + ": child id out of range");
        }
        last = c.add_node(std::move(n));
    }
    c.set_root(last);
    try {
        c.finalize();
    } catch (const UsageError& e) {
        throw DataError(std::string("circuit file: ") + e.what());
    }
    return c;
}

Circuit read_circuit_string(const std::string& text) {
    std::istringstream is(text);
    return read_circuit(is);
}

}  // namespace symc
