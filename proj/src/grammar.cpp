#include "symc/grammar.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace symc {

namespace {

constexpr std::uint64_t kSaturate = std::uint64_t{1} << 40;

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
    if (a == 0 || b == 0) return 0;
    if (a > kSaturate / b) return kSaturate;
    return std::min(a * b, kSaturate);
}

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) { return std::min(a + b, kSaturate); }

}  // namespace

// ---- vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary(const GrammarConfig& config)
    : num_vars_(config.num_vars), kmax_(config.factorize_arity()) {
    if (num_vars_ == 0 || num_vars_ > kMaxVars) throw UsageError("num_vars must be in [1, 128]");
    const std::size_t nf = kmax_ >= 2 ? kmax_ - 1 : 0;
    leaf_base_ = 4 + nf;
    size_ = leaf_base_ + num_vars_;
}

TokenId Vocabulary::id(Token t) const {
    switch (t.kind) {
        case TokenKind::Bos: return kBos;
        case TokenKind::Eos: return kEos;
        case TokenKind::Sum:
            if (t.arg == 2) return kSum2;
            if (t.arg == 3) return kSum3;
            break;
        case TokenKind::Factorize:
            if (t.arg >= 2 && t.arg <= kmax_) return factorize(t.arg);
            break;
        case TokenKind::Leaf:
            if (t.arg < num_vars_) return leaf(t.arg);
            break;
    }
    throw UsageError("token outside the vocabulary");
}

Token Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size_) throw UsageError("token id out of range");
    const auto u = static_cast<std::size_t>(id);
    if (id == kBos) return {TokenKind::Bos, 0};
    if (id == kEos) return {TokenKind::Eos, 0};
    if (id == kSum2) return Token::sum(2);
    if (id == kSum3) return Token::sum(3);
    if (u < leaf_base_) return Token::factorize(static_cast<std::uint32_t>(u - 4 + 2));
    return Token::leaf(static_cast<std::uint32_t>(u - leaf_base_));
}

std::string Vocabulary::name(TokenId id) const {
    const Token t = token(id);
    switch (t.kind) {
        case TokenKind::Bos: return "<bos>";
        case TokenKind::Eos: return "<eos>";
        case TokenKind::Sum: return "S" + std::to_string(t.arg);
        case TokenKind::Factorize: return "F" + std::to_string(t.arg);
        case TokenKind::Leaf: return "L" + std::to_string(t.arg);
    }
    return "?";
}

TokenId Vocabulary::parse_name(const std::string& s) const {
    if (s == "<bos>") return kBos;
    if (s == "<eos>") return kEos;
    if (s.size() < 2) throw DataError("bad token '" + s + "'");
    std::uint32_t arg = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9' || arg > 100000) throw DataError("bad token '" + s + "'");
        arg = arg * 10 + static_cast<std::uint32_t>(s[i] - '0');
    }
    try {
        switch (s[0]) {
            case 'S': return id(Token::sum(arg));
            case 'F': return id(Token::factorize(arg));
            case 'L': return id(Token::leaf(arg));
            default: break;
        }
    } catch (const UsageError&) {
        throw DataError("token '" + s + "' outside the vocabulary");
    }
    throw DataError("bad token '" + s + "'");
}

// ---- grammar state ------------------------------------------------------------

GrammarState::GrammarState(const GrammarConfig& config) : config_(config), vocab_(config) {
    if (config_.depth_cap == 0) throw UsageError("depth_cap must be positive");
    greedy_memo_.assign((config_.num_vars + 1) * (config_.depth_cap + 1), 0);
    if (capsize(0) < config_.num_vars)
        throw UsageError("depth_cap " + std::to_string(config_.depth_cap) + " cannot cover " +
                         std::to_string(config_.num_vars) + " variables");
    if (greedy_cost(config_.num_vars, 0) > config_.node_cap)
        throw UsageError("node_cap " + std::to_string(config_.node_cap) + " too small for " +
                         std::to_string(config_.num_vars) + " variables");
}

std::uint64_t GrammarState::capsize(std::uint32_t depth) const {
    if (depth >= config_.depth_cap) return 0;
    const std::size_t levels = config_.depth_cap - depth;
    const std::uint64_t k = vocab_.factorize_arity() >= 2 ? vocab_.factorize_arity() : 1;
    std::uint64_t c = 1;
    for (std::size_t i = 1; i < levels && c < kSaturate; ++i) c = sat_mul(c, k);
    return c;
}

std::uint64_t GrammarState::greedy_cost(std::uint64_t size, std::uint32_t depth) const {
    if (size <= 1) return 1;
    const std::size_t slot = size * (config_.depth_cap + 1) + depth;
    if (slot < greedy_memo_.size() && greedy_memo_[slot] != 0) return greedy_memo_[slot];
    const std::uint64_t k = std::min<std::uint64_t>(vocab_.factorize_arity(), size);
    const std::uint64_t cap = capsize(depth + 1);
    std::uint64_t cost = 1;
    std::uint64_t used = 0;
    for (std::uint64_t i = 0; i < k; ++i) {
        const std::uint64_t r = k - i - 1;
        const std::uint64_t reserve = sat_add(used, sat_mul(r, cap));
        const std::uint64_t s = size > reserve ? size - reserve : 1;
        cost = sat_add(cost, greedy_cost(std::max<std::uint64_t>(s, 1), depth + 1));
        used += std::max<std::uint64_t>(s, 1);
    }
    if (slot < greedy_memo_.size()) greedy_memo_[slot] = cost;
    return cost;
}

SlotConstraint GrammarState::child_constraint(const Frame& f) const {
    if (f.kind == TokenKind::Sum) {
        if (f.done == 0) return f.constraint;
        const auto n = static_cast<std::uint32_t>(f.consumed.size());
        return {f.consumed, n, n};
    }
    const auto c = static_cast<std::int64_t>(f.consumed.size());
    const auto r = static_cast<std::int64_t>(f.arity - f.done - 1);
    const auto cap = static_cast<std::int64_t>(capsize(f.depth + 1));
    const auto avail = static_cast<std::int64_t>(f.constraint.allowed.size()) - c;
    const std::int64_t lo = std::max<std::int64_t>(1, f.constraint.lo - c - r * cap);
    const std::int64_t hi = std::min({cap, avail - r, static_cast<std::int64_t>(f.constraint.hi) - c - r});
    SlotConstraint out;
    out.allowed = f.constraint.allowed - f.consumed;
    out.lo = static_cast<std::uint32_t>(lo);
    out.hi = static_cast<std::uint32_t>(std::max<std::int64_t>(hi, 0));
    return out;
}

std::uint64_t GrammarState::completion_cost(const std::vector<Frame>& stack) const {
    if (stack.empty()) return 0;
    std::uint64_t cost = 0;
    std::optional<std::uint64_t> closed;
    for (std::size_t i = stack.size(); i-- > 0;) {
        const Frame& f = stack[i];
        std::uint64_t consumed = f.consumed.size();
        std::uint32_t done = f.done;
        if (closed) {
            if (f.kind == TokenKind::Factorize) {
                consumed += *closed;
            } else if (done == 0) {
                consumed = *closed;
            }
            ++done;
        }
        const auto cap = static_cast<std::int64_t>(capsize(f.depth + 1));
        for (std::uint32_t j = done; j < f.arity; ++j) {
            std::uint64_t size = 0;
            if (f.kind == TokenKind::Sum) {
                size = j == 0 ? std::max<std::uint32_t>(f.constraint.lo, 1) : consumed;
                if (j == 0) consumed = size;
            } else {
                const auto r = static_cast<std::int64_t>(f.arity - j - 1);
                const std::int64_t lo =
                    static_cast<std::int64_t>(f.constraint.lo) - static_cast<std::int64_t>(consumed) - r * cap;
                size = static_cast<std::uint64_t>(std::max<std::int64_t>(1, lo));
                consumed += size;
            }
            cost = sat_add(cost, greedy_cost(size, f.depth + 1));
        }
        closed = consumed;
    }
    return cost;
}

// Sums range over at least two variables; a sum over one variable is a
// mixture of Bernoullis, which is itself a Bernoulli leaf.
SlotConstraint GrammarState::frame_slot(Token t, SlotConstraint k) {
    if (t.kind == TokenKind::Sum) k.lo = std::max<std::uint32_t>(k.lo, 2);
    return k;
}

std::uint32_t GrammarState::next_depth() const {
    return stack_.empty() ? 0 : stack_.back().depth + 1;
}

std::int32_t GrammarState::next_parent() const {
    return stack_.empty() ? -1 : stack_.back().position;
}

SlotConstraint GrammarState::current_slot() const {
    if (stack_.empty()) {
        const auto d = static_cast<std::uint32_t>(config_.num_vars);
        return {Scope::full(config_.num_vars), d, d};
    }
    return child_constraint(stack_.back());
}

std::size_t GrammarState::min_completion_tokens() const {
    if (complete_) return 0;
    if (stack_.empty()) return greedy_cost(config_.num_vars, 0);
    return completion_cost(stack_);
}

std::optional<std::string> GrammarState::structural_reject(Token t) const {
    const SlotConstraint k = current_slot();
    const std::uint32_t depth = next_depth();
    const std::uint64_t avail = k.allowed.size();
    switch (t.kind) {
        case TokenKind::Bos:
        case TokenKind::Eos:
            return std::string("sentinel tokens are not generated");
        case TokenKind::Leaf:
            if (t.arg >= config_.num_vars) return std::string("leaf variable out of range");
            if (!k.allowed.contains(t.arg))
                return "variable " + std::to_string(t.arg) + " not in allowed scope " + k.allowed.to_string();
            if (k.lo > 1) return "scope must cover " + std::to_string(k.lo) + " variables (smoothness/coverage)";
            return std::nullopt;
        case TokenKind::Sum: {
            if (t.arg != 2 && t.arg != 3) return std::string("sum arity must be 2 or 3");
            if (depth + 1 >= config_.depth_cap) return std::string("depth cap reached");
            const std::uint64_t lo = std::max<std::uint32_t>(k.lo, 2);
            const std::uint64_t hi = std::min<std::uint64_t>({k.hi, avail, capsize(depth + 1)});
            if (lo > hi) return std::string("no scope of two or more variables admissible for a sum here");
            return std::nullopt;
        }
        case TokenKind::Factorize: {
            if (t.arg < 2 || t.arg > vocab_.factorize_arity()) return std::string("factorize arity out of range");
            if (depth + 1 >= config_.depth_cap) return std::string("depth cap reached");
            const std::uint64_t lo = std::max<std::uint64_t>(k.lo, t.arg);
            const std::uint64_t hi =
                std::min<std::uint64_t>({k.hi, avail, sat_mul(t.arg, capsize(depth + 1))});
            if (lo > hi)
                return "F" + std::to_string(t.arg) + " cannot be decomposable within allowed scope " +
                       k.allowed.to_string();
            return std::nullopt;
        }
    }
    return std::string("unknown token");
}

std::string GrammarState::key() const {
    std::string k = complete_ ? "C" : "";
    for (const Frame& f : stack_) {
        k += f.kind == TokenKind::Sum ? 'S' : 'F';
        k += std::to_string(f.arity) + "/" + std::to_string(f.done) + "@" + std::to_string(f.depth) + "[" +
             f.constraint.allowed.to_string() + std::to_string(f.constraint.lo) + "," +
             std::to_string(f.constraint.hi) + "]" + f.consumed.to_string() + ";";
    }
    return k;
}

void GrammarState::close_subtree(std::vector<Frame>& stack, Scope scope, bool& complete) const {
    while (true) {
        if (stack.empty()) {
            complete = true;
            return;
        }
        Frame& f = stack.back();
        if (f.kind == TokenKind::Factorize) {
            f.consumed |= scope;
        } else if (f.done == 0) {
            f.consumed = scope;
        }
        ++f.done;
        if (f.done < f.arity) return;
        scope = f.consumed;
        stack.pop_back();
    }
}

std::vector<std::uint8_t> GrammarState::valid_mask() const {
    if (complete_) throw UsageError("valid_mask on a complete state");
    std::vector<std::uint8_t> mask(vocab_.size(), 0);
    const SlotConstraint k = current_slot();
    const std::uint32_t depth = next_depth();
    const auto budget_ok = [&](const std::vector<Frame>& after) {
        return emitted_ + 1 + completion_cost(after) <= config_.node_cap;
    };

    // Every admissible leaf leaves the same completion cost.
    if (k.lo <= 1) {
        const std::vector<std::size_t> vars = k.allowed.members();
        if (!vars.empty()) {
            std::vector<Frame> after = stack_;
            bool done = false;
            close_subtree(after, Scope::single(vars.front()), done);
            if (budget_ok(after))
                for (auto v : vars) mask[static_cast<std::size_t>(vocab_.leaf(v))] = 1;
        }
    }
    const auto try_internal = [&](Token t, TokenId id) {
        if (structural_reject(t)) return;
        std::vector<Frame> after = stack_;
        after.push_back(Frame{t.kind, t.arg, 0, depth, static_cast<std::int32_t>(emitted_), frame_slot(t, k), Scope{}});
        if (budget_ok(after)) mask[static_cast<std::size_t>(id)] = 1;
    };
    try_internal(Token::sum(2), Vocabulary::kSum2);
    try_internal(Token::sum(3), Vocabulary::kSum3);
    for (std::size_t a = 2; a <= vocab_.factorize_arity(); ++a)
        try_internal(Token::factorize(static_cast<std::uint32_t>(a)), vocab_.factorize(a));
    return mask;
}

std::vector<TokenId> GrammarState::valid_tokens() const {
    const auto mask = valid_mask();
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(static_cast<TokenId>(i));
    return out;
}

bool GrammarState::is_valid(TokenId id) const {
    if (complete_ || id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) return false;
    return valid_mask()[static_cast<std::size_t>(id)] != 0;
}

void GrammarState::advance(TokenId id) {
    if (complete_) throw GrammarError(emitted_, "sequence already complete");
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
        throw GrammarError(emitted_, "token id " + std::to_string(id) + " outside the vocabulary");
    const Token t = vocab_.token(id);
    if (auto why = structural_reject(t)) throw GrammarError(emitted_, vocab_.name(id) + ": " + *why);

    std::vector<Frame> after = stack_;
    bool done = false;
    if (t.kind == TokenKind::Leaf) {
        close_subtree(after, Scope::single(t.arg), done);
    } else {
        after.push_back(Frame{t.kind, t.arg, 0, next_depth(), static_cast<std::int32_t>(emitted_),
                              frame_slot(t, current_slot()), Scope{}});
    }
    if (emitted_ + 1 + completion_cost(after) > config_.node_cap)
        throw GrammarError(emitted_, vocab_.name(id) + ": node cap " + std::to_string(config_.node_cap) +
                                         " cannot be met after this token");
    if (t.kind == TokenKind::Sum) decisions_.push_back(emitted_);
    stack_ = std::move(after);
    complete_ = done;
    ++emitted_;
}

// ---- sequences and circuits ---------------------------------------------------

TokenSequence make_sequence(std::span<const TokenId> tokens, const GrammarConfig& config, bool require_complete) {
    GrammarState st(config);
    TokenSequence seq;
    seq.tokens.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        seq.depths.push_back(st.next_depth());
        seq.parents.push_back(st.next_parent());
        st.advance(tokens[i]);
        seq.tokens.push_back(tokens[i]);
    }
    if (require_complete && !st.complete()) throw GrammarError(tokens.size(), "incomplete sequence");
    seq.decision_indices = st.decision_indices();
    return seq;
}

Circuit parse(const TokenSequence& seq, const GrammarConfig& config, std::span<const double> leaf_p) {
    if (seq.tokens.empty()) throw GrammarError(0, "empty sequence");
    if (!leaf_p.empty() && leaf_p.size() != config.num_vars)
        throw UsageError("leaf_p must have one entry per variable");
    const Vocabulary vocab(config);
    const std::size_t n = seq.tokens.size();
    std::vector<Node> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Token t = vocab.token(seq.tokens[i]);
        Node& node = nodes[i];
        if (t.kind == TokenKind::Leaf) {
            node.kind = NodeKind::Leaf;
            node.var = t.arg;
            node.leaf = Bernoulli{leaf_p.empty() ? 0.5 : leaf_p[t.arg]};
        } else if (t.kind == TokenKind::Sum) {
            node.kind = NodeKind::Sum;
        } else {
            node.kind = NodeKind::Product;
        }
        if (seq.parents[i] >= 0) nodes[static_cast<std::size_t>(seq.parents[i])].children.push_back(static_cast<NodeId>(i));
    }
    Circuit c(config.num_vars);
    for (auto& node : nodes) {
        if (node.kind == NodeKind::Sum) {
            const std::size_t k = node.children.size();
            node.weights.assign(k, 1.0 / static_cast<double>(k));
        }
        c.add_node(std::move(node));
    }
    c.set_root(0);
    c.finalize();
    return c;
}

Circuit parse(std::span<const TokenId> tokens, const GrammarConfig& config, std::span<const double> leaf_p) {
    return parse(make_sequence(tokens, config), config, leaf_p);
}

TokenSequence serialize(const Circuit& circuit, const GrammarConfig& config) {
    circuit.require_finalized();
    if (!circuit.is_tree()) throw UsageError("serialize requires a tree-shaped circuit");
    const Vocabulary vocab(config);
    std::vector<TokenId> tokens;
    std::vector<NodeId> stack{circuit.root()};
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const Node& n = circuit.node(id);
        const auto k = n.children.size();
        switch (n.kind) {
            case NodeKind::Leaf:
                tokens.push_back(vocab.leaf(n.var));
                break;
            case NodeKind::Sum:
                if (k != 2 && k != 3)
                    throw GrammarError(id, "node " + std::to_string(id) + ": sum arity " + std::to_string(k) +
                                               " not expressible (apply arity_decompose)");
                tokens.push_back(k == 2 ? Vocabulary::kSum2 : Vocabulary::kSum3);
                break;
            case NodeKind::Product:
                if (k < 2 || k > vocab.factorize_arity())
                    throw GrammarError(id, "node " + std::to_string(id) + ": product arity " + std::to_string(k) +
                                               " outside the factorize range");
                tokens.push_back(vocab.factorize(k));
                break;
        }
        for (std::size_t j = k; j-- > 0;) stack.push_back(n.children[j]);
    }
    return make_sequence(tokens, config);
}

Circuit arity_decompose(const Circuit& circuit, std::size_t max_product_arity) {
    circuit.require_finalized();
    if (max_product_arity < 2) throw UsageError("max_product_arity must be at least 2");
    Circuit out(circuit.num_vars());
    std::vector<NodeId> map(circuit.size());

    const auto normalized = [](std::span<const double> w) {
        std::vector<double> v(w.begin(), w.end());
        const double s = std::accumulate(v.begin(), v.end(), 0.0);
        if (s <= 0.0) {
            std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
        } else {
            for (auto& x : v) x /= s;
        }
        double head = 0.0;
        for (std::size_t i = 0; i + 1 < v.size(); ++i) head += v[i];
        v.back() = std::max(0.0, 1.0 - head);
        return v;
    };

    std::function<NodeId(std::span<const NodeId>, std::span<const double>)> sum_cascade =
        [&](std::span<const NodeId> ch, std::span<const double> w) -> NodeId {
        if (ch.size() <= 3) return out.add_sum({ch.begin(), ch.end()}, normalized(w));
        const std::size_t h = (ch.size() + 1) / 2;
        const double wa = std::accumulate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(h), 0.0);
        const double wb = std::accumulate(w.begin() + static_cast<std::ptrdiff_t>(h), w.end(), 0.0);
        const NodeId a = sum_cascade(ch.subspan(0, h), w.subspan(0, h));
        const NodeId b = sum_cascade(ch.subspan(h), w.subspan(h));
        const std::vector<double> top{wa, wb};
        return out.add_sum({a, b}, normalized(top));
    };

    std::function<NodeId(std::span<const NodeId>)> product_chunks = [&](std::span<const NodeId> ch) -> NodeId {
        if (ch.size() <= max_product_arity) return out.add_product({ch.begin(), ch.end()});
        const std::size_t g = max_product_arity;
        std::vector<NodeId> groups;
        std::size_t at = 0;
        for (std::size_t i = 0; i < g; ++i) {
            const std::size_t len = ch.size() / g + (i < ch.size() % g ? 1 : 0);
            auto part = ch.subspan(at, len);
            groups.push_back(len == 1 ? part[0] : product_chunks(part));
            at += len;
        }
        return out.add_product(std::move(groups));
    };

    for (NodeId id : circuit.order()) {
        const Node& n = circuit.node(id);
        std::vector<NodeId> ch;
        for (NodeId c : n.children) ch.push_back(map[c]);
        switch (n.kind) {
            case NodeKind::Leaf: map[id] = out.add_leaf(n.var, n.leaf); break;
            case NodeKind::Sum: map[id] = sum_cascade(ch, n.weights); break;
            case NodeKind::Product: map[id] = product_chunks(ch); break;
        }
    }
    out.set_root(map[circuit.root()]);
    out.finalize();
    return out;
}

// ---- relations ----------------------------------------------------------------

TreeRelations tree_relations(std::span<const std::int32_t> parents, std::span<const std::uint32_t> depths) {
    TreeRelations r;
    r.n = parents.size();
    r.depths.assign(depths.begin(), depths.end());
    r.rel.assign(r.n * r.n, Relation::Other);
    for (std::size_t j = 0; j < r.n; ++j) {
        const std::int32_t p = parents[j];
        if (p < 0) continue;
        const auto pu = static_cast<std::size_t>(p);
        r.rel[pu * r.n + j] = Relation::Parent;
        r.rel[j * r.n + pu] = Relation::Child;
        for (std::int32_t a = parents[pu]; a >= 0; a = parents[static_cast<std::size_t>(a)])
            r.rel[static_cast<std::size_t>(a) * r.n + j] = Relation::Ancestor;
        for (std::size_t i = 0; i < j; ++i) {
            if (parents[i] == p) {
                r.rel[i * r.n + j] = Relation::Sibling;
                r.rel[j * r.n + i] = Relation::Sibling;
            }
        }
    }
    return r;
}

TreeRelations tree_relations(const TokenSequence& seq) { return tree_relations(seq.parents, seq.depths); }

DecisionCounts count_structural_decisions(const TokenSequence& seq, const Vocabulary& vocab) {
    DecisionCounts out;
    for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
        const TokenId id = seq.tokens[t];
        if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
        ++out.tokens;
        if (vocab.is_decision(id)) out.indices.push_back(t);
    }
    out.decisions = out.indices.size();
    return out;
}

std::vector<TokenSequence> enumerate_language(const GrammarConfig& config, std::size_t limit) {
    std::vector<TokenSequence> out;
    std::vector<TokenId> prefix;
    std::function<void(const GrammarState&)> walk = [&](const GrammarState& st) {
        if (st.complete()) {
            if (out.size() >= limit)
                throw UsageError("language has more than " + std::to_string(limit) + " sequences");
            out.push_back(make_sequence(prefix, config));
            return;
        }
        for (TokenId id : st.valid_tokens()) {
            GrammarState next = st;
            next.advance(id);
            prefix.push_back(id);
            walk(next);
            prefix.pop_back();
        }
    };
    walk(GrammarState(config));
    return out;
}

// ---- text format --------------------------------------------------------------

std::string format_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string s;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (i) s += ' ';
        s += vocab.name(seq.tokens[i]);
    }
    return s;
}

std::vector<TokenId> parse_sequence_text(const std::string& line, const Vocabulary& vocab) {
    std::istringstream is(line);
    std::vector<TokenId> out;
    std::string word;
    while (is >> word) out.push_back(vocab.parse_name(word));
    return out;
}

void write_corpus(std::ostream& os, std::span<const TokenSequence> corpus, const Vocabulary& vocab) {
    for (const auto& seq : corpus) os << format_sequence(seq, vocab) << '\n';
}

std::vector<TokenSequence> read_corpus(std::istream& is, const GrammarConfig& config) {
    const Vocabulary vocab(config);
    std::vector<TokenSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(make_sequence(parse_sequence_text(line, vocab), config));
        } catch (const DataError& e) {
            throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace symc
