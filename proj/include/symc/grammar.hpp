#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symc/circuit.hpp"
#include "symc/error.hpp"
#include "symc/scope.hpp"

namespace symc {

// Rejection of a token or sequence by the grammar; carries the offending position.
class GrammarError : public DataError {
public:
    GrammarError(std::size_t position, const std::string& what)
        : DataError("token " + std::to_string(position) + ": " + what), position_(position) {}
    [[nodiscard]] std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

struct GrammarConfig {
    std::size_t num_vars = 1;
    std::size_t max_factorize_arity = 8;  // clipped to num_vars
    std::size_t depth_cap = 8;            // maximum number of node levels on a path
    std::size_t node_cap = kDefaultMaxNodes;

    [[nodiscard]] std::size_t factorize_arity() const {
        return std::min(num_vars, max_factorize_arity);
    }
};

enum class TokenKind : std::uint8_t { Bos, Eos, Sum, Factorize, Leaf };

struct Token {
    TokenKind kind = TokenKind::Bos;
    std::uint32_t arg = 0;  // sum arity, factorize arity, or leaf variable

    static Token sum(std::uint32_t k) { return {TokenKind::Sum, k}; }
    static Token factorize(std::uint32_t k) { return {TokenKind::Factorize, k}; }
    static Token leaf(std::uint32_t v) { return {TokenKind::Leaf, v}; }
    friend bool operator==(const Token&, const Token&) = default;
};

using TokenId = std::int32_t;

// Id layout: <bos> <eos> S2 S3 F2..Fk L0..L(d-1).
class Vocabulary {
public:
    explicit Vocabulary(const GrammarConfig& config);

    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kSum2 = 2;
    static constexpr TokenId kSum3 = 3;

    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t num_vars() const { return num_vars_; }
    [[nodiscard]] std::size_t factorize_arity() const { return kmax_; }

    [[nodiscard]] TokenId id(Token t) const;
    [[nodiscard]] Token token(TokenId id) const;
    [[nodiscard]] TokenId leaf(std::size_t v) const { return static_cast<TokenId>(leaf_base_ + v); }
    [[nodiscard]] TokenId factorize(std::size_t k) const { return static_cast<TokenId>(4 + k - 2); }
    [[nodiscard]] bool is_decision(TokenId id) const { return id == kSum2 || id == kSum3; }

    [[nodiscard]] std::string name(TokenId id) const;
    [[nodiscard]] TokenId parse_name(const std::string& s) const;

private:
    std::size_t num_vars_;
    std::size_t kmax_;
    std::size_t leaf_base_;
    std::size_t size_;
};

// A grammar-valid token sequence (no sentinels) with per-token tree metadata.
struct TokenSequence {
    std::vector<TokenId> tokens;
    std::vector<std::size_t> decision_indices;  // positions of S2/S3
    std::vector<std::uint32_t> depths;          // root token has depth 0
    std::vector<std::int32_t> parents;          // parent position, -1 for the root

    [[nodiscard]] std::size_t size() const { return tokens.size(); }
    friend bool operator==(const TokenSequence& a, const TokenSequence& b) { return a.tokens == b.tokens; }
};

// Scope constraint on a subtree about to be generated: its scope X must satisfy
// X ⊆ allowed and lo <= |X| <= hi. When lo == |allowed| the scope is fixed.
struct SlotConstraint {
    Scope allowed;
    std::uint32_t lo = 1;
    std::uint32_t hi = 1;

    [[nodiscard]] bool fixed() const { return lo == allowed.size(); }
};

// Incremental parse state for pre-order generation. Scopes of product children
// are drawn left to right from the parent's unclaimed pool and commit when the
// child's subtree closes; a sum commits its scope when its first child closes
// and every later child is held to exactly that scope.
class GrammarState {
public:
    explicit GrammarState(const GrammarConfig& config);

    [[nodiscard]] bool complete() const { return complete_; }
    [[nodiscard]] std::size_t tokens_emitted() const { return emitted_; }
    [[nodiscard]] const std::vector<std::size_t>& decision_indices() const { return decisions_; }

    // Validity mask over the vocabulary. Throws UsageError on a complete state.
    [[nodiscard]] std::vector<std::uint8_t> valid_mask() const;
    [[nodiscard]] std::vector<TokenId> valid_tokens() const;
    [[nodiscard]] bool is_valid(TokenId id) const;

    // Throws GrammarError naming the violated constraint.
    void advance(TokenId id);

    // Tree position of the next token.
    [[nodiscard]] std::uint32_t next_depth() const;
    [[nodiscard]] std::int32_t next_parent() const;
    [[nodiscard]] SlotConstraint current_slot() const;

    // Minimum number of further tokens needed to complete from here.
    [[nodiscard]] std::size_t min_completion_tokens() const;

    [[nodiscard]] const GrammarConfig& config() const { return config_; }
    [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }

    // Open frames and their scope commitments; equal keys have equal futures.
    [[nodiscard]] std::string key() const;

private:
    struct Frame {
        TokenKind kind;
        std::uint32_t arity;
        std::uint32_t done = 0;
        std::uint32_t depth;
        std::int32_t position;  // token index of this node
        SlotConstraint constraint;
        Scope consumed;  // product: union of closed children; sum: committed scope
    };

    [[nodiscard]] SlotConstraint child_constraint(const Frame& f) const;
    [[nodiscard]] static SlotConstraint frame_slot(Token t, SlotConstraint k);
    [[nodiscard]] std::uint64_t capsize(std::uint32_t depth) const;
    [[nodiscard]] std::uint64_t greedy_cost(std::uint64_t size, std::uint32_t depth) const;
    [[nodiscard]] std::uint64_t completion_cost(const std::vector<Frame>& stack) const;
    [[nodiscard]] std::optional<std::string> structural_reject(Token t) const;
    void close_subtree(std::vector<Frame>& stack, Scope scope, bool& complete) const;

    GrammarConfig config_;
    Vocabulary vocab_;
    std::vector<Frame> stack_;
    std::size_t emitted_ = 0;
    bool complete_ = false;
    std::vector<std::size_t> decisions_;
    mutable std::vector<std::uint64_t> greedy_memo_;
};

// ---- sequence <-> circuit -----------------------------------------------------

// Feeds tokens through a GrammarState, filling in tree metadata. Throws
// GrammarError at the first invalid token or if the sequence is incomplete.
// With `require_complete = false` a valid prefix is accepted.
TokenSequence make_sequence(std::span<const TokenId> tokens, const GrammarConfig& config,
                            bool require_complete = true);

// Builds the circuit: uniform sum weights, leaves at p = 0.5 (or `leaf_p[v]`
// when given). The result is finalized.
Circuit parse(const TokenSequence& seq, const GrammarConfig& config,
              std::span<const double> leaf_p = {});
Circuit parse(std::span<const TokenId> tokens, const GrammarConfig& config,
              std::span<const double> leaf_p = {});

// Pre-order encoding. Throws GrammarError (position = offending node id) for
// circuits outside the grammar: sum arity not in {2,3}, product arity above the
// factorize range, or depth/node caps exceeded.
TokenSequence serialize(const Circuit& circuit, const GrammarConfig& config);

// Rewrites sums of arity > 3 as balanced binary/ternary cascades and products
// of arity > max_product_arity as nested products; the distribution is unchanged.
Circuit arity_decompose(const Circuit& circuit, std::size_t max_product_arity = 8);

enum class Relation : std::uint8_t { Parent = 0, Child = 1, Sibling = 2, Ancestor = 3, Other = 4 };
inline constexpr std::size_t kNumRelations = 5;

// rel[i * n + j] = relation of token i to token j (Parent: i is j's parent).
struct TreeRelations {
    std::size_t n = 0;
    std::vector<Relation> rel;
    std::vector<std::uint32_t> depths;

    [[nodiscard]] Relation at(std::size_t i, std::size_t j) const { return rel[i * n + j]; }
};

TreeRelations tree_relations(std::span<const std::int32_t> parents, std::span<const std::uint32_t> depths);
TreeRelations tree_relations(const TokenSequence& seq);

struct DecisionCounts {
    std::size_t tokens = 0;     // T, sentinels excluded
    std::size_t decisions = 0;  // D
    std::vector<std::size_t> indices;
};

DecisionCounts count_structural_decisions(const TokenSequence& seq, const Vocabulary& vocab);

// Every complete sequence of the language, in lexicographic id order.
// Throws UsageError if more than `limit` sequences exist.
std::vector<TokenSequence> enumerate_language(const GrammarConfig& config, std::size_t limit = 2'000'000);

// Token text format: whitespace-separated S2 S3 F<k> L<v>, one sequence per line.
std::string format_sequence(const TokenSequence& seq, const Vocabulary& vocab);
std::vector<TokenId> parse_sequence_text(const std::string& line, const Vocabulary& vocab);
void write_corpus(std::ostream& os, std::span<const TokenSequence> corpus, const Vocabulary& vocab);
std::vector<TokenSequence> read_corpus(std::istream& is, const GrammarConfig& config);

}  // namespace symc
