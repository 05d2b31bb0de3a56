#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "symc/grammar.hpp"

namespace symc {

struct PolicyConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t model_dim = 64;
    std::size_t ffn_dim = 128;
    std::size_t max_seq_len = 512;
    std::size_t vocab_size = 0;  // must equal the grammar vocabulary size
    std::uint64_t rng_seed = 0;
    bool zero_output = false;  // zero output projection: uniform over valid tokens

    void check() const;
    [[nodiscard]] std::size_t head_dim() const { return model_dim / num_heads; }
    friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);

// Offsets of each parameter block inside the flat parameter vector.
struct PolicyLayout {
    struct Layer {
        std::size_t g1, wq, wk, wv, wo, g2, w1, b1, w2, b2;
    };
    std::size_t emb = 0;
    std::vector<Layer> layers;
    std::size_t tree_bias = 0;  // kNumRelations x num_heads, index r * H + h
    std::size_t gf = 0, wout = 0, bout = 0;
    std::size_t total = 0;

    explicit PolicyLayout(const PolicyConfig& c);
};

// Decoder-only transformer over grammar tokens. Attention scores get a learned
// per-(relation, head) offset, where the relation is that of the key token to
// the token about to be generated.
class Policy {
public:
    explicit Policy(const PolicyConfig& config);

    [[nodiscard]] const PolicyConfig& config() const { return config_; }
    [[nodiscard]] const PolicyLayout& layout() const { return layout_; }
    [[nodiscard]] std::vector<double>& params() { return params_; }
    [[nodiscard]] const std::vector<double>& params() const { return params_; }
    [[nodiscard]] std::size_t num_params() const { return params_.size(); }

    [[nodiscard]] double tree_bias(Relation r, std::size_t head) const;
    void set_tree_bias(Relation r, std::size_t head, double value);

    // Checks that the vocabulary agrees with the grammar.
    void require_grammar(const GrammarConfig& grammar) const;

private:
    PolicyConfig config_;
    PolicyLayout layout_;
    std::vector<double> params_;
};

// A sequence together with the per-step valid-token sets, so repeated
// evaluations skip the grammar replay.
struct PreparedSequence {
    TokenSequence seq;
    std::vector<std::vector<TokenId>> valid;  // valid[t]: ids allowed at step t
};

PreparedSequence prepare_sequence(const TokenSequence& seq, const GrammarConfig& grammar);

// Next-token distribution after a valid, incomplete prefix. Entries outside the
// grammar mask are exactly 0.
std::vector<double> next_token_distribution(const Policy& policy, const TokenSequence& prefix,
                                            const GrammarConfig& grammar);

struct SequenceLogProb {
    double total = 0.0;
    std::vector<double> steps;  // forced steps are exactly 0
};

SequenceLogProb sequence_logprob(const Policy& policy, const PreparedSequence& seq);
SequenceLogProb sequence_logprob(const Policy& policy, const TokenSequence& seq, const GrammarConfig& grammar);

// grad += d/dparams sum_t weights[t] * log pi(a_t | s_t). Returns the weighted sum.
double accumulate_logprob_gradient(const Policy& policy, const PreparedSequence& seq,
                                   std::span<const double> weights, std::span<double> grad);

struct SampledSequence {
    PreparedSequence prepared;
    std::vector<double> step_logprob;  // log pi at temperature 1
    double logprob = 0.0;
};

// Thrown when a sample would exceed max_seq_len.
class SequenceLengthError : public NumericError {
public:
    using NumericError::NumericError;
};

// Draws a complete sequence. Each token comes from (1 - epsilon) * pi_T +
// epsilon * uniform over the valid tokens, where pi_T is the policy at
// temperature T; T <= 0 picks the argmax.
SampledSequence sample_structure(const Policy& policy, const GrammarConfig& grammar, std::mt19937_64& rng,
                                 double temperature = 1.0, double epsilon = 0.0);

// Adam over a flat parameter vector, minimising.
struct AdamOptimizer {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m, v;
    std::uint64_t step = 0;

    void apply(std::span<double> params, std::span<const double> grad);
};

struct ImitationConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

// Maximum likelihood on the corpus. Returns the mean negative log-prob per
// sequence, measured before training and after every epoch.
std::vector<double> imitation_train(Policy& policy, std::span<const TokenSequence> corpus,
                                    const GrammarConfig& grammar, const ImitationConfig& config);

void save_checkpoint(const std::filesystem::path& path, const Policy& policy);
Policy load_checkpoint(const std::filesystem::path& path);
// Throws DataError when the stored configuration differs from `expected`.
Policy load_checkpoint(const std::filesystem::path& path, const PolicyConfig& expected);

}  // namespace symc
