#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symc/dataset.hpp"
#include "symc/param_opt.hpp"
#include "symc/policy.hpp"

namespace symc {

// token: (1/T) sum over all steps; option: (1/D) sum over S2/S3 steps;
// sequence: plain sum over all steps (the unbiased score-function gradient).
enum class Estimator { Token, Option, Sequence };

Estimator parse_estimator(const std::string& name);
std::string estimator_name(Estimator e);

struct RlConfig {
    double alpha = 0.01;
    double epsilon_start = 0.15;
    double epsilon_end = 0.05;
    double temperature = 1.0;
    std::size_t circuits_per_epoch = 4;
    std::size_t epochs = 30;
    std::size_t replay_capacity = 200;
    double baseline_decay = 0.9;
    Estimator estimator = Estimator::Option;
    std::size_t reward_anemone_steps = 30;
    double reward_jitter = 0.3;
    double reward_leaf_lr = 0.1;
    std::size_t reward_batch_size = 0;  // rows per hybrid-fit step; 0 = full batch
    double lr = 3e-4;
    double lr_end = -1.0;  // linear decay target; negative keeps lr constant
    std::uint64_t rng_seed = 0;

    void check() const;
    [[nodiscard]] double epsilon_at(std::size_t epoch) const;
    [[nodiscard]] double lr_at(std::size_t epoch) const;
};

void to_json(nlohmann::json& j, const RlConfig& c);
void from_json(const nlohmann::json& j, RlConfig& c);

struct Episode {
    PreparedSequence prepared;
    std::vector<double> step_logprob;
    double logprob = 0.0;        // log pi(S)
    double prior_logprob = 0.0;  // log P0(S)
    double reward = 0.0;

    [[nodiscard]] std::size_t T() const { return prepared.seq.size(); }
    [[nodiscard]] std::size_t D() const { return prepared.seq.decision_indices.size(); }
};

// Hybrid-fit options used to score a structure.
OptConfig reward_opt_config(const RlConfig& config);

// Average train log-likelihood after hybrid_fit on a copy of the circuit.
double reward(const Circuit& circuit, const Dataset& train, const OptConfig& config);

// Per-step coefficients c_t so that the estimator is sum_t c_t grad log pi_t.
std::vector<double> estimator_weights(Estimator e, std::size_t T, std::span<const std::size_t> decisions,
                                      double advantage);

struct PolicyGradient {
    std::vector<double> grad;  // ascent direction, mean over episodes
    std::size_t skipped = 0;   // option-level episodes with D = 0
};

PolicyGradient policy_gradient(const Policy& policy, std::span<const Episode> episodes, Estimator e,
                               std::span<const double> advantages);
PolicyGradient grad_token_level(const Policy& policy, std::span<const Episode> episodes, double baseline);
PolicyGradient grad_option_level(const Policy& policy, std::span<const Episode> episodes, double baseline);

struct KlEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Mean of log pi(S) - log P0(S) over on-policy samples.
KlEstimate kl_prior_estimate(std::span<const Episode> episodes);

// Top-k episodes by reward; holds only complete, grammar-valid sequences.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, GrammarConfig grammar);

    void push(const Episode& e);
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] const std::vector<Episode>& entries() const { return entries_; }  // best first
    [[nodiscard]] const Episode* best() const { return entries_.empty() ? nullptr : &entries_.front(); }

private:
    std::size_t capacity_;
    GrammarConfig grammar_;
    std::vector<Episode> entries_;
};

struct TemperedPosterior {
    std::vector<double> log_prior;
    std::vector<double> reward;
    std::vector<double> mass;
    double exponent = 0.0;  // 1 / (N alpha)
};

// pi*(S) proportional to P0(S) exp(N R(S))^(1/(N alpha)).
TemperedPosterior exact_tempered_posterior(std::span<const double> log_prior, std::span<const double> rewards,
                                           std::size_t n, double alpha);

double total_variation(std::span<const double> p, std::span<const double> q);

// Softmax table over an enumerated structure set, trained by Adam on the exact
// gradient of E[R] - alpha KL(pi || P0), starting from pi = P0.
struct TabularResult {
    std::vector<double> probs;
    std::size_t iterations = 0;
};

TabularResult train_tabular_policy(std::span<const double> log_prior, std::span<const double> rewards, double alpha,
                                   std::size_t iterations, double lr = 0.05);

using RewardFn = std::function<double(const TokenSequence&)>;  // must be thread-safe

// Canonical text of a tree circuit's structure: product children sorted, sum
// children in order. Equal keys score equal rewards.
std::string structure_key(const Circuit& circuit);

// Thread-safe reward memo keyed by structure_key.
class RewardCache {
public:
    RewardCache(const Dataset& train, GrammarConfig grammar, OptConfig opt);

    double operator()(const TokenSequence& seq);
    [[nodiscard]] std::size_t fits() const;
    [[nodiscard]] RewardFn fn();

private:
    const Dataset& train_;
    GrammarConfig grammar_;
    OptConfig opt_;
    mutable std::mutex mutex_;
    std::map<std::string, double> memo_;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_reward = 0.0;
    double best_reward = 0.0;
    double kl_estimate = 0.0;
    double epsilon = 0.0;
    double baseline = 0.0;
    double mean_T = 0.0;
    double mean_D = 0.0;
    std::size_t skipped = 0;        // D = 0 episodes under the option estimator
    std::size_t length_errors = 0;  // samples aborted at max_seq_len
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
    std::vector<EpochRecord> trace;
    ReplayBuffer buffer;
    std::size_t evaluations = 0;
};

// Called after each epoch's update; may add fields to the record.
using EpochHook = std::function<void(EpochRecord&, const Policy&, const ReplayBuffer&)>;

// Entropy-regularised REINFORCE: each epoch samples circuits_per_epoch episodes,
// scores them, and takes one Adam step along the chosen estimator with advantage
// (R - b) - alpha (log pi - log P0), b an exponential moving average of rewards.
TrainResult train_policy(Policy& policy, const Policy& prior, const GrammarConfig& grammar, const RlConfig& config,
                         const RewardFn& reward_fn, const EpochHook& hook = {});

struct SnrProbe {
    double mean_ratio = 0.0;     // mean(g_opt) / mean(g_tok), averaged over coordinates
    double mean_ratio_se = 0.0;
    double snr_token = 0.0;
    double snr_option = 0.0;
    double snr_ratio = 0.0;
    double predicted = 0.0;      // sqrt(T / D)
};

// Synthetic per-step score vectors: mean `signal` at D decision positions,
// zero mean elsewhere, unit Gaussian noise everywhere. Both estimators are
// formed through estimator_weights.
SnrProbe snr_probe(std::size_t T, std::size_t D, std::size_t trials, std::uint64_t seed, std::size_t dims = 4,
                   double signal = 0.5);

}  // namespace symc
