#include "symc/rl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "symc/error.hpp"
#include "symc/parallel.hpp"

namespace symc {

namespace {

constexpr std::size_t kGradBlock = 8;

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double z = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logits[i] - z);
    return p;
}

}  // namespace

Estimator parse_estimator(const std::string& name) {
    if (name == "token") return Estimator::Token;
    if (name == "option") return Estimator::Option;
    if (name == "sequence") return Estimator::Sequence;
    throw UsageError("unknown estimator '" + name + "' (expected token, option or sequence)");
}

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::Token: return "token";
        case Estimator::Option: return "option";
        case Estimator::Sequence: return "sequence";
    }
    return "?";
}

void RlConfig::check() const {
    if (!(alpha >= 0.0)) throw UsageError("alpha must be nonnegative");
    for (double e : {epsilon_start, epsilon_end})
        if (!(e >= 0.0 && e <= 1.0)) throw UsageError("epsilon must be in [0, 1]");
    if (circuits_per_epoch == 0 || replay_capacity == 0) throw UsageError("capacities must be at least 1");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw UsageError("baseline_decay must be in [0, 1)");
    if (reward_anemone_steps == 0) throw UsageError("reward_anemone_steps must be at least 1");
    if (!(lr > 0.0)) throw UsageError("lr must be positive");
    if (lr_end >= 0.0 && !(lr_end > 0.0)) throw UsageError("lr_end must be positive (or negative to disable decay)");
}

double RlConfig::lr_at(std::size_t epoch) const {
    if (lr_end < 0.0 || epochs <= 1) return lr;
    const double f = static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
    return lr + f * (lr_end - lr);
}

double RlConfig::epsilon_at(std::size_t epoch) const {
    if (epochs <= 1) return epsilon_start;
    const double f = static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
    return epsilon_start + f * (epsilon_end - epsilon_start);
}

void to_json(nlohmann::json& j, const RlConfig& c) {
    j = {{"alpha", c.alpha},
         {"epsilon_start", c.epsilon_start},
         {"epsilon_end", c.epsilon_end},
         {"temperature", c.temperature},
         {"circuits_per_epoch", c.circuits_per_epoch},
         {"epochs", c.epochs},
         {"replay_capacity", c.replay_capacity},
         {"baseline_decay", c.baseline_decay},
         {"estimator", estimator_name(c.estimator)},
         {"reward_anemone_steps", c.reward_anemone_steps},
         {"reward_jitter", c.reward_jitter},
         {"reward_leaf_lr", c.reward_leaf_lr},
         {"reward_batch_size", c.reward_batch_size},
         {"lr", c.lr},
         {"lr_end", c.lr_end},
         {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, RlConfig& c) {
    c.alpha = j.value("alpha", c.alpha);
    c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
    c.epsilon_end = j.value("epsilon_end", c.epsilon_end);
    c.temperature = j.value("temperature", c.temperature);
    c.circuits_per_epoch = j.value("circuits_per_epoch", c.circuits_per_epoch);
    c.epochs = j.value("epochs", c.epochs);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.baseline_decay = j.value("baseline_decay", c.baseline_decay);
    if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
    c.reward_anemone_steps = j.value("reward_anemone_steps", c.reward_anemone_steps);
    c.reward_jitter = j.value("reward_jitter", c.reward_jitter);
    c.reward_leaf_lr = j.value("reward_leaf_lr", c.reward_leaf_lr);
    c.reward_batch_size = j.value("reward_batch_size", c.reward_batch_size);
    c.lr = j.value("lr", c.lr);
    c.lr_end = j.value("lr_end", c.lr_end);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
}

OptConfig reward_opt_config(const RlConfig& config) {
    OptConfig o;
    o.anemone_steps = config.reward_anemone_steps;
    o.trace = false;
    o.init_jitter = config.reward_jitter;
    o.adam.lr = config.reward_leaf_lr;
    o.batch_size = config.reward_batch_size;
    return o;
}

double reward(const Circuit& circuit, const Dataset& train, const OptConfig& config) {
    Circuit c = circuit;
    OptConfig o = config;
    o.trace = false;
    const double r = hybrid_fit(c, train, o).final_loglik;
    if (!std::isfinite(r)) throw NumericError("non-finite reward");
    return r;
}

std::vector<double> estimator_weights(Estimator e, std::size_t T, std::span<const std::size_t> decisions,
                                      double advantage) {
    std::vector<double> w(T, 0.0);
    switch (e) {
        case Estimator::Token:
            if (T > 0) std::fill(w.begin(), w.end(), advantage / static_cast<double>(T));
            break;
        case Estimator::Option:
            for (std::size_t t : decisions) {
                if (t >= T) throw UsageError("decision index outside the sequence");
                w[t] = advantage / static_cast<double>(decisions.size());
            }
            break;
        case Estimator::Sequence:
            std::fill(w.begin(), w.end(), advantage);
            break;
    }
    return w;
}

PolicyGradient policy_gradient(const Policy& policy, std::span<const Episode> episodes, Estimator e,
                               std::span<const double> advantages) {
    if (advantages.size() != episodes.size()) throw UsageError("one advantage per episode is required");
    PolicyGradient out;
    out.grad.assign(policy.num_params(), 0.0);
    if (episodes.empty()) return out;
    const std::size_t blocks = (episodes.size() + kGradBlock - 1) / kGradBlock;
    std::vector<std::vector<double>> partial(blocks, std::vector<double>(policy.num_params(), 0.0));
    parallel_for(blocks, [&](std::size_t b) {
        for (std::size_t i = b * kGradBlock; i < std::min(episodes.size(), (b + 1) * kGradBlock); ++i) {
            const auto& ep = episodes[i];
            const auto w = estimator_weights(e, ep.T(), ep.prepared.seq.decision_indices, advantages[i]);
            if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) continue;
            accumulate_logprob_gradient(policy, ep.prepared, w, partial[b]);
        }
    });
    for (const auto& p : partial)
        for (std::size_t k = 0; k < p.size(); ++k) out.grad[k] += p[k];
    const double inv = 1.0 / static_cast<double>(episodes.size());
    for (auto& g : out.grad) g *= inv;
    if (e == Estimator::Option)
        for (const auto& ep : episodes) out.skipped += ep.D() == 0 ? 1 : 0;
    return out;
}

PolicyGradient grad_token_level(const Policy& policy, std::span<const Episode> episodes, double baseline) {
    std::vector<double> adv;
    for (const auto& e : episodes) adv.push_back(e.reward - baseline);
    return policy_gradient(policy, episodes, Estimator::Token, adv);
}

PolicyGradient grad_option_level(const Policy& policy, std::span<const Episode> episodes, double baseline) {
    std::vector<double> adv;
    for (const auto& e : episodes) adv.push_back(e.reward - baseline);
    return policy_gradient(policy, episodes, Estimator::Option, adv);
}

KlEstimate kl_prior_estimate(std::span<const Episode> episodes) {
    KlEstimate k;
    if (episodes.empty()) return k;
    const double n = static_cast<double>(episodes.size());
    double s = 0.0, ss = 0.0;
    for (const auto& e : episodes) {
        const double d = e.logprob - e.prior_logprob;
        s += d;
        ss += d * d;
    }
    k.value = s / n;
    if (episodes.size() > 1) k.std_error = std::sqrt(std::max(0.0, (ss - n * k.value * k.value) / (n - 1)) / n);
    return k;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, GrammarConfig grammar) : capacity_(capacity), grammar_(grammar) {
    if (capacity_ == 0) throw UsageError("replay capacity must be at least 1");
}

void ReplayBuffer::push(const Episode& e) {
    (void)make_sequence(e.prepared.seq.tokens, grammar_);  // throws on invalid input
    for (const auto& x : entries_)
        if (x.prepared.seq == e.prepared.seq) return;
    const auto at = std::find_if(entries_.begin(), entries_.end(), [&](const Episode& x) { return x.reward < e.reward; });
    if (at == entries_.end() && entries_.size() >= capacity_) return;
    entries_.insert(at, e);
    if (entries_.size() > capacity_) entries_.pop_back();
}

TemperedPosterior exact_tempered_posterior(std::span<const double> log_prior, std::span<const double> rewards,
                                           std::size_t n, double alpha) {
    if (log_prior.empty()) throw UsageError("empty structure set");
    if (log_prior.size() != rewards.size()) throw UsageError("prior and rewards differ in length");
    if (n == 0 || !(alpha > 0.0)) throw UsageError("need N >= 1 and alpha > 0");
    TemperedPosterior t;
    t.log_prior.assign(log_prior.begin(), log_prior.end());
    t.reward.assign(rewards.begin(), rewards.end());
    t.exponent = 1.0 / (static_cast<double>(n) * alpha);
    std::vector<double> logit(log_prior.size());
    for (std::size_t i = 0; i < logit.size(); ++i)
        logit[i] = log_prior[i] + t.exponent * static_cast<double>(n) * rewards[i];
    t.mass = softmax(logit);
    return t;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw UsageError("distributions differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

TabularResult train_tabular_policy(std::span<const double> log_prior, std::span<const double> rewards, double alpha,
                                   std::size_t iterations, double lr) {
    if (log_prior.size() != rewards.size() || log_prior.empty()) throw UsageError("bad structure set");
    const std::size_t n = log_prior.size();
    std::vector<double> theta(log_prior.begin(), log_prior.end());
    AdamOptimizer adam;
    std::vector<double> grad(n), f(n);
    TabularResult out;
    for (std::size_t it = 0; it < iterations; ++it) {
        // linear decay to 1% of the initial rate
        adam.lr = lr * (1.0 - 0.99 * static_cast<double>(it) / static_cast<double>(std::max<std::size_t>(1, iterations)));
        const double z = log_sum_exp(theta);
        double fbar = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double logp = theta[i] - z;
            f[i] = rewards[i] - alpha * (logp - log_prior[i]);
            fbar += std::exp(logp) * f[i];
        }
        for (std::size_t i = 0; i < n; ++i) grad[i] = -std::exp(theta[i] - z) * (f[i] - fbar);  // Adam minimises
        adam.apply(theta, grad);
        out.iterations = it + 1;
    }
    out.probs = softmax(theta);
    return out;
}

std::string structure_key(const Circuit& circuit) {
    circuit.require_finalized();
    const std::function<std::string(NodeId)> key = [&](NodeId id) -> std::string {
        const Node& n = circuit.node(id);
        if (n.kind == NodeKind::Leaf) return "L" + std::to_string(n.var);
        std::vector<std::string> kids;
        for (NodeId c : n.children) kids.push_back(key(c));
        if (n.kind == NodeKind::Product) std::sort(kids.begin(), kids.end());
        std::string out = n.kind == NodeKind::Product ? "P(" : "S(";
        for (std::size_t i = 0; i < kids.size(); ++i) out += (i ? "," : "") + kids[i];
        return out + ")";
    };
    return key(circuit.root());
}

RewardCache::RewardCache(const Dataset& train, GrammarConfig grammar, OptConfig opt)
    : train_(train), grammar_(grammar), opt_(opt) {}

double RewardCache::operator()(const TokenSequence& seq) {
    const Circuit c = parse(seq, grammar_);
    const std::string k = structure_key(c);
    {
        const std::lock_guard lock(mutex_);
        if (auto it = memo_.find(k); it != memo_.end()) return it->second;
    }
    const double r = reward(c, train_, opt_);
    const std::lock_guard lock(mutex_);
    memo_.emplace(k, r);
    return r;
}

std::size_t RewardCache::fits() const {
    const std::lock_guard lock(mutex_);
    return memo_.size();
}

RewardFn RewardCache::fn() {
    return [this](const TokenSequence& s) { return (*this)(s); };
}

nlohmann::json to_json(const EpochRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch},       {"mean_reward", r.mean_reward}, {"best_reward", r.best_reward},
                        {"kl_estimate", r.kl_estimate}, {"epsilon", r.epsilon},   {"baseline", r.baseline},
                        {"mean_T", r.mean_T},     {"mean_D", r.mean_D},           {"skipped", r.skipped},
                        {"length_errors", r.length_errors}};
    for (const auto& [k, v] : r.extra.items()) j[k] = v;
    return j;
}

TrainResult train_policy(Policy& policy, const Policy& prior, const GrammarConfig& grammar, const RlConfig& config,
                         const RewardFn& reward_fn, const EpochHook& hook) {
    config.check();
    policy.require_grammar(grammar);
    prior.require_grammar(grammar);
    TrainResult out{{}, ReplayBuffer(config.replay_capacity, grammar), 0};
    AdamOptimizer adam;
    adam.lr = config.lr;
    std::mt19937_64 rng(config.rng_seed);
    std::optional<double> baseline;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.epsilon = config.epsilon_at(epoch);
        std::vector<Episode> episodes;
        for (std::size_t i = 0; i < config.circuits_per_epoch; ++i) {
            try {
                SampledSequence s = sample_structure(policy, grammar, rng, config.temperature, rec.epsilon);
                Episode e;
                e.prepared = std::move(s.prepared);
                e.step_logprob = std::move(s.step_logprob);
                e.logprob = s.logprob;
                episodes.push_back(std::move(e));
            } catch (const SequenceLengthError&) {
                ++rec.length_errors;
            }
        }
        parallel_for(episodes.size(), [&](std::size_t i) {
            episodes[i].reward = reward_fn(episodes[i].prepared.seq);
            episodes[i].prior_logprob = sequence_logprob(prior, episodes[i].prepared).total;
        });
        out.evaluations += episodes.size();
        if (!episodes.empty()) {
            double mean_r = 0.0;
            rec.best_reward = -std::numeric_limits<double>::infinity();
            for (const auto& e : episodes) {
                if (!std::isfinite(e.reward)) throw NumericError("non-finite reward at epoch " + std::to_string(epoch));
                mean_r += e.reward;
                rec.best_reward = std::max(rec.best_reward, e.reward);
                rec.mean_T += static_cast<double>(e.T());
                rec.mean_D += static_cast<double>(e.D());
            }
            const double n = static_cast<double>(episodes.size());
            mean_r /= n;
            rec.mean_reward = mean_r;
            rec.mean_T /= n;
            rec.mean_D /= n;
            const double b = baseline.value_or(mean_r);
            rec.baseline = b;
            std::vector<double> adv;
            for (const auto& e : episodes) adv.push_back(e.reward - b - config.alpha * (e.logprob - e.prior_logprob));
            rec.kl_estimate = kl_prior_estimate(episodes).value;
            PolicyGradient pg = policy_gradient(policy, episodes, config.estimator, adv);
            rec.skipped = pg.skipped;
            for (auto& g : pg.grad) g = -g;
            adam.lr = config.lr_at(epoch);
            try {
                adam.apply(policy.params(), pg.grad);
            } catch (const NumericError& err) {
                throw NumericError("epoch " + std::to_string(epoch) + ": " + err.what() +
                                   " (mean reward " + std::to_string(mean_r) + ", baseline " + std::to_string(b) + ")");
            }
            baseline = config.baseline_decay * b + (1.0 - config.baseline_decay) * mean_r;
            for (const auto& e : episodes) out.buffer.push(e);
        }
        if (hook) hook(rec, policy, out.buffer);
        out.trace.push_back(std::move(rec));
    }
    return out;
}

SnrProbe snr_probe(std::size_t T, std::size_t D, std::size_t trials, std::uint64_t seed, std::size_t dims,
                   double signal) {
    if (D == 0 || D > T) throw UsageError("need 1 <= D <= T");
    if (signal == 0.0) throw UsageError("zero-signal configuration");
    if (trials < 2 || dims == 0) throw UsageError("need at least two trials and one coordinate");
    std::vector<std::size_t> decisions;
    for (std::size_t j = 0; j < D; ++j) decisions.push_back(j * T / D);
    const auto w_tok = estimator_weights(Estimator::Token, T, decisions, 1.0);
    const auto w_opt = estimator_weights(Estimator::Option, T, decisions, 1.0);
    std::vector<std::uint8_t> is_decision(T, 0);
    for (std::size_t t : decisions) is_decision[t] = 1;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> s_tok(dims, 0.0), ss_tok(dims, 0.0), s_opt(dims, 0.0), ss_opt(dims, 0.0);
    double sa = 0.0, saa = 0.0, sb = 0.0, sbb = 0.0, sab = 0.0;  // coordinate-averaged estimators
    std::vector<double> g_tok(dims), g_opt(dims);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::fill(g_tok.begin(), g_tok.end(), 0.0);
        std::fill(g_opt.begin(), g_opt.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < dims; ++c) {
                const double score = (is_decision[t] ? signal : 0.0) + noise(rng);
                g_tok[c] += w_tok[t] * score;
                g_opt[c] += w_opt[t] * score;
            }
        double a = 0.0, b = 0.0;
        for (std::size_t c = 0; c < dims; ++c) {
            s_tok[c] += g_tok[c];
            ss_tok[c] += g_tok[c] * g_tok[c];
            s_opt[c] += g_opt[c];
            ss_opt[c] += g_opt[c] * g_opt[c];
            a += g_opt[c] / static_cast<double>(dims);
            b += g_tok[c] / static_cast<double>(dims);
        }
        sa += a;
        saa += a * a;
        sb += b;
        sbb += b * b;
        sab += a * b;
    }
    const double n = static_cast<double>(trials);
    SnrProbe out;
    out.predicted = std::sqrt(static_cast<double>(T) / static_cast<double>(D));
    for (std::size_t c = 0; c < dims; ++c) {
        const auto snr = [n](double s, double ss) {
            const double m = s / n;
            const double var = (ss - n * m * m) / (n - 1);
            return std::abs(m) / std::sqrt(var);
        };
        out.snr_token += snr(s_tok[c], ss_tok[c]) / static_cast<double>(dims);
        out.snr_option += snr(s_opt[c], ss_opt[c]) / static_cast<double>(dims);
    }
    out.snr_ratio = out.snr_option / out.snr_token;
    const double ma = sa / n, mb = sb / n;
    if (mb == 0.0) throw NumericError("token-level mean is exactly zero");
    const double va = (saa - n * ma * ma) / (n - 1) / n;
    const double vb = (sbb - n * mb * mb) / (n - 1) / n;
    const double cab = (sab - n * ma * mb) / (n - 1) / n;
    out.mean_ratio = ma / mb;
    out.mean_ratio_se =
        std::abs(out.mean_ratio) * std::sqrt(std::max(0.0, va / (ma * ma) + vb / (mb * mb) - 2.0 * cab / (ma * mb)));
    return out;
}

}  // namespace symc
