#include "symc/policy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "symc/data_io.hpp"
#include "symc/error.hpp"

namespace symc {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatR>;
using GMap = Eigen::Map<MatR>;
using RowV = Eigen::RowVectorXd;
using CVec = Eigen::Map<const RowV>;
using GVec = Eigen::Map<RowV>;

constexpr double kNormEps = 1e-6;
constexpr int kCheckpointVersion = 1;

double sinusoid(std::size_t pos, std::size_t i, std::size_t dim) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
    const double a = static_cast<double>(pos) * freq;
    return i % 2 == 0 ? std::sin(a) : std::cos(a);
}

// Relation of token a to token b (a < b) given the parents of tokens 0..b.
Relation slot_relation(std::span<const std::int32_t> parents, std::size_t a, std::size_t b) {
    const std::int32_t pb = parents[b];
    if (pb == static_cast<std::int32_t>(a)) return Relation::Parent;
    for (std::int32_t x = pb >= 0 ? parents[static_cast<std::size_t>(pb)] : -1; x >= 0;
         x = parents[static_cast<std::size_t>(x)])
        if (x == static_cast<std::int32_t>(a)) return Relation::Ancestor;
    if (pb >= 0 && parents[a] == pb) return Relation::Sibling;
    return Relation::Other;
}

// Relations of every input position 0..p to the slot p. Position 0 holds <bos>.
std::vector<Relation> relation_row(std::span<const std::int32_t> parents, std::size_t p) {
    std::vector<Relation> row(p + 1, Relation::Other);
    for (std::size_t j = 1; j <= p; ++j) row[j] = slot_relation(parents, j - 1, p);
    return row;
}

struct LayerCache {
    MatR x_in, h1, q, k, v, o, x_mid, h2, u;
    std::vector<double> r1, r2;
    std::vector<std::vector<double>> attn;  // [p * H + h] over keys 0..p
};

// Pre-norm transformer evaluated one position at a time; the caches double as
// the key/value cache for sampling and the activation store for backprop.
class Decoder {
public:
    explicit Decoder(const Policy& policy) : policy_(policy), c_(policy.config()), L_(policy.layout()) {
        layers_.resize(c_.num_layers);
    }

    [[nodiscard]] std::size_t size() const { return n_; }

    // Consumes the input token at the next position; returns its logits.
    RowV step(TokenId input, std::uint32_t depth, std::vector<Relation> rel) {
        const std::size_t p = n_;
        if (p >= c_.max_seq_len) throw SequenceLengthError("sequence exceeds max_seq_len " + std::to_string(c_.max_seq_len));
        grow(p + 1);
        const double* P = policy_.params().data();
        const auto D = static_cast<Eigen::Index>(c_.model_dim);
        const auto F = static_cast<Eigen::Index>(c_.ffn_dim);
        const auto V = static_cast<Eigen::Index>(c_.vocab_size);
        const std::size_t H = c_.num_heads;
        const auto dk = static_cast<Eigen::Index>(c_.head_dim());
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

        RowV x = CMap(P + L_.emb, V, D).row(input);
        for (Eigen::Index i = 0; i < D; ++i)
            x(i) += sinusoid(p, static_cast<std::size_t>(i), c_.model_dim) +
                    sinusoid(depth, static_cast<std::size_t>(i), c_.model_dim);
        inputs_.push_back(input);

        for (std::size_t l = 0; l < c_.num_layers; ++l) {
            const auto& w = L_.layers[l];
            LayerCache& lc = layers_[l];
            const auto ip = static_cast<Eigen::Index>(p);
            lc.x_in.row(ip) = x;
            const double r1 = std::sqrt(x.squaredNorm() / static_cast<double>(D) + kNormEps);
            lc.r1.push_back(r1);
            const RowV h1 = (x / r1).cwiseProduct(CVec(P + w.g1, D));
            lc.h1.row(ip) = h1;
            lc.q.row(ip) = h1 * CMap(P + w.wq, D, D);
            lc.k.row(ip) = h1 * CMap(P + w.wk, D, D);
            lc.v.row(ip) = h1 * CMap(P + w.wv, D, D);
            RowV o = RowV::Zero(D);
            for (std::size_t h = 0; h < H; ++h) {
                const auto off = static_cast<Eigen::Index>(h) * dk;
                std::vector<double> s(p + 1);
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j <= p; ++j) {
                    s[j] = lc.q.row(ip).segment(off, dk).dot(lc.k.row(static_cast<Eigen::Index>(j)).segment(off, dk)) *
                               scale +
                           P[L_.tree_bias + static_cast<std::size_t>(rel[j]) * H + h];
                    m = std::max(m, s[j]);
                }
                double z = 0.0;
                for (auto& e : s) z += (e = std::exp(e - m));
                for (std::size_t j = 0; j <= p; ++j) {
                    s[j] /= z;
                    o.segment(off, dk) += s[j] * lc.v.row(static_cast<Eigen::Index>(j)).segment(off, dk);
                }
                lc.attn.push_back(std::move(s));
            }
            lc.o.row(ip) = o;
            x += o * CMap(P + w.wo, D, D);
            lc.x_mid.row(ip) = x;
            const double r2 = std::sqrt(x.squaredNorm() / static_cast<double>(D) + kNormEps);
            lc.r2.push_back(r2);
            const RowV h2 = (x / r2).cwiseProduct(CVec(P + w.g2, D));
            lc.h2.row(ip) = h2;
            const RowV u = h2 * CMap(P + w.w1, D, F) + CVec(P + w.b1, F);
            lc.u.row(ip) = u;
            x += u.cwiseMax(0.0) * CMap(P + w.w2, F, D) + CVec(P + w.b2, D);
        }
        x_final_.row(static_cast<Eigen::Index>(p)) = x;
        const double rf = std::sqrt(x.squaredNorm() / static_cast<double>(D) + kNormEps);
        rf_.push_back(rf);
        const RowV hf = (x / rf).cwiseProduct(CVec(P + L_.gf, D));
        hf_.row(static_cast<Eigen::Index>(p)) = hf;
        rel_.push_back(std::move(rel));
        ++n_;
        return hf * CMap(P + L_.wout, D, V) + CVec(P + L_.bout, V);
    }

    // grad += backprop of dlogits (n x V) through every cached position.
    void backward(const MatR& dlogits, std::span<double> grad) const {
        const double* P = policy_.params().data();
        double* G = grad.data();
        const auto n = static_cast<Eigen::Index>(n_);
        const auto D = static_cast<Eigen::Index>(c_.model_dim);
        const auto F = static_cast<Eigen::Index>(c_.ffn_dim);
        const auto V = static_cast<Eigen::Index>(c_.vocab_size);
        const std::size_t H = c_.num_heads;
        const auto dk = static_cast<Eigen::Index>(c_.head_dim());
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

        GVec(G + L_.bout, V) += dlogits.colwise().sum();
        GMap(G + L_.wout, D, V).noalias() += hf_.topRows(n).transpose() * dlogits;
        MatR dh = dlogits * CMap(P + L_.wout, D, V).transpose();
        MatR dx(n, D);
        norm_backward(x_final_, rf_, P + L_.gf, G + L_.gf, dh, dx);

        for (std::size_t l = c_.num_layers; l-- > 0;) {
            const auto& w = L_.layers[l];
            const LayerCache& lc = layers_[l];
            // feed-forward block
            const MatR a = lc.u.topRows(n).cwiseMax(0.0);
            GVec(G + w.b2, D) += dx.colwise().sum();
            GMap(G + w.w2, F, D).noalias() += a.transpose() * dx;
            MatR du = dx * CMap(P + w.w2, F, D).transpose();
            du = (lc.u.topRows(n).array() > 0.0).select(du, 0.0);
            GVec(G + w.b1, F) += du.colwise().sum();
            GMap(G + w.w1, D, F).noalias() += lc.h2.topRows(n).transpose() * du;
            MatR dh2 = du * CMap(P + w.w1, D, F).transpose();
            MatR dmid(n, D);
            norm_backward(lc.x_mid, lc.r2, P + w.g2, G + w.g2, dh2, dmid);
            dmid += dx;
            // attention block
            GMap(G + w.wo, D, D).noalias() += lc.o.topRows(n).transpose() * dmid;
            const MatR d_o = dmid * CMap(P + w.wo, D, D).transpose();
            MatR dq = MatR::Zero(n, D), dkm = MatR::Zero(n, D), dv = MatR::Zero(n, D);
            for (std::size_t h = 0; h < H; ++h) {
                const auto off = static_cast<Eigen::Index>(h) * dk;
                for (Eigen::Index p = 0; p < n; ++p) {
                    const auto& pr = lc.attn[static_cast<std::size_t>(p) * H + h];
                    const auto dop = d_o.row(p).segment(off, dk);
                    std::vector<double> dp(pr.size());
                    double dot = 0.0;
                    for (Eigen::Index j = 0; j <= p; ++j) {
                        const auto ju = static_cast<std::size_t>(j);
                        dp[ju] = dop.dot(lc.v.row(j).segment(off, dk));
                        dot += pr[ju] * dp[ju];
                        dv.row(j).segment(off, dk) += pr[ju] * dop;
                    }
                    for (Eigen::Index j = 0; j <= p; ++j) {
                        const auto ju = static_cast<std::size_t>(j);
                        const double ds = pr[ju] * (dp[ju] - dot);
                        dq.row(p).segment(off, dk) += (ds * scale) * lc.k.row(j).segment(off, dk);
                        dkm.row(j).segment(off, dk) += (ds * scale) * lc.q.row(p).segment(off, dk);
                        G[L_.tree_bias + static_cast<std::size_t>(rel_[static_cast<std::size_t>(p)][ju]) * H + h] += ds;
                    }
                }
            }
            const auto h1 = lc.h1.topRows(n);
            GMap(G + w.wq, D, D).noalias() += h1.transpose() * dq;
            GMap(G + w.wk, D, D).noalias() += h1.transpose() * dkm;
            GMap(G + w.wv, D, D).noalias() += h1.transpose() * dv;
            MatR dh1 = dq * CMap(P + w.wq, D, D).transpose();
            dh1.noalias() += dkm * CMap(P + w.wk, D, D).transpose();
            dh1.noalias() += dv * CMap(P + w.wv, D, D).transpose();
            norm_backward(lc.x_in, lc.r1, P + w.g1, G + w.g1, dh1, dx);
            dx += dmid;
        }
        GMap emb(G + L_.emb, V, D);
        for (Eigen::Index p = 0; p < n; ++p) emb.row(inputs_[static_cast<std::size_t>(p)]) += dx.row(p);
    }

private:
    void grow(std::size_t rows) {
        if (rows <= cap_) return;
        cap_ = std::max<std::size_t>(rows, std::max<std::size_t>(16, 2 * cap_));
        const auto R = static_cast<Eigen::Index>(cap_);
        const auto D = static_cast<Eigen::Index>(c_.model_dim);
        const auto F = static_cast<Eigen::Index>(c_.ffn_dim);
        for (auto& lc : layers_) {
            for (MatR* m : {&lc.x_in, &lc.h1, &lc.q, &lc.k, &lc.v, &lc.o, &lc.x_mid, &lc.h2}) m->conservativeResize(R, D);
            lc.u.conservativeResize(R, F);
        }
        x_final_.conservativeResize(R, D);
        hf_.conservativeResize(R, D);
    }

    // y = g * x / rms(x), row-wise. Adds dg to gg and writes dx.
    void norm_backward(const MatR& x, const std::vector<double>& r, const double* g, double* gg, const MatR& dy,
                       MatR& dx) const {
        const auto n = static_cast<Eigen::Index>(n_);
        const auto D = static_cast<Eigen::Index>(c_.model_dim);
        dx.resize(n, D);
        GVec ggv(gg, D);
        const CVec gv(g, D);
        for (Eigen::Index p = 0; p < n; ++p) {
            const double rp = r[static_cast<std::size_t>(p)];
            const RowV xhat = x.row(p) / rp;
            ggv += dy.row(p).cwiseProduct(xhat);
            const RowV dxh = dy.row(p).cwiseProduct(gv);
            dx.row(p) = (dxh - xhat * (dxh.dot(xhat) / static_cast<double>(D))) / rp;
        }
    }

    const Policy& policy_;
    const PolicyConfig& c_;
    const PolicyLayout& L_;
    std::size_t n_ = 0;
    std::size_t cap_ = 0;
    std::vector<LayerCache> layers_;
    MatR x_final_, hf_;
    std::vector<double> rf_;
    std::vector<TokenId> inputs_;
    std::vector<std::vector<Relation>> rel_;
};

// Masked log-softmax at the chosen token; forced steps are exactly 0.
double masked_logprob(const RowV& logits, std::span<const TokenId> valid, TokenId chosen, RowV* probs) {
    if (valid.empty()) throw NumericError("no valid token at this step");
    if (probs) probs->setZero(logits.size());
    if (valid.size() == 1) {
        if (probs) (*probs)(valid[0]) = 1.0;
        return 0.0;
    }
    double m = -std::numeric_limits<double>::infinity();
    for (TokenId id : valid) m = std::max(m, logits(id));
    double z = 0.0;
    for (TokenId id : valid) z += std::exp(logits(id) - m);
    const double lse = m + std::log(z);
    if (probs)
        for (TokenId id : valid) (*probs)(id) = std::exp(logits(id) - lse);
    return logits(chosen) - lse;
}

// Runs the decoder over a prepared sequence; step logits land in `logits`.
void run_sequence(Decoder& dec, const PreparedSequence& ps, std::vector<RowV>& logits) {
    const auto& seq = ps.seq;
    logits.clear();
    for (std::size_t p = 0; p < seq.size(); ++p) {
        const TokenId input = p == 0 ? Vocabulary::kBos : seq.tokens[p - 1];
        logits.push_back(dec.step(input, seq.depths[p], relation_row(seq.parents, p)));
    }
}

void check_prepared(const Policy& policy, const PreparedSequence& ps) {
    if (ps.valid.size() != ps.seq.size() || ps.seq.depths.size() != ps.seq.size() ||
        ps.seq.parents.size() != ps.seq.size())
        throw UsageError("prepared sequence is inconsistent");
    for (TokenId id : ps.seq.tokens)
        if (id < 0 || static_cast<std::size_t>(id) >= policy.config().vocab_size)
            throw UsageError("token id outside the policy vocabulary");
}

bool same_architecture(const PolicyConfig& a, const PolicyConfig& b) {
    return a.num_layers == b.num_layers && a.num_heads == b.num_heads && a.model_dim == b.model_dim &&
           a.ffn_dim == b.ffn_dim && a.max_seq_len == b.max_seq_len && a.vocab_size == b.vocab_size;
}

}  // namespace

void PolicyConfig::check() const {
    if (num_layers == 0 || num_heads == 0 || model_dim == 0 || ffn_dim == 0)
        throw UsageError("policy dimensions must be positive");
    if (model_dim % num_heads != 0) throw UsageError("model_dim must be divisible by num_heads");
    if (max_seq_len == 0) throw UsageError("max_seq_len must be positive");
    if (vocab_size < 5) throw UsageError("vocab_size must come from the grammar");
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
    j = {{"num_layers", c.num_layers}, {"num_heads", c.num_heads}, {"model_dim", c.model_dim},
         {"ffn_dim", c.ffn_dim},       {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
         {"rng_seed", c.rng_seed},     {"zero_output", c.zero_output}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.zero_output = j.value("zero_output", c.zero_output);
}

PolicyLayout::PolicyLayout(const PolicyConfig& c) {
    std::size_t at = 0;
    const auto take = [&at](std::size_t n) {
        const std::size_t o = at;
        at += n;
        return o;
    };
    const std::size_t D = c.model_dim, F = c.ffn_dim, V = c.vocab_size;
    emb = take(V * D);
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        Layer w{};
        w.g1 = take(D);
        w.wq = take(D * D);
        w.wk = take(D * D);
        w.wv = take(D * D);
        w.wo = take(D * D);
        w.g2 = take(D);
        w.w1 = take(D * F);
        w.b1 = take(F);
        w.w2 = take(F * D);
        w.b2 = take(D);
        layers.push_back(w);
    }
    tree_bias = take(kNumRelations * c.num_heads);
    gf = take(D);
    wout = take(D * V);
    bout = take(V);
    total = at;
}

Policy::Policy(const PolicyConfig& config) : config_(config), layout_((config.check(), config)) {
    params_.assign(layout_.total, 0.0);
    std::mt19937_64 rng(config_.rng_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto fill = [&](std::size_t off, std::size_t n, double sd) {
        for (std::size_t i = 0; i < n; ++i) params_[off + i] = sd * normal(rng);
    };
    const auto ones = [&](std::size_t off, std::size_t n) { std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(off), n, 1.0); };
    const std::size_t D = config_.model_dim, F = config_.ffn_dim, V = config_.vocab_size;
    const double sd_d = 1.0 / std::sqrt(static_cast<double>(D));
    fill(layout_.emb, V * D, 1.0);
    for (const auto& w : layout_.layers) {
        ones(w.g1, D);
        for (std::size_t m : {w.wq, w.wk, w.wv}) fill(m, D * D, sd_d);
        fill(w.wo, D * D, sd_d / std::sqrt(2.0 * static_cast<double>(config_.num_layers)));
        ones(w.g2, D);
        fill(w.w1, D * F, sd_d);
        fill(w.w2, F * D, 1.0 / std::sqrt(static_cast<double>(F) * 2.0 * static_cast<double>(config_.num_layers)));
    }
    ones(layout_.gf, D);
    if (!config_.zero_output) fill(layout_.wout, D * V, sd_d);
}

double Policy::tree_bias(Relation r, std::size_t head) const {
    return params_.at(layout_.tree_bias + static_cast<std::size_t>(r) * config_.num_heads + head);
}

void Policy::set_tree_bias(Relation r, std::size_t head, double value) {
    params_.at(layout_.tree_bias + static_cast<std::size_t>(r) * config_.num_heads + head) = value;
}

void Policy::require_grammar(const GrammarConfig& grammar) const {
    const Vocabulary vocab(grammar);
    if (vocab.size() != config_.vocab_size)
        throw UsageError("policy vocabulary has " + std::to_string(config_.vocab_size) + " tokens, grammar has " +
                         std::to_string(vocab.size()));
}

PreparedSequence prepare_sequence(const TokenSequence& seq, const GrammarConfig& grammar) {
    PreparedSequence out;
    out.seq = make_sequence(seq.tokens, grammar);
    GrammarState st(grammar);
    for (TokenId id : seq.tokens) {
        out.valid.push_back(st.valid_tokens());
        st.advance(id);
    }
    return out;
}

std::vector<double> next_token_distribution(const Policy& policy, const TokenSequence& prefix,
                                            const GrammarConfig& grammar) {
    policy.require_grammar(grammar);
    const TokenSequence pre = make_sequence(prefix.tokens, grammar, false);
    GrammarState st(grammar);
    for (TokenId id : pre.tokens) st.advance(id);
    if (st.complete()) throw UsageError("prefix is already complete");
    std::vector<std::int32_t> parents = pre.parents;
    parents.push_back(st.next_parent());
    Decoder dec(policy);
    RowV logits;
    for (std::size_t p = 0; p <= pre.size(); ++p) {
        const TokenId input = p == 0 ? Vocabulary::kBos : pre.tokens[p - 1];
        const std::uint32_t depth = p < pre.size() ? pre.depths[p] : st.next_depth();
        logits = dec.step(input, depth, relation_row(parents, p));
    }
    const auto valid = st.valid_tokens();
    RowV probs;
    masked_logprob(logits, valid, valid.front(), &probs);
    return {probs.data(), probs.data() + probs.size()};
}

SequenceLogProb sequence_logprob(const Policy& policy, const PreparedSequence& ps) {
    check_prepared(policy, ps);
    Decoder dec(policy);
    std::vector<RowV> logits;
    run_sequence(dec, ps, logits);
    SequenceLogProb out;
    for (std::size_t p = 0; p < ps.seq.size(); ++p) {
        out.steps.push_back(masked_logprob(logits[p], ps.valid[p], ps.seq.tokens[p], nullptr));
        out.total += out.steps.back();
    }
    return out;
}

SequenceLogProb sequence_logprob(const Policy& policy, const TokenSequence& seq, const GrammarConfig& grammar) {
    policy.require_grammar(grammar);
    return sequence_logprob(policy, prepare_sequence(seq, grammar));
}

double accumulate_logprob_gradient(const Policy& policy, const PreparedSequence& ps, std::span<const double> weights,
                                   std::span<double> grad) {
    check_prepared(policy, ps);
    if (weights.size() != ps.seq.size()) throw UsageError("one weight per token is required");
    if (grad.size() != policy.num_params()) throw UsageError("gradient buffer has the wrong size");
    Decoder dec(policy);
    std::vector<RowV> logits;
    run_sequence(dec, ps, logits);
    const auto n = static_cast<Eigen::Index>(ps.seq.size());
    const auto V = static_cast<Eigen::Index>(policy.config().vocab_size);
    MatR dlogits = MatR::Zero(n, V);
    double value = 0.0;
    RowV probs;
    for (Eigen::Index p = 0; p < n; ++p) {
        const auto pu = static_cast<std::size_t>(p);
        const TokenId a = ps.seq.tokens[pu];
        value += weights[pu] * masked_logprob(logits[pu], ps.valid[pu], a, &probs);
        if (ps.valid[pu].size() < 2 || weights[pu] == 0.0) continue;
        for (TokenId id : ps.valid[pu]) dlogits(p, id) = -weights[pu] * probs(id);
        dlogits(p, a) += weights[pu];
    }
    dec.backward(dlogits, grad);
    return value;
}

SampledSequence sample_structure(const Policy& policy, const GrammarConfig& grammar, std::mt19937_64& rng,
                                 double temperature, double epsilon) {
    policy.require_grammar(grammar);
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw UsageError("epsilon must be in [0, 1]");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    GrammarState st(grammar);
    Decoder dec(policy);
    SampledSequence out;
    std::vector<TokenId> tokens;
    std::vector<std::uint32_t> depths;
    std::vector<std::int32_t> parents;
    RowV probs;
    while (!st.complete()) {
        const std::size_t p = tokens.size();
        depths.push_back(st.next_depth());
        parents.push_back(st.next_parent());
        const TokenId input = p == 0 ? Vocabulary::kBos : tokens.back();
        const RowV logits = dec.step(input, depths.back(), relation_row(parents, p));
        auto valid = st.valid_tokens();
        TokenId choice = valid.front();
        if (valid.size() > 1) {
            if (epsilon > 0.0 && unif(rng) < epsilon) {
                choice = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
            } else if (temperature <= 0.0) {
                for (TokenId id : valid)
                    if (logits(id) > logits(choice)) choice = id;
            } else {
                masked_logprob(logits / temperature, valid, choice, &probs);
                double t = unif(rng);
                choice = valid.back();
                for (TokenId id : valid) {
                    t -= probs(id);
                    if (t < 0.0) {
                        choice = id;
                        break;
                    }
                }
            }
        }
        out.step_logprob.push_back(masked_logprob(logits, valid, choice, nullptr));
        out.logprob += out.step_logprob.back();
        out.prepared.valid.push_back(std::move(valid));
        st.advance(choice);
        tokens.push_back(choice);
    }
    out.prepared.seq = make_sequence(tokens, grammar);
    return out;
}

void AdamOptimizer::apply(std::span<double> params, std::span<const double> grad) {
    if (grad.size() != params.size()) throw UsageError("gradient size differs from parameter size");
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    ++step;
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient at parameter " + std::to_string(i));
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

std::vector<double> imitation_train(Policy& policy, std::span<const TokenSequence> corpus,
                                    const GrammarConfig& grammar, const ImitationConfig& config) {
    policy.require_grammar(grammar);
    if (corpus.empty()) throw DataError("empty corpus");
    if (config.batch_size == 0) throw UsageError("batch_size must be positive");
    std::vector<PreparedSequence> data;
    for (const auto& s : corpus) data.push_back(prepare_sequence(s, grammar));
    const auto mean_nll = [&] {
        double total = 0.0;
        for (const auto& ps : data) total -= sequence_logprob(policy, ps).total;
        return total / static_cast<double>(data.size());
    };
    std::vector<double> trace{mean_nll()};
    AdamOptimizer adam;
    adam.lr = config.lr;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(policy.num_params());
    std::vector<double> ones;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& ps = data[order[i]];
                // descend on the mean negative log-prob of the batch
                ones.assign(ps.seq.size(), -1.0 / static_cast<double>(end - start));
                accumulate_logprob_gradient(policy, ps, ones, grad);
            }
            adam.apply(policy.params(), grad);
        }
        trace.push_back(mean_nll());
    }
    return trace;
}

void save_checkpoint(const std::filesystem::path& path, const Policy& policy) {
    nlohmann::json j;
    j["format"] = "symc-policy";
    j["version"] = kCheckpointVersion;
    j["config"] = policy.config();
    j["params"] = policy.params();
    write_json(path, j);
}

Policy load_checkpoint(const std::filesystem::path& path) {
    const nlohmann::json j = read_json(path);
    if (j.value("format", std::string()) != "symc-policy") throw DataError(path.string() + ": not a policy checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    Policy policy(j.at("config").get<PolicyConfig>());
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != policy.num_params())
        throw DataError(path.string() + ": expected " + std::to_string(policy.num_params()) + " parameters, found " +
                        std::to_string(params.size()));
    policy.params() = params;
    return policy;
}

Policy load_checkpoint(const std::filesystem::path& path, const PolicyConfig& expected) {
    Policy policy = load_checkpoint(path);
    if (!same_architecture(policy.config(), expected)) {
        const nlohmann::json have = policy.config(), want = expected;
        throw DataError(path.string() + ": checkpoint config " + have.dump() + " does not match " + want.dump());
    }
    return policy;
}

}  // namespace symc
