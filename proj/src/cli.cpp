#include "symc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "symc/data_io.hpp"
#include "symc/error.hpp"
#include "symc/parallel.hpp"
#include "symc/uq.hpp"

namespace fs = std::filesystem;

namespace symc {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SplitConfig, p_threshold, min_instances, cluster_count,
                                                laplace_alpha, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, lr, beta1, beta2, eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptConfig, anemone_steps, batch_size, adam, em_damping,
                                                weight_floor, laplace_alpha, dirichlet_eta, prior_alpha0,
                                                prior_alpha1, leaf_em, trace, init_jitter, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GrammarConfig, num_vars, max_factorize_arity, depth_cap, node_cap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CorpusConfig, circuits, threshold_lo, threshold_hi, bootstrap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ImitationConfig, epochs, batch_size, lr, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UqOptions, ensemble, points, mc_draws, eps_min, prior_alpha)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SnrOptions, grid, trials, dims, signal)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnumerateOptions, num_vars, depth_cap, rows, p_hi,
                                                tabular_iterations, tabular_lr, eval_every, policy, rl)

RlConfig enumerate_rl_defaults() {
    RlConfig r;
    r.alpha = -1.0;
    r.epsilon_start = 0.0;
    r.epsilon_end = 0.0;
    r.circuits_per_epoch = 128;
    r.epochs = 400;
    r.estimator = Estimator::Sequence;
    r.lr = 3e-3;
    r.lr_end = 1e-4;
    return r;
}

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    has_seed = true;
    split.seed = s;
    opt.seed = s;
    policy.rng_seed = s;
    pretrain.seed = s + 1;
    rl.rng_seed = s + 2;
    enumerate.policy.rng_seed = s;
    enumerate.rl.rng_seed = s + 2;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    static const char* known[] = {"seed",    "out",    "data_dir",      "dataset",    "threads", "split",
                                  "opt",     "grammar", "policy",       "pretrain",   "corpus",  "corpus_path",
                                  "checkpoint", "prior_samples", "rl", "uq",         "snr",     "enumerate"};
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw UsageError("unknown config key '" + key + "'");
    RunConfig c;
    try {
        c.out = j.value("out", c.out);
        c.data_dir = j.value("data_dir", c.data_dir);
        c.dataset = j.value("dataset", c.dataset);
        c.threads = j.value("threads", c.threads);
        if (j.contains("split")) c.split = j.at("split").get<SplitConfig>();
        if (j.contains("opt")) c.opt = j.at("opt").get<OptConfig>();
        if (j.contains("grammar")) {
            auto g = c.grammar;
            nlohmann::json merged = g;
            merged.update(j.at("grammar"));
            c.grammar = merged.get<GrammarConfig>();
        }
        if (j.contains("policy")) c.policy = j.at("policy").get<PolicyConfig>();
        if (j.contains("pretrain")) c.pretrain = j.at("pretrain").get<ImitationConfig>();
        if (j.contains("corpus")) c.corpus = j.at("corpus").get<CorpusConfig>();
        c.corpus_path = j.value("corpus_path", c.corpus_path);
        c.checkpoint = j.value("checkpoint", c.checkpoint);
        c.prior_samples = j.value("prior_samples", c.prior_samples);
        if (j.contains("rl")) c.rl = j.at("rl").get<RlConfig>();
        if (j.contains("uq")) c.uq = j.at("uq").get<UqOptions>();
        if (j.contains("snr")) c.snr = j.at("snr").get<SnrOptions>();
        if (j.contains("enumerate")) {
            nlohmann::json merged = c.enumerate;
            merged.update(j.at("enumerate"), true);
            c.enumerate = merged.get<EnumerateOptions>();
        }
        if (j.contains("seed")) c.apply_seed(j.at("seed").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad config: ") + e.what());
    }
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"seed", c.seed},          {"out", c.out},
            {"data_dir", c.data_dir},  {"dataset", c.dataset},
            {"threads", c.threads},    {"split", c.split},
            {"opt", c.opt},            {"grammar", c.grammar},
            {"policy", c.policy},      {"pretrain", c.pretrain},
            {"corpus", c.corpus},      {"corpus_path", c.corpus_path},
            {"checkpoint", c.checkpoint}, {"prior_samples", c.prior_samples},
            {"rl", c.rl},              {"uq", c.uq},
            {"snr", c.snr},            {"enumerate", c.enumerate}};
}

Splits load_splits(const RunConfig& config) {
    if (config.data_dir.empty()) throw DataError("no data_dir configured");
    const fs::path dir(config.data_dir);
    Splits s;
    for (const char* split : {"train", "valid", "test"}) {
        const fs::path p = debd_split_path(dir, config.dataset, split);
        if (!fs::exists(p)) throw DataError("missing dataset file " + p.string());
    }
    s.train = load_debd(debd_split_path(dir, config.dataset, "train"));
    s.valid = load_debd(debd_split_path(dir, config.dataset, "valid"));
    s.test = load_debd(debd_split_path(dir, config.dataset, "test"));
    if (s.valid.num_vars != s.train.num_vars || s.test.num_vars != s.train.num_vars)
        throw DataError("dataset splits have different widths");
    return s;
}

Circuit fit_structure(const TokenSequence& seq, const GrammarConfig& grammar, const Dataset& train,
                      const RlConfig& rl) {
    Circuit c = parse(seq, grammar);
    hybrid_fit(c, train, reward_opt_config(rl));
    return c;
}

namespace {

void require_seed(const RunConfig& c) {
    if (!c.has_seed) throw UsageError("a seed is required (--seed or \"seed\" in the config)");
}

GrammarConfig grammar_for(const RunConfig& c, const Dataset& data) {
    GrammarConfig g = c.grammar;
    g.num_vars = data.num_vars;
    return g;
}

void finish(RunDir& run, const nlohmann::json& summary, const std::string& table, std::ostream& os) {
    write_json(run.file("results.json"), summary);
    std::ofstream(run.file("table.txt")) << table;
    os << table << "run directory: " << run.path().string() << '\n';
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

std::string sci(double v, int prec = 3) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(prec) << v;
    return s.str();
}

// Plain aligned table.
class Table {
public:
    explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
    [[nodiscard]] std::string str() const {
        std::vector<std::size_t> w(rows_[0].size(), 0);
        for (const auto& r : rows_)
            for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
        std::ostringstream s;
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            for (std::size_t i = 0; i < rows_[k].size(); ++i)
                s << (i ? "  " : "") << std::setw(static_cast<int>(w[i])) << rows_[k][i];
            s << '\n';
            if (k == 0) {
                std::size_t total = 0;
                for (auto x : w) total += x + 2;
                s << std::string(total - 2, '-') << '\n';
            }
        }
        return s.str();
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

struct Scored {
    TokenSequence seq;
    double reward = -std::numeric_limits<double>::infinity();
};

}  // namespace

nlohmann::json cmd_baseline(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    const Splits s = load_splits(c);
    RunDir run(c.out, "baseline", c.seed);
    run.write_config(to_json(c));
    const Circuit circuit = learn_structure(s.train, c.split);
    {
        std::ofstream f(run.file("circuit.txt"));
        write_circuit(f, circuit);
    }
    nlohmann::json summary = {{"command", "baseline"}, {"dataset", c.dataset}, {"nodes", circuit.size()},
                              {"depth", circuit.depth()}};
    Table t({"split", "rows", "avg LL"});
    for (const auto& [name, data] : {std::pair<const char*, const Dataset*>{"train", &s.train},
                                     {"valid", &s.valid},
                                     {"test", &s.test}}) {
        const double ll = avg_loglik(circuit, *data);
        summary[std::string(name) + "_ll"] = ll;
        t.add({name, std::to_string(data->rows()), fmt(ll)});
    }
    finish(run, summary, t.str(), os);
    return summary;
}

nlohmann::json cmd_pretrain(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    const Splits s = load_splits(c);
    const GrammarConfig g = grammar_for(c, s.train);
    RunDir run(c.out, "pretrain", c.seed);
    run.write_config(to_json(c));
    std::vector<TokenSequence> corpus;
    if (!c.corpus_path.empty()) {
        std::ifstream f(c.corpus_path);
        if (!f) throw DataError("cannot read corpus " + c.corpus_path);
        corpus = read_corpus(f, g);
    } else {
        corpus = generate_corpus(s.train, c.corpus, c.split, g);
    }
    if (corpus.empty()) throw DataError("empty corpus");
    {
        std::ofstream f(run.file("corpus.txt"));
        write_corpus(f, corpus, Vocabulary(g));
    }
    PolicyConfig pc = c.policy;
    pc.vocab_size = Vocabulary(g).size();
    Policy policy(pc);
    const auto trace = imitation_train(policy, corpus, g, c.pretrain);
    save_checkpoint(run.file("policy.json"), policy);
    Table t({"epoch", "mean NLL"});
    for (std::size_t e = 0; e < trace.size(); ++e) {
        run.log_metrics({{"epoch", e}, {"nll", trace[e]}});
        if (e == 0 || e + 1 == trace.size() || e % 10 == 0) t.add({std::to_string(e), fmt(trace[e])});
    }
    std::size_t total_len = 0;
    for (const auto& q : corpus) total_len += q.size();
    nlohmann::json summary = {{"command", "pretrain"},
                              {"corpus_size", corpus.size()},
                              {"mean_length", static_cast<double>(total_len) / static_cast<double>(corpus.size())},
                              {"initial_nll", trace.front()},
                              {"final_nll", trace.back()},
                              {"checkpoint", run.file("policy.json").string()}};
    finish(run, summary, t.str(), os);
    return summary;
}

nlohmann::json cmd_train(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    if (c.checkpoint.empty()) throw UsageError("train needs a pretrained checkpoint");
    if (!fs::exists(c.checkpoint)) throw DataError("missing checkpoint " + c.checkpoint);
    const Splits s = load_splits(c);
    const GrammarConfig g = grammar_for(c, s.train);
    const Policy prior = load_checkpoint(c.checkpoint);
    prior.require_grammar(g);
    RunDir run(c.out, "train-" + estimator_name(c.rl.estimator), c.seed);
    run.write_config(to_json(c));
    RewardCache cache(s.train, g, reward_opt_config(c.rl));

    // Reference: best of k structures sampled from the pretrained policy.
    std::mt19937_64 rng(c.seed + 3);
    Scored ref;
    for (std::size_t k = 0, tries = 0; k < c.prior_samples && tries < 10 * c.prior_samples; ++tries) {
        try {
            const SampledSequence smp = sample_structure(prior, g, rng);
            const double r = cache(smp.prepared.seq);
            ++k;
            if (r > ref.reward) ref = {smp.prepared.seq, r};
        } catch (const SequenceLengthError&) {
        }
    }

    Policy policy = prior;
    Table t({"epoch", "mean R", "best R", "KL", "eps", "T", "D"});
    const TrainResult tr = train_policy(policy, prior, g, c.rl, cache.fn(),
                                        [&](EpochRecord& rec, const Policy&, const ReplayBuffer&) {
                                            run.log_metrics(to_json(rec));
                                            t.add({std::to_string(rec.epoch), fmt(rec.mean_reward),
                                                   fmt(rec.best_reward), fmt(rec.kl_estimate, 3),
                                                   fmt(rec.epsilon, 3), fmt(rec.mean_T, 1), fmt(rec.mean_D, 1)});
                                        });
    save_checkpoint(run.file("policy.json"), policy);
    nlohmann::json summary = {{"command", "train"},
                              {"estimator", estimator_name(c.rl.estimator)},
                              {"evaluations", tr.evaluations},
                              {"distinct_structures", cache.fits()},
                              {"checkpoint", run.file("policy.json").string()}};
    std::string tail;
    if (std::isfinite(ref.reward)) {
        const Circuit rc = fit_structure(ref.seq, g, s.train, c.rl);
        summary["prior_best_reward"] = ref.reward;
        summary["prior_best_test_ll"] = avg_loglik(rc, s.test);
        tail += "pretrained best-of-" + std::to_string(c.prior_samples) +
                " test LL: " + fmt(summary["prior_best_test_ll"].get<double>()) + '\n';
    }
    if (const Episode* best = tr.buffer.best()) {
        const Circuit bc = fit_structure(best->prepared.seq, g, s.train, c.rl);
        {
            std::ofstream f(run.file("best_circuit.txt"));
            write_circuit(f, bc);
        }
        summary["best_reward"] = best->reward;
        summary["best_valid_ll"] = avg_loglik(bc, s.valid);
        summary["best_test_ll"] = avg_loglik(bc, s.test);
        summary["best_sequence"] = format_sequence(best->prepared.seq, Vocabulary(g));
        tail += "best circuit (train reward " + fmt(best->reward) +
                ") test LL: " + fmt(summary["best_test_ll"].get<double>()) + '\n';
    }
    finish(run, summary, t.str() + tail, os);
    return summary;
}

nlohmann::json cmd_uq(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    if (c.uq.ensemble < 2) throw UsageError("uq needs an ensemble of at least two structures");
    if (c.checkpoint.empty()) throw UsageError("uq needs a trained checkpoint");
    if (!fs::exists(c.checkpoint)) throw DataError("missing checkpoint " + c.checkpoint);
    const Splits s = load_splits(c);
    const GrammarConfig g = grammar_for(c, s.train);
    const Policy policy = load_checkpoint(c.checkpoint);
    policy.require_grammar(g);
    RunDir run(c.out, "uq", c.seed);
    run.write_config(to_json(c));

    std::mt19937_64 rng(c.seed + 4);
    std::vector<TokenSequence> seqs;
    for (std::size_t tries = 0; seqs.size() < c.uq.ensemble; ++tries) {
        if (tries >= 10 * c.uq.ensemble) throw NumericError("could not sample the ensemble within max_seq_len");
        try {
            seqs.push_back(sample_structure(policy, g, rng).prepared.seq);
        } catch (const SequenceLengthError&) {
        }
    }
    std::vector<Circuit> ensemble(seqs.size());
    parallel_for(seqs.size(), [&](std::size_t k) {
        Circuit fitted = fit_structure(seqs[k], g, s.train, c.rl);
        const auto counts = dirichlet_counts(fitted, s.train);
        const auto& leaves = fitted.leaf_nodes();
        for (std::size_t i = 0; i < leaves.size(); ++i)
            fitted.set_leaf(leaves[i], DirichletLeaf{c.uq.prior_alpha + counts[i][0], c.uq.prior_alpha + counts[i][1]});
        ensemble[k] = std::move(fitted);
    });
    std::vector<std::size_t> idx(std::min(c.uq.points, s.test.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Dataset points = s.test.select(idx);
    const UqReport rep = total_uq(ensemble, s.train, points, c.uq.eps_min);

    // Leaf-layer validation on the first member.
    const auto mc = leaf_moments_mc(ensemble[0], points, c.uq.mc_draws, c.seed + 5);
    double rel = 0.0, sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    const double n = static_cast<double>(points.rows());
    for (std::size_t r = 0; r < points.rows(); ++r) {
        const double a = leaf_moments(ensemble[0], points.row(r)).variance, b = mc[r].variance;
        rel += std::abs(a - b) / std::max(b, std::numeric_limits<double>::min()) / n;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    const double corr = (sab - sa * sb / n) / std::sqrt(std::max(0.0, (saa - sa * sa / n) * (sbb - sb * sb / n)));

    Table t({"layer", "mean variance", "fraction"});
    t.add({"structural", sci(rep.mean_struct), fmt(100 * rep.frac_struct, 1) + "%"});
    t.add({"parameter", sci(rep.mean_param), fmt(100 * rep.frac_param, 1) + "%"});
    t.add({"leaf", sci(rep.mean_leaf), fmt(100 * rep.frac_leaf, 1) + "%"});
    t.add({"total", sci(rep.mean_total), "100.0%"});
    std::ostringstream tail;
    tail << "leaf moments vs " << c.uq.mc_draws << "-draw MC: mean relative error " << fmt(100 * rel, 2)
         << "%, correlation " << fmt(corr, 4) << '\n'
         << "Fisher blocks clamped: " << rep.clamped_blocks << ", max condition number " << sci(rep.max_condition)
         << '\n';
    nlohmann::json summary = to_json(rep);
    summary["command"] = "uq";
    summary["mc_mean_relative_error"] = rel;
    summary["mc_correlation"] = corr;
    for (const auto& q : seqs) summary["structures"].push_back(format_sequence(q, Vocabulary(g)));
    finish(run, summary, t.str() + tail.str(), os);
    return summary;
}

nlohmann::json cmd_snr(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    RunDir run(c.out, "snr", c.seed);
    run.write_config(to_json(c));
    Table t({"T", "D", "sqrt(T/D)", "SNR ratio", "mean ratio", "+- SE", "T/D"});
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < c.snr.grid.size(); ++i) {
        const auto [T, D] = c.snr.grid[i];
        const SnrProbe p = snr_probe(T, D, c.snr.trials, c.seed + i, c.snr.dims, c.snr.signal);
        nlohmann::json r = {{"T", T},
                            {"D", D},
                            {"predicted", p.predicted},
                            {"snr_token", p.snr_token},
                            {"snr_option", p.snr_option},
                            {"snr_ratio", p.snr_ratio},
                            {"mean_ratio", p.mean_ratio},
                            {"mean_ratio_se", p.mean_ratio_se}};
        run.log_metrics(r);
        rows.push_back(r);
        t.add({std::to_string(T), std::to_string(D), fmt(p.predicted, 3), fmt(p.snr_ratio, 3), fmt(p.mean_ratio, 3),
               fmt(p.mean_ratio_se, 3), fmt(static_cast<double>(T) / static_cast<double>(D), 2)});
    }
    nlohmann::json summary = {{"command", "snr"}, {"rows", rows}};
    finish(run, summary, t.str(), os);
    return summary;
}

nlohmann::json cmd_enumerate(const RunConfig& c, std::ostream& os) {
    require_seed(c);
    const EnumerateOptions& e = c.enumerate;
    GrammarConfig g;
    g.num_vars = e.num_vars;
    g.max_factorize_arity = e.num_vars;
    g.depth_cap = e.depth_cap;
    g.node_cap = e.policy.max_seq_len;

    Dataset train;
    if (!c.data_dir.empty()) {
        const Dataset full = load_splits(c).train;
        if (full.num_vars < e.num_vars) throw DataError("dataset has fewer variables than enumerate.num_vars");
        train = Dataset(e.num_vars);
        for (std::size_t r = 0; r < std::min(e.rows, full.rows()); ++r)
            train.push_row(full.row(r).subspan(0, e.num_vars));
    } else {
        // Two product modes with P(X = 1) = p_hi and 1 - p_hi.
        Circuit gen(e.num_vars);
        std::vector<NodeId> modes;
        for (double p : {e.p_hi, 1.0 - e.p_hi}) {
            std::vector<NodeId> leaves;
            for (std::size_t v = 0; v < e.num_vars; ++v) leaves.push_back(gen.add_leaf(v, Bernoulli{p}));
            modes.push_back(gen.add_product(leaves));
        }
        gen.set_root(gen.add_sum(modes, {0.5, 0.5}));
        gen.finalize();
        train = sample_from_circuit(gen, e.rows, c.seed);
    }
    if (train.rows() == 0) throw DataError("no training rows");
    const std::size_t N = train.rows();

    RunDir run(c.out, "enumerate", c.seed);
    run.write_config(to_json(c));
    RlConfig rl = e.rl;
    if (rl.alpha < 0.0) rl.alpha = 1.0 / static_cast<double>(N);

    const auto language = enumerate_language(g);
    std::vector<PreparedSequence> prepared;
    prepared.reserve(language.size());
    for (const auto& q : language) prepared.push_back(prepare_sequence(q, g));
    RewardCache cache(train, g, reward_opt_config(rl));
    PolicyConfig pc = e.policy;
    pc.vocab_size = Vocabulary(g).size();
    const Policy prior(pc);
    std::vector<double> log_prior(prepared.size()), rewards(prepared.size());
    parallel_for(prepared.size(), [&](std::size_t i) {
        log_prior[i] = sequence_logprob(prior, prepared[i]).total;
        rewards[i] = cache(prepared[i].seq);
    });
    const TemperedPosterior post = exact_tempered_posterior(log_prior, rewards, N, rl.alpha);
    std::vector<double> p0(log_prior.size());
    for (std::size_t i = 0; i < p0.size(); ++i) p0[i] = std::exp(log_prior[i]);
    const double tv_prior = total_variation(p0, post.mass);

    const TabularResult tab = train_tabular_policy(log_prior, rewards, rl.alpha, e.tabular_iterations, e.tabular_lr);
    const double tv_tab = total_variation(tab.probs, post.mass);

    const auto exact_tv = [&](const Policy& p) {
        std::vector<double> q(prepared.size());
        parallel_for(prepared.size(), [&](std::size_t i) { q[i] = std::exp(sequence_logprob(p, prepared[i]).total); });
        return total_variation(q, post.mass);
    };
    Policy policy = prior;
    Table t({"epoch", "mean R", "KL", "TV"});
    double tv_policy = tv_prior;
    train_policy(policy, prior, g, rl, cache.fn(), [&](EpochRecord& rec, const Policy& p, const ReplayBuffer&) {
        const bool eval = (rec.epoch + 1) % std::max<std::size_t>(1, e.eval_every) == 0 || rec.epoch + 1 == rl.epochs;
        if (eval) {
            tv_policy = exact_tv(p);
            rec.extra["tv"] = tv_policy;
            t.add({std::to_string(rec.epoch + 1), fmt(rec.mean_reward), fmt(rec.kl_estimate, 3), fmt(tv_policy)});
        }
        run.log_metrics(to_json(rec));
    });
    nlohmann::json summary = {{"command", "enumerate"},
                              {"language_size", language.size()},
                              {"distinct_structures", cache.fits()},
                              {"rows", N},
                              {"alpha", rl.alpha},
                              {"tv_prior", tv_prior},
                              {"tv_tabular", tv_tab},
                              {"tv_policy", tv_policy}};
    std::ostringstream tail;
    tail << "structures " << language.size() << " (" << cache.fits() << " distinct), N " << N << ", alpha "
         << sci(rl.alpha) << '\n'
         << "TV(P0, posterior) " << fmt(tv_prior) << ", tabular " << sci(tv_tab) << ", policy " << fmt(tv_policy)
         << '\n';
    finish(run, summary, t.str() + tail.str(), os);
    return summary;
}

}  // namespace symc
