#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "symc/baseline.hpp"
#include "symc/dataset.hpp"
#include "symc/grammar.hpp"
#include "symc/param_opt.hpp"
#include "symc/policy.hpp"
#include "symc/rl.hpp"

namespace symc {

struct UqOptions {
    std::size_t ensemble = 10;
    std::size_t points = 100;     // leading test rows used as x*
    std::size_t mc_draws = 5000;  // leaf-posterior draws for the validation summary
    double eps_min = 1e-4;
    double prior_alpha = 1.0;     // symmetric Beta prior before the conjugate update
};

struct SnrOptions {
    std::vector<std::pair<std::size_t, std::size_t>> grid{{100, 4}, {100, 10}, {100, 25}, {100, 100}, {64, 16}, {32, 2}};
    std::size_t trials = 50000;
    std::size_t dims = 4;
    double signal = 0.5;
};

// Sequence estimator, no exploration, alpha = 1/N, 128 x 400 episodes, lr 3e-3 decayed to 1e-4.
RlConfig enumerate_rl_defaults();

// Small enumerable grammar trained against its exact tempered posterior.
struct EnumerateOptions {
    std::size_t num_vars = 4;
    std::size_t depth_cap = 3;
    std::size_t rows = 60;         // synthetic two-mode training rows (used without data_dir)
    double p_hi = 0.8;
    std::size_t tabular_iterations = 6000;
    double tabular_lr = 0.05;
    std::size_t eval_every = 50;   // epochs between exact TV evaluations
    PolicyConfig policy{2, 2, 16, 32, 512, 0, 0, true};
    RlConfig rl = enumerate_rl_defaults();  // negative alpha means 1/N
};

struct RunConfig {
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string out = "runs";
    std::string data_dir;             // DEBD directory with <name>.{train,valid,test}.data
    std::string dataset = "nltcs";
    std::size_t threads = 0;
    SplitConfig split;
    OptConfig opt;
    GrammarConfig grammar{0, 8, 16, 512};  // num_vars is taken from the data
    PolicyConfig policy;
    ImitationConfig pretrain;
    CorpusConfig corpus;
    std::string corpus_path;          // optional pre-built corpus (token text)
    std::string checkpoint;           // pretrained (train) or trained (uq) policy
    std::size_t prior_samples = 10;   // pretrained best-of-k reference in train
    RlConfig rl;
    UqOptions uq;
    SnrOptions snr;
    EnumerateOptions enumerate;

    // Spreads the master seed over the component configs.
    void apply_seed(std::uint64_t s);
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

struct Splits {
    Dataset train, valid, test;
};

// Throws DataError when a split is missing or widths differ.
Splits load_splits(const RunConfig& config);

// Circuit for a sequence, fitted with the reward settings of `rl`.
Circuit fit_structure(const TokenSequence& seq, const GrammarConfig& grammar, const Dataset& train,
                      const RlConfig& rl);

// Each command creates a fresh run directory under config.out, writes a
// config snapshot, prints a table to `os` and returns its summary (also saved
// as results.json).
nlohmann::json cmd_baseline(const RunConfig& config, std::ostream& os);
nlohmann::json cmd_pretrain(const RunConfig& config, std::ostream& os);
nlohmann::json cmd_train(const RunConfig& config, std::ostream& os);
nlohmann::json cmd_uq(const RunConfig& config, std::ostream& os);
nlohmann::json cmd_snr(const RunConfig& config, std::ostream& os);
nlohmann::json cmd_enumerate(const RunConfig& config, std::ostream& os);

}  // namespace symc
