// symc command-line driver. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "symc/cli.hpp"
#include "symc/data_io.hpp"
#include "symc/error.hpp"
#include "symc/parallel.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grammar-constrained structure learning for probabilistic circuits"};
    app.require_subcommand(1);
    std::string config_path, estimator, out, data_dir, dataset, checkpoint;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "master seed (required here or in the config)");
    auto* est_opt = app.add_option("--estimator", estimator, "token | option | sequence");
    auto* thr_opt = app.add_option("--threads", threads, "worker thread cap (0 = all cores)");
    auto* out_opt = app.add_option("--out", out, "root directory for run outputs");
    auto* data_opt = app.add_option("--data-dir", data_dir, "DEBD directory");
    auto* name_opt = app.add_option("--dataset", dataset, "dataset name inside the DEBD directory");
    auto* ckpt_opt = app.add_option("--checkpoint", checkpoint, "policy checkpoint");

    const std::pair<const char*, const char*> commands[] = {
        {"baseline", "learnspn-lite structure and log-likelihood table"},
        {"pretrain", "corpus generation and imitation pretraining"},
        {"train", "entropy-regularised REINFORCE from a pretrained checkpoint"},
        {"uq", "three-layer uncertainty decomposition"},
        {"snr", "estimator signal-to-noise probe"},
        {"enumerate", "exact-posterior check on a small enumerable grammar"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        symc::RunConfig config =
            config_path.empty() ? symc::RunConfig{} : symc::parse_run_config(symc::read_json(config_path));
        if (*seed_opt) config.apply_seed(seed);
        if (*est_opt) config.rl.estimator = symc::parse_estimator(estimator);
        if (*thr_opt) config.threads = threads;
        if (*out_opt) config.out = out;
        if (*data_opt) config.data_dir = data_dir;
        if (*name_opt) config.dataset = dataset;
        if (*ckpt_opt) config.checkpoint = checkpoint;
        symc::set_max_threads(config.threads);

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "baseline") symc::cmd_baseline(config, std::cout);
        else if (cmd == "pretrain") symc::cmd_pretrain(config, std::cout);
        else if (cmd == "train") symc::cmd_train(config, std::cout);
        else if (cmd == "uq") symc::cmd_uq(config, std::cout);
        else if (cmd == "snr") symc::cmd_snr(config, std::cout);
        else symc::cmd_enumerate(config, std::cout);
    } catch (const symc::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const symc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const symc::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
    return kOk;
}
