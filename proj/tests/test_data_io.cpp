#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/fixtures.hpp"
#include "symc/data_io.hpp"
#include "symc/error.hpp"

using namespace symc;
using namespace symc::testing;

namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
    std::istringstream is(text);
    try {
        (void)read_debd(is, "mem");
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("symc-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("read_debd: small file") {
    std::istringstream is("1,0,1\n0,0,1\n");
    const Dataset d = read_debd(is);
    CHECK(d.rows() == 2);
    CHECK(d.num_vars == 3);
    CHECK(d.row(0)[0] == 1);
    CHECK(d.row(1)[2] == 1);
    CHECK(d.row(1)[0] == 0);
}

TEST_CASE("read_debd: errors carry line and column") {
    CHECK(error_of("1,2,0\n") == "mem:1:2: non-binary cell '2'");
    CHECK(error_of("1,0\n0,1,1\n") == "mem:2:3: ragged row: 3 cells, expected 2");
    CHECK(error_of("1,0\n0\n").find("mem:2:") == 0);
    CHECK(error_of("") == "mem: empty dataset");
    CHECK(error_of("1,,0\n") == "mem:1:2: non-binary cell ''");
}

TEST_CASE("debd: byte-identical round trip and split tags") {
    const fs::path dir = scratch_dir("debd");
    const std::string text = "0,1,1,0\n1,1,1,1\n0,0,0,0\n";
    const fs::path p = debd_split_path(dir, "toy", "train");
    {
        std::ofstream os(p);
        os << text;
    }
    const Dataset d = load_debd(p);
    CHECK(d.split == "train");
    CHECK(d.rows() == 3);
    std::ostringstream os;
    write_debd(os, d);
    CHECK(os.str() == text);
    CHECK_THROWS_AS(load_debd(dir / "missing.data"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("sample_from_circuit: deterministic leaf") {
    Circuit c(1);
    c.add_leaf(0, Bernoulli{1.0});
    c.finalize();
    const Dataset d = sample_from_circuit(c, 500, 1);
    for (auto v : d.cells) CHECK(v == 1);
}

TEST_CASE("sample_from_circuit: marginals within 4 sigma of the circuit") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const Circuit c = random_circuit(8, seed);
        const std::size_t n = 50000;
        const Dataset d = sample_from_circuit(c, n, 100 + seed);
        for (std::size_t v = 0; v < 8; ++v) {
            std::vector<std::int8_t> ev(8, -1);
            ev[v] = 1;
            const double p = std::exp(evaluate_marginal(c, ev));
            double mean = 0.0;
            for (std::size_t r = 0; r < n; ++r) mean += d.row(r)[v];
            mean /= static_cast<double>(n);
            const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
            CAPTURE(seed);
            CAPTURE(v);
            CHECK(std::abs(mean - p) < 4.0 * sigma + 1e-12);
        }
    }
}

TEST_CASE("sample_from_circuit: reproducible and converging to the negentropy") {
    const Circuit c = random_circuit(6, 17);
    CHECK(sample_from_circuit(c, 300, 5).cells == sample_from_circuit(c, 300, 5).cells);
    CHECK(sample_from_circuit(c, 300, 5).cells != sample_from_circuit(c, 300, 6).cells);

    double negentropy = 0.0;
    for (std::uint64_t m = 0; m < 64; ++m) {
        const double lp = evaluate_log(c, bits_of(m, 6));
        negentropy += std::exp(lp) * lp;
    }
    double prev = INFINITY;
    for (std::size_t n : {1000, 10000, 100000}) {
        const double err = std::abs(avg_loglik(c, sample_from_circuit(c, n, 9)) - negentropy);
        CAPTURE(n);
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 0.01);
}

TEST_CASE("RunDir: fresh directories, config and metrics") {
    const fs::path root = scratch_dir("runs");
    RunDir a(root, "train", 7);
    RunDir b(root, "train", 7);
    CHECK(a.path() != b.path());
    a.write_config({{"lr", 0.01}, {"seed", 7}});
    a.log_metrics({{"step", 0}, {"reward", -6.5}});
    a.log_metrics({{"step", 1}, {"reward", -6.4}});
    CHECK(read_json(a.file("config.json"))["seed"] == 7);
    std::ifstream is(a.file("metrics.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        CHECK(nlohmann::json::parse(line)["step"] == lines);
        ++lines;
    }
    CHECK(lines == 2);
    fs::remove_all(root);
}
