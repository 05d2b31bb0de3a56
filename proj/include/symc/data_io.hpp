#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "symc/circuit.hpp"
#include "symc/dataset.hpp"

namespace symc {

// DEBD layout: comma-separated 0/1 cells, one row per line. The width is
// taken from the first row. Errors carry 1-based line and column numbers.
Dataset read_debd(std::istream& is, const std::string& source = "<stream>");
Dataset load_debd(const std::filesystem::path& path);
void write_debd(std::ostream& os, const Dataset& data);
void save_debd(const std::filesystem::path& path, const Dataset& data);

// <dir>/<name>.{train,valid,test}.data
std::filesystem::path debd_split_path(const std::filesystem::path& dir, const std::string& name,
                                      const std::string& split);

// Ancestral sampling: sums pick one child by weight, products visit every
// child, leaves draw Bernoulli(p). Deterministic in `seed`.
Dataset sample_from_circuit(const Circuit& circuit, std::size_t n, std::uint64_t seed);

// Artifacts of one run: a fresh directory holding config.json, metrics.jsonl
// and whatever the caller writes next to them.
class RunDir {
public:
    // Creates <root>/<label>-<seed>-<k> with the first unused k.
    RunDir(const std::filesystem::path& root, const std::string& label, std::uint64_t seed);

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path file(const std::string& name) const { return path_ / name; }

    void write_config(const nlohmann::json& config) const;
    void log_metrics(const nlohmann::json& record);

private:
    std::filesystem::path path_;
    std::ofstream metrics_;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace symc
