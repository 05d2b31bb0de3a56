#include "symc/data_io.hpp"

#include <istream>
#include <ostream>
#include <random>

#include "symc/error.hpp"

namespace symc {

namespace fs = std::filesystem;

Dataset read_debd(std::istream& is, const std::string& source) {
    Dataset out;
    out.source = source;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::uint8_t> row;
    const auto fail = [&](std::size_t col, const std::string& what) {
        throw DataError(source + ":" + std::to_string(lineno) + ":" + std::to_string(col) + ": " + what);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        row.clear();
        std::size_t col = 1;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (cell == "0" || cell == "1") {
                row.push_back(static_cast<std::uint8_t>(cell[0] - '0'));
            } else {
                fail(col, "non-binary cell '" + cell + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
            ++col;
        }
        if (out.num_vars == 0) out.num_vars = row.size();
        if (row.size() != out.num_vars)
            fail(row.size(), "ragged row: " + std::to_string(row.size()) + " cells, expected " +
                                 std::to_string(out.num_vars));
        out.push_row(row);
    }
    if (out.empty()) throw DataError(source + ": empty dataset");
    return out;
}

Dataset load_debd(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    Dataset d = read_debd(is, path.string());
    const std::string name = path.filename().string();
    for (const char* split : {"train", "valid", "test"}) {
        if (name.find(std::string(".") + split + ".data") != std::string::npos) d.split = split;
    }
    return d;
}

void write_debd(std::ostream& os, const Dataset& data) {
    std::string line;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        line.clear();
        for (auto v : data.row(i)) {
            if (!line.empty()) line += ',';
            line += static_cast<char>('0' + v);
        }
        os << line << '\n';
    }
}

void save_debd(const fs::path& path, const Dataset& data) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    write_debd(os, data);
}

fs::path debd_split_path(const fs::path& dir, const std::string& name, const std::string& split) {
    return dir / (name + "." + split + ".data");
}

Dataset sample_from_circuit(const Circuit& circuit, std::size_t n, std::uint64_t seed) {
    circuit.require_finalized();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset out(circuit.num_vars());
    out.source = "sampled";
    out.cells.assign(n * circuit.num_vars(), 0);
    std::vector<NodeId> stack;
    for (std::size_t r = 0; r < n; ++r) {
        std::uint8_t* row = out.cells.data() + r * circuit.num_vars();
        stack.assign(1, circuit.root());
        while (!stack.empty()) {
            const Node& node = circuit.node(stack.back());
            stack.pop_back();
            switch (node.kind) {
                case NodeKind::Leaf:
                    row[node.var] = u(rng) < leaf_probability(node.leaf) ? 1 : 0;
                    break;
                case NodeKind::Product:
                    stack.insert(stack.end(), node.children.begin(), node.children.end());
                    break;
                case NodeKind::Sum: {
                    double t = u(rng);
                    std::size_t pick = node.children.size() - 1;
                    for (std::size_t j = 0; j < node.children.size(); ++j) {
                        t -= node.weights[j];
                        if (t < 0.0) {
                            pick = j;
                            break;
                        }
                    }
                    stack.push_back(node.children[pick]);
                    break;
                }
            }
        }
    }
    return out;
}

RunDir::RunDir(const fs::path& root, const std::string& label, std::uint64_t seed) {
    fs::create_directories(root);
    for (std::size_t k = 0;; ++k) {
        fs::path p = root / (label + "-" + std::to_string(seed) + "-" + std::to_string(k));
        if (fs::create_directory(p)) {
            path_ = std::move(p);
            break;
        }
    }
    metrics_.open(path_ / "metrics.jsonl");
    if (!metrics_) throw DataError("cannot write " + (path_ / "metrics.jsonl").string());
}

void RunDir::write_config(const nlohmann::json& config) const { write_json(path_ / "config.json", config); }

void RunDir::log_metrics(const nlohmann::json& record) {
    metrics_ << record.dump() << '\n';
    metrics_.flush();
}

void write_json(const fs::path& path, const nlohmann::json& value) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << value.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace symc
