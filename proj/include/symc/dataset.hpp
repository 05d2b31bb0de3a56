#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace symc {

using Row = std::span<const std::uint8_t>;

// Dense N x d binary matrix, row-major.
struct Dataset {
    std::size_t num_vars = 0;
    std::vector<std::uint8_t> cells;
    std::string split;
    std::string source;

    Dataset() = default;
    explicit Dataset(std::size_t d) : num_vars(d) {}

    [[nodiscard]] std::size_t rows() const { return num_vars == 0 ? 0 : cells.size() / num_vars; }
    [[nodiscard]] bool empty() const { return cells.empty(); }
    [[nodiscard]] Row row(std::size_t i) const { return {cells.data() + i * num_vars, num_vars}; }

    void push_row(Row r) { cells.insert(cells.end(), r.begin(), r.end()); }

    // Rows at the given indices, in order (duplicates allowed).
    [[nodiscard]] Dataset select(std::span<const std::size_t> idx) const {
        Dataset out(num_vars);
        out.split = split;
        out.source = source;
        out.cells.reserve(idx.size() * num_vars);
        for (auto i : idx) out.push_row(row(i));
        return out;
    }
};

}  // namespace symc
