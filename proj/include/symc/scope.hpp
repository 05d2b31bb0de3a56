#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace symc {

inline constexpr std::size_t kMaxVars = 128;

// Fixed-width variable set. Supports up to kMaxVars variables.
class Scope {
public:
    constexpr Scope() = default;

    static Scope single(std::size_t v) {
        Scope s;
        s.insert(v);
        return s;
    }

    static Scope full(std::size_t d) {
        Scope s;
        for (std::size_t v = 0; v < d; ++v) s.insert(v);
        return s;
    }

    void insert(std::size_t v) { words_[v >> 6] |= (std::uint64_t{1} << (v & 63)); }
    void erase(std::size_t v) { words_[v >> 6] &= ~(std::uint64_t{1} << (v & 63)); }
    [[nodiscard]] bool contains(std::size_t v) const {
        return (words_[v >> 6] >> (v & 63)) & 1u;
    }

    [[nodiscard]] std::size_t size() const {
        return static_cast<std::size_t>(std::popcount(words_[0]) + std::popcount(words_[1]));
    }
    [[nodiscard]] bool empty() const { return words_[0] == 0 && words_[1] == 0; }

    // Smallest member; undefined on the empty set.
    [[nodiscard]] std::size_t min() const {
        if (words_[0] != 0) return static_cast<std::size_t>(std::countr_zero(words_[0]));
        return 64 + static_cast<std::size_t>(std::countr_zero(words_[1]));
    }

    [[nodiscard]] bool intersects(const Scope& o) const {
        return (words_[0] & o.words_[0]) != 0 || (words_[1] & o.words_[1]) != 0;
    }
    [[nodiscard]] bool subset_of(const Scope& o) const {
        return (words_[0] & ~o.words_[0]) == 0 && (words_[1] & ~o.words_[1]) == 0;
    }

    Scope& operator|=(const Scope& o) {
        words_[0] |= o.words_[0];
        words_[1] |= o.words_[1];
        return *this;
    }
    Scope& operator&=(const Scope& o) {
        words_[0] &= o.words_[0];
        words_[1] &= o.words_[1];
        return *this;
    }
    Scope& operator-=(const Scope& o) {
        words_[0] &= ~o.words_[0];
        words_[1] &= ~o.words_[1];
        return *this;
    }
    friend Scope operator|(Scope a, const Scope& b) { return a |= b; }
    friend Scope operator&(Scope a, const Scope& b) { return a &= b; }
    friend Scope operator-(Scope a, const Scope& b) { return a -= b; }
    friend bool operator==(const Scope&, const Scope&) = default;
    friend auto operator<=>(const Scope&, const Scope&) = default;

    [[nodiscard]] std::vector<std::size_t> members() const {
        std::vector<std::size_t> out;
        out.reserve(size());
        for (std::size_t w = 0; w < 2; ++w) {
            std::uint64_t bits = words_[w];
            while (bits != 0) {
                out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
                bits &= bits - 1;
            }
        }
        return out;
    }

    [[nodiscard]] std::string to_string() const {
        std::string s = "{";
        bool first = true;
        for (auto v : members()) {
            if (!first) s += ",";
            s += std::to_string(v);
            first = false;
        }
        return s + "}";
    }

private:
    std::array<std::uint64_t, 2> words_{};
};

}  // namespace symc
