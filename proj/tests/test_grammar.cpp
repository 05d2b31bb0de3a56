#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "support/fixtures.hpp"
#include "support/grammar_oracle.hpp"
#include "symc/grammar.hpp"

using namespace symc;
using namespace symc::testing;

namespace {

GrammarConfig cfg(std::size_t d, std::size_t depth_cap = 8, std::size_t node_cap = kDefaultMaxNodes) {
    GrammarConfig c;
    c.num_vars = d;
    c.depth_cap = depth_cap;
    c.node_cap = node_cap;
    return c;
}

std::set<std::string> names(const std::vector<TokenId>& ids, const Vocabulary& v) {
    std::set<std::string> out;
    for (auto id : ids) out.insert(v.name(id));
    return out;
}

std::vector<TokenId> ids_of(const std::string& text, const Vocabulary& v) { return parse_sequence_text(text, v); }

std::vector<TokenId> sample_uniform(const GrammarConfig& c, std::mt19937_64& rng, std::size_t max_len = SIZE_MAX) {
    GrammarState st(c);
    std::vector<TokenId> out;
    while (!st.complete() && out.size() < max_len) {
        const auto valid = st.valid_tokens();
        REQUIRE(!valid.empty());
        const TokenId id = valid[rng() % valid.size()];
        st.advance(id);
        out.push_back(id);
    }
    return out;
}

std::string join(const std::vector<std::string>& toks) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) s += (i ? " " : "") + toks[i];
    return s;
}

// Counts completions from a state, memoized on the state key; also checks that
// no reachable incomplete state has an empty mask.
struct LanguageCounter {
    std::unordered_map<std::string, unsigned __int128> memo;
    std::size_t dead_ends = 0;

    unsigned __int128 operator()(const GrammarState& st) {
        if (st.complete()) return 1;
        const std::string k = st.key();
        if (auto it = memo.find(k); it != memo.end()) return it->second;
        const auto valid = st.valid_tokens();
        if (valid.empty()) ++dead_ends;
        unsigned __int128 n = 0;
        for (auto id : valid) {
            GrammarState next = st;
            next.advance(id);
            n += (*this)(next);
        }
        memo.emplace(k, n);
        return n;
    }
};

}  // namespace

TEST_CASE("vocabulary: layout, size and names") {
    const Vocabulary v(cfg(5));
    CHECK(v.size() == 2 + 4 + 5 + 2);
    CHECK(v.name(Vocabulary::kSum2) == "S2");
    CHECK(v.name(Vocabulary::kSum3) == "S3");
    CHECK(v.name(v.factorize(5)) == "F5");
    CHECK(v.name(v.leaf(4)) == "L4");
    for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) CHECK(v.parse_name(v.name(id)) == id);
    CHECK_THROWS_AS((void)v.parse_name("F6"), DataError);
    CHECK_THROWS_AS((void)v.parse_name("L5"), DataError);
    CHECK_THROWS_AS((void)v.parse_name("S4"), DataError);
    CHECK_THROWS_AS((void)v.parse_name("Q1"), DataError);

    GrammarConfig wide = cfg(20);
    CHECK(Vocabulary(wide).factorize_arity() == 8);
    CHECK(Vocabulary(wide).size() == 4 + 7 + 20);
}

TEST_CASE("valid_tokens: fresh states") {
    {
        GrammarState st(cfg(1));
        CHECK(names(st.valid_tokens(), st.vocab()) == std::set<std::string>{"L0"});
    }
    {
        GrammarState st(cfg(3));
        CHECK(names(st.valid_tokens(), st.vocab()) == std::set<std::string>{"S2", "S3", "F2", "F3"});
    }
}

TEST_CASE("valid_tokens: smoothness inside a later sum child") {
    const GrammarConfig c = cfg(3);
    GrammarState st(c);
    for (auto id : ids_of("F2 S2 F2 L0 L1", st.vocab())) st.advance(id);
    // second child of the sum, scope committed to {0,1}
    const SlotConstraint slot = st.current_slot();
    CHECK(slot.fixed());
    CHECK(slot.allowed == (Scope::single(0) | Scope::single(1)));
    const auto valid = names(st.valid_tokens(), st.vocab());
    CHECK(valid.count("L2") == 0);
    CHECK(valid.count("L0") == 0);
    CHECK(valid.count("F2") == 1);
    CHECK_THROWS_AS(st.advance(st.vocab().leaf(2)), GrammarError);
}

TEST_CASE("advance: product children draw from the unclaimed pool") {
    const GrammarConfig c = cfg(2);
    GrammarState st(c);
    st.advance(st.vocab().factorize(2));
    SlotConstraint slot = st.current_slot();
    CHECK(slot.allowed == Scope::full(2));
    CHECK(slot.lo == 1);
    CHECK(slot.hi == 1);
    st.advance(st.vocab().leaf(0));
    slot = st.current_slot();
    CHECK(slot.allowed == Scope::single(1));
    CHECK(!st.complete());
    st.advance(st.vocab().leaf(1));
    CHECK(st.complete());
    CHECK_THROWS_AS((void)st.valid_mask(), UsageError);
    CHECK_THROWS_AS(st.advance(st.vocab().leaf(1)), GrammarError);
}

TEST_CASE("advance: rejection names the constraint and position") {
    const GrammarConfig c = cfg(2);
    const Vocabulary v(c);
    try {
        (void)make_sequence(ids_of("F2 L0 L0", v), c);
        FAIL("expected rejection");
    } catch (const GrammarError& e) {
        CHECK(e.position() == 2);
        CHECK(std::string(e.what()).find("not in allowed scope") != std::string::npos);
    }
    try {
        (void)make_sequence(ids_of("F2 L0", v), c);
        FAIL("expected rejection");
    } catch (const GrammarError& e) {
        CHECK(std::string(e.what()).find("incomplete") != std::string::npos);
    }
    CHECK_THROWS_AS(make_sequence(ids_of("L0", v), c), GrammarError);
    CHECK_THROWS_AS(make_sequence(std::vector<TokenId>{Vocabulary::kBos}, c), GrammarError);
}

TEST_CASE("grammar: exhaustive agreement with recursive construction, d=3 depth cap 3") {
    const GrammarConfig c = cfg(3, 3);
    const Vocabulary v(c);
    const LanguageOracle oracle{3, 3};
    std::set<std::string> expected;
    for (const auto& s : oracle.subtrees({0, 1, 2}, 0)) expected.insert(join(s));

    const auto lang = enumerate_language(c);
    std::set<std::string> got;
    std::multiset<std::string> canon;
    for (const auto& seq : lang) {
        got.insert(format_sequence(seq, v));
        const Circuit circ = parse(seq, c);
        CHECK(validate(circ).ok());
        canon.insert(canonical_form(circ));
        CHECK(serialize(circ, c) == seq);
    }
    CHECK(got.size() == lang.size());
    CHECK(got == expected);
    CHECK(static_cast<std::uint64_t>(oracle.count(3, 0)) == lang.size());

    std::multiset<std::string> expected_canon;
    for (const auto& text : expected) expected_canon.insert(canonical_form(parse(ids_of(text, v), c)));
    CHECK(canon == expected_canon);
}

TEST_CASE("valid_tokens: every mask equals the set of continuations, d=3 depth cap 3") {
    const GrammarConfig c = cfg(3, 3);
    const Vocabulary v(c);
    const LanguageOracle oracle{3, 3};
    std::map<std::string, std::set<std::string>> next;  // prefix -> continuation tokens
    for (const auto& s : oracle.subtrees({0, 1, 2}, 0)) {
        std::vector<std::string> prefix;
        for (const auto& tok : s) {
            next[join(prefix)].insert(tok);
            prefix.push_back(tok);
        }
    }
    std::size_t checked = 0;
    for (const auto& [prefix, cont] : next) {
        GrammarState st(c);
        for (auto id : ids_of(prefix, v)) st.advance(id);
        CHECK(names(st.valid_tokens(), v) == cont);
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("grammar: no dead ends and exact language size, depth cap 4") {
    for (std::size_t d : {2, 3, 4, 5}) {
        const GrammarConfig c = cfg(d, 4);
        LanguageCounter counter;
        const auto n = counter(GrammarState(c));
        const LanguageOracle oracle{4, std::min<std::size_t>(d, 8)};
        CAPTURE(d);
        CHECK(counter.dead_ends == 0);
        CHECK(n == oracle.count(d, 0));
        CHECK(n > 0);
    }
}

TEST_CASE("grammar: node cap masking is exact") {
    const LanguageOracle oracle{3, 3};
    const auto all = oracle.subtrees({0, 1, 2}, 0);
    for (std::size_t cap : {4, 5, 6, 7, 9, 12}) {
        const GrammarConfig c = cfg(3, 3, cap);
        const Vocabulary v(c);
        std::set<std::string> expected;
        for (const auto& s : all)
            if (s.size() <= cap) expected.insert(join(s));
        std::set<std::string> got;
        for (const auto& seq : enumerate_language(c)) got.insert(format_sequence(seq, v));
        CAPTURE(cap);
        CHECK(got == expected);
    }
    CHECK_THROWS_AS(GrammarState(cfg(3, 3, 3)), UsageError);
    CHECK_THROWS_AS(GrammarState(cfg(10, 2)), UsageError);

    // Deep, wide problem with a tight cap: sampling never stalls or overshoots.
    std::mt19937_64 rng(11);
    const GrammarConfig tight = cfg(16, 5, 30);
    for (int i = 0; i < 300; ++i) {
        const auto toks = sample_uniform(tight, rng);
        CHECK(toks.size() <= 30);
        CHECK(validate(parse(toks, tight)).ok());
    }
}

TEST_CASE("parse: small examples") {
    {
        const GrammarConfig c = cfg(1);
        const Circuit circ = parse(ids_of("L0", Vocabulary(c)), c);
        CHECK(circ.size() == 1);
        CHECK(circ.node(circ.root()).kind == NodeKind::Leaf);
    }
    {
        const GrammarConfig c = cfg(2);
        const std::vector<double> p{0.2, 0.9};
        const Circuit circ = parse(ids_of("F2 L0 L1", Vocabulary(c)), c, p);
        CHECK(circ.node(circ.root()).kind == NodeKind::Product);
        const std::vector<std::uint8_t> x{1, 0};
        CHECK(std::exp(evaluate_log(circ, x)) == doctest::Approx(0.2 * 0.1).epsilon(1e-12));
    }
    {
        const GrammarConfig c = cfg(2);
        const Circuit circ = parse(ids_of("S3 F2 L0 L1 F2 L1 L0 F2 L0 L1", Vocabulary(c)), c);
        const auto w = circ.weights(circ.root());
        REQUIRE(w.size() == 3);
        CHECK(w[0] == doctest::Approx(1.0 / 3));
        CHECK(validate(circ).ok());
    }
}

TEST_CASE("parse: 10,000 sampled sequences are valid circuits") {
    std::mt19937_64 rng(2024);
    const GrammarConfig c = cfg(16, 6, 200);
    std::size_t ok = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto toks = sample_uniform(c, rng);
        const Circuit circ = parse(toks, c);
        ok += validate(circ).ok() ? 1 : 0;
    }
    CHECK(ok == 10000);
}

TEST_CASE("serialize: round trips") {
    const GrammarConfig c1 = cfg(1);
    Circuit leaf(1);
    leaf.add_leaf(0);
    leaf.finalize();
    CHECK(format_sequence(serialize(leaf, c1), Vocabulary(c1)) == "L0");

    const GrammarConfig c2 = cfg(2);
    Circuit mix(2);
    const auto a = mix.add_product({mix.add_leaf(0), mix.add_leaf(1)});
    const auto b = mix.add_product({mix.add_leaf(1), mix.add_leaf(0)});
    mix.add_sum({a, b}, {0.3, 0.7});
    mix.finalize();
    const TokenSequence seq = serialize(mix, c2);
    CHECK(format_sequence(seq, Vocabulary(c2)) == "S2 F2 L0 L1 F2 L1 L0");
    CHECK(seq.decision_indices == std::vector<std::size_t>{0});

    RandomCircuitOptions opt;
    opt.single_var_sums = false;
    opt.max_sum_arity = 6;
    opt.max_product_arity = 6;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const Circuit raw = random_circuit(10, s, opt);
        const Circuit circ = arity_decompose(raw);
        const GrammarConfig c = cfg(10, 12);
        const TokenSequence enc = serialize(circ, c);
        const Circuit back = parse(enc, c);
        CHECK(canonical_form(back) == canonical_form(circ));
        CHECK(serialize(back, c) == enc);
    }
}

TEST_CASE("serialize: inexpressible circuits carry the offending node") {
    Circuit c(1);
    std::vector<NodeId> kids;
    for (int i = 0; i < 5; ++i) kids.push_back(c.add_leaf(0));
    const NodeId s = c.add_sum(kids, {0.2, 0.2, 0.2, 0.2, 0.2});
    c.finalize();
    try {
        (void)serialize(c, cfg(1));
        FAIL("expected rejection");
    } catch (const GrammarError& e) {
        CHECK(e.position() == s);
        CHECK(std::string(e.what()).find("sum arity 5") != std::string::npos);
    }
}

TEST_CASE("arity_decompose: arity-4 example and density preservation") {
    Circuit c(2);
    std::vector<NodeId> kids;
    const double ps[4][2] = {{0.1, 0.8}, {0.6, 0.3}, {0.5, 0.5}, {0.9, 0.2}};
    for (auto& p : ps) kids.push_back(c.add_product({c.add_leaf(0, Bernoulli{p[0]}), c.add_leaf(1, Bernoulli{p[1]})}));
    c.add_sum(kids, {0.4, 0.3, 0.2, 0.1});
    c.finalize();
    const Circuit d = arity_decompose(c);
    CHECK(validate(d).ok());
    const Node& top = d.node(d.root());
    REQUIRE(top.kind == NodeKind::Sum);
    REQUIRE(top.children.size() == 2);
    CHECK(top.weights[0] == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(top.weights[1] == doctest::Approx(0.3).epsilon(1e-14));
    const Node& left = d.node(top.children[0]);
    const Node& right = d.node(top.children[1]);
    CHECK(left.weights[0] == doctest::Approx(4.0 / 7).epsilon(1e-14));
    CHECK(left.weights[1] == doctest::Approx(3.0 / 7).epsilon(1e-14));
    CHECK(right.weights[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(right.weights[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    for (std::uint64_t m = 0; m < 4; ++m) {
        const auto x = bits_of(m, 2);
        CHECK(std::abs(evaluate_log(d, x) - evaluate_log(c, x)) < 1e-10);
    }

    std::mt19937_64 rng(5);
    for (std::size_t k : {2, 3, 5, 7, 11}) {
        Circuit w(3);
        std::vector<NodeId> ch;
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (std::size_t j = 0; j < k; ++j)
            ch.push_back(w.add_product({w.add_leaf(0, Bernoulli{u(rng)}), w.add_leaf(1, Bernoulli{u(rng)}),
                                        w.add_leaf(2, Bernoulli{u(rng)})}));
        w.add_sum(ch, random_simplex(k, rng));
        w.finalize();
        const Circuit dw = arity_decompose(w);
        CAPTURE(k);
        CHECK(validate(dw).ok());
        if (k <= 3) CHECK(dw.size() == w.size());
        for (const auto& n : dw.nodes())
            if (n.kind == NodeKind::Sum) CHECK(n.children.size() <= 3);
        for (std::uint64_t m = 0; m < 8; ++m) {
            const auto x = bits_of(m, 3);
            CHECK(std::abs(evaluate_log(dw, x) - evaluate_log(w, x)) < 1e-10);
        }
    }

    Circuit wide(20);
    std::vector<NodeId> leaves;
    for (std::size_t v = 0; v < 20; ++v) leaves.push_back(wide.add_leaf(v, Bernoulli{0.1 + 0.04 * v}));
    wide.add_product(leaves);
    wide.finalize();
    const Circuit dwide = arity_decompose(wide, 8);
    CHECK(validate(dwide).ok());
    for (const auto& n : dwide.nodes())
        if (n.kind == NodeKind::Product) CHECK(n.children.size() <= 8);
    const auto data = random_dataset(20, 50, 9);
    CHECK(avg_loglik(dwide, data) == doctest::Approx(avg_loglik(wide, data)).epsilon(1e-12));
}

TEST_CASE("tree_relations: examples") {
    const GrammarConfig c = cfg(2);
    const auto seq = make_sequence(ids_of("F2 L0 L1", Vocabulary(c)), c);
    const auto r = tree_relations(seq);
    CHECK(r.at(0, 1) == Relation::Parent);
    CHECK(r.at(1, 0) == Relation::Child);
    CHECK(r.at(1, 2) == Relation::Sibling);
    CHECK(r.at(2, 1) == Relation::Sibling);
    CHECK(r.depths == std::vector<std::uint32_t>{0, 1, 1});

    const auto one = tree_relations(make_sequence(ids_of("F2", Vocabulary(c)), c, false));
    CHECK(one.n == 1);
    CHECK(one.depths == std::vector<std::uint32_t>{0});
}

TEST_CASE("tree_relations: random prefixes match recursive descent") {
    const GrammarConfig c = cfg(24);
    const Vocabulary v(c);
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const auto toks = sample_uniform(c, rng, 50);
        const auto seq = make_sequence(toks, c, false);
        const std::size_t n = toks.size();

        std::vector<int> par(n, -1);
        std::vector<std::uint32_t> dep(n, 0);
        std::size_t pos = 0;
        std::function<void(int, std::uint32_t)> descend = [&](int parent, std::uint32_t depth) {
            if (pos >= n) return;
            const std::size_t me = pos++;
            par[me] = parent;
            dep[me] = depth;
            const Token t = v.token(toks[me]);
            const std::size_t arity = t.kind == TokenKind::Leaf ? 0 : t.arg;
            for (std::size_t j = 0; j < arity; ++j) descend(static_cast<int>(me), depth + 1);
        };
        descend(-1, 0);
        REQUIRE(pos == n);

        const auto is_ancestor = [&](std::size_t a, std::size_t b) {
            for (int p = par[b]; p >= 0; p = par[static_cast<std::size_t>(p)])
                if (static_cast<std::size_t>(p) == a) return true;
            return false;
        };
        const auto r = tree_relations(seq);
        CHECK(r.depths == dep);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                Relation want = Relation::Other;
                if (i != j) {
                    if (par[j] == static_cast<int>(i)) want = Relation::Parent;
                    else if (par[i] == static_cast<int>(j)) want = Relation::Child;
                    else if (par[i] >= 0 && par[i] == par[j]) want = Relation::Sibling;
                    else if (is_ancestor(i, j)) want = Relation::Ancestor;
                }
                if (r.at(i, j) != want) {
                    CAPTURE(i);
                    CAPTURE(j);
                    CHECK(r.at(i, j) == want);
                }
            }
    }
}

TEST_CASE("count_structural_decisions") {
    const GrammarConfig c = cfg(3);
    const Vocabulary v(c);
    const auto leafy = count_structural_decisions(make_sequence(ids_of("F3 L2 L0 L1", v), c), v);
    CHECK(leafy.tokens == 4);
    CHECK(leafy.decisions == 0);
    const auto seq = make_sequence(ids_of("S2 F2 L0 S3 F2 L1 L2 F2 L2 L1 F2 L1 L2 F3 L0 L1 L2", v), c);
    const auto dc = count_structural_decisions(seq, v);
    CHECK(dc.tokens == seq.size());
    CHECK(dc.decisions == 2);
    CHECK(dc.indices == std::vector<std::size_t>{0, 3});
    CHECK(dc.indices == seq.decision_indices);
}

TEST_CASE("corpus text format") {
    const GrammarConfig c = cfg(4, 5);
    const Vocabulary v(c);
    std::mt19937_64 rng(3);
    std::vector<TokenSequence> corpus;
    for (int i = 0; i < 25; ++i) corpus.push_back(make_sequence(sample_uniform(c, rng), c));
    std::stringstream ss;
    write_corpus(ss, corpus, v);
    const auto back = read_corpus(ss, c);
    CHECK(back == corpus);

    std::stringstream bad("F4 L0 L1 L2 L3\n\nF2 L0 L0\n");
    try {
        (void)read_corpus(bad, c);
        FAIL("expected rejection");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}
