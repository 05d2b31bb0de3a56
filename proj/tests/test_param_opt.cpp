#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support/fixtures.hpp"
#include "symc/data_io.hpp"
#include "symc/error.hpp"
#include "symc/param_opt.hpp"

using namespace symc;
using namespace symc::testing;

namespace {

double simplex_error(const Circuit& c) {
    double worst = 0.0;
    for (NodeId n : c.sum_nodes()) {
        const auto w = c.weights(n);
        double s = 0.0;
        for (double x : w) {
            if (x < 0.0) return INFINITY;
            s += x;
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

Circuit perturbed(Circuit c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (NodeId n : c.sum_nodes()) {
        const auto w = random_simplex(c.weights(n).size(), rng);
        std::copy(w.begin(), w.end(), c.weights(n).begin());
    }
    return c;
}

Dataset rows_of(std::size_t d, const std::vector<std::vector<std::uint8_t>>& rows) {
    Dataset out(d);
    for (const auto& r : rows) out.push_row(r);
    return out;
}

}  // namespace

TEST_CASE("anemone_step: mass moves toward the matching child") {
    Circuit c(1);
    const auto hi = c.add_leaf(0, Bernoulli{0.999});
    const auto lo = c.add_leaf(0, Bernoulli{0.001});
    const auto s = c.add_sum({hi, lo}, {0.5, 0.5});
    c.finalize();
    const Dataset ones = rows_of(1, {{1}, {1}, {1}, {1}});
    anemone_step(c, ones);
    CHECK(c.weights(s)[0] > 0.99);
    CHECK(simplex_error(c) < 1e-12);
}

TEST_CASE("anemone_step: symmetric fixed point") {
    Circuit c(2);
    const auto a = c.add_product({c.add_leaf(0, Bernoulli{0.8}), c.add_leaf(1, Bernoulli{0.8})});
    const auto b = c.add_product({c.add_leaf(0, Bernoulli{0.2}), c.add_leaf(1, Bernoulli{0.2})});
    const auto s = c.add_sum({a, b}, {0.5, 0.5});
    c.finalize();
    const Dataset all = rows_of(2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    for (int i = 0; i < 5; ++i) anemone_step(c, all);
    CHECK(c.weights(s)[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c.weights(s)[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("anemone_step: zero-flow nodes keep their weights") {
    Circuit c(2);
    const auto live = c.add_product({c.add_leaf(0, Bernoulli{0.5}), c.add_leaf(1, Bernoulli{0.5})});
    const auto d1 = c.add_product({c.add_leaf(0, Bernoulli{0.0}), c.add_leaf(1, Bernoulli{0.3})});
    const auto d2 = c.add_product({c.add_leaf(0, Bernoulli{0.0}), c.add_leaf(1, Bernoulli{0.6})});
    const auto dead = c.add_sum({d1, d2}, {0.3, 0.7});
    c.add_sum({live, dead}, {0.5, 0.5});
    c.finalize();
    const Dataset batch = rows_of(2, {{1, 0}, {1, 1}});
    anemone_step(c, batch);
    CHECK(c.weights(dead)[0] == 0.3);
    CHECK(c.weights(dead)[1] == 0.7);
}

TEST_CASE("anemone_step: full-batch EM is monotone and keeps the simplex") {
    for (std::uint64_t s = 0; s < 8; ++s) {
        const Circuit truth = random_circuit(7, 300 + s);
        const Dataset data = sample_from_circuit(truth, 800, s);
        Circuit c = perturbed(truth, 900 + s);
        double prev = avg_loglik(c, data);
        for (int step = 0; step < 50; ++step) {
            anemone_step(c, data, {}, step % 2 ? 1.0 : 0.5);
            const double ll = avg_loglik(c, data);
            CAPTURE(s);
            CAPTURE(step);
            CHECK(ll >= prev - 1e-10);
            CHECK(simplex_error(c) <= 1e-12);
            prev = ll;
        }
    }
}

TEST_CASE("leaf gradients: sign, finite differences, zero learning rate") {
    Circuit one(1);
    one.add_leaf(0, Bernoulli{0.3});
    one.finalize();
    const Dataset ones = rows_of(1, {{1}, {1}, {1}});
    LeafAdamState st = LeafAdamState::from_circuit(one);
    const double z0 = st.logit[0];
    adam_leaf_step(one, ones, st, AdamConfig{});
    CHECK(st.logit[0] > z0);
    CHECK(leaf_probability(one.node(0).leaf) > 0.3);

    for (std::uint64_t s = 0; s < 5; ++s) {
        const Circuit c = random_circuit(6, 70 + s);
        const Dataset data = random_dataset(6, 40, s);
        const auto g = leaf_logit_gradient(c, data);
        const auto& leaves = c.leaf_nodes();
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            const double p = leaf_probability(c.node(leaves[i]).leaf);
            const double z = std::log(p / (1.0 - p));
            const double h = 1e-5;
            Circuit up = c, down = c;
            up.set_leaf(leaves[i], Bernoulli{1.0 / (1.0 + std::exp(-(z + h)))});
            down.set_leaf(leaves[i], Bernoulli{1.0 / (1.0 + std::exp(-(z - h)))});
            const double fd = (avg_loglik(up, data) - avg_loglik(down, data)) / (2.0 * h);
            CAPTURE(s);
            CAPTURE(i);
            CHECK(std::abs(g[i] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
        }
    }

    Circuit c = random_circuit(5, 3);
    const Circuit before = c;
    LeafAdamState frozen = LeafAdamState::from_circuit(c);
    AdamConfig zero;
    zero.lr = 0.0;
    adam_leaf_step(c, random_dataset(5, 30, 4), frozen, zero);
    CHECK(canonical_form(c, true) == canonical_form(before, true));
}

TEST_CASE("hybrid_fit: recovers the generator on its own structure") {
    for (std::uint64_t s = 0; s < 3; ++s) {
        RandomCircuitOptions opt;
        opt.max_depth = 4;
        const Circuit truth = random_circuit(8, 500 + s, opt);
        const Dataset train = sample_from_circuit(truth, 8000, 10 + s);
        Circuit c = perturbed(truth, 600 + s);
        OptConfig cfg;
        cfg.anemone_steps = 300;
        cfg.adam.lr = 0.05;
        const FitResult fit = hybrid_fit(c, train, cfg);
        const double gen = avg_loglik(truth, train);
        CAPTURE(s);
        CHECK(fit.train_trace.size() == 300);
        CHECK(fit.final_loglik > gen - 0.05);
        CHECK(validate(c).ok());
    }
}

TEST_CASE("hybrid_fit: leaf-EM ablation degrades early training; runs are deterministic") {
    const Circuit truth = random_circuit(10, 77);
    const Dataset train = sample_from_circuit(truth, 4000, 1);
    OptConfig cfg;
    cfg.anemone_steps = 10;
    cfg.batch_size = 16;
    cfg.seed = 3;
    Circuit hybrid = perturbed(truth, 5);
    Circuit ablation = hybrid;
    const FitResult h = hybrid_fit(hybrid, train, cfg);
    OptConfig em = cfg;
    em.leaf_em = true;
    const FitResult a = hybrid_fit(ablation, train, em);
    double worst_h = INFINITY, worst_a = INFINITY;
    for (std::size_t i = 0; i < 5; ++i) {
        worst_h = std::min(worst_h, h.train_trace[i]);
        worst_a = std::min(worst_a, a.train_trace[i]);
    }
    CHECK(worst_a < worst_h);

    Circuit again = perturbed(truth, 5);
    const FitResult h2 = hybrid_fit(again, train, cfg);
    CHECK(h2.train_trace == h.train_trace);
    CHECK(canonical_form(again, true) == canonical_form(hybrid, true));
}

TEST_CASE("dirichlet_update: conjugate counts") {
    Circuit one(1);
    one.add_leaf(0, DirichletLeaf{1.0, 1.0});
    one.finalize();
    Dataset ones(1);
    for (int i = 0; i < 10; ++i) ones.push_row(std::vector<std::uint8_t>{1});
    dirichlet_update(one, ones, 0.5);
    const auto& d = std::get<DirichletLeaf>(one.node(0).leaf);
    CHECK(d.alpha1 == doctest::Approx(1.0 + 10 * 0.5));
    CHECK(d.alpha0 == 1.0);

    for (std::uint64_t s = 0; s < 5; ++s) {
        Circuit c = random_circuit(6, 40 + s);
        make_dirichlet_leaves(c, 1.0, 1.0);
        const Dataset batch = random_dataset(6, 25, s);
        const auto counts = dirichlet_update(c, batch, 1.0);
        for (const auto& n : counts) CHECK(n[0] + n[1] <= 25.0 + 1e-9);
        // flow over the leaves of one variable sums to one per row
        std::vector<double> per_var(6, 0.0);
        for (std::size_t i = 0; i < counts.size(); ++i)
            per_var[c.node(c.leaf_nodes()[i]).var] += counts[i][0] + counts[i][1];
        for (double t : per_var) CHECK(t == doctest::Approx(25.0).epsilon(1e-9));
    }

    Circuit bern = random_circuit(3, 1);
    CHECK_THROWS_AS(dirichlet_update(bern, random_dataset(3, 4, 1), 1.0), UsageError);
}

TEST_CASE("dirichlet_update: zero-flow leaf unchanged") {
    Circuit c(1);
    const auto a = c.add_leaf(0, DirichletLeaf{1e-9, 5.0});
    const auto b = c.add_leaf(0, DirichletLeaf{5.0, 1e-9});
    c.add_sum({a, b}, {0.5, 0.5});
    c.finalize();
    // leaf `b` has mean ~0: rows with x = 1 give it (numerically) no flow
    const Dataset ones = rows_of(1, {{1}, {1}});
    const auto counts = dirichlet_update(c, ones, 1.0);
    CHECK(counts[1][1] < 1e-9);
    CHECK(std::get<DirichletLeaf>(c.node(b).leaf).alpha0 == 5.0);
}
