#include <doctest.h>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"
#include "support/uq_fixtures.hpp"
#include "symc/data_io.hpp"
#include "symc/error.hpp"
#include "symc/uq.hpp"

using namespace symc;
using namespace symc::testing;

namespace {

Circuit single_leaf(double a0, double a1) {
    Circuit c(1);
    c.add_leaf(0, DirichletLeaf{a0, a1});
    c.finalize();
    return c;
}

const std::vector<std::uint8_t> kOne{1};

// Brute-force moments of p_C(x) over sampled leaf parameters, evaluated with
// the test-side linear recursion.
std::pair<double, double> mc_moments(const Circuit& c, const std::vector<int>& x, std::size_t draws,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Circuit s = c;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        for (NodeId id : c.leaf_nodes()) {
            const auto& d = std::get<DirichletLeaf>(c.node(id).leaf);
            std::gamma_distribution<double> g1(d.alpha1), g0(d.alpha0);
            const double a = g1(rng), b = g0(rng);
            s.set_leaf(id, Bernoulli{a / (a + b)});
        }
        const double p = naive_prob(s, x);
        s1 += p;
        s2 += p * p;
    }
    const double n = static_cast<double>(draws);
    return {s1 / n, (s2 - s1 * s1 / n) / (n - 1.0)};
}

}  // namespace

TEST_CASE("struct_variance: closed forms and errors") {
    const std::vector<double> same{0.2, 0.2, 0.2};
    CHECK(struct_variance(same).variance == 0.0);
    const std::vector<double> two{0.3, 0.1};
    CHECK(struct_variance(two).mean == doctest::Approx(0.2));
    CHECK(struct_variance(two).variance == doctest::Approx(0.02));  // (a-b)^2 / 2
    const std::vector<double> one{0.5};
    CHECK_THROWS_AS(struct_variance(one), UsageError);

    const Circuit c = random_circuit(4, 3);
    const std::vector<Circuit> ens{c, c};
    const std::vector<std::uint8_t> x{1, 0, 1, 1};
    CHECK(struct_variance(ens, x).variance == 0.0);
    CHECK(struct_variance(ens, x).mean == doctest::Approx(naive_prob(c, {1, 0, 1, 1})).epsilon(1e-12));
}

TEST_CASE("struct_variance: Bessel correction is unbiased under resampling") {
    std::mt19937_64 rng(11);
    std::gamma_distribution<double> g(2.0, 0.01);
    std::vector<double> pool(500);
    for (auto& p : pool) p = g(rng);
    double mu = 0.0, var = 0.0;
    for (double p : pool) mu += p / 500.0;
    for (double p : pool) var += (p - mu) * (p - mu) / 500.0;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t reps = 40000;
    double s = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        std::vector<double> k(4);
        for (auto& e : k) e = pool[pick(rng)];
        const double v = struct_variance(k).variance;
        s += v;
        ss += v * v;
    }
    const double mean = s / reps, se = std::sqrt((ss / reps - mean * mean) / reps);
    CHECK(std::abs(mean - var) < 3.0 * se);
}

TEST_CASE("clamp_pinv: identity, clamped diagonal, asymmetric input") {
    const auto id = clamp_pinv(Eigen::MatrixXd::Identity(3, 3));
    CHECK_FALSE(id.clamped);
    CHECK((id.inverse - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::MatrixXd d(2, 2);
    d << 1.0, 0.0, 0.0, 1e-9;
    const auto r = clamp_pinv(d, 1e-4);
    CHECK(r.clamped);
    CHECK(r.inverse(0, 0) == doctest::Approx(1.0));
    CHECK(r.inverse(1, 1) == doctest::Approx(1e4));
    CHECK(std::abs(r.inverse(0, 1)) < 1e-12);

    Eigen::MatrixXd a(2, 2);
    a << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(clamp_pinv(a), UsageError);
}

TEST_CASE("chart scores match finite differences of log p") {
    const Circuit c = random_circuit(5, 17);
    const SimplexChart chart = simplex_chart(c);
    REQUIRE(chart.dim > 0);
    const std::vector<int> xi{1, 0, 0, 1, 1};
    const std::vector<std::uint8_t> x(xi.begin(), xi.end());
    const auto s = chart_score(c, chart, x);
    const auto g = chart_gradient(c, chart, x);
    const double p = naive_prob(c, xi);
    for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
        const NodeId id = chart.nodes[i];
        const std::size_t k = c.node(id).children.size();
        for (std::size_t j = 0; j + 1 < k; ++j) {
            // Moving phi_j shifts mass against the last weight.
            const double h = 1e-6;
            Circuit up = c, dn = c;
            up.weights(id)[j] += h;
            up.weights(id)[k - 1] -= h;
            dn.weights(id)[j] -= h;
            dn.weights(id)[k - 1] += h;
            const double fd = (naive_prob(up, xi) - naive_prob(dn, xi)) / (2 * h);
            CHECK(g[chart.offset[i] + j] == doctest::Approx(fd).epsilon(1e-6));
            CHECK(s[chart.offset[i] + j] == doctest::Approx(fd / p).epsilon(1e-6));
        }
    }
}

TEST_CASE("fisher_blocks: two-component mixture matches the analytic Fisher") {
    const double p1 = 0.2, p2 = 0.7;
    Circuit c(1);
    c.add_sum({c.add_leaf(0, Bernoulli{p1}), c.add_leaf(0, Bernoulli{p2})}, {0.5, 0.5});
    c.finalize();
    const Dataset data = sample_from_circuit(c, 50000, 7);
    const FisherBlocks fb = fisher_blocks(c, data);
    REQUIRE(fb.blocks.size() == 1);
    REQUIRE(fb.blocks[0].fisher.rows() == 1);
    double analytic = 0.0;
    for (int x = 0; x < 2; ++x) {
        const double a = x ? p1 : 1 - p1, b = x ? p2 : 1 - p2;
        analytic += (a - b) * (a - b) / (0.5 * a + 0.5 * b);
    }
    CHECK(std::abs(fb.blocks[0].fisher(0, 0) / analytic - 1.0) < 0.05);
    CHECK(fb.blocks[0].condition == 1.0);
}

TEST_CASE("fisher_blocks: blocks are symmetric PSD; sparse weights give large condition numbers") {
    Circuit c(2);
    std::vector<NodeId> comps;
    const double ps[3][2] = {{0.1, 0.2}, {0.8, 0.3}, {0.78, 0.33}};
    for (const auto& p : ps)
        comps.push_back(c.add_product({c.add_leaf(0, Bernoulli{p[0]}), c.add_leaf(1, Bernoulli{p[1]})}));
    c.set_root(c.add_sum(comps, {0.6, 0.3, 0.1}));
    c.finalize();
    const Dataset data = sample_from_circuit(c, 5000, 3);
    const FisherBlocks fb = fisher_blocks(c, data);
    REQUIRE(fb.blocks.size() == 1);
    const auto& J = fb.blocks[0].fisher;
    CHECK((J - J.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(J).eigenvalues().minCoeff() >= -1e-12);
    CHECK(fb.blocks[0].condition >= 100.0);
}

TEST_CASE("empirical Fisher: product-separated nodes are uncorrelated, a shared child is not") {
    const Circuit tree = product_of_mixtures(3, 5);
    const FisherEstimate ft = empirical_fisher(tree, sample_from_circuit(tree, 20000, 1));
    std::size_t checked = 0;
    for (std::size_t a = 0; a < ft.chart.nodes.size(); ++a)
        for (std::size_t b = a + 1; b < ft.chart.nodes.size(); ++b)
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < 2; ++j) {
                    const auto r = static_cast<Eigen::Index>(ft.chart.offset[a] + i);
                    const auto q = static_cast<Eigen::Index>(ft.chart.offset[b] + j);
                    CHECK(std::abs(ft.mean(r, q)) < 3.0 * ft.std_error(r, q));
                    ++checked;
                }
    CHECK(checked == 12);

    const Circuit dag = shared_child_circuit();
    REQUIRE_FALSE(dag.is_tree());
    const FisherEstimate fd = empirical_fisher(dag, sample_from_circuit(dag, 20000, 2));
    double worst = 0.0;
    for (std::size_t a = 0; a < fd.chart.nodes.size(); ++a)
        for (std::size_t b = a + 1; b < fd.chart.nodes.size(); ++b) {
            const auto r = static_cast<Eigen::Index>(fd.chart.offset[a]);
            const auto q = static_cast<Eigen::Index>(fd.chart.offset[b]);
            worst = std::max(worst, std::abs(fd.mean(r, q)) / fd.std_error(r, q));
        }
    CHECK(worst > 5.0);
}

TEST_CASE("delta_param_variance: zero gradient, nonnegativity, 1/N scaling") {
    Circuit flat(1);
    flat.add_sum({flat.add_leaf(0, Bernoulli{0.3}), flat.add_leaf(0, Bernoulli{0.3})}, {0.4, 0.6});
    flat.finalize();
    const Dataset fd = sample_from_circuit(flat, 200, 1);
    CHECK(delta_param_variance(flat, fisher_blocks(flat, fd), kOne, fd.rows()) == 0.0);

    const Circuit c = product_of_mixtures(2, 9);
    const Dataset big = sample_from_circuit(c, 8000, 4);
    std::vector<std::size_t> half(4000);
    std::iota(half.begin(), half.end(), std::size_t{0});
    const Dataset small = big.select(half);
    const std::vector<std::uint8_t> x{1, 0, 0, 1};
    const double vn = delta_param_variance(c, fisher_blocks(c, small), x, small.rows());
    const double v2n = delta_param_variance(c, fisher_blocks(c, big), x, big.rows());
    CHECK(vn > 0.0);
    CHECK(vn / v2n == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("leaf_moments: Beta leaf and product closed forms") {
    const auto one = leaf_moments(single_leaf(1, 1), kOne);
    CHECK(one.mean == doctest::Approx(0.5));
    CHECK(one.variance == doctest::Approx(1.0 / 12.0));

    Circuit c(2);
    c.add_product({c.add_leaf(0, DirichletLeaf{1, 1}), c.add_leaf(1, DirichletLeaf{1, 1})});
    c.finalize();
    const std::vector<std::uint8_t> x{1, 0};
    const auto m = leaf_moments(c, x);
    CHECK(m.mean == doctest::Approx(0.25));
    CHECK(m.variance == doctest::Approx(7.0 / 144.0));

    Circuit b(1);
    b.add_leaf(0, Bernoulli{0.3});
    b.finalize();
    CHECK(leaf_moments(b, kOne).variance == 0.0);

    CHECK_THROWS_AS(leaf_moments(shared_child_circuit(), std::vector<std::uint8_t>{1, 1}), UsageError);
}

TEST_CASE("leaf_moments: exact against brute-force Monte Carlo on small circuits") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const Circuit c = random_dirichlet_circuit(4, seed, 2.0, 10.0, 4);
        REQUIRE(c.size() <= 20);
        const std::vector<int> xi{1, 0, 1, 0};
        const std::vector<std::uint8_t> x(xi.begin(), xi.end());
        const auto exact = leaf_moments(c, x);
        const auto [mean, var] = mc_moments(c, xi, 40000, seed);
        CHECK(exact.mean == doctest::Approx(mean).epsilon(0.02));
        CHECK(exact.variance == doctest::Approx(var).epsilon(0.06));
        // The mean is the point-estimate density.
        CHECK(exact.mean == doctest::Approx(std::exp(evaluate_log(c, x))).epsilon(1e-10));
    }
}

TEST_CASE("leaf_moments_mc agrees with the analytic moments") {
    const Circuit c = random_dirichlet_circuit(8, 21);
    const Dataset pts = random_dataset(8, 10, 3);
    const auto mc = leaf_moments_mc(c, pts, 4000, 9);
    for (std::size_t r = 0; r < pts.rows(); ++r) {
        const auto a = leaf_moments(c, pts.row(r));
        CHECK(mc[r].mean == doctest::Approx(a.mean).epsilon(0.02));
        CHECK(mc[r].variance == doctest::Approx(a.variance).epsilon(0.12));
    }
}

TEST_CASE("total_uq: additivity, degenerate layers, errors") {
    Circuit c = product_of_mixtures(2, 3);
    const Dataset train = sample_from_circuit(c, 2000, 5);
    const Dataset pts = random_dataset(4, 6, 8);
    // Near point-mass leaves on identical members: only the parameter layer remains.
    for (NodeId id : c.leaf_nodes()) {
        const double p = leaf_probability(c.node(id).leaf);
        c.set_leaf(id, DirichletLeaf{1e14 * (1 - p), 1e14 * p});
    }
    const std::vector<Circuit> same{c, c, c};
    const UqReport rep = total_uq(same, train, pts);
    for (const auto& p : rep.points) {
        CHECK(p.v_struct == 0.0);
        CHECK(p.v_leaf < 1e-6 * p.v_param);
        CHECK(p.v_total == p.v_struct + p.v_param + p.v_leaf);
    }
    CHECK(rep.frac_param > 0.999);

    Circuit other = product_of_mixtures(2, 4);
    make_dirichlet_leaves(other, 3.0, 3.0);
    const std::vector<Circuit> mixed{c, other};
    const UqReport r2 = total_uq(mixed, train, pts);
    for (const auto& p : r2.points) {
        CHECK(p.v_struct >= 0.0);
        CHECK(p.v_param >= 0.0);
        CHECK(p.v_leaf > 0.0);
        CHECK(p.v_total == p.v_struct + p.v_param + p.v_leaf);
    }
    CHECK(r2.frac_struct + r2.frac_param + r2.frac_leaf == doctest::Approx(1.0));

    const std::vector<Circuit> lone{c};
    CHECK_THROWS_AS(total_uq(lone, train, pts), UsageError);
}
