#include "symc/uq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "symc/error.hpp"
#include "symc/parallel.hpp"

namespace symc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kRowBlock = 256;

// Chart scores d log p / dphi for one row, written into out (size chart.dim).
void chart_score_into(const Circuit& c, const SimplexChart& chart, const FlowCache& cache, std::span<double> out) {
    for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
        const NodeId id = chart.nodes[i];
        const Node& node = c.node(id);
        const std::size_t k = node.children.size();
        const auto s = [&](std::size_t j) {
            const double le = cache.log_derivative[id] + cache.log_value[node.children[j]] - cache.log_prob;
            return le == kNegInf ? 0.0 : std::exp(le);
        };
        const double last = s(k - 1);
        for (std::size_t j = 0; j + 1 < k; ++j) out[chart.offset[i] + j] = s(j) - last;
    }
}

std::size_t block_count(std::size_t n) { return (n + kRowBlock - 1) / kRowBlock; }

}  // namespace

StructVariance struct_variance(std::span<const double> densities) {
    const std::size_t k = densities.size();
    if (k < 2) throw UsageError("structural variance needs at least two ensemble members");
    // Shifted by the first member so that identical densities give exactly zero.
    const double ref = densities[0];
    double s1 = 0.0, s2 = 0.0;
    for (double p : densities) {
        s1 += p - ref;
        s2 += (p - ref) * (p - ref);
    }
    const double n = static_cast<double>(k);
    StructVariance out;
    out.mean = ref + s1 / n;
    out.variance = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0));
    return out;
}

StructVariance struct_variance(std::span<const Circuit> ensemble, Row x) {
    std::vector<double> p;
    p.reserve(ensemble.size());
    for (const auto& c : ensemble) p.push_back(std::exp(evaluate_log(c, x)));
    return struct_variance(p);
}

SimplexChart simplex_chart(const Circuit& circuit) {
    circuit.require_finalized();
    SimplexChart chart;
    for (NodeId id : circuit.sum_nodes()) {
        const std::size_t k = circuit.node(id).children.size();
        if (k < 2) continue;
        chart.nodes.push_back(id);
        chart.offset.push_back(chart.dim);
        chart.dim += k - 1;
    }
    return chart;
}

std::vector<double> chart_gradient(const Circuit& circuit, const SimplexChart& chart, Row x) {
    const std::vector<double> g = grad_sum_weights(circuit, x);
    std::vector<double> out(chart.dim);
    for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
        const NodeId id = chart.nodes[i];
        const std::size_t off = circuit.sum_offset(id);
        const std::size_t k = circuit.node(id).children.size();
        for (std::size_t j = 0; j + 1 < k; ++j) out[chart.offset[i] + j] = g[off + j] - g[off + k - 1];
    }
    return out;
}

std::vector<double> chart_score(const Circuit& circuit, const SimplexChart& chart, Row x) {
    const FlowCache cache = top_down_flows(circuit, x);
    std::vector<double> out(chart.dim);
    chart_score_into(circuit, chart, cache, out);
    return out;
}

PinvResult clamp_pinv(const Eigen::MatrixXd& block, double eps_min) {
    if (block.rows() != block.cols()) throw UsageError("clamp_pinv: block is not square");
    if (!(eps_min > 0.0)) throw UsageError("clamp_pinv: eps_min must be positive");
    const double scale = std::max(1.0, block.cwiseAbs().maxCoeff());
    if ((block - block.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw UsageError("clamp_pinv: block is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
    Eigen::VectorXd ev = es.eigenvalues();
    PinvResult out;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < eps_min) {
            ev(i) = eps_min;
            out.clamped = true;
        }
    }
    out.inverse = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    return out;
}

FisherBlocks fisher_blocks(const Circuit& circuit, const Dataset& data, double eps_min) {
    if (data.rows() == 0) throw DataError("fisher_blocks: empty dataset");
    FisherBlocks out;
    out.chart = simplex_chart(circuit);
    out.rows = data.rows();
    const auto& chart = out.chart;
    const std::size_t nb = block_count(data.rows());
    // Per row-block partial sums, reduced in block order.
    std::vector<std::vector<Eigen::MatrixXd>> partial(nb);
    parallel_for(nb, [&](std::size_t b) {
        auto& acc = partial[b];
        for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(circuit.node(chart.nodes[i]).children.size() - 1);
            acc.push_back(Eigen::MatrixXd::Zero(k, k));
        }
        FlowCache cache;
        std::vector<double> s(chart.dim);
        const std::size_t hi = std::min(data.rows(), (b + 1) * kRowBlock);
        for (std::size_t r = b * kRowBlock; r < hi; ++r) {
            top_down_flows(circuit, data.row(r), cache);
            chart_score_into(circuit, chart, cache, s);
            for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
                const auto k = acc[i].rows();
                Eigen::Map<const Eigen::VectorXd> v(s.data() + chart.offset[i], k);
                acc[i].noalias() += v * v.transpose();
            }
        }
    });
    for (std::size_t i = 0; i < chart.nodes.size(); ++i) {
        FisherBlock fb;
        fb.node = chart.nodes[i];
        fb.fisher = partial[0][i];
        for (std::size_t b = 1; b < nb; ++b) fb.fisher += partial[b][i];
        fb.fisher /= static_cast<double>(data.rows());
        fb.fisher = 0.5 * (fb.fisher + fb.fisher.transpose());
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fb.fisher).eigenvalues();
        fb.condition = ev(0) > 0.0 ? ev(ev.size() - 1) / ev(0) : std::numeric_limits<double>::infinity();
        PinvResult inv = clamp_pinv(fb.fisher, eps_min);
        fb.inverse = std::move(inv.inverse);
        fb.clamped = inv.clamped;
        out.blocks.push_back(std::move(fb));
    }
    return out;
}

FisherEstimate empirical_fisher(const Circuit& circuit, const Dataset& data) {
    if (data.rows() < 2) throw DataError("empirical_fisher: need at least two rows");
    FisherEstimate out;
    out.chart = simplex_chart(circuit);
    out.rows = data.rows();
    const auto P = static_cast<Eigen::Index>(out.chart.dim);
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(P, P), s2 = Eigen::MatrixXd::Zero(P, P);
    FlowCache cache;
    Eigen::VectorXd s(P);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        top_down_flows(circuit, data.row(r), cache);
        chart_score_into(circuit, out.chart, cache, {s.data(), out.chart.dim});
        const Eigen::MatrixXd o = s * s.transpose();
        s1 += o;
        s2 += o.cwiseProduct(o);
    }
    const double n = static_cast<double>(data.rows());
    out.mean = s1 / n;
    const Eigen::MatrixXd var = ((s2 / n - out.mean.cwiseProduct(out.mean)) * (n / (n - 1.0))).cwiseMax(0.0);
    out.std_error = (var / n).cwiseSqrt();
    return out;
}

double delta_param_variance(const Circuit& circuit, const FisherBlocks& fisher, Row x, std::size_t n) {
    if (n == 0) throw UsageError("delta_param_variance: N must be positive");
    const std::vector<double> g = chart_gradient(circuit, fisher.chart, x);
    double v = 0.0;
    for (std::size_t i = 0; i < fisher.blocks.size(); ++i) {
        const auto& inv = fisher.blocks[i].inverse;
        Eigen::Map<const Eigen::VectorXd> gi(g.data() + fisher.chart.offset[i], inv.rows());
        v += gi.dot(inv * gi);
    }
    return std::max(0.0, v) / static_cast<double>(n);
}

LeafMoments leaf_moments(const Circuit& circuit, Row x) {
    circuit.require_finalized();
    if (!circuit.is_tree()) throw UsageError("leaf_moments: circuit has shared nodes; moment propagation needs a tree");
    if (x.size() != circuit.num_vars()) throw DataError("leaf_moments: row width does not match the circuit");
    std::vector<double> m1(circuit.size()), m2(circuit.size());
    for (NodeId id : circuit.order()) {
        const Node& n = circuit.node(id);
        switch (n.kind) {
            case NodeKind::Leaf: {
                double mean = 1.0, var = 0.0;
                const int v = x[n.var];
                if (const auto* d = std::get_if<DirichletLeaf>(&n.leaf)) {
                    mean = v != 0 ? d->mean() : 1.0 - d->mean();
                    var = d->variance();
                } else {
                    const double p = std::get<Bernoulli>(n.leaf).p;
                    mean = v != 0 ? p : 1.0 - p;
                }
                m1[id] = mean;
                m2[id] = var + mean * mean;
                break;
            }
            case NodeKind::Product: {
                double a = 1.0, b = 1.0;
                for (NodeId ch : n.children) {
                    a *= m1[ch];
                    b *= m2[ch];
                }
                m1[id] = a;
                m2[id] = b;
                break;
            }
            case NodeKind::Sum: {
                double mean = 0.0, var = 0.0;
                for (std::size_t j = 0; j < n.children.size(); ++j) {
                    const NodeId ch = n.children[j];
                    const double w = n.weights[j];
                    mean += w * m1[ch];
                    var += w * w * std::max(0.0, m2[ch] - m1[ch] * m1[ch]);
                }
                m1[id] = mean;
                m2[id] = var + mean * mean;
                break;
            }
        }
    }
    const NodeId r = circuit.root();
    return {m1[r], std::max(0.0, m2[r] - m1[r] * m1[r])};
}

std::vector<LeafMoments> leaf_moments_mc(const Circuit& circuit, const Dataset& points, std::size_t draws,
                                         std::uint64_t seed) {
    circuit.require_finalized();
    if (draws < 2) throw UsageError("leaf_moments_mc: need at least two draws");
    const auto& leaves = circuit.leaf_nodes();
    // Draws are generated up front so the result does not depend on threading.
    std::mt19937_64 rng(seed);
    std::vector<double> theta(draws * leaves.size());
    for (std::size_t s = 0; s < draws; ++s)
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            const auto& leaf = circuit.node(leaves[i]).leaf;
            double p = leaf_probability(leaf);
            if (const auto* d = std::get_if<DirichletLeaf>(&leaf)) {
                std::gamma_distribution<double> g1(d->alpha1, 1.0), g0(d->alpha0, 1.0);
                const double a = g1(rng), b = g0(rng);
                p = a / (a + b);
            }
            theta[s * leaves.size() + i] = p;
        }
    std::vector<LeafMoments> out(points.rows());
    const std::size_t nb = block_count(draws);
    std::vector<std::vector<double>> s1(nb, std::vector<double>(points.rows())), s2 = s1;
    parallel_for(nb, [&](std::size_t b) {
        Circuit c = circuit;
        const std::size_t hi = std::min(draws, (b + 1) * kRowBlock);
        for (std::size_t s = b * kRowBlock; s < hi; ++s) {
            for (std::size_t i = 0; i < leaves.size(); ++i) c.set_leaf(leaves[i], Bernoulli{theta[s * leaves.size() + i]});
            for (std::size_t r = 0; r < points.rows(); ++r) {
                const double p = std::exp(evaluate_log(c, points.row(r)));
                s1[b][r] += p;
                s2[b][r] += p * p;
            }
        }
    });
    const double n = static_cast<double>(draws);
    for (std::size_t r = 0; r < points.rows(); ++r) {
        double a = 0.0, q = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            a += s1[b][r];
            q += s2[b][r];
        }
        out[r].mean = a / n;
        out[r].variance = std::max(0.0, (q - a * a / n) / (n - 1.0));
    }
    return out;
}

UqReport total_uq(std::span<const Circuit> ensemble, const Dataset& train, const Dataset& points, double eps_min) {
    const std::size_t K = ensemble.size();
    if (K < 2) throw UsageError("total_uq: ensemble needs at least two circuits");
    if (points.rows() == 0) throw DataError("total_uq: no test points");
    for (const auto& c : ensemble) {
        c.require_finalized();
        if (c.num_vars() != points.num_vars || c.num_vars() != train.num_vars)
            throw DataError("total_uq: data width does not match the ensemble");
    }
    std::vector<FisherBlocks> fisher;
    fisher.reserve(K);
    for (const auto& c : ensemble) fisher.push_back(fisher_blocks(c, train, eps_min));

    UqReport rep;
    rep.ensemble_size = K;
    for (const auto& f : fisher)
        for (const auto& b : f.blocks) {
            rep.clamped_blocks += b.clamped ? 1 : 0;
            rep.max_condition = std::max(rep.max_condition, b.condition);
        }
    rep.points.resize(points.rows());
    parallel_for(points.rows(), [&](std::size_t r) {
        const Row x = points.row(r);
        UqPoint& pt = rep.points[r];
        pt.index = r;
        std::vector<double> p(K);
        for (std::size_t k = 0; k < K; ++k) {
            p[k] = std::exp(evaluate_log(ensemble[k], x));
            pt.v_param += delta_param_variance(ensemble[k], fisher[k], x, train.rows());
            pt.v_leaf += leaf_moments(ensemble[k], x).variance;
        }
        const StructVariance sv = struct_variance(p);
        pt.mean_density = sv.mean;
        pt.v_struct = sv.variance;
        pt.v_param /= static_cast<double>(K);
        pt.v_leaf /= static_cast<double>(K);
        pt.v_total = pt.v_struct + pt.v_param + pt.v_leaf;
    });
    const double n = static_cast<double>(points.rows());
    for (const auto& pt : rep.points) {
        rep.mean_struct += pt.v_struct / n;
        rep.mean_param += pt.v_param / n;
        rep.mean_leaf += pt.v_leaf / n;
    }
    rep.mean_total = rep.mean_struct + rep.mean_param + rep.mean_leaf;
    if (rep.mean_total > 0.0) {
        rep.frac_struct = rep.mean_struct / rep.mean_total;
        rep.frac_param = rep.mean_param / rep.mean_total;
        rep.frac_leaf = rep.mean_leaf / rep.mean_total;
    }
    return rep;
}

nlohmann::json to_json(const UqReport& r) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.points) {
        const double t = p.v_total > 0.0 ? p.v_total : 1.0;
        pts.push_back({{"index", p.index},
                       {"mean_density", p.mean_density},
                       {"v_struct", p.v_struct},
                       {"v_param", p.v_param},
                       {"v_leaf", p.v_leaf},
                       {"v_total", p.v_total},
                       {"frac_struct", p.v_struct / t},
                       {"frac_param", p.v_param / t},
                       {"frac_leaf", p.v_leaf / t}});
    }
    return {{"ensemble_size", r.ensemble_size},
            {"mean_struct", r.mean_struct},
            {"mean_param", r.mean_param},
            {"mean_leaf", r.mean_leaf},
            {"mean_total", r.mean_total},
            {"frac_struct", r.frac_struct},
            {"frac_param", r.frac_param},
            {"frac_leaf", r.frac_leaf},
            {"clamped_blocks", r.clamped_blocks},
            {"max_condition", r.max_condition},
            {"points", pts}};
}

}  // namespace symc
