#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "symc/circuit.hpp"
#include "symc/error.hpp"

namespace symc {

namespace {

using Col = Eigen::ArrayXd;
using Block = Eigen::ArrayXXd;  // rows x nodes, one column per node

constexpr std::size_t kBlockRows = 256;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) elementwise, -inf safe.
void log_add_into(Eigen::Ref<Col> acc, const Col& b) {
    const Col m = acc.max(b);
    const Col d = -(acc - b).abs();
    Col out = m + d.exp().log1p();
    out = (acc == kNegInf).select(b, out);
    out = (b == kNegInf).select(acc, out);
    acc = out;
}

struct Pass {
    const Circuit& c;
    const Dataset& data;
    std::vector<double> log_w;  // by sum_offset
    std::vector<double> leaf_lp1, leaf_lp0;

    Pass(const Circuit& circuit, const Dataset& d) : c(circuit), data(d) {
        c.require_finalized();
        if (data.num_vars != c.num_vars()) throw UsageError("dataset width differs from circuit");
        log_w.assign(c.num_sum_params(), kNegInf);
        for (NodeId n : c.sum_nodes()) {
            const auto w = c.weights(n);
            for (std::size_t j = 0; j < w.size(); ++j)
                log_w[c.sum_offset(n) + j] = w[j] > 0.0 ? std::log(w[j]) : kNegInf;
        }
        leaf_lp1.assign(c.size(), 0.0);
        leaf_lp0.assign(c.size(), 0.0);
        for (NodeId n : c.leaf_nodes()) {
            const double p = leaf_probability(c.node(n).leaf);
            leaf_lp1[n] = std::log(p);
            leaf_lp0[n] = std::log1p(-p);
        }
    }

    // Fills lv (b x size) for rows idx[0..b).
    void forward(const std::size_t* idx, std::size_t b, Block& lv) const {
        lv.resize(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c.size()));
        for (NodeId id : c.order()) {
            const Node& node = c.node(id);
            auto col = lv.col(id);
            switch (node.kind) {
                case NodeKind::Leaf:
                    for (std::size_t r = 0; r < b; ++r)
                        col(static_cast<Eigen::Index>(r)) =
                            data.row(idx[r])[node.var] ? leaf_lp1[id] : leaf_lp0[id];
                    break;
                case NodeKind::Product:
                    col.setZero();
                    for (NodeId ch : node.children) col += lv.col(ch);
                    break;
                case NodeKind::Sum: {
                    const std::size_t off = c.sum_offset(id);
                    Col m = Col::Constant(static_cast<Eigen::Index>(b), kNegInf);
                    for (std::size_t j = 0; j < node.children.size(); ++j)
                        if (log_w[off + j] != kNegInf) m = m.max(lv.col(node.children[j]));
                    Col acc = Col::Zero(static_cast<Eigen::Index>(b));
                    const Col safe_m = (m == kNegInf).select(Col::Zero(m.size()), m);
                    for (std::size_t j = 0; j < node.children.size(); ++j)
                        if (log_w[off + j] != kNegInf)
                            acc += (lv.col(node.children[j]) - safe_m + log_w[off + j]).exp();
                    col = (m == kNegInf).select(Col::Constant(m.size(), kNegInf), safe_m + acc.log());
                    break;
                }
            }
        }
    }
};

template <class F>
void for_blocks(const Dataset& data, std::span<const std::size_t> rows, F&& f) {
    std::vector<std::size_t> idx;
    const std::size_t n = rows.empty() ? data.rows() : rows.size();
    for (std::size_t start = 0; start < n; start += kBlockRows) {
        const std::size_t b = std::min(kBlockRows, n - start);
        idx.resize(b);
        for (std::size_t r = 0; r < b; ++r) idx[r] = rows.empty() ? start + r : rows[start + r];
        f(idx.data(), b);
    }
}

}  // namespace

double batch_loglik_sum(const Circuit& circuit, const Dataset& data, std::span<const std::size_t> rows) {
    const Pass pass(circuit, data);
    Block lv;
    double total = 0.0;
    for_blocks(data, rows, [&](const std::size_t* idx, std::size_t b) {
        pass.forward(idx, b, lv);
        total += lv.col(circuit.root()).sum();
    });
    return total;
}

BatchFlowStats batch_flow_statistics(const Circuit& circuit, const Dataset& data, std::span<const std::size_t> rows) {
    const Pass pass(circuit, data);
    BatchFlowStats out;
    out.edge_flow.assign(circuit.num_sum_params(), 0.0);
    out.node_flow.assign(circuit.size(), 0.0);
    out.node_flow_x1.assign(circuit.size(), 0.0);
    const NodeId root = circuit.root();
    const auto& order = circuit.order();
    Block lv, ld;
    for_blocks(data, rows, [&](const std::size_t* idx, std::size_t b) {
        const auto B = static_cast<Eigen::Index>(b);
        pass.forward(idx, b, lv);
        out.rows += b;
        const Col total = lv.col(root);
        out.loglik_sum += total.sum();
        const Col norm = (total == kNegInf).select(Col::Zero(B), total);
        const Eigen::Array<bool, Eigen::Dynamic, 1> dead = total == kNegInf;

        ld.setConstant(B, static_cast<Eigen::Index>(circuit.size()), kNegInf);
        ld.col(root).setZero();
        // A node with a single parent receives exactly one contribution.
        const auto accumulate = [&](NodeId ch, const Col& contrib) {
            if (circuit.parents()[ch].size() == 1) {
                ld.col(ch) = contrib;
            } else {
                log_add_into(ld.col(ch), contrib);
            }
        };
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const NodeId id = *it;
            const Node& node = circuit.node(id);
            if (node.kind == NodeKind::Sum) {
                const std::size_t off = circuit.sum_offset(id);
                for (std::size_t j = 0; j < node.children.size(); ++j) {
                    if (pass.log_w[off + j] == kNegInf) continue;
                    const NodeId ch = node.children[j];
                    const Col contrib = ld.col(id) + pass.log_w[off + j];
                    accumulate(ch, contrib);
                    const Col le = contrib + lv.col(ch) - norm;
                    out.edge_flow[off + j] += dead.select(Col::Zero(B), le.exp()).sum();
                }
            } else if (node.kind == NodeKind::Product) {
                // sum of the siblings' log values via prefix/suffix sums
                const std::size_t k = node.children.size();
                std::vector<Col> prefix(k + 1, Col::Zero(B));
                for (std::size_t j = 0; j < k; ++j) prefix[j + 1] = prefix[j] + lv.col(node.children[j]);
                Col suffix = Col::Zero(B);
                for (std::size_t j = k; j-- > 0;) {
                    const NodeId ch = node.children[j];
                    const Col contrib = ld.col(id) + prefix[j] + suffix;
                    accumulate(ch, contrib);
                    suffix += lv.col(ch);
                }
            }
            if (id == root) {
                out.node_flow[id] += static_cast<double>(b);
                if (node.kind == NodeKind::Leaf)
                    for (std::size_t r = 0; r < b; ++r) out.node_flow_x1[id] += data.row(idx[r])[node.var];
                continue;
            }
            const Col f = dead.select(Col::Zero(B), (ld.col(id) + lv.col(id) - norm).exp());
            const Col fs = f.isNaN().select(Col::Zero(B), f);
            out.node_flow[id] += fs.sum();
            if (node.kind == NodeKind::Leaf)
                for (std::size_t r = 0; r < b; ++r)
                    if (data.row(idx[r])[node.var]) out.node_flow_x1[id] += fs(static_cast<Eigen::Index>(r));
        }
    });
    return out;
}

}  // namespace symc
