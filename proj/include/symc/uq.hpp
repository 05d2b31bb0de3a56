#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "symc/circuit.hpp"
#include "symc/dataset.hpp"

namespace symc {

inline constexpr double kDefaultEigenFloor = 1e-4;

// ---- structural layer -------------------------------------------------------

struct StructVariance {
    double mean = 0.0;
    double variance = 0.0;  // 1/(K-1) normalised
};

// Throws UsageError when fewer than two densities are given.
StructVariance struct_variance(std::span<const double> densities);
StructVariance struct_variance(std::span<const Circuit> ensemble, Row x);

// ---- parameter layer --------------------------------------------------------
//
// Each sum node with k children is charted by its first k-1 weights, the last
// one being 1 - sum of the others. Chart coordinates of all sum nodes are laid
// out in sum_nodes() order; sum nodes with one child contribute none.

struct SimplexChart {
    std::vector<NodeId> nodes;        // sum nodes with at least two children
    std::vector<std::size_t> offset;  // first chart coordinate of nodes[i]
    std::size_t dim = 0;
};

SimplexChart simplex_chart(const Circuit& circuit);

// dp_C(x)/dphi in chart coordinates (linear domain).
std::vector<double> chart_gradient(const Circuit& circuit, const SimplexChart& chart, Row x);
// d log p_C(x)/dphi in chart coordinates.
std::vector<double> chart_score(const Circuit& circuit, const SimplexChart& chart, Row x);

struct PinvResult {
    Eigen::MatrixXd inverse;
    bool clamped = false;
};

// Eigenvalues below eps_min are raised to eps_min before inversion. Throws
// UsageError on a non-symmetric block.
PinvResult clamp_pinv(const Eigen::MatrixXd& block, double eps_min = kDefaultEigenFloor);

struct FisherBlock {
    NodeId node = 0;
    Eigen::MatrixXd fisher;   // (k-1) x (k-1)
    Eigen::MatrixXd inverse;  // clamped pseudo-inverse
    double condition = 0.0;   // max / min eigenvalue before clamping (inf if singular)
    bool clamped = false;
};

struct FisherBlocks {
    SimplexChart chart;
    std::vector<FisherBlock> blocks;  // parallel to chart.nodes
    std::size_t rows = 0;
};

// Empirical Fisher per sum node: mean over rows of score outer products.
FisherBlocks fisher_blocks(const Circuit& circuit, const Dataset& data, double eps_min = kDefaultEigenFloor);

// Full empirical Fisher over all chart coordinates with elementwise standard
// errors of the mean. Meant for small circuits.
struct FisherEstimate {
    SimplexChart chart;
    Eigen::MatrixXd mean;
    Eigen::MatrixXd std_error;
    std::size_t rows = 0;
};

FisherEstimate empirical_fisher(const Circuit& circuit, const Dataset& data);

// (1/N) sum over blocks of g_m^T J_m^+ g_m with g = chart_gradient.
double delta_param_variance(const Circuit& circuit, const FisherBlocks& fisher, Row x, std::size_t n);

// ---- leaf layer -------------------------------------------------------------

struct LeafMoments {
    double mean = 0.0;
    double variance = 0.0;
};

// Exact first and second moments of p_C(x) under independent Beta leaf
// posteriors, propagated in the linear domain. Bernoulli leaves count as point
// masses. Throws UsageError for circuits with shared nodes.
LeafMoments leaf_moments(const Circuit& circuit, Row x);

// Monte Carlo counterpart: draws every Dirichlet leaf parameter from its Beta
// posterior `draws` times and returns the sample moments of p_C(x) at each row.
std::vector<LeafMoments> leaf_moments_mc(const Circuit& circuit, const Dataset& points, std::size_t draws,
                                         std::uint64_t seed);

// ---- decomposition ----------------------------------------------------------

struct UqPoint {
    std::size_t index = 0;
    double mean_density = 0.0;
    double v_struct = 0.0;
    double v_param = 0.0;  // mean over the ensemble
    double v_leaf = 0.0;   // mean over the ensemble
    double v_total = 0.0;
};

struct UqReport {
    std::vector<UqPoint> points;
    double mean_struct = 0.0;
    double mean_param = 0.0;
    double mean_leaf = 0.0;
    double mean_total = 0.0;
    double frac_struct = 0.0;
    double frac_param = 0.0;
    double frac_leaf = 0.0;
    std::size_t ensemble_size = 0;
    std::size_t clamped_blocks = 0;
    double max_condition = 0.0;
};

// The Fisher of every member is estimated on `train`; V_param uses N = train.rows().
UqReport total_uq(std::span<const Circuit> ensemble, const Dataset& train, const Dataset& points,
                  double eps_min = kDefaultEigenFloor);

nlohmann::json to_json(const UqReport& report);

}  // namespace symc
