#pragma once

#include <Eigen/Dense>

#include <vector>

#include "gpbp/cavity.hpp"
#include "gpbp/obs_graph.hpp"
#include "gpbp/solver.hpp"

namespace gpbp {

/// Node summary kept by the memory-friendly solvers.
struct ApproxNode {
    Eigen::MatrixXd precision_inv;
    Eigen::VectorXd mean;
    double alpha = 0.0;
};

struct ApproxCavity {
    Eigen::VectorXd mean;        // v~_{j->mu}
    Eigen::MatrixXd inv;         // C~^{-1}_{j->mu}
    double alpha = 0.0;          // alpha~_{j->mu}
    bool skipped = false;        // denominator guard tripped; node values used as-is
};

/// First-order cavity correction of node `opposite` (j) for the edge to node
/// `self` (i) with observation y; the node's own mean and alpha stand in for
/// the cavity message u_{i->mu}, alpha_{i->mu}.
ApproxCavity approx_cavity(const ApproxNode& opposite, const ApproxNode& self, double y, bool use_alpha);
ApproxCavity approx_cavity(const NodeState& opposite, const NodeState& self, double y, bool use_alpha);

/// approxGPBP / approxALS-MP state: two generations of node summaries per
/// side, and no per-edge vectors or matrices.
class ApproxSolver {
public:
    static constexpr double kDenominatorGuard = 1e-10;

    ApproxSolver(const ObservationGraph& graph, const SolverConfig& config);

    /// Node means from the planted factors; inverses start at zero.
    void init_planted(const GroundTruth& truth);
    void init_means(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V);

    void half_sweep(Side side);
    double sweep();

    int sweeps_done() const { return sweeps_done_; }
    /// Cumulative count of edges whose correction was skipped.
    std::size_t skipped_corrections() const { return skipped_; }

    Eigen::MatrixXd U() const;
    Eigen::MatrixXd V() const;
    const ApproxNode& row_node(int i) const { return rows_cur_[i]; }
    const ApproxNode& col_node(int j) const { return cols_cur_[j]; }

    const SolverConfig& config() const { return config_; }

    /// Bytes held in solver buffers (node summaries only).
    std::size_t state_bytes() const;

private:
    void update_side(bool rows_side);

    const ObservationGraph& graph_;
    SolverConfig config_;
    int rank_;
    std::vector<ApproxNode> rows_cur_, rows_prev_, rows_next_;
    std::vector<ApproxNode> cols_cur_, cols_prev_, cols_next_;
    int sweeps_done_ = 0;
    std::size_t skipped_ = 0;
};

SolveResult approx_run(const ObservationGraph& graph, const SolverConfig& config, const Monitor& monitor = {});
SolveResult approx_run(ApproxSolver& solver, const Monitor& monitor = {});

}  // namespace gpbp
