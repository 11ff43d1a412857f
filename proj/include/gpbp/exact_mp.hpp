#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "gpbp/cavity.hpp"
#include "gpbp/obs_graph.hpp"
#include "gpbp/solver.hpp"

namespace gpbp {

/// Edge-message solver for GPBP and ALS-MP.
///
/// Each directed edge keeps three generations of (cavity vector, alpha): the
/// current and previous sweeps feed the damped contributions, the oldest one
/// lets node inverses be maintained by signed Sherman-Morrison updates between
/// periodic refactorizations. Node states hold one R x R precision and inverse
/// per row/column; nothing matrix-valued is stored per edge.
///
/// A sweep is U-side then V-side (the V update sees the fresh U messages);
/// nodes within a side are independent given the opposite side's messages.
class ExactSolver {
public:
    /// Random initialization: i.i.d. N(0, init_scale^2) cavity vectors, alpha 0.
    ExactSolver(const ObservationGraph& graph, const SolverConfig& config);

    /// Set every message out of node i (j) to the planted row u0_i (v0_j).
    void init_planted(const GroundTruth& truth);
    /// Explicit message initialization; matrices are R x |edges|, column e
    /// holding the message on edge e. All generations are set to these values.
    void init_messages(const Eigen::MatrixXd& u_messages, const Eigen::MatrixXd& v_messages);

    void half_sweep(Side side);
    /// Both half-sweeps; returns the max relative posterior-mean change.
    double sweep();

    int sweeps_done() const { return sweeps_done_; }
    std::size_t refactorizations() const { return refactorizations_; }

    Eigen::MatrixXd U() const;
    Eigen::MatrixXd V() const;

    /// Message on edge e leaving the row node (u_{i->mu}) or column node (v_{j->mu}).
    EdgeMessage u_message(std::size_t e) const;
    EdgeMessage v_message(std::size_t e) const;
    const NodeState& row_node(int i) const { return rows_[i]; }
    const NodeState& col_node(int j) const { return cols_[j]; }

    /// max over nodes of |precision * precision_inv - I|.
    double inverse_drift() const;

    const ObservationGraph& graph() const { return graph_; }
    const SolverConfig& config() const { return config_; }

private:
    struct Ring {
        std::array<Eigen::MatrixXd, 3> mean;  // R x |edges| per generation
        std::array<Eigen::VectorXd, 3> alpha;
        int head = 0;

        int cur() const { return head; }
        int prev() const { return (head + 2) % 3; }
        int oldest() const { return (head + 1) % 3; }
        void advance() { head = (head + 1) % 3; }
    };

    void update_side(bool rows_side);

    const ObservationGraph& graph_;
    SolverConfig config_;
    int rank_;
    Ring u_ring_;  // messages leaving row nodes
    Ring v_ring_;  // messages leaving column nodes
    std::vector<NodeState> rows_;
    std::vector<NodeState> cols_;
    std::vector<Eigen::VectorXd> row_mean_before_;
    std::vector<Eigen::VectorXd> col_mean_before_;
    bool rows_initialized_ = false;
    bool cols_initialized_ = false;
    int sweeps_done_ = 0;
    std::size_t refactorizations_ = 0;
    double last_change_ = 0.0;
};

/// Alternate sweeps until the max relative posterior-mean change drops below
/// conv_tol or max_sweeps is reached. Throws SolverDivergence on non-finite
/// values or entries above divergence_cap, SingularError on singular cavities.
SolveResult run(const ObservationGraph& graph, const SolverConfig& config, const Monitor& monitor = {});

/// Same, from a solver whose messages were already initialized.
SolveResult run(ExactSolver& solver, const Monitor& monitor = {});

}  // namespace gpbp
