#include "gpbp/exact_mp.hpp"

#include <cmath>
#include <string>

#include "gpbp/parallel.hpp"
#include "gpbp/rng.hpp"

namespace gpbp {

namespace {

bool beyond(const Eigen::Ref<const Eigen::VectorXd>& x, double cap) {
    for (Eigen::Index r = 0; r < x.size(); ++r)
        if (!std::isfinite(x[r]) || std::abs(x[r]) > cap) return true;
    return false;
}

std::string node_label(bool rows_side, int a, int sweep) {
    return std::string(rows_side ? "row node " : "column node ") + std::to_string(a) + " at sweep " +
           std::to_string(sweep);
}

}  // namespace

ExactSolver::ExactSolver(const ObservationGraph& graph, const SolverConfig& config)
    : graph_(graph), config_(config), rank_(config.rank) {
    config_.validate();
    if (graph_.empty()) throw ConfigError("observation graph is empty");
    const auto n_edges = static_cast<Eigen::Index>(graph_.n_edges());
    for (auto* ring : {&u_ring_, &v_ring_})
        for (int g = 0; g < 3; ++g) {
            ring->mean[g] = Eigen::MatrixXd::Zero(rank_, n_edges);
            ring->alpha[g] = Eigen::VectorXd::Zero(n_edges);
        }
    auto blank = [&] {
        NodeState s;
        s.precision = Eigen::MatrixXd::Identity(rank_, rank_) * config_.lambda;
        s.precision_inv = config_.lambda > 0 ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(rank_, rank_) / config_.lambda)
                                             : Eigen::MatrixXd::Zero(rank_, rank_);
        s.field = Eigen::VectorXd::Zero(rank_);
        s.mean = Eigen::VectorXd::Zero(rank_);
        return s;
    };
    rows_.assign(graph_.n_rows(), blank());
    cols_.assign(graph_.n_cols(), blank());
    row_mean_before_.assign(graph_.n_rows(), Eigen::VectorXd::Zero(rank_));
    col_mean_before_.assign(graph_.n_cols(), Eigen::VectorXd::Zero(rank_));

    Eigen::MatrixXd u(rank_, n_edges), v(rank_, n_edges);
    Rng urng(derive_seed(config_.seed, {10}));
    Rng vrng(derive_seed(config_.seed, {11}));
    for (Eigen::Index e = 0; e < n_edges; ++e)
        for (int r = 0; r < rank_; ++r) u(r, e) = config_.init_scale * urng.normal();
    for (Eigen::Index e = 0; e < n_edges; ++e)
        for (int r = 0; r < rank_; ++r) v(r, e) = config_.init_scale * vrng.normal();
    init_messages(u, v);
}

void ExactSolver::init_planted(const GroundTruth& truth) {
    if (truth.rank() != rank_ || truth.U0.rows() != graph_.n_rows() || truth.V0.rows() != graph_.n_cols())
        throw ConfigError("ground truth dimensions do not match graph and rank");
    const auto n_edges = static_cast<Eigen::Index>(graph_.n_edges());
    Eigen::MatrixXd u(rank_, n_edges), v(rank_, n_edges);
    for (Eigen::Index e = 0; e < n_edges; ++e) {
        const auto& edge = graph_.edge(static_cast<std::size_t>(e));
        u.col(e) = truth.U0.row(edge.row).transpose();
        v.col(e) = truth.V0.row(edge.col).transpose();
    }
    init_messages(u, v);
}

void ExactSolver::init_messages(const Eigen::MatrixXd& u_messages, const Eigen::MatrixXd& v_messages) {
    const auto n_edges = static_cast<Eigen::Index>(graph_.n_edges());
    if (u_messages.rows() != rank_ || v_messages.rows() != rank_ || u_messages.cols() != n_edges ||
        v_messages.cols() != n_edges)
        throw ConfigError("message matrices must be R x |edges|");
    for (int g = 0; g < 3; ++g) {
        u_ring_.mean[g] = u_messages;
        v_ring_.mean[g] = v_messages;
        u_ring_.alpha[g].setZero();
        v_ring_.alpha[g].setZero();
    }
    u_ring_.head = v_ring_.head = 0;
    rows_initialized_ = cols_initialized_ = false;
    sweeps_done_ = 0;
}

void ExactSolver::half_sweep(Side side) { update_side(side == Side::update_U_messages); }

double ExactSolver::sweep() {
    for (int i = 0; i < graph_.n_rows(); ++i) row_mean_before_[i] = rows_[i].mean;
    for (int j = 0; j < graph_.n_cols(); ++j) col_mean_before_[j] = cols_[j].mean;
    update_side(true);
    update_side(false);
    ++sweeps_done_;
    double change = 0.0;
    for (int i = 0; i < graph_.n_rows(); ++i)
        if (graph_.row_degree(i) > 0) change = std::max(change, relative_change(rows_[i].mean, row_mean_before_[i]));
    for (int j = 0; j < graph_.n_cols(); ++j)
        if (graph_.col_degree(j) > 0) change = std::max(change, relative_change(cols_[j].mean, col_mean_before_[j]));
    last_change_ = change;
    return change;
}

void ExactSolver::update_side(bool rows_side) {
    Ring& in = rows_side ? v_ring_ : u_ring_;
    Ring& out = rows_side ? u_ring_ : v_ring_;
    auto& nodes = rows_side ? rows_ : cols_;
    bool& initialized = rows_side ? rows_initialized_ : cols_initialized_;
    const int n_nodes = rows_side ? graph_.n_rows() : graph_.n_cols();

    const double gamma = config_.damping;
    const double lambda = config_.lambda;
    const bool use_alpha = config_.use_alpha();
    const bool keep_alpha = use_alpha && !config_.drop_alpha;
    const double cap = config_.divergence_cap;
    const bool refresh =
        !initialized || config_.refresh_interval <= 1 || sweeps_done_ % config_.refresh_interval == 0;

    const int cur = in.cur(), prev = in.prev(), old = in.oldest();
    const int slot = out.oldest();
    const int workers = std::max(1, config_.threads);
    std::vector<std::size_t> refactor_count(static_cast<std::size_t>(workers), 0);

    parallel_for(static_cast<std::size_t>(n_nodes), workers, [&](std::size_t begin, std::size_t end, int worker) {
        CavityKernel kernel(rank_);
        Eigen::VectorXd scratch(rank_);
        const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(rank_, rank_);
        std::size_t refactors = 0;

        for (std::size_t na = begin; na < end; ++na) {
            const int a = static_cast<int>(na);
            const auto edges = rows_side ? graph_.row_edges(a) : graph_.col_edges(a);
            NodeState& s = nodes[a];
            if (edges.empty()) continue;

            s.precision = identity * lambda;
            s.field.setZero();
            for (auto e : edges) {
                const double y = graph_.edge(e).value;
                const auto vc = in.mean[cur].col(static_cast<Eigen::Index>(e));
                const auto vp = in.mean[prev].col(static_cast<Eigen::Index>(e));
                const double wc = (1.0 - gamma) * observation_scale(y, in.alpha[cur][e], use_alpha);
                const double wp = gamma * observation_scale(y, in.alpha[prev][e], use_alpha);
                s.precision.noalias() += wc * vc * vc.transpose();
                s.field.noalias() += (wc * y) * vc;
                if (wp != 0.0) {
                    s.precision.noalias() += wp * vp * vp.transpose();
                    s.field.noalias() += (wp * y) * vp;
                }
            }

            bool need_direct = refresh;
            if (!need_direct) {
                // Applied terms move from (1-g) c(prev) + g c(old) to (1-g) c(cur) + g c(prev).
                // Positive updates come first so every intermediate stays >= the
                // final precision.
                for (int pass = 0; pass < 2 && !need_direct; ++pass) {
                    for (auto e : edges) {
                        const double y = graph_.edge(e).value;
                        const auto ei = static_cast<Eigen::Index>(e);
                        const double w[3] = {(1.0 - gamma) * observation_scale(y, in.alpha[cur][e], use_alpha),
                                             (2.0 * gamma - 1.0) * observation_scale(y, in.alpha[prev][e], use_alpha),
                                             -gamma * observation_scale(y, in.alpha[old][e], use_alpha)};
                        const int gen[3] = {cur, prev, old};
                        for (int t = 0; t < 3; ++t) {
                            if (w[t] == 0.0 || (pass == 0) != (w[t] > 0.0)) continue;
                            if (!sherman_morrison_update(s.precision_inv, in.mean[gen[t]].col(ei), w[t], scratch)) {
                                need_direct = true;
                                break;
                            }
                        }
                        if (need_direct) break;
                    }
                }
            }
            if (need_direct) {
                Eigen::LLT<Eigen::MatrixXd> llt(s.precision);
                if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
                    throw SingularError("singular precision at " + node_label(rows_side, a, sweeps_done_));
                s.precision_inv = llt.solve(identity);
                s.precision_inv = 0.5 * (s.precision_inv + s.precision_inv.transpose()).eval();
                ++refactors;
            }
            s.mean.noalias() = s.precision_inv * s.field;
            s.alpha_node = uncertainty_alpha(s.mean, s.precision_inv);
            if (beyond(s.mean, cap))
                throw DivergenceError("divergence: posterior mean beyond cap at " +
                                          node_label(rows_side, a, sweeps_done_),
                                      sweeps_done_);

            for (auto e : edges) {
                const double y = graph_.edge(e).value;
                const auto ei = static_cast<Eigen::Index>(e);
                const CavityKernel::Term terms[2] = {
                    {in.mean[cur].col(ei).data(), (1.0 - gamma) * observation_scale(y, in.alpha[cur][e], use_alpha), y},
                    {in.mean[prev].col(ei).data(), gamma * observation_scale(y, in.alpha[prev][e], use_alpha), y}};
                double alpha = 0.0;
                try {
                    if (!kernel.compute(s.precision, s.precision_inv, s.field, terms, out.mean[slot].col(ei).data(),
                                        alpha))
                        ++refactors;
                } catch (const SingularError&) {
                    throw SingularError("singular cavity precision at " + node_label(rows_side, a, sweeps_done_));
                }
                out.alpha[slot][e] = keep_alpha ? alpha : 0.0;
                if (beyond(out.mean[slot].col(ei), cap) || !std::isfinite(alpha))
                    throw DivergenceError("divergence: cavity message beyond cap at " +
                                              node_label(rows_side, a, sweeps_done_),
                                          sweeps_done_);
            }
        }
        refactor_count[static_cast<std::size_t>(worker)] += refactors;
    });

    for (auto c : refactor_count) refactorizations_ += c;
    // Edges of degree-0 nodes do not exist, so every column of the slot was written.
    out.advance();
    initialized = true;
}

Eigen::MatrixXd ExactSolver::U() const {
    Eigen::MatrixXd U(graph_.n_rows(), rank_);
    for (int i = 0; i < graph_.n_rows(); ++i) U.row(i) = rows_[i].mean.transpose();
    return U;
}

Eigen::MatrixXd ExactSolver::V() const {
    Eigen::MatrixXd V(graph_.n_cols(), rank_);
    for (int j = 0; j < graph_.n_cols(); ++j) V.row(j) = cols_[j].mean.transpose();
    return V;
}

EdgeMessage ExactSolver::u_message(std::size_t e) const {
    const auto ei = static_cast<Eigen::Index>(e);
    return {u_ring_.mean[u_ring_.cur()].col(ei), u_ring_.alpha[u_ring_.cur()][ei],
            u_ring_.mean[u_ring_.prev()].col(ei), u_ring_.alpha[u_ring_.prev()][ei]};
}

EdgeMessage ExactSolver::v_message(std::size_t e) const {
    const auto ei = static_cast<Eigen::Index>(e);
    return {v_ring_.mean[v_ring_.cur()].col(ei), v_ring_.alpha[v_ring_.cur()][ei],
            v_ring_.mean[v_ring_.prev()].col(ei), v_ring_.alpha[v_ring_.prev()][ei]};
}

double ExactSolver::inverse_drift() const {
    double worst = 0.0;
    for (int i = 0; i < graph_.n_rows(); ++i)
        if (graph_.row_degree(i) > 0) worst = std::max(worst, inverse_residual(rows_[i].precision, rows_[i].precision_inv));
    for (int j = 0; j < graph_.n_cols(); ++j)
        if (graph_.col_degree(j) > 0) worst = std::max(worst, inverse_residual(cols_[j].precision, cols_[j].precision_inv));
    return worst;
}

SolveResult run(ExactSolver& solver, const Monitor& monitor) {
    const auto& cfg = solver.config();
    Trace trace;
    const bool per_sweep = monitor.truth || !monitor.test_edges.empty() || !monitor.validation_edges.empty() ||
                           static_cast<bool>(monitor.on_sweep);
    for (int t = 0; t < cfg.max_sweeps; ++t) {
        const auto refactors_before = solver.refactorizations();
        double change = 0.0;
        try {
            change = solver.sweep();
        } catch (const DivergenceError& e) {
            throw SolverDivergence(e.what(), e.sweep(), trace);
        }
        SweepRecord rec;
        rec.sweep = solver.sweeps_done();
        rec.max_change = change;
        rec.refactorizations = solver.refactorizations() - refactors_before;
        if (per_sweep) {
            const Eigen::MatrixXd U = solver.U(), V = solver.V();
            evaluate_sweep(monitor, U, V, rec);
            if (monitor.on_sweep) monitor.on_sweep(rec.sweep, U, V);
        }
        trace.records.push_back(rec);
        if (change < cfg.conv_tol) {
            trace.converged = true;
            break;
        }
    }
    return {solver.U(), solver.V(), std::move(trace)};
}

SolveResult run(const ObservationGraph& graph, const SolverConfig& config, const Monitor& monitor) {
    ExactSolver solver(graph, config);
    return run(solver, monitor);
}

}  // namespace gpbp
