#include "gpbp/approx_mp.hpp"

#include <cmath>
#include <string>

#include "gpbp/parallel.hpp"
#include "gpbp/rng.hpp"

namespace gpbp {

namespace {

/// Shared arithmetic of the cavity correction. Writes v~ into `out` and returns
/// alpha~ (0 when alpha terms are off); `skipped` reports the guard.
struct CorrectionScratch {
    Eigen::VectorXd g, pv;
    explicit CorrectionScratch(int rank) : g(rank), pv(rank) {}
};

double correct(const Eigen::MatrixXd& P, const Eigen::VectorXd& v, double alpha_opposite, const Eigen::VectorXd& u,
               double alpha_self, double y, bool use_alpha, Eigen::Ref<Eigen::VectorXd> out, bool& skipped,
               CorrectionScratch& s, Eigen::MatrixXd* inv_out) {
    s.g.noalias() = P * u;
    const double q = u.dot(s.g);
    const double a_self = use_alpha ? alpha_self : 0.0;
    const double den = 1.0 + y * y * a_self - q;
    if (!(den >= ApproxSolver::kDenominatorGuard)) {
        skipped = true;
        out = v;
        if (inv_out) *inv_out = P;
        return use_alpha ? alpha_opposite : 0.0;
    }
    skipped = false;
    const double residual = y - u.dot(v);
    out = v - (residual / den) * s.g;
    if (inv_out) {
        *inv_out = P;
        inv_out->noalias() += (1.0 / den) * s.g * s.g.transpose();
    }
    if (!use_alpha) return 0.0;
    const double n2 = out.squaredNorm();
    if (n2 == 0.0) return 0.0;
    s.pv.noalias() = P * out;
    const double gv = s.g.dot(out);
    return (out.dot(s.pv) + gv * gv / den) / (n2 * n2);
}

bool beyond(const Eigen::Ref<const Eigen::VectorXd>& x, double cap) {
    for (Eigen::Index r = 0; r < x.size(); ++r)
        if (!std::isfinite(x[r]) || std::abs(x[r]) > cap) return true;
    return false;
}

}  // namespace

ApproxCavity approx_cavity(const ApproxNode& opposite, const ApproxNode& self, double y, bool use_alpha) {
    const int rank = static_cast<int>(opposite.mean.size());
    CorrectionScratch scratch(rank);
    ApproxCavity out;
    out.mean.resize(rank);
    out.inv.resize(rank, rank);
    out.alpha = correct(opposite.precision_inv, opposite.mean, opposite.alpha, self.mean, self.alpha, y, use_alpha,
                        out.mean, out.skipped, scratch, &out.inv);
    return out;
}

ApproxCavity approx_cavity(const NodeState& opposite, const NodeState& self, double y, bool use_alpha) {
    return approx_cavity(ApproxNode{opposite.precision_inv, opposite.mean, opposite.alpha_node},
                         ApproxNode{self.precision_inv, self.mean, self.alpha_node}, y, use_alpha);
}

ApproxSolver::ApproxSolver(const ObservationGraph& graph, const SolverConfig& config)
    : graph_(graph), config_(config), rank_(config.rank) {
    config_.validate();
    if (graph_.empty()) throw ConfigError("observation graph is empty");
    const ApproxNode blank{Eigen::MatrixXd::Zero(rank_, rank_), Eigen::VectorXd::Zero(rank_), 0.0};
    rows_cur_.assign(graph_.n_rows(), blank);
    cols_cur_.assign(graph_.n_cols(), blank);
    rows_next_ = rows_cur_;
    cols_next_ = cols_cur_;

    Eigen::MatrixXd U(graph_.n_rows(), rank_), V(graph_.n_cols(), rank_);
    Rng urng(derive_seed(config_.seed, {20}));
    Rng vrng(derive_seed(config_.seed, {21}));
    for (int i = 0; i < graph_.n_rows(); ++i)
        for (int r = 0; r < rank_; ++r) U(i, r) = config_.init_scale * urng.normal();
    for (int j = 0; j < graph_.n_cols(); ++j)
        for (int r = 0; r < rank_; ++r) V(j, r) = config_.init_scale * vrng.normal();
    init_means(U, V);
}

void ApproxSolver::init_planted(const GroundTruth& truth) {
    if (truth.rank() != rank_) throw ConfigError("ground truth rank does not match config");
    init_means(truth.U0, truth.V0);
}

void ApproxSolver::init_means(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) {
    if (U.rows() != graph_.n_rows() || V.rows() != graph_.n_cols() || U.cols() != rank_ || V.cols() != rank_)
        throw ConfigError("initial means must be N x R and M x R");
    for (int i = 0; i < graph_.n_rows(); ++i) {
        rows_cur_[i].mean = U.row(i).transpose();
        rows_cur_[i].precision_inv.setZero();
        rows_cur_[i].alpha = 0.0;
    }
    for (int j = 0; j < graph_.n_cols(); ++j) {
        cols_cur_[j].mean = V.row(j).transpose();
        cols_cur_[j].precision_inv.setZero();
        cols_cur_[j].alpha = 0.0;
    }
    rows_prev_ = rows_cur_;
    cols_prev_ = cols_cur_;
    sweeps_done_ = 0;
    skipped_ = 0;
}

void ApproxSolver::half_sweep(Side side) { update_side(side == Side::update_U_messages); }

double ApproxSolver::sweep() {
    update_side(true);
    update_side(false);
    ++sweeps_done_;
    double change = 0.0;
    for (int i = 0; i < graph_.n_rows(); ++i)
        if (graph_.row_degree(i) > 0) change = std::max(change, relative_change(rows_cur_[i].mean, rows_prev_[i].mean));
    for (int j = 0; j < graph_.n_cols(); ++j)
        if (graph_.col_degree(j) > 0) change = std::max(change, relative_change(cols_cur_[j].mean, cols_prev_[j].mean));
    return change;
}

void ApproxSolver::update_side(bool rows_side) {
    // Reads: opposite side at (t, t-1), own side at (t, t-1). Writes own side t+1.
    const auto& opp_cur = rows_side ? cols_cur_ : rows_cur_;
    const auto& opp_prev = rows_side ? cols_prev_ : rows_prev_;
    auto& self_cur = rows_side ? rows_cur_ : cols_cur_;
    auto& self_prev = rows_side ? rows_prev_ : cols_prev_;
    auto& self_next = rows_side ? rows_next_ : cols_next_;
    const int n_nodes = rows_side ? graph_.n_rows() : graph_.n_cols();

    const double gamma = config_.damping;
    const bool use_alpha = config_.use_alpha();
    const bool keep_alpha = use_alpha && !config_.drop_alpha;
    const double cap = config_.divergence_cap;
    const int workers = std::max(1, config_.threads);
    std::vector<std::size_t> skipped(static_cast<std::size_t>(workers), 0);

    parallel_for(static_cast<std::size_t>(n_nodes), workers, [&](std::size_t begin, std::size_t end, int worker) {
        CorrectionScratch scratch(rank_);
        Eigen::VectorXd vt(rank_), vp(rank_);
        Eigen::MatrixXd precision(rank_, rank_);
        Eigen::VectorXd field(rank_);
        Eigen::LLT<Eigen::MatrixXd> llt(rank_);
        std::size_t skips = 0;
        auto where = [&](int a) {
            return std::string(rows_side ? "row node " : "column node ") + std::to_string(a) + " at sweep " +
                   std::to_string(sweeps_done_);
        };

        for (std::size_t na = begin; na < end; ++na) {
            const int a = static_cast<int>(na);
            const auto edges = rows_side ? graph_.row_edges(a) : graph_.col_edges(a);
            ApproxNode& next = self_next[a];
            if (edges.empty()) {
                next.mean.setZero();
                next.precision_inv.setZero();
                next.alpha = 0.0;
                continue;
            }
            // Lower triangle only until the factorization.
            precision.setZero();
            precision.diagonal().setConstant(config_.lambda);
            field.setZero();
            const ApproxNode& sc = self_cur[a];
            const ApproxNode& sp = self_prev[a];
            for (auto e : edges) {
                const auto& edge = graph_.edge(e);
                const int b = rows_side ? edge.col : edge.row;
                const double y = edge.value;
                bool skip = false;
                const ApproxNode& oc = opp_cur[b];
                const double at = correct(oc.precision_inv, oc.mean, keep_alpha ? oc.alpha : 0.0, sc.mean,
                                          keep_alpha ? sc.alpha : 0.0, y, use_alpha, vt, skip, scratch, nullptr);
                skips += skip;
                const double wt = (1.0 - gamma) * observation_scale(y, keep_alpha ? at : 0.0, use_alpha);
                precision.selfadjointView<Eigen::Lower>().rankUpdate(vt, wt);
                field.noalias() += (wt * y) * vt;
                if (gamma != 0.0) {
                    const ApproxNode& op = opp_prev[b];
                    const double ap = correct(op.precision_inv, op.mean, keep_alpha ? op.alpha : 0.0, sp.mean,
                                              keep_alpha ? sp.alpha : 0.0, y, use_alpha, vp, skip, scratch, nullptr);
                    skips += skip;
                    const double wp = gamma * observation_scale(y, keep_alpha ? ap : 0.0, use_alpha);
                    precision.selfadjointView<Eigen::Lower>().rankUpdate(vp, wp);
                    field.noalias() += (wp * y) * vp;
                }
            }
            llt.compute(precision);
            if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
                if (config_.lambda == 0.0) throw SingularError("singular precision at " + where(a));
                throw DivergenceError("divergence: precision lost positive definiteness at " + where(a), sweeps_done_);
            }
            next.precision_inv.setIdentity();
            llt.solveInPlace(next.precision_inv);
            next.precision_inv.triangularView<Eigen::StrictlyUpper>() =
                next.precision_inv.transpose().triangularView<Eigen::StrictlyUpper>();
            next.mean.noalias() = next.precision_inv * field;
            next.alpha = keep_alpha ? uncertainty_alpha(next.mean, next.precision_inv) : 0.0;
            if (beyond(next.mean, cap))
                throw DivergenceError("divergence: posterior mean beyond cap at " + where(a), sweeps_done_);
        }
        skipped[static_cast<std::size_t>(worker)] += skips;
    });

    for (auto s : skipped) skipped_ += s;
    // prev <- cur, cur <- next, next <- old prev (buffer reuse)
    std::swap(self_prev, self_cur);
    std::swap(self_cur, self_next);
}

Eigen::MatrixXd ApproxSolver::U() const {
    Eigen::MatrixXd U(graph_.n_rows(), rank_);
    for (int i = 0; i < graph_.n_rows(); ++i) U.row(i) = rows_cur_[i].mean.transpose();
    return U;
}

Eigen::MatrixXd ApproxSolver::V() const {
    Eigen::MatrixXd V(graph_.n_cols(), rank_);
    for (int j = 0; j < graph_.n_cols(); ++j) V.row(j) = cols_cur_[j].mean.transpose();
    return V;
}

std::size_t ApproxSolver::state_bytes() const {
    const std::size_t per_node = sizeof(double) * (static_cast<std::size_t>(rank_) * rank_ + rank_ + 1);
    return 3 * per_node * (static_cast<std::size_t>(graph_.n_rows()) + graph_.n_cols());
}

SolveResult approx_run(ApproxSolver& solver, const Monitor& monitor) {
    const auto& cfg = solver.config();
    Trace trace;
    const bool per_sweep = monitor.truth || !monitor.test_edges.empty() || !monitor.validation_edges.empty() ||
                           static_cast<bool>(monitor.on_sweep);
    for (int t = 0; t < cfg.max_sweeps; ++t) {
        const auto skipped_before = solver.skipped_corrections();
        double change = 0.0;
        try {
            change = solver.sweep();
        } catch (const DivergenceError& e) {
            throw SolverDivergence(e.what(), e.sweep(), trace);
        }
        SweepRecord rec;
        rec.sweep = solver.sweeps_done();
        rec.max_change = change;
        rec.skipped_corrections = solver.skipped_corrections() - skipped_before;
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

SolveResult approx_run(const ObservationGraph& graph, const SolverConfig& config, const Monitor& monitor) {
    ApproxSolver solver(graph, config);
    return approx_run(solver, monitor);
}

}  // namespace gpbp
