#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpbp/errors.hpp"
#include "gpbp/obs_graph.hpp"

namespace gpbp {

/// Message family: Gaussian-parameterized BP keeps the alpha coefficients,
/// ALS-MP drops them.
enum class Algorithm { gpbp, alsmp };

/// A concrete solver: family plus exact (edge messages) or approximate (node
/// states only).
struct Method {
    Algorithm family = Algorithm::gpbp;
    bool approximate = false;

    std::string name() const;
    static Method parse(const std::string& name);  // gpbp | alsmp | approxgpbp | approxalsmp
};

std::string to_string(Algorithm a);

struct SolverConfig {
    int rank = 10;
    double lambda = 1e-4;
    double damping = 0.0;  // gamma in [0, 1]
    Algorithm mode = Algorithm::gpbp;
    int max_sweeps = 1000;
    double conv_tol = 1e-8;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    int refresh_interval = 25;  // sweeps between direct refactorizations of node inverses
    double divergence_cap = 1e8;
    bool drop_alpha = false;  // compute alpha but force it to zero (gpbp mode)
    int threads = 1;

    bool use_alpha() const { return mode == Algorithm::gpbp; }
    void validate() const;  // throws ConfigError naming the field
};

enum class Side { update_U_messages, update_V_messages };

struct SweepRecord {
    int sweep = 0;
    double max_change = 0.0;
    std::optional<double> nrmse;
    std::optional<double> rmse_test;
    std::optional<double> rmse_validation;
    std::size_t skipped_corrections = 0;
    std::size_t refactorizations = 0;
};

struct Trace {
    std::vector<SweepRecord> records;
    bool converged = false;

    int sweeps() const { return static_cast<int>(records.size()); }
    /// CSV: sweep,max_change,nrmse,rmse_test[,rmse_validation][,skipped_corrections]
    void write_csv(std::ostream& out, bool with_skipped = false) const;
};

/// Optional per-sweep evaluation hooks for run()/approx_run().
struct Monitor {
    const GroundTruth* truth = nullptr;
    std::span<const Edge> test_edges;
    std::span<const Edge> validation_edges;
    std::function<void(int sweep, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V)> on_sweep;
};

struct SolveResult {
    Eigen::MatrixXd U;  // N x R posterior means
    Eigen::MatrixXd V;  // M x R
    Trace trace;
};

/// Divergence during run(); carries the trace up to the failing sweep.
class SolverDivergence : public DivergenceError {
public:
    SolverDivergence(const std::string& what, int sweep, Trace trace)
        : DivergenceError(what, sweep), trace_(std::move(trace)) {}
    const Trace& trace() const { return trace_; }

private:
    Trace trace_;
};

/// Relative change metric |a - b|_inf / (1 + |a|_inf).
inline double relative_change(const Eigen::Ref<const Eigen::VectorXd>& now, const Eigen::Ref<const Eigen::VectorXd>& before) {
    return (now - before).cwiseAbs().maxCoeff() / (1.0 + now.cwiseAbs().maxCoeff());
}

/// Fill the monitor columns of a sweep record.
void evaluate_sweep(const Monitor& monitor, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, SweepRecord& rec);

/// Dispatch to run() or approx_run().
SolveResult solve(const ObservationGraph& graph, const Method& method, SolverConfig config,
                  const Monitor& monitor = {});

}  // namespace gpbp
