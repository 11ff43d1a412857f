#include "gpbp/solver.hpp"

#include <cmath>
#include <ostream>

#include "gpbp/approx_mp.hpp"
#include "gpbp/eval.hpp"
#include "gpbp/exact_mp.hpp"
#include "gpbp/io.hpp"

namespace gpbp {

std::string to_string(Algorithm a) { return a == Algorithm::gpbp ? "gpbp" : "alsmp"; }

std::string Method::name() const { return (approximate ? "approx" : "") + to_string(family); }

Method Method::parse(const std::string& name) {
    if (name == "gpbp") return {Algorithm::gpbp, false};
    if (name == "alsmp") return {Algorithm::alsmp, false};
    if (name == "approxgpbp") return {Algorithm::gpbp, true};
    if (name == "approxalsmp") return {Algorithm::alsmp, true};
    throw ConfigError("algorithm: unknown solver '" + name + "'");
}

void SolverConfig::validate() const {
    if (rank < 1) throw ConfigError("rank: must be at least 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda: must be finite and nonnegative");
    if (!(damping >= 0.0 && damping <= 1.0)) throw ConfigError("damping: gamma must lie in [0, 1]");
    if (max_sweeps < 1) throw ConfigError("max_sweeps: must be at least 1");
    if (!(conv_tol > 0.0)) throw ConfigError("conv_tol: must be positive");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ConfigError("init_scale: must be finite and nonnegative");
    if (refresh_interval < 1) throw ConfigError("refresh_interval: must be at least 1");
    if (!(divergence_cap > 0.0)) throw ConfigError("divergence_cap: must be positive");
    if (threads < 1) throw ConfigError("threads: must be at least 1");
}

void Trace::write_csv(std::ostream& out, bool with_skipped) const {
    bool any_validation = false;
    for (const auto& r : records) any_validation = any_validation || r.rmse_validation.has_value();
    out << "sweep,max_change,nrmse,rmse_test";
    if (any_validation) out << ",rmse_validation";
    if (with_skipped) out << ",skipped_corrections";
    out << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : records) {
        out << r.sweep << ',' << format_double(r.max_change) << ',' << opt(r.nrmse) << ',' << opt(r.rmse_test);
        if (any_validation) out << ',' << opt(r.rmse_validation);
        if (with_skipped) out << ',' << r.skipped_corrections;
        out << '\n';
    }
}

void evaluate_sweep(const Monitor& monitor, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, SweepRecord& rec) {
    if (monitor.truth) rec.nrmse = nrmse(U, V, *monitor.truth);
    if (!monitor.test_edges.empty()) rec.rmse_test = rmse_on_edges(U, V, monitor.test_edges);
    if (!monitor.validation_edges.empty()) rec.rmse_validation = rmse_on_edges(U, V, monitor.validation_edges);
}

SolveResult solve(const ObservationGraph& graph, const Method& method, SolverConfig config, const Monitor& monitor) {
    config.mode = method.family;
    if (method.approximate) return approx_run(graph, config, monitor);
    return run(graph, config, monitor);
}

}  // namespace gpbp
