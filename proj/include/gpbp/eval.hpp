#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpbp/obs_graph.hpp"
#include "gpbp/solver.hpp"

namespace gpbp {

/// sqrt(sum over all N*M entries of (x_ij - u_i^T v_j)^2 / (N M R)), R the
/// rank of the ground truth.
double nrmse(const Eigen::MatrixXd& U_hat, const Eigen::MatrixXd& V_hat, const GroundTruth& truth);

/// Inclusive prediction range for clipping.
using ClipRange = std::pair<double, double>;

/// Root mean squared error over the given edges. Throws ConfigError when
/// `edges` is empty.
double rmse_on_edges(const Eigen::MatrixXd& U_hat, const Eigen::MatrixXd& V_hat, std::span<const Edge> edges,
                     std::optional<ClipRange> clip = std::nullopt);

/// Fraction of values strictly below eps.
double reconstruction_rate(std::span<const double> values, double eps);

struct Summary {
    double mean = 0.0;
    double std_error = 0.0;  // sample sd / sqrt(n); 0 when n < 2
    std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

/// n points from lo to hi inclusive with a constant ratio.
std::vector<double> geometric_grid(double lo, double hi, int n);

struct NestedCvConfig {
    std::vector<double> lambda_grid;
    int folds = 10;
    double validation_fraction = 0.05;
    std::uint64_t seed = 0;
    std::optional<ClipRange> clip;
    int threads = 1;  // over (fold, lambda) jobs
};

/// One trained model: per-sweep validation and test RMSE on a fold.
struct CvRun {
    int fold = 0;
    double lambda = 0.0;
    bool ok = true;
    std::string error;
    std::vector<double> rmse_validation;  // one entry per completed sweep
    std::vector<double> rmse_test;
};

struct FoldResult {
    int fold = 0;
    bool ok = false;
    std::string error;
    double selected_lambda = 0.0;
    double validation_rmse = 0.0;  // terminal sweep, selected model
    double test_rmse_terminal = 0.0;
    double test_rmse_best = 0.0;  // minimum over sweeps of the selected model's test curve
    int best_sweep = 0;
};

struct NestedCvResult {
    std::vector<CvRun> runs;  // fold-major, lambda-minor
    std::vector<FoldResult> folds;
    Summary terminal;  // over successful folds
    Summary best;
    std::size_t failed_folds = 0;
};

/// k-fold nested cross-validation. For each fold the model is trained once
/// per lambda on the training split, lambda is selected by terminal
/// validation RMSE, and the selected model is scored on the held-out fold
/// without retraining.
NestedCvResult nested_cv(const ObservationGraph& graph, const Method& method, const SolverConfig& config,
                         const NestedCvConfig& cv);

/// Long-format rows: algorithm,dataset,fold,lambda,sweep,rmse_validation,rmse_test.
void write_cv_long_csv(std::ostream& out, const std::string& algorithm, const std::string& dataset,
                       const NestedCvResult& result, bool header = true);

}  // namespace gpbp
