#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace gpbp::cli {

/// Outcome of one verification check. `value` is the worst observed error
/// and `tolerance` the bound it is held to.
struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;

    nlohmann::json to_json() const;
};

/// GPBP with alpha forced to zero against ALS-MP from the same seed, compared
/// after every sweep (exact and approximate solvers).
struct ReductionCheck {
    int instances = 20;
    int n_rows = 60;
    int n_cols = 120;
    int rank = 4;
    int c = 10;
    int sweeps = 30;
    std::uint64_t seed = 1;
};
CheckResult check_reduction_identity(const ReductionCheck& p);

/// Quadrature moments against the closed-form mean y v*/|v*|^2 and covariance
/// (1/beta)[eps I + v* v*^T / (1 + y^2 alpha)]^-1 for random R in {1, 2}
/// cases inside the small-eps regime.
struct QuadratureCheck {
    int cases = 20;
    double beta = 1e4;
    double eps_reg = 1e-6;
    double mean_tol = 1e-2;
    double cov_tol = 0.05;
    double max_expansion_ratio = 1e-3;  // eps (1 + y^2 alpha) / |v*|^2
    std::uint64_t seed = 2;
};
CheckResult check_quadrature(const QuadratureCheck& p);

/// Sherman-Morrison cavity downdates against direct accumulation.
struct DowndateCheck {
    int cases = 1000;
    double tol = 1e-8;
    std::uint64_t seed = 3;
};
CheckResult check_downdate(const DowndateCheck& p);

/// Maintained node inverses of a live exact solver with periodic refresh.
struct DriftCheck {
    int sweeps = 1000;
    int n_rows = 60;
    int n_cols = 120;
    int rank = 4;
    int c = 10;
    double lambda = 1e-2;
    double damping = 0.2;
    double tol = 1e-6;
    std::uint64_t seed = 4;
};
CheckResult check_inverse_drift(const DriftCheck& p);

/// Fully observed low-rank problem: solver singular values against
/// soft-thresholding (best of `runs` seeds per solver), and the alternating
/// minimization objective against the nuclear-norm objective.
struct GlobalOptimumCheck {
    int n = 30;
    int true_rank = 3;
    int rank = 5;
    double lambda = 0.5;
    int runs = 20;
    int max_sweeps = 3000;
    double sv_tol = 1e-3;
    double objective_tol = 1e-6;
    std::uint64_t seed = 7;
};
CheckResult check_global_optimum_singular_values(const GlobalOptimumCheck& p);
CheckResult check_global_optimum_objective(const GlobalOptimumCheck& p);

/// Population dynamics: planted noiseless lambda = 0 pools are fixed points.
struct PdFixedPointCheck {
    int n_pd = 2000;
    int rank = 10;
    int c = 19;
    int sweeps = 5;
    double tol = 1e-8;
    std::uint64_t seed = 5;
};
CheckResult check_pd_fixed_point(const PdFixedPointCheck& p);

/// Population dynamics: readouts from two seeds agree within `tol` relative.
struct PdSeedCheck {
    int n_pd = 2000;
    int c = 19;
    double sigma = 0.01;
    double damping = 0.1;
    double tol = 0.05;
    std::uint64_t seed_a = 11;
    std::uint64_t seed_b = 12;
};
CheckResult check_pd_seed_agreement(const PdSeedCheck& p);

}  // namespace gpbp::cli
