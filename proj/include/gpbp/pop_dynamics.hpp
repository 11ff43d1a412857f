#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gpbp/obs_graph.hpp"
#include "gpbp/solver.hpp"

namespace gpbp {

struct PDConfig {
    int rank = 10;
    int n_pd = 2000;
    int d_u = 38;  // observations per U node (row degree)
    int d_v = 19;  // observations per V node (column degree)
    NoiseModel noise;
    double lambda = 1e-4;
    Algorithm mode = Algorithm::gpbp;
    bool drop_alpha = false;  // gpbp arithmetic with alpha forced to zero
    double damping = 0.0;
    std::uint64_t seed = 0;
    double init_noise = 0.1;  // cavity = planted + N(0, init_noise^2)
    bool random_init = false;  // cavity = N(0, init_scale^2) instead
    double init_scale = 1.0;
    int max_sweeps = 500;
    int block = 10;  // stationarity window
    double stationarity_tol = 0.01;
    int readout_samples = 100000;
    int check_samples = 10000;
    int threads = 1;

    /// Degrees implied by a graph ensemble with c observations per column:
    /// d_v = c, d_u = c * n_cols / n_rows.
    static PDConfig for_ensemble(int c, int n_rows, int n_cols);

    bool use_alpha() const { return mode == Algorithm::gpbp && !drop_alpha; }
    void validate() const;
};

/// One side of the population: column k holds tuple k.
struct PopSide {
    Eigen::MatrixXd planted;   // R x N_PD
    Eigen::MatrixXd cav;       // current cavity means
    Eigen::MatrixXd prev_cav;  // previous sweep, for damping
    Eigen::VectorXd alpha;
    Eigen::VectorXd prev_alpha;

    int size() const { return static_cast<int>(planted.cols()); }
};

struct PDPool {
    PopSide u;
    PopSide v;
    int sweeps = 0;
};

PDPool pd_init(const PDConfig& config);

/// Refresh every U tuple from d_u - 1 V tuples, then every V tuple from
/// d_v - 1 of the refreshed U tuples.
void pd_sweep(PDPool& pool, const PDConfig& config);

/// sqrt(mean (u_hat^T v_hat - u0^T v0)^2 / R) over independent pairs, each
/// estimate built from a full set of d_u (d_v) drawn tuples. `stream`
/// selects the random stream, so repeated calls with the same stream reuse
/// the same draws.
double pd_readout(const PDPool& pool, const PDConfig& config, int n_samples, std::uint64_t stream = 0);

struct PDTracePoint {
    int sweep = 0;
    double readout = 0.0;  // check-size readout
};

struct PDResult {
    std::vector<PDTracePoint> trace;
    double readout = 0.0;  // final readout with readout_samples
    bool stationary = false;
    int sweeps = 0;
    PDPool pool;
};

/// Sweep until consecutive block means of the check readout differ by less
/// than stationarity_tol (relative), or max_sweeps; then read out.
PDResult pd_run(const PDConfig& config);
PDResult pd_run(PDPool pool, const PDConfig& config);

void write_pd_trace_csv(std::ostream& out, const PDResult& result);

}  // namespace gpbp
