#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gpbp/obs_graph.hpp"

namespace gpbp {

/// Quadrature did not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double achieved) : std::runtime_error(what), achieved_(achieved) {}
    double achieved() const { return achieved_; }

private:
    double achieved_;
};

struct QuadratureResult {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd mode;
    double achieved_tol = 0.0;  // relative change at the last grid halving
    int points_per_axis = 0;
};

/// Mean and covariance of the density proportional to
///   (1 + u^T C^-1 u)^(-1/2) exp[-beta/2 (y - u^T C^-1 D)^2 / (1 + u^T C^-1 u) - beta eps |u|^2 / 2]
/// by tensor-product quadrature on a box of +-8 standard deviations around the
/// mode (rotated to the local Hessian axes), halving the spacing until the
/// moments change by less than `tol`. R <= 3.
QuadratureResult quadrature_moments(const Eigen::MatrixXd& C, const Eigen::VectorXd& D, double y, double beta,
                                    double eps_reg, double tol = 1e-6);

/// Singular-value soft-thresholding of a fully observed matrix.
Eigen::MatrixXd svt_solution(const Eigen::MatrixXd& Y, double lambda);
Eigen::VectorXd svt_singular_values(const Eigen::MatrixXd& Y, double lambda);

/// 1/2 |Y - X|_F^2 + lambda |X|_*.
double nuclear_objective(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, double lambda);

/// 1/2 sum over observed (y - u_i^T v_j)^2 + lambda/2 (|U|_F^2 + |V|_F^2).
double factor_objective(const ObservationGraph& graph, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                        double lambda);

struct AltMinResult {
    Eigen::MatrixXd U;
    Eigen::MatrixXd V;
    double objective = 0.0;
    std::vector<double> history;  // objective after every half-step
    int iterations = 0;
    bool converged = false;
};

/// Exact alternating minimization of factor_objective: row-wise ridge solves
/// for U, then V, until the objective changes by less than tol (relative to
/// 1 + objective) or max_iters full iterations.
AltMinResult alt_min_oracle(const ObservationGraph& graph, double lambda, int rank, std::uint64_t seed,
                            double tol = 1e-12, int max_iters = 200000);

/// Same, from given starting factors.
AltMinResult alt_min_oracle(const ObservationGraph& graph, double lambda, Eigen::MatrixXd U, Eigen::MatrixXd V,
                            double tol = 1e-12, int max_iters = 200000);

}  // namespace gpbp
