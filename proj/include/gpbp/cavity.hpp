#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>

namespace gpbp {

/// Cavity summary carried by one directed edge: the cavity vector and its
/// uncertainty scalar, plus the previous sweep's copy used for damping.
struct EdgeMessage {
    Eigen::VectorXd mean;
    double alpha = 0.0;
    Eigen::VectorXd prev_mean;
    double prev_alpha = 0.0;
};

/// One rank-one term entering a node: weight * outer_scale * v v^T in the
/// precision and weight * outer_scale * y * v in the field. `weight` is the
/// damping mix coefficient (1 when undamped).
struct Contribution {
    double outer_scale = 1.0;
    Eigen::VectorXd vector;
    double y = 0.0;
    double weight = 1.0;

    double precision_weight() const { return weight * outer_scale; }
    Eigen::MatrixXd precision_term() const { return precision_weight() * vector * vector.transpose(); }
    Eigen::VectorXd linear_term() const { return (precision_weight() * y) * vector; }
};

/// Gaussian node summary: precision (A_i or C_j), its inverse, linear field
/// (B_i or D_j), posterior mean and the node-level uncertainty scalar.
struct NodeState {
    Eigen::MatrixXd precision;
    Eigen::MatrixXd precision_inv;
    Eigen::VectorXd field;
    Eigen::VectorXd mean;
    double alpha_node = 0.0;
};

/// m^T P m / |m|^4, defined as 0 at m = 0.
double uncertainty_alpha(const Eigen::Ref<const Eigen::VectorXd>& m, const Eigen::Ref<const Eigen::MatrixXd>& P);

/// 1 / (1 + y^2 alpha), or 1 when alpha terms are dropped.
inline double observation_scale(double y, double alpha, bool use_alpha) {
    return use_alpha ? 1.0 / (1.0 + y * y * alpha) : 1.0;
}

Contribution contribution_from_message(const Eigen::VectorXd& mean, double alpha, double y, bool use_alpha,
                                       double weight = 1.0);
Contribution contribution_from_message(const EdgeMessage& msg, double y, bool use_alpha);

/// precision = lambda I + sum of terms, field = sum of linear terms, inverse by
/// Cholesky. Throws SingularError (mentioning `node_label`) when the precision
/// is not positive definite.
NodeState accumulate_node(std::span<const Contribution> contributions, double lambda, int rank,
                          const std::string& node_label = "node");

struct CavityResult {
    Eigen::MatrixXd cavity_inv;
    Eigen::VectorXd cavity_mean;
    double cavity_alpha = 0.0;
    bool refactored = false;  // the rank-one downdate was near-singular
};

/// Remove one edge's terms (one, or two when damped) from a node by
/// Sherman-Morrison downdates of its inverse.
CavityResult cavity_downdate(const NodeState& node, std::span<const Contribution> terms);
CavityResult cavity_downdate(const NodeState& node, const Contribution& term);

/// Allocation-free form used inside the solvers. Terms are given as raw
/// (vector, precision weight, y) triples; zero-weight terms are skipped.
class CavityKernel {
public:
    static constexpr double kDowndateGuard = 1e-12;
    static constexpr int kMaxTerms = 2;

    explicit CavityKernel(int rank);

    struct Term {
        const double* v = nullptr;
        double weight = 0.0;  // precision weight (mix weight * outer scale)
        double y = 0.0;
    };

    /// Computes cavity mean and alpha into the given outputs. When `cavity_inv`
    /// is non-null the downdated inverse is formed there as well. Returns false
    /// when a downdate was near-singular and the cavity precision had to be
    /// refactored directly; throws SingularError if that fails.
    bool compute(const Eigen::MatrixXd& precision, const Eigen::MatrixXd& precision_inv,
                 const Eigen::VectorXd& field, std::span<const Term> terms, double* mean_out,
                 double& alpha_out, Eigen::MatrixXd* cavity_inv = nullptr);

private:
    int rank_;
    Eigen::MatrixXd g_;  // rank x kMaxTerms
    Eigen::VectorXd b_, m_, pm_, tmp_;
    Eigen::MatrixXd direct_;
};

/// In-place signed rank-one update of an inverse:
/// P <- (P^{-1} + w v v^T)^{-1}. Returns false (P untouched) when the
/// denominator 1 + w v^T P v is within the guard of zero or negative.
bool sherman_morrison_update(Eigen::MatrixXd& P, const Eigen::Ref<const Eigen::VectorXd>& v, double w,
                             Eigen::VectorXd& scratch);

/// max |A P - I| entry.
double inverse_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P);

}  // namespace gpbp
