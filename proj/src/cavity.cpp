#include "gpbp/cavity.hpp"

#include <cmath>

#include "gpbp/errors.hpp"

namespace gpbp {

namespace {

constexpr double kMinRcond = 1e-14;

void symmetrize(Eigen::MatrixXd& P) {
    P = 0.5 * (P + P.transpose()).eval();
}

}  // namespace

double uncertainty_alpha(const Eigen::Ref<const Eigen::VectorXd>& m, const Eigen::Ref<const Eigen::MatrixXd>& P) {
    const double n2 = m.squaredNorm();
    if (n2 == 0.0) return 0.0;
    return m.dot(P * m) / (n2 * n2);
}

Contribution contribution_from_message(const Eigen::VectorXd& mean, double alpha, double y, bool use_alpha,
                                       double weight) {
    return {observation_scale(y, alpha, use_alpha), mean, y, weight};
}

Contribution contribution_from_message(const EdgeMessage& msg, double y, bool use_alpha) {
    return contribution_from_message(msg.mean, msg.alpha, y, use_alpha);
}

NodeState accumulate_node(std::span<const Contribution> contributions, double lambda, int rank,
                          const std::string& node_label) {
    NodeState s;
    s.precision = Eigen::MatrixXd::Identity(rank, rank) * lambda;
    s.field = Eigen::VectorXd::Zero(rank);
    for (const auto& c : contributions) {
        const double w = c.precision_weight();
        s.precision.noalias() += w * c.vector * c.vector.transpose();
        s.field.noalias() += (w * c.y) * c.vector;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s.precision);
    if (llt.info() != Eigen::Success || !(llt.rcond() > kMinRcond))
        throw SingularError("singular precision at " + node_label);
    s.precision_inv = llt.solve(Eigen::MatrixXd::Identity(rank, rank));
    symmetrize(s.precision_inv);
    s.mean = llt.solve(s.field);
    s.alpha_node = uncertainty_alpha(s.mean, s.precision_inv);
    return s;
}

CavityKernel::CavityKernel(int rank)
    : rank_(rank),
      g_(rank, kMaxTerms),
      b_(rank),
      m_(rank),
      pm_(rank),
      tmp_(rank),
      direct_(rank, rank) {}

bool CavityKernel::compute(const Eigen::MatrixXd& precision, const Eigen::MatrixXd& precision_inv,
                           const Eigen::VectorXd& field, std::span<const Term> terms, double* mean_out,
                           double& alpha_out, Eigen::MatrixXd* cavity_inv) {
    using Map = Eigen::Map<const Eigen::VectorXd>;
    int active[kMaxTerms];
    double denom[kMaxTerms];
    int n_active = 0;

    b_ = field;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].weight == 0.0) continue;
        b_.noalias() -= (terms[k].weight * terms[k].y) * Map(terms[k].v, rank_);
        active[n_active++] = static_cast<int>(k);
    }

    bool stable = true;
    for (int a = 0; a < n_active; ++a) {
        const auto& t = terms[active[a]];
        const Map v(t.v, rank_);
        g_.col(a).noalias() = precision_inv * v;
        for (int b = 0; b < a; ++b) g_.col(a) += g_.col(b) * (terms[active[b]].weight * g_.col(b).dot(v) / denom[b]);
        denom[a] = 1.0 - t.weight * v.dot(g_.col(a));
        if (!(denom[a] > kDowndateGuard)) {
            stable = false;
            break;
        }
    }

    Eigen::Map<Eigen::VectorXd> mean(mean_out, rank_);
    if (stable) {
        m_.noalias() = precision_inv * b_;
        for (int a = 0; a < n_active; ++a)
            m_ += g_.col(a) * (terms[active[a]].weight * g_.col(a).dot(b_) / denom[a]);
        pm_.noalias() = precision_inv * m_;
        for (int a = 0; a < n_active; ++a)
            pm_ += g_.col(a) * (terms[active[a]].weight * g_.col(a).dot(m_) / denom[a]);
        if (cavity_inv) {
            *cavity_inv = precision_inv;
            for (int a = 0; a < n_active; ++a)
                cavity_inv->noalias() += (terms[active[a]].weight / denom[a]) * g_.col(a) * g_.col(a).transpose();
        }
    } else {
        direct_ = precision;
        for (int a = 0; a < n_active; ++a) {
            const auto& t = terms[active[a]];
            const Map v(t.v, rank_);
            direct_.noalias() -= t.weight * v * v.transpose();
        }
        Eigen::LLT<Eigen::MatrixXd> llt(direct_);
        if (llt.info() != Eigen::Success || !(llt.rcond() > kMinRcond))
            throw SingularError("singular cavity precision");
        m_ = llt.solve(b_);
        pm_ = llt.solve(m_);
        if (cavity_inv) {
            *cavity_inv = llt.solve(Eigen::MatrixXd::Identity(rank_, rank_));
            symmetrize(*cavity_inv);
        }
    }
    mean = m_;
    const double n2 = m_.squaredNorm();
    alpha_out = n2 == 0.0 ? 0.0 : m_.dot(pm_) / (n2 * n2);
    return stable;
}

CavityResult cavity_downdate(const NodeState& node, std::span<const Contribution> terms) {
    if (terms.size() > static_cast<std::size_t>(CavityKernel::kMaxTerms))
        throw ConfigError("cavity_downdate supports at most two terms per edge");
    const int rank = static_cast<int>(node.mean.size());
    CavityKernel kernel(rank);
    CavityKernel::Term raw[CavityKernel::kMaxTerms];
    for (std::size_t k = 0; k < terms.size(); ++k)
        raw[k] = {terms[k].vector.data(), terms[k].precision_weight(), terms[k].y};
    CavityResult out;
    out.cavity_mean.resize(rank);
    out.cavity_inv.resize(rank, rank);
    const bool stable = kernel.compute(node.precision, node.precision_inv, node.field,
                                       std::span<const CavityKernel::Term>(raw, terms.size()),
                                       out.cavity_mean.data(), out.cavity_alpha, &out.cavity_inv);
    out.refactored = !stable;
    return out;
}

CavityResult cavity_downdate(const NodeState& node, const Contribution& term) {
    return cavity_downdate(node, std::span<const Contribution>(&term, 1));
}

bool sherman_morrison_update(Eigen::MatrixXd& P, const Eigen::Ref<const Eigen::VectorXd>& v, double w,
                             Eigen::VectorXd& scratch) {
    if (w == 0.0) return true;
    scratch.noalias() = P * v;
    const double denom = 1.0 + w * v.dot(scratch);
    if (!(denom > CavityKernel::kDowndateGuard)) return false;
    P.noalias() -= (w / denom) * scratch * scratch.transpose();
    return true;
}

double inverse_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P) {
    return (A * P - Eigen::MatrixXd::Identity(A.rows(), A.cols())).cwiseAbs().maxCoeff();
}

}  // namespace gpbp
