#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "gpbp/approx_mp.hpp"
#include "gpbp/cavity.hpp"
#include "gpbp/eval.hpp"
#include "gpbp/exact_mp.hpp"
#include "gpbp/oracles.hpp"
#include "gpbp/pop_dynamics.hpp"
#include "gpbp/rng.hpp"

namespace gpbp::cli {

namespace {

CheckResult finish(std::string name, double value, double tol, std::string detail) {
    return {std::move(name), value, tol, value < tol, std::move(detail)};
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

Eigen::MatrixXd random_spd(Rng& rng, int R, double scale) {
    Eigen::MatrixXd A(R, R);
    for (Eigen::Index k = 0; k < A.size(); ++k) A.data()[k] = rng.normal();
    return scale * (A * A.transpose() / R + Eigen::MatrixXd::Identity(R, R));
}

}  // namespace

nlohmann::json CheckResult::to_json() const {
    return {{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", pass}, {"detail", detail}};
}

CheckResult check_reduction_identity(const ReductionCheck& p) {
    double worst = 0.0;
    for (int k = 0; k < p.instances; ++k) {
        const auto inst = generate_synthetic(p.n_rows, p.n_cols, p.rank, NoiseModel::gaussian(0.1), p.c,
                                             derive_seed(p.seed, {static_cast<std::uint64_t>(k)}));
        SolverConfig base;
        base.rank = p.rank;
        base.lambda = 0.01;
        base.damping = k % 2 ? 0.3 : 0.0;
        base.seed = derive_seed(p.seed, {static_cast<std::uint64_t>(k), 1});
        SolverConfig dropped = base, als = base;
        dropped.mode = Algorithm::gpbp;
        dropped.drop_alpha = true;
        als.mode = Algorithm::alsmp;

        ExactSolver a(inst.graph, dropped), b(inst.graph, als);
        ApproxSolver c(inst.graph, dropped), d(inst.graph, als);
        for (int t = 0; t < p.sweeps; ++t) {
            a.sweep();
            b.sweep();
            c.sweep();
            d.sweep();
            worst = std::max({worst, max_abs_diff(a.U(), b.U()), max_abs_diff(a.V(), b.V()),
                              max_abs_diff(c.U(), d.U()), max_abs_diff(c.V(), d.V())});
        }
    }
    std::ostringstream s;
    s << p.instances << " instances " << p.n_rows << "x" << p.n_cols << " R=" << p.rank << ", " << p.sweeps
      << " sweeps, exact and approximate";
    return finish("reduction_identity", worst, 1e-12, s.str());
}

CheckResult check_quadrature(const QuadratureCheck& p) {
    Rng rng(p.seed);
    double worst_mean = 0.0, worst_cov = 0.0;
    int rejected = 0;
    for (int k = 0; k < p.cases; ++k) {
        const int R = 1 + k % 2;
        Eigen::MatrixXd C;
        Eigen::VectorXd v_star(R);
        double y = 0.0, n2 = 0.0, alpha = 0.0;
        // The closed forms drop O(eps) terms; relative to the data curvature
        // along v* these are eps (1 + y^2 alpha) / |v*|^2. Cases where that is
        // not small (|v*| near zero) are outside the expansion and redrawn.
        for (;;) {
            C = random_spd(rng, R, 100.0);
            for (int r = 0; r < R; ++r) v_star[r] = rng.normal();
            y = 2.0 * rng.normal();
            n2 = v_star.squaredNorm();
            alpha = v_star.dot(C.llt().solve(v_star)) / (n2 * n2);
            if (p.eps_reg * (1.0 + y * y * alpha) / n2 <= p.max_expansion_ratio) break;
            ++rejected;
        }
        const Eigen::VectorXd D = C * v_star;

        const auto q = quadrature_moments(C, D, y, p.beta, p.eps_reg);
        const Eigen::VectorXd mean = (y / n2) * v_star;
        const Eigen::MatrixXd cov =
            (p.eps_reg * Eigen::MatrixXd::Identity(R, R) + v_star * v_star.transpose() / (1.0 + y * y * alpha))
                .inverse() /
            p.beta;
        worst_mean = std::max(worst_mean, (q.mean - mean).norm() / mean.norm());
        worst_cov = std::max(worst_cov, (q.cov - cov).norm() / cov.norm());
    }
    std::ostringstream s;
    s << p.cases << " cases (" << rejected << " redrawn outside the small-eps regime), beta=" << p.beta
      << ", eps_reg=" << p.eps_reg << ": worst mean error " << worst_mean
      << " (tol " << p.mean_tol << "), worst covariance error " << worst_cov << " (tol " << p.cov_tol << ")";
    // Reported value is the larger of the two errors scaled to its tolerance.
    const double ratio = std::max(worst_mean / p.mean_tol, worst_cov / p.cov_tol);
    CheckResult r = finish("quadrature_moments", ratio, 1.0, s.str());
    return r;
}

CheckResult check_downdate(const DowndateCheck& p) {
    Rng rng(p.seed);
    double worst = 0.0;
    for (int k = 0; k < p.cases; ++k) {
        const int R = 1 + static_cast<int>(rng.below(8));
        const double lambda = std::pow(10.0, -3.0 + 3.0 * rng.uniform());
        // At least one term survives the removal, so the cavity mean is nonzero.
        const int n = 3 + static_cast<int>(rng.below(18));
        std::vector<Contribution> terms;
        for (int t = 0; t < n; ++t) {
            Eigen::VectorXd v(R);
            for (int r = 0; r < R; ++r) v[r] = rng.normal();
            const double alpha = rng.uniform();
            const double y = rng.normal();
            const double weight = rng.bernoulli(0.5) ? 1.0 : 0.2 + 0.6 * rng.uniform();
            terms.push_back(contribution_from_message(v, alpha, y, true, weight));
        }
        const auto node = accumulate_node(terms, lambda, R);
        // Remove one or two terms (the damped case removes a pair).
        const std::size_t removed = rng.bernoulli(0.5) ? 1 : 2;
        const std::span<const Contribution> gone(terms.data(), removed);
        const auto cav = cavity_downdate(node, gone);
        const auto direct = accumulate_node(std::span<const Contribution>(terms).subspan(removed), lambda, R);
        worst = std::max({worst,
                          (cav.cavity_inv - direct.precision_inv).norm() / direct.precision_inv.norm(),
                          (cav.cavity_mean - direct.mean).norm() / direct.mean.norm()});
    }
    std::ostringstream s;
    s << p.cases << " random cases, rank 1..8, lambda in [1e-3, 1]";
    return finish("sherman_morrison_downdate", worst, p.tol, s.str());
}

CheckResult check_inverse_drift(const DriftCheck& p) {
    const auto inst = generate_synthetic(p.n_rows, p.n_cols, p.rank, NoiseModel::gaussian(0.1), p.c, p.seed);
    SolverConfig cfg;
    cfg.rank = p.rank;
    cfg.lambda = p.lambda;
    cfg.damping = p.damping;
    cfg.seed = p.seed;
    ExactSolver solver(inst.graph, cfg);
    double worst = 0.0;
    for (int t = 0; t < p.sweeps; ++t) {
        solver.sweep();
        worst = std::max(worst, solver.inverse_drift());
    }
    std::ostringstream s;
    s << p.sweeps << " sweeps, refresh every " << cfg.refresh_interval << ", " << solver.refactorizations()
      << " refactorizations";
    return finish("inverse_drift", worst, p.tol, s.str());
}

namespace {

struct OptimumProblem {
    SyntheticInstance inst;
    Eigen::MatrixXd Y;
    Eigen::VectorXd svt;
};

OptimumProblem optimum_problem(const GlobalOptimumCheck& p) {
    OptimumProblem prob{generate_synthetic(p.n, p.n, p.true_rank, NoiseModel::none(), p.n, p.seed), {}, {}};
    prob.Y = prob.inst.truth.U0 * prob.inst.truth.V0.transpose();
    prob.svt = svt_singular_values(prob.Y, p.lambda);
    return prob;
}

}  // namespace

CheckResult check_global_optimum_singular_values(const GlobalOptimumCheck& p) {
    const auto prob = optimum_problem(p);
    const auto nonzero = static_cast<Eigen::Index>((prob.svt.array() > 0.0).count());
    std::ostringstream s;
    s << p.n << "x" << p.n << " rank " << p.true_rank << ", lambda=" << p.lambda << ", R=" << p.rank
      << ", best of " << p.runs << " runs:";
    double best_overall = std::numeric_limits<double>::infinity();
    for (const auto& name : {"gpbp", "alsmp", "approxgpbp", "approxalsmp"}) {
        const Method method = Method::parse(name);
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < p.runs; ++k) {
            SolverConfig cfg;
            cfg.rank = p.rank;
            cfg.lambda = p.lambda;
            cfg.max_sweeps = p.max_sweeps;
            cfg.conv_tol = 1e-12;
            cfg.seed = derive_seed(p.seed, {static_cast<std::uint64_t>(k)});
            double err;
            try {
                const auto res = solve(prob.inst.graph, method, cfg);
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(res.U * res.V.transpose());
                const Eigen::VectorXd sv = svd.singularValues();
                err = 0.0;
                for (Eigen::Index r = 0; r < std::min<Eigen::Index>(sv.size(), prob.svt.size()); ++r)
                    err = std::max(err, r < nonzero ? std::abs(sv[r] - prob.svt[r]) / prob.svt[r]
                                                    : sv[r] / prob.svt[0]);
            } catch (const std::exception&) {
                err = std::numeric_limits<double>::infinity();
            }
            best = std::min(best, err);
        }
        s << ' ' << name << '=' << best;
        best_overall = std::min(best_overall, best);
    }
    return finish("global_optimum_singular_values", best_overall, p.sv_tol, s.str());
}

CheckResult check_global_optimum_objective(const GlobalOptimumCheck& p) {
    const auto prob = optimum_problem(p);
    const double target = nuclear_objective(prob.Y, svt_solution(prob.Y, p.lambda), p.lambda);
    const auto am = alt_min_oracle(prob.inst.graph, p.lambda, p.rank, p.seed);
    const double rel = std::abs(am.objective - target) / std::abs(target);
    std::ostringstream s;
    s << "alternating minimization " << am.objective << " vs nuclear-norm objective " << target << " after "
      << am.iterations << " iterations";
    return finish("global_optimum_objective", rel, p.objective_tol, s.str());
}

CheckResult check_pd_fixed_point(const PdFixedPointCheck& p) {
    double worst = 0.0;
    std::ostringstream s;
    for (auto mode : {Algorithm::gpbp, Algorithm::alsmp}) {
        PDConfig cfg = PDConfig::for_ensemble(p.c, 500, 1000);
        cfg.rank = p.rank;
        cfg.n_pd = p.n_pd;
        cfg.noise = NoiseModel::none();
        cfg.lambda = 0.0;
        cfg.mode = mode;
        cfg.init_noise = 0.0;
        cfg.seed = p.seed;
        auto pool = pd_init(cfg);
        for (int t = 0; t < p.sweeps; ++t) pd_sweep(pool, cfg);
        const double r = pd_readout(pool, cfg, cfg.check_samples, 0);
        worst = std::max(worst, r);
        s << to_string(mode) << " readout " << r << "; ";
    }
    s << p.sweeps << " sweeps from the planted pools";
    return finish("pd_planted_fixed_point", worst, p.tol, s.str());
}

CheckResult check_pd_seed_agreement(const PdSeedCheck& p) {
    double worst = 0.0;
    std::ostringstream s;
    for (auto mode : {Algorithm::gpbp, Algorithm::alsmp}) {
        PDConfig cfg = PDConfig::for_ensemble(p.c, 500, 1000);
        cfg.n_pd = p.n_pd;
        cfg.noise = NoiseModel::gaussian(p.sigma);
        cfg.lambda = p.sigma * p.sigma;
        cfg.mode = mode;
        cfg.damping = p.damping;
        cfg.seed = p.seed_a;
        const double a = pd_run(cfg).readout;
        cfg.seed = p.seed_b;
        const double b = pd_run(cfg).readout;
        const double rel = std::abs(a - b) / std::min(a, b);
        worst = std::max(worst, rel);
        s << to_string(mode) << ' ' << a << " vs " << b << "; ";
    }
    s << "N_PD=" << p.n_pd << ", c=" << p.c << ", gamma=" << p.damping;
    return finish("pd_seed_agreement", worst, p.tol, s.str());
}

}  // namespace gpbp::cli
