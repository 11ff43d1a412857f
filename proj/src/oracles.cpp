#include "gpbp/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gpbp/errors.hpp"
#include "gpbp/rng.hpp"

namespace gpbp {

namespace {

struct LogDensity {
    Eigen::MatrixXd Cinv;
    Eigen::VectorXd w;  // C^-1 D
    double y, beta, eps;

    double operator()(const Eigen::VectorXd& u) const {
        const double s = 1.0 + u.dot(Cinv * u);
        const double r = y - u.dot(w);
        return -0.5 * std::log(s) - 0.5 * beta * r * r / s - 0.5 * beta * eps * u.squaredNorm();
    }
};

// Central differences; the step is small relative to the narrowest axis of
// the density at beta >= 1e3 but large enough to keep rounding harmless.
void fd_derivatives(const LogDensity& f, const Eigen::VectorXd& u, double h, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
    const auto R = u.size();
    const double f0 = f(u);
    g.resize(R);
    H.resize(R, R);
    Eigen::VectorXd x = u;
    for (Eigen::Index a = 0; a < R; ++a) {
        x[a] = u[a] + h;
        const double fp = f(x);
        x[a] = u[a] - h;
        const double fm = f(x);
        x[a] = u[a];
        g[a] = (fp - fm) / (2 * h);
        H(a, a) = (fp - 2 * f0 + fm) / (h * h);
        for (Eigen::Index b = 0; b < a; ++b) {
            double acc = 0.0;
            for (int sa : {1, -1})
                for (int sb : {1, -1}) {
                    x[a] = u[a] + sa * h;
                    x[b] = u[b] + sb * h;
                    acc += sa * sb * f(x);
                }
            x[a] = u[a];
            x[b] = u[b];
            H(a, b) = H(b, a) = acc / (4 * h * h);
        }
    }
}

Eigen::VectorXd find_mode(const LogDensity& f, Eigen::VectorXd u) {
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    const double h = 1e-5 / std::sqrt(f.beta / 1e4);
    for (int it = 0; it < 200; ++it) {
        fd_derivatives(f, u, h * (1.0 + u.norm()), g, H);
        Eigen::MatrixXd negH = -H;
        double shift = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt;
        for (int k = 0; k < 60; ++k) {
            llt.compute(negH + shift * Eigen::MatrixXd::Identity(u.size(), u.size()));
            if (llt.info() == Eigen::Success) break;
            shift = shift == 0.0 ? 1e-6 * (1.0 + negH.cwiseAbs().maxCoeff()) : shift * 4;
        }
        Eigen::VectorXd step = llt.solve(g);
        const double f0 = f(u);
        double t = 1.0;
        while (t > 1e-12 && !(f(u + t * step) >= f0)) t *= 0.5;
        u += t * step;
        if ((t * step).norm() < 1e-13 * (1.0 + u.norm())) break;
    }
    return u;
}

}  // namespace

QuadratureResult quadrature_moments(const Eigen::MatrixXd& C, const Eigen::VectorXd& D, double y, double beta,
                                    double eps_reg, double tol) {
    const auto R = C.rows();
    if (R < 1 || R > 3 || C.cols() != R || D.size() != R)
        throw ConfigError("quadrature_moments: need square C of size 1..3 matching D");
    if (!(beta > 0.0) || !(eps_reg >= 0.0)) throw ConfigError("quadrature_moments: need beta > 0, eps_reg >= 0");
    if (!C.isApprox(C.transpose(), 1e-12)) throw ConfigError("quadrature_moments: C is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) throw ConfigError("quadrature_moments: C is not positive definite");

    LogDensity f{llt.solve(Eigen::MatrixXd::Identity(R, R)), llt.solve(D), y, beta, eps_reg};
    Eigen::VectorXd start = Eigen::VectorXd::Zero(R);
    if (f.w.squaredNorm() > 0.0) start = (y / f.w.squaredNorm()) * f.w;
    QuadratureResult res;
    res.mode = find_mode(f, start);

    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    fd_derivatives(f, res.mode, 1e-5 / std::sqrt(beta / 1e4) * (1.0 + res.mode.norm()), g, H);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-0.5 * (H + H.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0) throw QuadratureError("quadrature_moments: mode is not a strict maximum", 1.0);
    const Eigen::MatrixXd axes = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
    const double f_mode = f(res.mode);

    const long max_points = 6'000'000;
    double half_width = 8.0;
    for (int widen = 0; widen < 4; ++widen) {
        Eigen::VectorXd prev_mean;
        Eigen::MatrixXd prev_cov;
        bool have_prev = false;
        bool boundary_heavy = false;
        for (int n = 17;; n = 2 * n - 1) {
            long total = 1;
            for (Eigen::Index a = 0; a < R; ++a) total *= n;
            if (total > max_points) {
                throw QuadratureError("quadrature_moments: grid did not converge, achieved relative change " +
                                          std::to_string(res.achieved_tol),
                                      res.achieved_tol);
            }
            const double hstep = 2 * half_width / (n - 1);
            double mass = 0.0, edge_max = 0.0;
            Eigen::VectorXd s1 = Eigen::VectorXd::Zero(R);
            Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(R, R);
            Eigen::VectorXd z(R), u(R);
            std::vector<int> idx(static_cast<std::size_t>(R), 0);
            for (long p = 0; p < total; ++p) {
                long rem = p;
                bool on_edge = false;
                for (Eigen::Index a = 0; a < R; ++a) {
                    idx[a] = static_cast<int>(rem % n);
                    rem /= n;
                    z[a] = -half_width + hstep * idx[a];
                    on_edge = on_edge || idx[a] == 0 || idx[a] == n - 1;
                }
                u = res.mode + axes * z;
                const double wgt = std::exp(f(u) - f_mode);
                if (on_edge) edge_max = std::max(edge_max, wgt);
                mass += wgt;
                const Eigen::VectorXd d = u - res.mode;
                s1 += wgt * d;
                s2.noalias() += wgt * d * d.transpose();
            }
            if (edge_max > 1e-14) {
                boundary_heavy = true;
                break;
            }
            const Eigen::VectorXd dmean = s1 / mass;
            res.mean = res.mode + dmean;
            res.cov = s2 / mass - dmean * dmean.transpose();
            res.points_per_axis = n;
            if (have_prev) {
                const double scale = std::sqrt(res.cov.diagonal().maxCoeff());
                const double dm = (res.mean - prev_mean).norm() / (res.mean.norm() + scale);
                const double dc = (res.cov - prev_cov).norm() / res.cov.norm();
                res.achieved_tol = std::max(dm, dc);
                if (res.achieved_tol < tol) return res;
            }
            prev_mean = res.mean;
            prev_cov = res.cov;
            have_prev = true;
        }
        if (!boundary_heavy) break;
        half_width *= 2;
    }
    throw QuadratureError("quadrature_moments: density mass reaches the grid boundary", 1.0);
}

Eigen::VectorXd svt_singular_values(const Eigen::MatrixXd& Y, double lambda) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y);
    return (svd.singularValues().array() - lambda).max(0.0).matrix();
}

Eigen::MatrixXd svt_solution(const Eigen::MatrixXd& Y, double lambda) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = (svd.singularValues().array() - lambda).max(0.0).matrix();
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

double nuclear_objective(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, double lambda) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
    return 0.5 * (Y - X).squaredNorm() + lambda * svd.singularValues().sum();
}

double factor_objective(const ObservationGraph& graph, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                        double lambda) {
    double loss = 0.0;
    for (const auto& e : graph.edges()) {
        const double r = e.value - U.row(e.row).dot(V.row(e.col));
        loss += r * r;
    }
    return 0.5 * loss + 0.5 * lambda * (U.squaredNorm() + V.squaredNorm());
}

AltMinResult alt_min_oracle(const ObservationGraph& graph, double lambda, int rank, std::uint64_t seed, double tol,
                            int max_iters) {
    if (rank < 1) throw ConfigError("alt_min_oracle: rank must be at least 1");
    Rng rng(derive_seed(seed, {30}));
    Eigen::MatrixXd U(graph.n_rows(), rank), V(graph.n_cols(), rank);
    for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
    return alt_min_oracle(graph, lambda, std::move(U), std::move(V), tol, max_iters);
}

AltMinResult alt_min_oracle(const ObservationGraph& graph, double lambda, Eigen::MatrixXd U, Eigen::MatrixXd V,
                            double tol, int max_iters) {
    if (!(lambda > 0.0)) throw ConfigError("alt_min_oracle: lambda must be positive");
    const auto R = U.cols();
    if (V.cols() != R || U.rows() != graph.n_rows() || V.rows() != graph.n_cols())
        throw ConfigError("alt_min_oracle: factor shapes do not match the graph");

    auto solve_side = [&](bool rows) {
        Eigen::MatrixXd& X = rows ? U : V;
        const Eigen::MatrixXd& Other = rows ? V : U;
        const int n = rows ? graph.n_rows() : graph.n_cols();
        Eigen::MatrixXd A(R, R);
        Eigen::VectorXd b(R);
        for (int a = 0; a < n; ++a) {
            A = lambda * Eigen::MatrixXd::Identity(R, R);
            b.setZero();
            for (auto e : rows ? graph.row_edges(a) : graph.col_edges(a)) {
                const auto& edge = graph.edge(e);
                const auto o = Other.row(rows ? edge.col : edge.row).transpose();
                A.noalias() += o * o.transpose();
                b += edge.value * o;
            }
            X.row(a) = A.llt().solve(b).transpose();
        }
    };

    AltMinResult res;
    double obj = factor_objective(graph, U, V, lambda);
    res.history.push_back(obj);
    for (int it = 0; it < max_iters; ++it) {
        solve_side(true);
        res.history.push_back(factor_objective(graph, U, V, lambda));
        solve_side(false);
        const double next = factor_objective(graph, U, V, lambda);
        res.history.push_back(next);
        res.iterations = it + 1;
        const bool done = std::abs(obj - next) < tol * (1.0 + next);
        obj = next;
        if (done) {
            res.converged = true;
            break;
        }
    }
    res.U = std::move(U);
    res.V = std::move(V);
    res.objective = obj;
    return res;
}

}  // namespace gpbp
