#include <doctest.h>

#include <cmath>

#include "gpbp/errors.hpp"
#include "gpbp/eval.hpp"
#include "gpbp/oracles.hpp"
#include "helpers.hpp"

using namespace gpbp;

namespace {

ObservationGraph dense_graph(const Eigen::MatrixXd& Y) {
    std::vector<Edge> edges;
    for (int i = 0; i < Y.rows(); ++i)
        for (int j = 0; j < Y.cols(); ++j) edges.push_back({i, j, Y(i, j)});
    return {static_cast<int>(Y.rows()), static_cast<int>(Y.cols()), std::move(edges)};
}

}  // namespace

TEST_CASE("quadrature moments, scalar case") {
    const Eigen::MatrixXd C = Eigen::MatrixXd::Constant(1, 1, 100.0);
    const Eigen::VectorXd D = Eigen::VectorXd::Constant(1, 50.0);
    const double beta = 1e4, eps = 1e-6, y = 1.0;
    const auto q = quadrature_moments(C, D, y, beta, eps);
    CHECK(std::abs(q.mean[0] - 2.0) < 1e-2);
    const double v = 0.5, alpha = v * v / 100.0 / std::pow(v, 4);
    const double cov = 1.0 / (beta * (eps + v * v / (1.0 + y * y * alpha)));
    CHECK(std::abs(q.cov(0, 0) - cov) < 0.05 * cov);
    CHECK(q.achieved_tol < 1e-6);
}

TEST_CASE("quadrature moments, symmetric case") {
    Rng rng(4);
    const Eigen::MatrixXd A = test::random_matrix(rng, 2, 2);
    const Eigen::MatrixXd C = 50.0 * (A * A.transpose() + Eigen::MatrixXd::Identity(2, 2));
    const auto q = quadrature_moments(C, Eigen::VectorXd::Zero(2), 0.0, 1e3, 1e-2);
    CHECK(q.mean.norm() < 1e-10);
    CHECK((q.cov - q.cov.transpose()).norm() < 1e-12);
}

TEST_CASE("quadrature refinement converges") {
    const Eigen::MatrixXd C = Eigen::MatrixXd::Constant(1, 1, 100.0);
    const Eigen::VectorXd D = Eigen::VectorXd::Constant(1, 50.0);
    const auto coarse = quadrature_moments(C, D, 1.0, 1e4, 1e-6, 1e-3);
    const auto fine = quadrature_moments(C, D, 1.0, 1e4, 1e-6, 1e-8);
    CHECK(fine.points_per_axis >= coarse.points_per_axis);
    CHECK(std::abs(fine.mean[0] - coarse.mean[0]) <= 1e-3 * std::abs(fine.mean[0]) + 1e-12);
}

TEST_CASE("quadrature rejects bad inputs") {
    Eigen::MatrixXd C(2, 2);
    C << 1, 2, 2, 1;
    CHECK_THROWS_AS(quadrature_moments(C, Eigen::VectorXd::Ones(2), 1.0, 1e4, 1e-6), ConfigError);
    CHECK_THROWS_AS(quadrature_moments(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Ones(4), 1.0, 1e4, 1e-6),
                    ConfigError);
}

TEST_CASE("singular value soft-thresholding") {
    Eigen::MatrixXd Y = Eigen::Vector2d(3.0, 1.0).asDiagonal();
    const auto sv = svt_singular_values(Y, 2.0);
    CHECK(sv[0] == doctest::Approx(1.0));
    CHECK(sv[1] == doctest::Approx(0.0));
    CHECK(test::max_abs(svt_solution(Y, 2.0) - Eigen::Vector2d(1.0, 0.0).asDiagonal().toDenseMatrix()) < 1e-14);
    Rng rng(5);
    const Eigen::MatrixXd Z = test::random_matrix(rng, 4, 6);
    CHECK(test::max_abs(svt_solution(Z, 0.0) - Z) < 1e-12);
    CHECK(svt_solution(Z, 100.0).isZero());
}

TEST_CASE("soft-thresholding minimizes the nuclear-norm objective") {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(rng.below(5)), m = 2 + static_cast<int>(rng.below(5));
        const Eigen::MatrixXd Y = test::random_matrix(rng, n, m);
        const double lambda = 2.0 * rng.uniform();
        const Eigen::MatrixXd X = svt_solution(Y, lambda);
        const double best = nuclear_objective(Y, X, lambda);
        for (int k = 0; k < 100; ++k) {
            const double scale = std::pow(10.0, -3.0 + 3.0 * rng.uniform());
            REQUIRE(nuclear_objective(Y, X + scale * test::random_matrix(rng, n, m), lambda) >= best - 1e-12);
        }
    }
}

TEST_CASE("alternating minimization oracle") {
    Rng rng(7);
    SUBCASE("objective never increases") {
        const auto inst = generate_synthetic(20, 40, 2, NoiseModel::gaussian(0.1), 8, 2);
        const auto res = alt_min_oracle(inst.graph, 0.1, 3, 4, 1e-12, 300);
        REQUIRE(res.history.size() > 2);
        for (std::size_t k = 1; k < res.history.size(); ++k)
            CHECK(res.history[k] <= res.history[k - 1] * (1 + 1e-14) + 1e-14);
        CHECK(res.objective == doctest::Approx(factor_objective(inst.graph, res.U, res.V, 0.1)));
    }
    SUBCASE("recovers a noiseless rank-one matrix") {
        GroundTruth truth{test::random_matrix(rng, 10, 1), test::random_matrix(rng, 10, 1)};
        const auto g = dense_graph(truth.U0 * truth.V0.transpose());
        const auto res = alt_min_oracle(g, 1e-6, 1, 3);
        CHECK(nrmse(res.U, res.V, truth) < 1e-4);
    }
    SUBCASE("matches the soft-thresholded objective when fully observed") {
        const Eigen::MatrixXd Y = test::random_matrix(rng, 8, 3) * test::random_matrix(rng, 8, 3).transpose() +
                                  0.1 * test::random_matrix(rng, 8, 8);
        const double lambda = 0.5;
        const auto res = alt_min_oracle(dense_graph(Y), lambda, 8, 2);
        const double target = nuclear_objective(Y, svt_solution(Y, lambda), lambda);
        CHECK(res.objective == doctest::Approx(target).epsilon(1e-6));
    }
    CHECK_THROWS_AS(alt_min_oracle(dense_graph(Eigen::MatrixXd::Ones(2, 2)), 0.0, 1, 1), ConfigError);
}
