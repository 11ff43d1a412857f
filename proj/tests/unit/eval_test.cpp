#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gpbp/errors.hpp"
#include "gpbp/eval.hpp"
#include "helpers.hpp"

using namespace gpbp;

TEST_CASE("nrmse") {
    Rng rng(1);
    GroundTruth truth{test::random_matrix(rng, 6, 2), test::random_matrix(rng, 9, 2)};
    CHECK(nrmse(truth.U0, truth.V0, truth) == 0.0);

    SUBCASE("zero estimate with unit entries") {
        GroundTruth pm{Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(2, 1)};
        pm.V0(1, 0) = -1.0;
        CHECK(nrmse(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 1), pm) == doctest::Approx(1.0));
    }
    SUBCASE("zero estimate in general") {
        const Eigen::MatrixXd X0 = truth.U0 * truth.V0.transpose();
        CHECK(nrmse(Eigen::MatrixXd::Zero(6, 2), Eigen::MatrixXd::Zero(9, 2), truth) ==
              doctest::Approx(std::sqrt(X0.squaredNorm() / (6.0 * 9.0 * 2.0))));
    }
    SUBCASE("depends on the estimate through U V^T only") {
        const Eigen::MatrixXd U = test::random_matrix(rng, 6, 2), V = test::random_matrix(rng, 9, 2);
        Eigen::MatrixXd Q = test::random_matrix(rng, 2, 2);
        Q += 3.0 * Eigen::MatrixXd::Identity(2, 2);
        const double base = nrmse(U, V, truth);
        CHECK(nrmse(U * Q, V * Q.inverse().transpose(), truth) == doctest::Approx(base).epsilon(1e-12));
    }
    CHECK_THROWS_AS(nrmse(Eigen::MatrixXd::Zero(5, 2), Eigen::MatrixXd::Zero(9, 2), truth), ConfigError);
}

TEST_CASE("rmse_on_edges") {
    const Eigen::MatrixXd U = (Eigen::MatrixXd(2, 1) << 1.0, 2.0).finished();
    const Eigen::MatrixXd V = (Eigen::MatrixXd(2, 1) << 3.0, 3.6).finished();
    const std::vector<Edge> exact{{0, 0, 3.0}, {1, 0, 6.0}};
    CHECK(rmse_on_edges(U, V, exact) == 0.0);
    const std::vector<Edge> one{{0, 0, 4.0}};
    CHECK(rmse_on_edges(U, V, one) == doctest::Approx(1.0));
    // Prediction 7.2 clipped to 5 against a rating of 5.
    const std::vector<Edge> high{{1, 1, 5.0}};
    CHECK(rmse_on_edges(U, V, high) == doctest::Approx(2.2));
    CHECK(rmse_on_edges(U, V, high, ClipRange{1.0, 5.0}) == 0.0);
    CHECK_THROWS_AS(rmse_on_edges(U, V, std::vector<Edge>{}), ConfigError);
}

TEST_CASE("reconstruction_rate") {
    const std::vector<double> v{0.005, 0.02, 0.009};
    CHECK(reconstruction_rate(v, 0.01) == doctest::Approx(2.0 / 3.0));
    CHECK(reconstruction_rate(v, 0.005) == 0.0);
    CHECK(reconstruction_rate(v, 1.0) == 1.0);
    Rng rng(2);
    std::vector<double> r(200);
    for (auto& x : r) x = rng.uniform();
    double last = 0.0;
    for (double eps = 0.01; eps < 1.2; eps += 0.01) {
        const double rate = reconstruction_rate(r, eps);
        CHECK(rate >= last);
        last = rate;
    }
    CHECK_THROWS_AS(reconstruction_rate(v, 0.0), ConfigError);
    CHECK_THROWS_AS(reconstruction_rate(std::vector<double>{}, 0.1), ConfigError);
}

TEST_CASE("summaries and grids") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto s = summarize(v);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(s.n == 4);
    CHECK(summarize(std::vector<double>{7.0}).std_error == 0.0);

    const auto g = geometric_grid(1.0, 5.0, 11);
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 1.0);
    CHECK(g.back() == doctest::Approx(5.0).epsilon(1e-14));
    for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] / g[k - 1] == doctest::Approx(std::pow(5.0, 0.1)));
    CHECK(geometric_grid(2.0, 2.0, 1) == std::vector<double>{2.0});
    CHECK_THROWS_AS(geometric_grid(0.0, 1.0, 3), ConfigError);
}

TEST_CASE("nested cross-validation") {
    const auto inst = generate_synthetic(30, 60, 2, NoiseModel::gaussian(0.1), 10, 3);
    SolverConfig cfg;
    cfg.rank = 2;
    cfg.max_sweeps = 8;
    cfg.mode = Algorithm::alsmp;
    NestedCvConfig cv;
    cv.folds = 4;
    cv.seed = 9;

    SUBCASE("a single lambda is plain cross-validation") {
        cv.lambda_grid = {0.5};
        const auto res = nested_cv(inst.graph, Method{Algorithm::alsmp, false}, cfg, cv);
        REQUIRE(res.folds.size() == 4);
        REQUIRE(res.runs.size() == 4);
        const auto splits = split_folds(inst.graph, 4, cv.validation_fraction, cv.seed);
        std::vector<double> tests;
        for (std::size_t f = 0; f < 4; ++f) {
            CHECK(res.folds[f].ok);
            CHECK(res.folds[f].selected_lambda == 0.5);
            CHECK(res.runs[f].rmse_test.size() == 8);
            // Recompute the held-out score from an independent training run.
            auto c = cfg;
            c.lambda = 0.5;
            const auto fit = solve(inst.graph.subset(splits[f].train), Method{Algorithm::alsmp, false}, c);
            std::vector<Edge> held;
            for (auto e : splits[f].test) held.push_back(inst.graph.edge(e));
            CHECK(res.folds[f].test_rmse_terminal == doctest::Approx(rmse_on_edges(fit.U, fit.V, held)).epsilon(1e-12));
            tests.push_back(res.folds[f].test_rmse_terminal);
            CHECK(res.folds[f].test_rmse_best <= res.folds[f].test_rmse_terminal);
        }
        CHECK(res.terminal.mean == doctest::Approx(summarize(tests).mean));
        CHECK(res.failed_folds == 0);
    }
    SUBCASE("selection picks the lowest terminal validation error") {
        cv.lambda_grid = {0.01, 1.0, 100.0};
        const auto res = nested_cv(inst.graph, Method{Algorithm::alsmp, false}, cfg, cv);
        REQUIRE(res.runs.size() == 12);
        for (std::size_t f = 0; f < 4; ++f) {
            double best = 1e300, lam = 0;
            for (std::size_t l = 0; l < 3; ++l) {
                const auto& run = res.runs[f * 3 + l];
                CHECK(run.fold == static_cast<int>(f));
                if (run.rmse_validation.back() < best) {
                    best = run.rmse_validation.back();
                    lam = run.lambda;
                }
            }
            CHECK(res.folds[f].selected_lambda == lam);
            CHECK(res.folds[f].validation_rmse == best);
        }
        std::ostringstream os;
        write_cv_long_csv(os, "alsmp", "synthetic", res);
        CHECK(os.str().rfind("algorithm,dataset,fold,lambda,sweep,rmse_validation,rmse_test\n", 0) == 0);
    }
    SUBCASE("fold results do not depend on threads") {
        cv.lambda_grid = {0.1, 1.0};
        const auto a = nested_cv(inst.graph, Method{Algorithm::gpbp, true}, cfg, cv);
        cv.threads = 3;
        const auto b = nested_cv(inst.graph, Method{Algorithm::gpbp, true}, cfg, cv);
        for (std::size_t f = 0; f < 4; ++f) CHECK(a.folds[f].test_rmse_terminal == b.folds[f].test_rmse_terminal);
    }
    SUBCASE("empty grid") {
        CHECK_THROWS_AS(nested_cv(inst.graph, Method{}, cfg, cv), ConfigError);
    }
}
