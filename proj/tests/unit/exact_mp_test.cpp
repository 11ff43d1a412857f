#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gpbp/eval.hpp"
#include "gpbp/exact_mp.hpp"
#include "helpers.hpp"

using namespace gpbp;

namespace {

/// Textbook edge-by-edge BP: every cavity is assembled from scratch by
/// summing the damped terms of all other incident edges and solving.
class ReferenceBp {
public:
    ReferenceBp(const ObservationGraph& g, const SolverConfig& cfg, const Eigen::MatrixXd& u0, const Eigen::MatrixXd& v0)
        : g_(g), cfg_(cfg) {
        const auto n = static_cast<Eigen::Index>(g.n_edges());
        u_ = {u0, u0, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
        v_ = {v0, v0, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }

    struct Messages {
        Eigen::MatrixXd cur, prev;
        Eigen::VectorXd alpha_cur, alpha_prev;
    };

    void half_sweep(bool rows_side) {
        const Messages& in = rows_side ? v_ : u_;
        Messages& out = rows_side ? u_ : v_;
        const int R = cfg_.rank;
        const bool use_alpha = cfg_.use_alpha();
        const double gamma = cfg_.damping;
        Eigen::MatrixXd next(R, static_cast<Eigen::Index>(g_.n_edges()));
        Eigen::VectorXd next_alpha(static_cast<Eigen::Index>(g_.n_edges()));
        const int n_nodes = rows_side ? g_.n_rows() : g_.n_cols();
        for (int a = 0; a < n_nodes; ++a) {
            const auto edges = rows_side ? g_.row_edges(a) : g_.col_edges(a);
            for (auto e : edges) {
                Eigen::MatrixXd A = cfg_.lambda * Eigen::MatrixXd::Identity(R, R);
                Eigen::VectorXd B = Eigen::VectorXd::Zero(R);
                for (auto f : edges) {
                    if (f == e) continue;
                    const double y = g_.edge(f).value;
                    const auto fi = static_cast<Eigen::Index>(f);
                    const double wc = (1 - gamma) / (1 + (use_alpha ? y * y * in.alpha_cur[fi] : 0.0));
                    const double wp = gamma / (1 + (use_alpha ? y * y * in.alpha_prev[fi] : 0.0));
                    A += wc * in.cur.col(fi) * in.cur.col(fi).transpose() + wp * in.prev.col(fi) * in.prev.col(fi).transpose();
                    B += wc * y * in.cur.col(fi) + wp * y * in.prev.col(fi);
                }
                const Eigen::MatrixXd Ainv = A.inverse();
                const Eigen::VectorXd m = Ainv * B;
                const auto ei = static_cast<Eigen::Index>(e);
                next.col(ei) = m;
                const double n2 = m.squaredNorm();
                next_alpha[ei] = (use_alpha && !cfg_.drop_alpha && n2 > 0) ? m.dot(Ainv * m) / (n2 * n2) : 0.0;
            }
        }
        out.prev = out.cur;
        out.alpha_prev = out.alpha_cur;
        out.cur = next;
        out.alpha_cur = next_alpha;
    }

    const Messages& u() const { return u_; }
    const Messages& v() const { return v_; }

private:
    const ObservationGraph& g_;
    SolverConfig cfg_;
    Messages u_, v_;
};

double message_gap(const ExactSolver& s, const ReferenceBp& ref) {
    double worst = 0.0;
    for (std::size_t e = 0; e < s.graph().n_edges(); ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        const auto um = s.u_message(e), vm = s.v_message(e);
        worst = std::max({worst, (um.mean - ref.u().cur.col(ei)).cwiseAbs().maxCoeff(),
                          (vm.mean - ref.v().cur.col(ei)).cwiseAbs().maxCoeff(),
                          std::abs(um.alpha - ref.u().alpha_cur[ei]), std::abs(vm.alpha - ref.v().alpha_cur[ei])});
    }
    return worst;
}

SolverConfig small_config(Algorithm mode, double gamma) {
    SolverConfig cfg;
    cfg.rank = 3;
    cfg.lambda = 0.05;
    cfg.damping = gamma;
    cfg.mode = mode;
    cfg.seed = 5;
    cfg.refresh_interval = 4;
    return cfg;
}

}  // namespace

TEST_CASE("exact solver matches reference BP message by message") {
    const auto inst = generate_synthetic(20, 40, 3, NoiseModel::gaussian(0.1), 6, 21);
    for (auto mode : {Algorithm::gpbp, Algorithm::alsmp})
        for (double gamma : {0.0, 0.3}) {
            CAPTURE(to_string(mode));
            CAPTURE(gamma);
            const auto cfg = small_config(mode, gamma);
            Rng rng(8);
            const auto n = static_cast<Eigen::Index>(inst.graph.n_edges());
            const Eigen::MatrixXd u0 = test::random_matrix(rng, 3, n), v0 = test::random_matrix(rng, 3, n);
            ExactSolver solver(inst.graph, cfg);
            solver.init_messages(u0, v0);
            ReferenceBp ref(inst.graph, cfg, u0, v0);
            for (int t = 0; t < 12; ++t) {
                solver.sweep();
                ref.half_sweep(true);
                ref.half_sweep(false);
                const double scale = 1.0 + ref.u().cur.cwiseAbs().maxCoeff() + ref.v().cur.cwiseAbs().maxCoeff();
                REQUIRE(message_gap(solver, ref) / scale < 1e-9);
            }
        }
}

TEST_CASE("initialization") {
    const auto inst = generate_synthetic(10, 20, 2, NoiseModel::none(), 4, 1);
    SolverConfig cfg;
    cfg.rank = 2;
    cfg.seed = 9;
    ExactSolver a(inst.graph, cfg), b(inst.graph, cfg);
    for (std::size_t e = 0; e < inst.graph.n_edges(); ++e) {
        CHECK(a.u_message(e).mean == b.u_message(e).mean);
        CHECK(a.v_message(e).alpha == 0.0);
        CHECK(a.u_message(e).prev_mean == a.u_message(e).mean);
    }
    a.init_planted(inst.truth);
    for (std::size_t e = 0; e < inst.graph.n_edges(); ++e)
        CHECK(a.v_message(e).mean == inst.truth.V0.row(inst.graph.edge(e).col).transpose());

    cfg.init_scale = 0.0;
    ExactSolver z(inst.graph, cfg);
    for (std::size_t e = 0; e < inst.graph.n_edges(); ++e) {
        CHECK(z.u_message(e).mean.isZero());
        CHECK(z.v_message(e).mean.isZero());
    }
    // Zero messages carry no information; the posterior stays at zero.
    z.sweep();
    CHECK(z.U().isZero());
    CHECK(z.V().isZero());
}

TEST_CASE("full damping freezes node fields") {
    const auto inst = generate_synthetic(12, 24, 2, NoiseModel::gaussian(0.1), 5, 3);
    auto cfg = small_config(Algorithm::gpbp, 0.4);
    cfg.rank = 2;
    // With gamma = 1 new terms come only from the previous generation: a row
    // half-sweep then reuses the column messages from before the last V update.
    cfg.damping = 1.0;
    ExactSolver frozen(inst.graph, cfg);
    Rng rng(2);
    const auto n = static_cast<Eigen::Index>(inst.graph.n_edges());
    frozen.init_messages(test::random_matrix(rng, 2, n), test::random_matrix(rng, 2, n));
    frozen.half_sweep(Side::update_U_messages);
    std::vector<Eigen::VectorXd> fields;
    for (int i = 0; i < inst.graph.n_rows(); ++i) fields.push_back(frozen.row_node(i).field);
    frozen.half_sweep(Side::update_V_messages);
    frozen.half_sweep(Side::update_U_messages);
    for (int i = 0; i < inst.graph.n_rows(); ++i)
        CHECK(test::max_abs(frozen.row_node(i).field - fields[i]) < 1e-12);
}

TEST_CASE("degree-one node sends the prior cavity") {
    // Row 0 has a single observation; its outgoing cavity has nothing left.
    ObservationGraph g(2, 3, {{0, 0, 1.0}, {1, 0, 2.0}, {1, 1, 0.5}, {1, 2, -1.0}});
    SolverConfig cfg;
    cfg.rank = 2;
    cfg.lambda = 0.1;
    ExactSolver s(g, cfg);
    s.sweep();
    CHECK(s.u_message(0).mean.isZero());
    CHECK(s.u_message(0).alpha == 0.0);
}

TEST_CASE("noiseless planted state is a fixed point at lambda zero") {
    const auto inst = generate_synthetic(40, 80, 3, NoiseModel::none(), 6, 4);
    SolverConfig cfg;
    cfg.rank = 3;
    cfg.lambda = 0.0;
    cfg.mode = Algorithm::alsmp;
    ExactSolver s(inst.graph, cfg);
    s.init_planted(inst.truth);
    for (int t = 0; t < 10; ++t) {
        s.sweep();
        REQUIRE(nrmse(s.U(), s.V(), inst.truth) < 1e-10);
    }
}

TEST_CASE("dropping alpha reproduces ALS-MP") {
    const auto inst = generate_synthetic(30, 60, 3, NoiseModel::gaussian(0.1), 6, 5);
    for (double gamma : {0.0, 0.3}) {
        auto a = small_config(Algorithm::gpbp, gamma), b = small_config(Algorithm::alsmp, gamma);
        a.drop_alpha = true;
        ExactSolver sa(inst.graph, a), sb(inst.graph, b);
        for (int t = 0; t < 15; ++t) {
            sa.sweep();
            sb.sweep();
            REQUIRE(test::max_abs(sa.U() - sb.U()) < 1e-12);
            REQUIRE(test::max_abs(sa.V() - sb.V()) < 1e-12);
        }
    }
}

TEST_CASE("symmetries") {
    const auto inst = generate_synthetic(16, 32, 2, NoiseModel::gaussian(0.05), 5, 6);
    const auto cfg = small_config(Algorithm::gpbp, 0.2);
    const auto n = static_cast<Eigen::Index>(inst.graph.n_edges());
    Rng rng(3);
    const Eigen::MatrixXd u0 = test::random_matrix(rng, 3, n), v0 = test::random_matrix(rng, 3, n);

    ExactSolver base(inst.graph, cfg);
    base.init_messages(u0, v0);
    for (int t = 0; t < 8; ++t) base.sweep();

    SUBCASE("rotating the messages rotates the posterior") {
        const Eigen::MatrixXd Q = test::random_orthogonal(rng, 3);
        ExactSolver rot(inst.graph, cfg);
        rot.init_messages(Q.transpose() * u0, Q.transpose() * v0);
        for (int t = 0; t < 8; ++t) rot.sweep();
        CHECK(test::max_abs(rot.U() - base.U() * Q) < 1e-8);
        CHECK(test::max_abs(rot.V() - base.V() * Q) < 1e-8);
    }
    SUBCASE("relabelling rows permutes the posterior") {
        std::vector<int> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        std::vector<Edge> edges = inst.graph.edges();
        for (auto& e : edges) e.row = perm[e.row];
        const ObservationGraph g2(16, 32, edges);
        ExactSolver p(g2, cfg);
        p.init_messages(u0, v0);
        for (int t = 0; t < 8; ++t) p.sweep();
        for (int i = 0; i < 16; ++i) CHECK(test::max_abs(p.U().row(perm[i]) - base.U().row(i)) < 1e-10);
        CHECK(test::max_abs(p.V() - base.V()) < 1e-10);
    }
}

TEST_CASE("determinism and thread-count independence") {
    const auto inst = generate_synthetic(30, 60, 3, NoiseModel::gaussian(0.1), 6, 7);
    auto cfg = small_config(Algorithm::gpbp, 0.1);
    cfg.max_sweeps = 20;
    cfg.conv_tol = 1e-300;
    const auto a = run(inst.graph, cfg);
    const auto b = run(inst.graph, cfg);
    cfg.threads = 3;
    const auto c = run(inst.graph, cfg);
    CHECK(a.U == b.U);
    CHECK(a.U == c.U);
    CHECK(a.V == c.V);
    CHECK(a.trace.sweeps() == 20);
}

TEST_CASE("maintained inverses stay accurate") {
    const auto inst = generate_synthetic(30, 60, 3, NoiseModel::gaussian(0.1), 6, 8);
    auto cfg = small_config(Algorithm::gpbp, 0.2);
    cfg.refresh_interval = 50;
    ExactSolver s(inst.graph, cfg);
    for (int t = 0; t < 120; ++t) {
        s.sweep();
        REQUIRE(s.inverse_drift() < 1e-6);
    }
}

TEST_CASE("run reports divergence and validates config") {
    SolverConfig bad;
    bad.damping = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = SolverConfig{};
    bad.rank = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const auto inst = generate_synthetic(10, 20, 2, NoiseModel::gaussian(0.1), 4, 9);
    SolverConfig cfg;
    cfg.rank = 2;
    cfg.divergence_cap = 1e-6;
    CHECK_THROWS_AS(run(inst.graph, cfg), SolverDivergence);
}
