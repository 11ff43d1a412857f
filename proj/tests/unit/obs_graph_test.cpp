#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gpbp/errors.hpp"
#include "gpbp/obs_graph.hpp"
#include "helpers.hpp"

using namespace gpbp;

namespace {

void require_regular(const ObservationGraph& g, int col_degree, int row_degree) {
    for (int j = 0; j < g.n_cols(); ++j) REQUIRE(g.col_degree(j) == static_cast<std::size_t>(col_degree));
    for (int i = 0; i < g.n_rows(); ++i) REQUIRE(g.row_degree(i) == static_cast<std::size_t>(row_degree));
}

ObservationGraph full_graph(int n, int m) {
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) edges.push_back({i, j, static_cast<double>(i * m + j)});
    return {n, m, std::move(edges)};
}

}  // namespace

TEST_CASE("graph construction validates edges and builds adjacency") {
    ObservationGraph g(2, 3, {{0, 0, 1.0}, {1, 2, 2.0}, {0, 2, 3.0}});
    CHECK(g.n_edges() == 3);
    CHECK(g.row_degree(0) == 2);
    CHECK(g.col_degree(2) == 2);
    CHECK(g.check_adjacency());

    CHECK_THROWS_AS(ObservationGraph(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), ConfigError);
    CHECK_THROWS_AS(ObservationGraph(2, 2, {{2, 0, 1.0}}), ConfigError);
    CHECK_THROWS_AS(ObservationGraph(2, 2, {{0, -1, 1.0}}), ConfigError);

    const std::size_t keep[] = {2, 0};
    const auto sub = g.subset(keep);
    CHECK(sub.n_edges() == 2);
    CHECK(sub.edge(0).value == 3.0);
    CHECK(sub.check_adjacency());
    const double vals[] = {7, 8, 9};
    CHECK(g.with_values(vals).edge(1).value == 8.0);
}

TEST_CASE("generate_mask degrees") {
    SUBCASE("tiny") {
        const auto g = generate_mask(2, 4, 1, 0);
        require_regular(g, 1, 2);
    }
    SUBCASE("experiment scale") {
        const auto g = generate_mask(500, 1000, 19, 3);
        CHECK(g.n_edges() == 19000);
        require_regular(g, 19, 38);
        CHECK(g.check_adjacency());
    }
    SUBCASE("many seeds") {
        for (std::uint64_t s = 0; s < 20; ++s) require_regular(generate_mask(30, 60, 4, s), 4, 8);
    }
    SUBCASE("dense and complete masks") {
        require_regular(generate_mask(10, 20, 10, 1), 10, 20);
        require_regular(generate_mask(10, 20, 8, 1), 8, 16);
        require_regular(generate_mask(60, 60, 60, 2), 60, 60);
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(generate_mask(3, 4, 2, 0), ConfigError);
        CHECK_THROWS_AS(generate_mask(3, 3, 4, 0), ConfigError);
        CHECK_THROWS_AS(generate_mask(0, 3, 1, 0), ConfigError);
        CHECK_THROWS_AS(generate_mask(3, 3, 0, 0), ConfigError);
    }
}

TEST_CASE("generate_mask is deterministic and seed dependent") {
    const auto a = generate_mask(40, 80, 5, 9), b = generate_mask(40, 80, 5, 9), c = generate_mask(40, 80, 5, 10);
    REQUIRE(a.n_edges() == b.n_edges());
    bool same_as_c = true;
    for (std::size_t e = 0; e < a.n_edges(); ++e) {
        CHECK(a.edge(e).row == b.edge(e).row);
        CHECK(a.edge(e).col == b.edge(e).col);
        same_as_c = same_as_c && a.edge(e).row == c.edge(e).row && a.edge(e).col == c.edge(e).col;
    }
    CHECK_FALSE(same_as_c);
}

TEST_CASE("generate_synthetic noise models") {
    SUBCASE("noiseless values equal the planted products") {
        const auto inst = generate_synthetic(20, 40, 3, NoiseModel::none(), 5, 1);
        for (const auto& e : inst.graph.edges()) CHECK(e.value == doctest::Approx(inst.truth.entry(e.row, e.col)).epsilon(1e-15));
        CHECK(inst.truth.U0.rows() == 20);
        CHECK(inst.truth.V0.rows() == 40);
    }
    SUBCASE("gaussian noise variance") {
        const auto inst = generate_synthetic(500, 1000, 2, NoiseModel::gaussian(0.01), 19, 2);
        double s2 = 0.0;
        for (const auto& e : inst.graph.edges()) s2 += std::pow(e.value - inst.truth.entry(e.row, e.col), 2);
        const double var = s2 / static_cast<double>(inst.graph.n_edges());
        CHECK(std::abs(var - 1e-4) < 0.1e-4);
    }
    SUBCASE("sparse noise fraction") {
        const auto inst = generate_synthetic(500, 1000, 2, NoiseModel::bernoulli_gaussian(0.1, 5.0), 19, 3);
        std::size_t corrupted = 0;
        for (const auto& e : inst.graph.edges()) corrupted += (e.value != inst.truth.entry(e.row, e.col));
        const double frac = static_cast<double>(corrupted) / static_cast<double>(inst.graph.n_edges());
        CHECK(std::abs(frac - 0.1) < 0.01);
    }
    SUBCASE("noise validation") {
        CHECK_THROWS_AS(NoiseModel::gaussian(-1.0).validate(), ConfigError);
        CHECK_THROWS_AS(NoiseModel::bernoulli_gaussian(1.5, 1.0).validate(), ConfigError);
        CHECK(noise_kind_from_string(to_string(NoiseModel::Kind::bernoulli_gaussian)) ==
              NoiseModel::Kind::bernoulli_gaussian);
        CHECK_THROWS_AS(noise_kind_from_string("laplace"), ConfigError);
    }
}

TEST_CASE("load_ratings") {
    test::TempDir dir;
    SUBCASE("movielens line") {
        const auto p = dir.write("r.dat", "1::1193::5::978300760\n1::661::3::978302109\n2::1193::4::978300000\n");
        const auto load = load_ratings(p, RatingFormat::movielens_dat);
        const auto& g = load.graph;
        REQUIRE(g.n_edges() == 3);
        CHECK(g.row_ids()[g.edge(0).row] == "1");
        CHECK(g.col_ids()[g.edge(0).col] == "1193");
        CHECK(g.edge(0).value == 5.0);
        CHECK(g.n_rows() == 2);
        CHECK(g.n_cols() == 2);
        CHECK(load.duplicates == 0);
    }
    SUBCASE("csv with header") {
        const auto p = dir.write("r.csv", "u,i,r\n0,0,3.5\n");
        const auto g = load_ratings(p, RatingFormat::csv).graph;
        REQUIRE(g.n_edges() == 1);
        CHECK(g.edge(0).value == 3.5);
    }
    SUBCASE("duplicates keep the last rating") {
        const auto p = dir.write("d.csv", "user,item,rating\n7,8,1\n7,8,4\n");
        const auto load = load_ratings(p, RatingFormat::csv);
        CHECK(load.graph.n_edges() == 1);
        CHECK(load.graph.edge(0).value == 4.0);
        CHECK(load.duplicates == 1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(load_ratings(dir.write("e.dat", ""), RatingFormat::movielens_dat), ParseError);
        CHECK_THROWS_AS(load_ratings(dir / "missing.dat", RatingFormat::movielens_dat), ParseError);
        try {
            load_ratings(dir.write("m.dat", "1::2::3::4\n1::x\n"), RatingFormat::movielens_dat);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
        CHECK_THROWS_AS(load_ratings(dir.write("v.dat", "1::2::bad::4\n"), RatingFormat::movielens_dat), ParseError);
    }
}

TEST_CASE("sparsify_by_user keeps users strictly below the threshold") {
    // user 0: 3 ratings, user 1: 2 ratings, user 2: 1 rating on an item nobody else rated.
    ObservationGraph g(3, 4, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {1, 0, 4}, {1, 1, 5}, {2, 3, 1}});
    const auto s = sparsify_by_user(g, 3);
    CHECK(s.n_rows() == 2);
    CHECK(s.n_edges() == 3);
    CHECK(s.n_cols() == 3);
    CHECK(s.check_adjacency());
    CHECK(s.row_ids() == std::vector<std::string>{"1", "2"});
    const auto none = sparsify_by_user(g, 1);
    CHECK(none.empty());
    CHECK(none.n_rows() == 0);
    CHECK_THROWS_AS(sparsify_by_user(g, 0), ConfigError);
}

TEST_CASE("split_folds partitions") {
    const auto g = full_graph(10, 10);
    SUBCASE("ten folds with validation") {
        const auto folds = split_folds(g, 10, 0.05, 4);
        REQUIRE(folds.size() == 10);
        std::vector<int> seen(100, 0);
        for (const auto& f : folds) {
            CHECK(f.test.size() == 10);
            CHECK(f.validation.size() >= 4);
            CHECK(f.validation.size() <= 5);
            CHECK(f.train.size() + f.validation.size() == 90);
            std::set<std::size_t> all(f.train.begin(), f.train.end());
            for (auto e : f.validation) CHECK(all.insert(e).second);
            for (auto e : f.test) CHECK(all.insert(e).second);
            CHECK(all.size() == 100);
            for (auto e : f.test) ++seen[e];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
    SUBCASE("leave one out") {
        const auto folds = split_folds(g, 100, 0.0, 1);
        for (const auto& f : folds) CHECK(f.test.size() == 1);
    }
    SUBCASE("no validation") {
        for (const auto& f : split_folds(g, 10, 0.0, 1)) {
            CHECK(f.validation.empty());
            CHECK(f.train.size() == 90);
        }
    }
    SUBCASE("determinism") {
        const auto a = split_folds(g, 10, 0.05, 3), b = split_folds(g, 10, 0.05, 3);
        for (std::size_t f = 0; f < a.size(); ++f) {
            CHECK(a[f].test == b[f].test);
            CHECK(a[f].validation == b[f].validation);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(split_folds(g, 101, 0.05, 1), ConfigError);
        CHECK_THROWS_AS(split_folds(g, 1, 0.05, 1), ConfigError);
        CHECK_THROWS_AS(split_folds(g, 10, 1.0, 1), ConfigError);
    }
}
