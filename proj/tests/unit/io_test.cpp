#include <doctest.h>

#include <cmath>
#include <limits>

#include "gpbp/errors.hpp"
#include "gpbp/io.hpp"
#include "helpers.hpp"

using namespace gpbp;

TEST_CASE("factor files round-trip exactly") {
    test::TempDir dir;
    Rng rng(1);
    const Eigen::MatrixXd U = test::random_matrix(rng, 5, 3), V = test::random_matrix(rng, 7, 3);
    write_factors(dir / "f.txt", U, V, 42);
    const auto f = read_factors(dir / "f.txt");
    CHECK(f.seed == 42);
    CHECK(f.U == U);
    CHECK(f.V == V);
    const auto text = test::slurp(dir / "f.txt");
    CHECK(text.rfind("5\n7\n3\n42\n", 0) == 0);
}

TEST_CASE("factor file errors") {
    test::TempDir dir;
    CHECK_THROWS_AS(read_factors(dir / "missing"), ParseError);
    CHECK_THROWS_AS(read_factors(dir.write("t", "2\n1\n1\n0\n1.0\n")), ParseError);
    CHECK_THROWS_AS(read_factors(dir.write("c", "1\n1\n2\n0\n1,2,3\n4,5\n")), ParseError);
    CHECK_THROWS_AS(write_factors(dir / "x", Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 3), 0), ConfigError);
}

TEST_CASE("triples round-trip") {
    test::TempDir dir;
    ObservationGraph g(3, 4, {{0, 1, 0.1}, {2, 3, -2.5}, {1, 0, 1e-300}});
    write_triples(dir / "t.csv", g);
    const auto h = read_triples(dir / "t.csv");
    CHECK(h.n_rows() == 3);
    CHECK(h.n_cols() == 4);
    REQUIRE(h.n_edges() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(h.edge(e).row == g.edge(e).row);
        CHECK(h.edge(e).col == g.edge(e).col);
        CHECK(h.edge(e).value == g.edge(e).value);
    }
    CHECK_THROWS_AS(read_triples(dir.write("bad.csv", "row,col,value\n0,1,2\n")), ParseError);
}

TEST_CASE("format_double is shortest round-trip") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1e-4) == "1e-04");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}
