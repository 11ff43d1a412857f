#include "gpbp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "gpbp/errors.hpp"

namespace gpbp {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

namespace {

void write_rows(std::ostream& out, const Eigen::MatrixXd& A) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index r = 0; r < A.cols(); ++r) {
            if (r) out << ',';
            out << format_double(A(i, r));
        }
        out << '\n';
    }
}

void read_rows(std::istream& in, Eigen::MatrixXd& A, std::size_t& line_no) {
    std::string line;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (!std::getline(in, line)) throw ParseError("factor file truncated", line_no);
        ++line_no;
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index r = 0;
        while (std::getline(ss, cell, ',')) {
            if (r >= A.cols()) throw ParseError("too many columns in factor row", line_no);
            A(i, r++) = std::stod(cell);
        }
        if (r != A.cols()) throw ParseError("too few columns in factor row", line_no);
    }
}

}  // namespace

void write_factors(const std::filesystem::path& path, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                   std::uint64_t seed) {
    if (U.cols() != V.cols()) throw ConfigError("factor ranks differ");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << U.rows() << '\n' << V.rows() << '\n' << U.cols() << '\n' << seed << '\n';
    write_rows(out, U);
    write_rows(out, V);
}

FactorFile read_factors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open factor file '" + path.string() + "'", 0);
    long long header[4];
    std::string line;
    std::size_t line_no = 0;
    for (auto& h : header) {
        if (!std::getline(in, line)) throw ParseError("factor header truncated", line_no);
        ++line_no;
        try {
            h = std::stoll(line);
        } catch (const std::exception&) {
            throw ParseError("bad factor header value '" + line + "'", line_no);
        }
    }
    FactorFile f;
    f.U.resize(header[0], header[2]);
    f.V.resize(header[1], header[2]);
    f.seed = static_cast<std::uint64_t>(header[3]);
    read_rows(in, f.U, line_no);
    read_rows(in, f.V, line_no);
    return f;
}

void write_triples(const std::filesystem::path& path, const ObservationGraph& graph) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "# n_rows=" << graph.n_rows() << " n_cols=" << graph.n_cols() << '\n';
    out << "row,col,value\n";
    for (const auto& e : graph.edges()) out << e.row << ',' << e.col << ',' << format_double(e.value) << '\n';
}

ObservationGraph read_triples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open triples file '" + path.string() + "'", 0);
    std::string line;
    std::size_t line_no = 0;
    int n_rows = -1, n_cols = -1;
    std::vector<Edge> edges;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::sscanf(line.c_str(), "# n_rows=%d n_cols=%d", &n_rows, &n_cols);
            continue;
        }
        if (line.rfind("row,", 0) == 0) continue;
        Edge e;
        if (std::sscanf(line.c_str(), "%d,%d,%lf", &e.row, &e.col, &e.value) != 3)
            throw ParseError("malformed triple", line_no);
        edges.push_back(e);
    }
    if (n_rows < 0 || n_cols < 0) throw ParseError("missing dimension comment", 0);
    return ObservationGraph(n_rows, n_cols, std::move(edges));
}

}  // namespace gpbp
