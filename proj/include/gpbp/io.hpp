#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "gpbp/obs_graph.hpp"

namespace gpbp {

// Ground-truth / factor file: four header lines `N`, `M`, `R`, `seed`, then the
// N rows of U followed by the M rows of V, one row per line, comma separated.
void write_factors(const std::filesystem::path& path, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                   std::uint64_t seed);

struct FactorFile {
    Eigen::MatrixXd U;
    Eigen::MatrixXd V;
    std::uint64_t seed = 0;
};

FactorFile read_factors(const std::filesystem::path& path);

/// Observation triples as CSV with header `row,col,value`; a leading comment
/// line `# n_rows=N n_cols=M` preserves the dimensions.
void write_triples(const std::filesystem::path& path, const ObservationGraph& graph);
ObservationGraph read_triples(const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

}  // namespace gpbp
