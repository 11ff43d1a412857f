#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gpbp/rng.hpp"

namespace gpbp {

struct Edge {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

/// Sparse bipartite observation pattern with values. Adjacency lists hold
/// indices into edges() and are rebuilt on every construction.
class ObservationGraph {
public:
    ObservationGraph() = default;

    /// Throws ConfigError on out-of-range indices or repeated (row, col) pairs.
    ObservationGraph(int n_rows, int n_cols, std::vector<Edge> edges);

    int n_rows() const { return n_rows_; }
    int n_cols() const { return n_cols_; }
    std::size_t n_edges() const { return edges_.size(); }
    bool empty() const { return edges_.empty(); }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(std::size_t e) const { return edges_[e]; }

    std::span<const std::size_t> row_edges(int i) const {
        return {row_index_.data() + row_offset_[i], row_offset_[i + 1] - row_offset_[i]};
    }
    std::span<const std::size_t> col_edges(int j) const {
        return {col_index_.data() + col_offset_[j], col_offset_[j + 1] - col_offset_[j]};
    }
    std::size_t row_degree(int i) const { return row_offset_[i + 1] - row_offset_[i]; }
    std::size_t col_degree(int j) const { return col_offset_[j + 1] - col_offset_[j]; }

    /// Original identifiers (for ingested data); empty for synthetic graphs.
    const std::vector<std::string>& row_ids() const { return row_ids_; }
    const std::vector<std::string>& col_ids() const { return col_ids_; }
    void set_ids(std::vector<std::string> row_ids, std::vector<std::string> col_ids);

    /// Same node sets, only the listed edges (in the given order).
    ObservationGraph subset(std::span<const std::size_t> edge_indices) const;

    /// Replace edge values, keeping the pattern.
    ObservationGraph with_values(std::span<const double> values) const;

    /// True when adjacency lists are an exact inverse of the edge list.
    bool check_adjacency() const;

private:
    void build_adjacency();

    int n_rows_ = 0;
    int n_cols_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::size_t> row_offset_{0};
    std::vector<std::size_t> row_index_;
    std::vector<std::size_t> col_offset_{0};
    std::vector<std::size_t> col_index_;
    std::vector<std::string> row_ids_;
    std::vector<std::string> col_ids_;
};

/// Planted factors; X0 = U0 * V0^T.
struct GroundTruth {
    Eigen::MatrixXd U0;  // N x R
    Eigen::MatrixXd V0;  // M x R

    int rank() const { return static_cast<int>(U0.cols()); }
    double entry(int i, int j) const { return U0.row(i).dot(V0.row(j)); }
};

struct NoiseModel {
    enum class Kind { none, gaussian, bernoulli_gaussian };

    Kind kind = Kind::none;
    double sigma = 0.0;
    double p = 0.0;

    static NoiseModel none() { return {}; }
    static NoiseModel gaussian(double sigma);
    static NoiseModel bernoulli_gaussian(double p, double sigma);

    double sample(Rng& rng) const;
    void validate() const;
};

std::string to_string(NoiseModel::Kind kind);
NoiseModel::Kind noise_kind_from_string(const std::string& name);

/// Degree-regular bipartite mask: every column has col_degree edges and every
/// row col_degree * n_cols / n_rows edges. Values are zero.
ObservationGraph generate_mask(int n_rows, int n_cols, int col_degree, std::uint64_t seed);

struct SyntheticInstance {
    ObservationGraph graph;
    GroundTruth truth;
};

SyntheticInstance generate_synthetic(int n_rows, int n_cols, int rank, const NoiseModel& noise,
                                     int col_degree, std::uint64_t seed);

enum class RatingFormat { movielens_dat, csv };

struct RatingsLoad {
    ObservationGraph graph;
    std::size_t duplicates = 0;  // (user, item) repeats; the last rating wins
};

RatingsLoad load_ratings(const std::filesystem::path& path, RatingFormat format);

/// Keep users with strictly fewer than max_ratings ratings; items left with no
/// ratings are dropped. Both sides are reindexed densely, ids carried along.
ObservationGraph sparsify_by_user(const ObservationGraph& graph, int max_ratings);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

std::vector<FoldSplit> split_folds(const ObservationGraph& graph, int k, double validation_fraction,
                                   std::uint64_t seed);

}  // namespace gpbp
