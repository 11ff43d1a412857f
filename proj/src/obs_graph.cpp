#include "gpbp/obs_graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gpbp/errors.hpp"

namespace gpbp {

namespace {

std::uint64_t pair_key(int i, int j) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) | static_cast<std::uint32_t>(j);
}

}  // namespace

ObservationGraph::ObservationGraph(int n_rows, int n_cols, std::vector<Edge> edges)
    : n_rows_(n_rows), n_cols_(n_cols), edges_(std::move(edges)) {
    if (n_rows < 0 || n_cols < 0) throw ConfigError("graph dimensions must be nonnegative");
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(edges_.size() * 2);
    for (const auto& e : edges_) {
        if (e.row < 0 || e.row >= n_rows_ || e.col < 0 || e.col >= n_cols_)
            throw ConfigError("edge (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                              ") out of range");
        if (!seen.insert(pair_key(e.row, e.col)).second)
            throw ConfigError("duplicate edge (" + std::to_string(e.row) + "," + std::to_string(e.col) + ")");
    }
    build_adjacency();
}

void ObservationGraph::build_adjacency() {
    row_offset_.assign(static_cast<std::size_t>(n_rows_) + 1, 0);
    col_offset_.assign(static_cast<std::size_t>(n_cols_) + 1, 0);
    for (const auto& e : edges_) {
        ++row_offset_[e.row + 1];
        ++col_offset_[e.col + 1];
    }
    std::partial_sum(row_offset_.begin(), row_offset_.end(), row_offset_.begin());
    std::partial_sum(col_offset_.begin(), col_offset_.end(), col_offset_.begin());
    row_index_.resize(edges_.size());
    col_index_.resize(edges_.size());
    std::vector<std::size_t> rfill(row_offset_.begin(), row_offset_.end() - 1);
    std::vector<std::size_t> cfill(col_offset_.begin(), col_offset_.end() - 1);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        row_index_[rfill[edges_[k].row]++] = k;
        col_index_[cfill[edges_[k].col]++] = k;
    }
}

void ObservationGraph::set_ids(std::vector<std::string> row_ids, std::vector<std::string> col_ids) {
    if (!row_ids.empty() && static_cast<int>(row_ids.size()) != n_rows_)
        throw ConfigError("row id table size mismatch");
    if (!col_ids.empty() && static_cast<int>(col_ids.size()) != n_cols_)
        throw ConfigError("col id table size mismatch");
    row_ids_ = std::move(row_ids);
    col_ids_ = std::move(col_ids);
}

ObservationGraph ObservationGraph::subset(std::span<const std::size_t> edge_indices) const {
    std::vector<Edge> out;
    out.reserve(edge_indices.size());
    for (auto k : edge_indices) out.push_back(edges_.at(k));
    ObservationGraph g(n_rows_, n_cols_, std::move(out));
    g.row_ids_ = row_ids_;
    g.col_ids_ = col_ids_;
    return g;
}

ObservationGraph ObservationGraph::with_values(std::span<const double> values) const {
    if (values.size() != edges_.size()) throw ConfigError("value count does not match edge count");
    ObservationGraph g = *this;
    for (std::size_t k = 0; k < values.size(); ++k) g.edges_[k].value = values[k];
    return g;
}

bool ObservationGraph::check_adjacency() const {
    if (row_offset_.back() != edges_.size() || col_offset_.back() != edges_.size()) return false;
    std::vector<char> hit_r(edges_.size(), 0), hit_c(edges_.size(), 0);
    for (int i = 0; i < n_rows_; ++i)
        for (auto k : row_edges(i)) {
            if (k >= edges_.size() || edges_[k].row != i || hit_r[k]) return false;
            hit_r[k] = 1;
        }
    for (int j = 0; j < n_cols_; ++j)
        for (auto k : col_edges(j)) {
            if (k >= edges_.size() || edges_[k].col != j || hit_c[k]) return false;
            hit_c[k] = 1;
        }
    return std::all_of(hit_r.begin(), hit_r.end(), [](char c) { return c; }) &&
           std::all_of(hit_c.begin(), hit_c.end(), [](char c) { return c; });
}

NoiseModel NoiseModel::gaussian(double sigma) {
    NoiseModel m{Kind::gaussian, sigma, 1.0};
    m.validate();
    return m;
}

NoiseModel NoiseModel::bernoulli_gaussian(double p, double sigma) {
    NoiseModel m{Kind::bernoulli_gaussian, sigma, p};
    m.validate();
    return m;
}

void NoiseModel::validate() const {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("noise p must lie in [0, 1]");
}

double NoiseModel::sample(Rng& rng) const {
    switch (kind) {
        case Kind::none: return 0.0;
        case Kind::gaussian: return sigma * rng.normal();
        case Kind::bernoulli_gaussian: {
            // Draw both variates unconditionally so the stream length is fixed.
            const bool hit = rng.bernoulli(p);
            const double z = rng.normal();
            return hit ? sigma * z : 0.0;
        }
    }
    return 0.0;
}

std::string to_string(NoiseModel::Kind kind) {
    switch (kind) {
        case NoiseModel::Kind::none: return "none";
        case NoiseModel::Kind::gaussian: return "gaussian";
        case NoiseModel::Kind::bernoulli_gaussian: return "bernoulli_gaussian";
    }
    return "?";
}

NoiseModel::Kind noise_kind_from_string(const std::string& name) {
    if (name == "none") return NoiseModel::Kind::none;
    if (name == "gaussian") return NoiseModel::Kind::gaussian;
    if (name == "bernoulli_gaussian" || name == "sparse") return NoiseModel::Kind::bernoulli_gaussian;
    throw ConfigError("unknown noise kind '" + name + "'");
}

ObservationGraph generate_mask(int n_rows, int n_cols, int col_degree, std::uint64_t seed) {
    if (n_rows <= 0 || n_cols <= 0) throw ConfigError("mask dimensions must be positive");
    if (col_degree < 1) throw ConfigError("col_degree must be >= 1");
    const long long total = static_cast<long long>(col_degree) * n_cols;
    if (total % n_rows != 0)
        throw ConfigError("col_degree * n_cols / n_rows = " + std::to_string(total) + "/" +
                          std::to_string(n_rows) + " is not integral");
    const long long row_degree = total / n_rows;
    if (col_degree > n_rows) throw ConfigError("col_degree exceeds n_rows");
    if (row_degree > n_cols) throw ConfigError("row degree exceeds n_cols");

    // Dense masks are drawn as the complement of a sparse one, where the
    // swap repair below has room to work.
    if (2LL * col_degree > n_rows) {
        std::vector<char> hole(static_cast<std::size_t>(n_rows) * n_cols, 0);
        if (col_degree < n_rows) {
            const auto comp = generate_mask(n_rows, n_cols, n_rows - col_degree, seed);
            for (const auto& e : comp.edges()) hole[static_cast<std::size_t>(e.row) * n_cols + e.col] = 1;
        }
        std::vector<Edge> edges;
        edges.reserve(static_cast<std::size_t>(total));
        for (int i = 0; i < n_rows; ++i)
            for (int j = 0; j < n_cols; ++j)
                if (!hole[static_cast<std::size_t>(i) * n_cols + j]) edges.push_back({i, j, 0.0});
        return ObservationGraph(n_rows, n_cols, std::move(edges));
    }

    const auto n_edges = static_cast<std::size_t>(total);
    std::vector<int> row_stub(n_edges), cols(n_edges);
    for (std::size_t k = 0; k < n_edges; ++k) {
        row_stub[k] = static_cast<int>(k / static_cast<std::size_t>(row_degree));
        cols[k] = static_cast<int>(k / static_cast<std::size_t>(col_degree));
    }

    constexpr int kMaxRestarts = 1000;
    const std::size_t max_attempts = 1000 + 50 * n_edges;
    Rng rng(seed);
    for (int restart = 0; restart < kMaxRestarts; ++restart) {
        std::vector<int> rows = row_stub;
        rng.shuffle(rows.begin(), rows.end());

        // Stub pairing, then parallel edges are removed by degree-preserving swaps
        // with uniformly drawn partner edges.
        std::unordered_map<std::uint64_t, int> count;
        count.reserve(n_edges * 2);
        for (std::size_t k = 0; k < n_edges; ++k) ++count[pair_key(rows[k], cols[k])];
        std::vector<std::size_t> dups;
        {
            std::unordered_map<std::uint64_t, int> seen;
            for (std::size_t k = 0; k < n_edges; ++k)
                if (++seen[pair_key(rows[k], cols[k])] > 1) dups.push_back(k);
        }
        std::size_t attempts = 0;
        bool ok = true;
        for (auto e : dups) {
            while (count[pair_key(rows[e], cols[e])] > 1) {
                if (++attempts > max_attempts) {
                    ok = false;
                    break;
                }
                const auto f = static_cast<std::size_t>(rng.below(n_edges));
                const int i = rows[e], j = cols[e], i2 = rows[f], j2 = cols[f];
                if (i == i2 || j == j2) continue;
                const auto a = pair_key(i, j2), b = pair_key(i2, j);
                if (count.count(a) && count[a] > 0) continue;
                if (count.count(b) && count[b] > 0) continue;
                --count[pair_key(i, j)];
                --count[pair_key(i2, j2)];
                ++count[a];
                ++count[b];
                cols[e] = j2;
                cols[f] = j;
            }
            if (!ok) break;
        }
        if (!ok) continue;

        std::vector<Edge> edges(n_edges);
        for (std::size_t k = 0; k < n_edges; ++k) edges[k] = {rows[k], cols[k], 0.0};
        std::sort(edges.begin(), edges.end(),
                  [](const Edge& x, const Edge& y) { return x.row != y.row ? x.row < y.row : x.col < y.col; });
        return ObservationGraph(n_rows, n_cols, std::move(edges));
    }
    throw ConfigError("mask sampling failed after " + std::to_string(kMaxRestarts) +
                      " restarts; degree sequence is likely infeasible");
}

SyntheticInstance generate_synthetic(int n_rows, int n_cols, int rank, const NoiseModel& noise,
                                     int col_degree, std::uint64_t seed) {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    noise.validate();
    ObservationGraph mask = generate_mask(n_rows, n_cols, col_degree, derive_seed(seed, {1}));

    GroundTruth truth{Eigen::MatrixXd(n_rows, rank), Eigen::MatrixXd(n_cols, rank)};
    Rng factor_rng(derive_seed(seed, {2}));
    for (int i = 0; i < n_rows; ++i)
        for (int r = 0; r < rank; ++r) truth.U0(i, r) = factor_rng.normal();
    for (int j = 0; j < n_cols; ++j)
        for (int r = 0; r < rank; ++r) truth.V0(j, r) = factor_rng.normal();

    Rng noise_rng(derive_seed(seed, {3}));
    std::vector<double> values(mask.n_edges());
    for (std::size_t k = 0; k < mask.n_edges(); ++k) {
        const auto& e = mask.edge(k);
        values[k] = truth.entry(e.row, e.col) + noise.sample(noise_rng);
    }
    return {mask.with_values(values), std::move(truth)};
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(trim(s.substr(pos)));
            break;
        }
        out.push_back(trim(s.substr(pos, next - pos)));
        pos = next + sep.size();
    }
    return out;
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    // std::from_chars for double is available in libstdc++ 11.
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

RatingsLoad load_ratings(const std::filesystem::path& path, RatingFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open ratings file '" + path.string() + "'", 0);

    std::unordered_map<std::string, int> user_index, item_index;
    std::vector<std::string> user_ids, item_ids;
    std::unordered_map<std::uint64_t, std::size_t> position;
    std::vector<Edge> edges;
    std::size_t duplicates = 0;

    auto intern = [](std::unordered_map<std::string, int>& index, std::vector<std::string>& ids,
                     std::string_view key) {
        auto [it, inserted] = index.emplace(std::string(key), static_cast<int>(ids.size()));
        if (inserted) ids.emplace_back(key);
        return it->second;
    };

    std::string line;
    std::size_t line_no = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto fields = format == RatingFormat::movielens_dat ? split(text, "::") : split(text, ",");
        double rating = 0.0;
        const bool numeric = fields.size() >= 3 && parse_double(fields[2], rating);
        if (format == RatingFormat::csv && first_content && !numeric) {
            first_content = false;  // header
            continue;
        }
        first_content = false;
        if (fields.size() < 3 || fields[0].empty() || fields[1].empty())
            throw ParseError("malformed rating line: expected at least 3 fields", line_no);
        if (!numeric) throw ParseError("malformed rating value '" + std::string(fields[2]) + "'", line_no);
        const int u = intern(user_index, user_ids, fields[0]);
        const int it = intern(item_index, item_ids, fields[1]);
        const auto key = pair_key(u, it);
        if (auto found = position.find(key); found != position.end()) {
            edges[found->second].value = rating;
            ++duplicates;
        } else {
            position.emplace(key, edges.size());
            edges.push_back({u, it, rating});
        }
    }
    if (edges.empty()) throw ParseError("no ratings in '" + path.string() + "'", 0);
    ObservationGraph g(static_cast<int>(user_ids.size()), static_cast<int>(item_ids.size()), std::move(edges));
    g.set_ids(std::move(user_ids), std::move(item_ids));
    return {std::move(g), duplicates};
}

ObservationGraph sparsify_by_user(const ObservationGraph& graph, int max_ratings) {
    if (max_ratings < 1) throw ConfigError("max_ratings must be >= 1");
    std::vector<int> new_row(graph.n_rows(), -1), new_col(graph.n_cols(), -1);
    int n_rows = 0;
    for (int i = 0; i < graph.n_rows(); ++i)
        if (graph.row_degree(i) < static_cast<std::size_t>(max_ratings) && graph.row_degree(i) > 0)
            new_row[i] = n_rows++;
    std::vector<char> used(graph.n_cols(), 0);
    for (const auto& e : graph.edges())
        if (new_row[e.row] >= 0) used[e.col] = 1;
    int n_cols = 0;
    for (int j = 0; j < graph.n_cols(); ++j)
        if (used[j]) new_col[j] = n_cols++;

    std::vector<Edge> edges;
    for (const auto& e : graph.edges())
        if (new_row[e.row] >= 0) edges.push_back({new_row[e.row], new_col[e.col], e.value});

    auto id_of = [](const std::vector<std::string>& ids, int k) {
        return ids.empty() ? std::to_string(k) : ids[k];
    };
    std::vector<std::string> row_ids(n_rows), col_ids(n_cols);
    for (int i = 0; i < graph.n_rows(); ++i)
        if (new_row[i] >= 0) row_ids[new_row[i]] = id_of(graph.row_ids(), i);
    for (int j = 0; j < graph.n_cols(); ++j)
        if (new_col[j] >= 0) col_ids[new_col[j]] = id_of(graph.col_ids(), j);

    ObservationGraph out(n_rows, n_cols, std::move(edges));
    out.set_ids(std::move(row_ids), std::move(col_ids));
    return out;
}

std::vector<FoldSplit> split_folds(const ObservationGraph& graph, int k, double validation_fraction,
                                   std::uint64_t seed) {
    if (k < 2) throw ConfigError("fold count k must be >= 2");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in [0, 1)");
    const std::size_t n = graph.n_edges();
    if (static_cast<std::size_t>(k) > n)
        throw ConfigError("fold count " + std::to_string(k) + " exceeds edge count " + std::to_string(n));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, {0}));
    rng.shuffle(perm.begin(), perm.end());

    std::vector<std::size_t> fold_of(n);
    for (int f = 0; f < k; ++f) {
        const std::size_t begin = n * f / k, end = n * (f + 1) / k;
        for (std::size_t p = begin; p < end; ++p) fold_of[perm[p]] = static_cast<std::size_t>(f);
    }

    std::vector<FoldSplit> folds(k);
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> rest;
        rest.reserve(n);
        for (std::size_t e = 0; e < n; ++e) {
            if (fold_of[e] == static_cast<std::size_t>(f))
                folds[f].test.push_back(e);
            else
                rest.push_back(e);
        }
        Rng fold_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(f)}));
        fold_rng.shuffle(rest.begin(), rest.end());
        const auto n_val = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(rest.size())));
        folds[f].validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
        folds[f].train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
        std::sort(folds[f].validation.begin(), folds[f].validation.end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

}  // namespace gpbp
