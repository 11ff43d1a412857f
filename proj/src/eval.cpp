#include "gpbp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gpbp/io.hpp"
#include "gpbp/parallel.hpp"

namespace gpbp {

double nrmse(const Eigen::MatrixXd& U_hat, const Eigen::MatrixXd& V_hat, const GroundTruth& truth) {
    const auto N = truth.U0.rows(), M = truth.V0.rows();
    if (U_hat.rows() != N || V_hat.rows() != M || U_hat.cols() != V_hat.cols())
        throw ConfigError("nrmse: estimate dimensions do not match the ground truth");
    // Dense residual, entry by entry; the Gram-matrix shortcut loses digits
    // when the estimate is close to the truth.
    const Eigen::MatrixXd X0 = truth.U0 * truth.V0.transpose();
    const Eigen::MatrixXd X = U_hat * V_hat.transpose();
    const double sq = (X0 - X).squaredNorm();
    return std::sqrt(sq / (static_cast<double>(N) * static_cast<double>(M) * truth.rank()));
}

double rmse_on_edges(const Eigen::MatrixXd& U_hat, const Eigen::MatrixXd& V_hat, std::span<const Edge> edges,
                     std::optional<ClipRange> clip) {
    if (edges.empty()) throw ConfigError("rmse_on_edges: edge set is empty");
    double sum = 0.0;
    for (const auto& e : edges) {
        if (e.row < 0 || e.row >= U_hat.rows() || e.col < 0 || e.col >= V_hat.rows())
            throw ConfigError("rmse_on_edges: edge index outside the estimate");
        double pred = U_hat.row(e.row).dot(V_hat.row(e.col));
        if (clip) pred = std::clamp(pred, clip->first, clip->second);
        const double r = e.value - pred;
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(edges.size()));
}

double reconstruction_rate(std::span<const double> values, double eps) {
    if (!(eps > 0.0)) throw ConfigError("reconstruction_rate: eps must be positive");
    if (values.empty()) throw ConfigError("reconstruction_rate: no values");
    const auto hits = std::count_if(values.begin(), values.end(), [eps](double v) { return v < eps; });
    return static_cast<double>(hits) / static_cast<double>(values.size());
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) return s;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
    return s;
}

std::vector<double> geometric_grid(double lo, double hi, int n) {
    if (n < 1) throw ConfigError("geometric_grid: need at least one point");
    if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError("geometric_grid: need 0 < lo <= hi");
    if (n == 1) return {lo};
    std::vector<double> grid(static_cast<std::size_t>(n));
    const double ratio = std::log(hi / lo) / (n - 1);
    for (int k = 0; k < n; ++k) grid[k] = lo * std::exp(ratio * k);
    grid.back() = hi;
    return grid;
}

namespace {

std::vector<Edge> pick_edges(const ObservationGraph& graph, std::span<const std::size_t> idx) {
    std::vector<Edge> out;
    out.reserve(idx.size());
    for (auto e : idx) out.push_back(graph.edge(e));
    return out;
}

}  // namespace

NestedCvResult nested_cv(const ObservationGraph& graph, const Method& method, const SolverConfig& config,
                         const NestedCvConfig& cv) {
    if (cv.lambda_grid.empty()) throw ConfigError("lambda_grid: must not be empty");
    config.validate();
    const auto splits = split_folds(graph, cv.folds, cv.validation_fraction, cv.seed);
    const std::size_t n_lambda = cv.lambda_grid.size();

    NestedCvResult result;
    result.runs.resize(splits.size() * n_lambda);
    parallel_for(result.runs.size(), cv.threads, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t job = begin; job < end; ++job) {
            const int fold = static_cast<int>(job / n_lambda);
            const double lambda = cv.lambda_grid[job % n_lambda];
            const auto& split = splits[static_cast<std::size_t>(fold)];
            CvRun& run = result.runs[job];
            run.fold = fold;
            run.lambda = lambda;

            const ObservationGraph train = graph.subset(split.train);
            const auto validation = pick_edges(graph, split.validation);
            const auto test = pick_edges(graph, split.test);
            SolverConfig cfg = config;
            cfg.lambda = lambda;
            cfg.threads = 1;
            Monitor monitor;
            monitor.on_sweep = [&](int, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) {
                run.rmse_validation.push_back(validation.empty() ? 0.0 : rmse_on_edges(U, V, validation, cv.clip));
                run.rmse_test.push_back(rmse_on_edges(U, V, test, cv.clip));
            };
            try {
                solve(train, method, cfg, monitor);
            } catch (const std::exception& e) {
                run.ok = false;
                run.error = e.what();
            }
        }
    });

    std::vector<double> terminal, best;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        FoldResult fr;
        fr.fold = static_cast<int>(f);
        const CvRun* chosen = nullptr;
        for (std::size_t l = 0; l < n_lambda; ++l) {
            const CvRun& r = result.runs[f * n_lambda + l];
            if (!r.ok || r.rmse_test.empty()) {
                if (fr.error.empty()) fr.error = r.error;
                continue;
            }
            if (!chosen || r.rmse_validation.back() < chosen->rmse_validation.back()) chosen = &r;
        }
        if (chosen) {
            fr.ok = true;
            fr.selected_lambda = chosen->lambda;
            fr.validation_rmse = chosen->rmse_validation.back();
            fr.test_rmse_terminal = chosen->rmse_test.back();
            const auto it = std::min_element(chosen->rmse_test.begin(), chosen->rmse_test.end());
            fr.test_rmse_best = *it;
            fr.best_sweep = static_cast<int>(it - chosen->rmse_test.begin()) + 1;
            terminal.push_back(fr.test_rmse_terminal);
            best.push_back(fr.test_rmse_best);
        } else {
            ++result.failed_folds;
        }
        result.folds.push_back(std::move(fr));
    }
    result.terminal = summarize(terminal);
    result.best = summarize(best);
    return result;
}

void write_cv_long_csv(std::ostream& out, const std::string& algorithm, const std::string& dataset,
                       const NestedCvResult& result, bool header) {
    if (header) out << "algorithm,dataset,fold,lambda,sweep,rmse_validation,rmse_test\n";
    for (const auto& r : result.runs) {
        for (std::size_t t = 0; t < r.rmse_test.size(); ++t) {
            out << algorithm << ',' << dataset << ',' << r.fold << ',' << format_double(r.lambda) << ',' << t + 1
                << ',' << format_double(r.rmse_validation[t]) << ',' << format_double(r.rmse_test[t]) << '\n';
        }
    }
}

}  // namespace gpbp
