#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "checks.hpp"
#include "gpbp/errors.hpp"
#include "gpbp/eval.hpp"
#include "gpbp/io.hpp"
#include "gpbp/parallel.hpp"
#include "gpbp/pop_dynamics.hpp"
#include "gpbp/rng.hpp"
#include "gpbp/solver.hpp"
#include "svg.hpp"

namespace gpbp::cli {

namespace fs = std::filesystem;

namespace {

Json gaussian_noise_json(double sigma) { return {{"kind", "gaussian"}, {"sigma", sigma}, {"p", 1.0}}; }

Json resolve(const Json& defaults, const Options& o, const char* algorithms_key) {
    Json cfg = resolve_config(defaults, o.config);
    if (o.threads) cfg["threads"] = *o.threads;
    if (!o.algorithms.empty()) {
        if (!algorithms_key) throw ConfigError("--algorithms is not used by this command");
        cfg[algorithms_key] = o.algorithms;
    }
    if (get_int(cfg, "threads") < 1) throw ConfigError("threads: must be at least 1");
    return cfg;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("out: cannot create output directory " + dir.string());
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("out: cannot write " + path.string());
    return out;
}

/// CSV with the resolved config embedded as comment lines and in a sidecar.
std::ofstream open_csv(const fs::path& path, const Json& cfg) {
    auto out = open_output(path);
    write_config_header(out, cfg);
    write_sidecar(path, cfg);
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c == '\n' ? ' ' : c;
    }
    return q + '"';
}

std::vector<NoiseModel> parse_noise_list(const Json& node) {
    std::vector<NoiseModel> out;
    if (node.is_array()) {
        if (node.empty()) throw ConfigError("noise: empty list");
        for (const auto& n : node) out.push_back(parse_noise(n));
    } else {
        out.push_back(parse_noise(node));
    }
    return out;
}

/// Solver settings shared by synth and realdata.
SolverConfig solver_config(const Json& cfg) {
    SolverConfig s;
    s.rank = get_int(cfg, "rank");
    s.max_sweeps = get_int(cfg, "max_sweeps");
    s.conv_tol = get_double(cfg, "conv_tol");
    s.init_scale = get_double(cfg, "init_scale");
    s.refresh_interval = get_int(cfg, "refresh_interval");
    s.threads = 1;
    return s;
}

void check_degree(int c, int n_rows, int n_cols) {
    if (c < 1 || c > n_rows) throw ConfigError("c_grid: c = " + std::to_string(c) + " must lie in [1, n_rows]");
    if ((static_cast<long long>(c) * n_cols) % n_rows != 0)
        throw ConfigError("c_grid: c * n_cols must be divisible by n_rows (c = " + std::to_string(c) + ")");
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

int guarded(const std::function<int()>& command, std::ostream& err) {
    try {
        return command();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << '\n';
        return kUsageError;
    } catch (const Json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << '\n';
        return kRuntimeFailure;
    }
}

// ---------------------------------------------------------------- synth

Json synth_defaults() {
    return {
        {"n_rows", 500},
        {"n_cols", 1000},
        {"rank", 10},
        {"algorithms", {"gpbp"}},
        {"noise", gaussian_noise_json(0.01)},
        {"c_grid", {30}},
        {"damping", {0.0}},
        {"lambda", {1e-4}},
        {"lambda_sigma_squared", false},
        {"instances", 1},
        {"max_sweeps", 300},
        {"conv_tol", 1e-8},
        {"init_scale", 1.0},
        {"refresh_interval", 25},
        {"drop_alpha", false},
        {"epsilon", 0.01},
        {"seed", 1},
        {"threads", 1},
        {"trace", false},
        {"svg", true},
    };
}

namespace {

struct SynthJob {
    std::string algorithm;
    Method method;
    int noise_index;
    NoiseModel noise;
    int c;
    double damping;
    double lambda;
    int instance;
};

struct SynthOutcome {
    std::string status = "ok";
    std::string error;
    int sweeps = 0;
    bool converged = false;
    double final_change = std::numeric_limits<double>::quiet_NaN();
    double nrmse = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t instance_seed = 0;
    std::uint64_t solver_seed = 0;
    Trace trace;
};

}  // namespace

int run_synth(const Options& options, std::ostream& log) {
    const Json cfg = resolve(synth_defaults(), options, "algorithms");
    const int n_rows = get_int(cfg, "n_rows"), n_cols = get_int(cfg, "n_cols");
    const int rank = get_int(cfg, "rank");
    const auto algorithms = get_string_list(cfg, "algorithms");
    const auto noises = parse_noise_list(cfg.at("noise"));
    const auto c_grid = get_int_list(cfg, "c_grid");
    const auto dampings = get_double_list(cfg, "damping");
    const auto lambdas = get_double_list(cfg, "lambda");
    const bool lambda_sigma2 = get_bool(cfg, "lambda_sigma_squared");
    const int instances = get_int(cfg, "instances");
    const double eps = get_double(cfg, "epsilon");
    const std::uint64_t seed = get_seed(cfg, "seed");
    const int threads = get_int(cfg, "threads");
    const bool want_trace = get_bool(cfg, "trace");
    SolverConfig base = solver_config(cfg);
    base.drop_alpha = get_bool(cfg, "drop_alpha");

    if (n_rows < 1 || n_cols < 1) throw ConfigError("n_rows/n_cols: must be positive");
    if (instances < 1) throw ConfigError("instances: must be at least 1");
    if (!(eps > 0.0)) throw ConfigError("epsilon: must be positive");
    for (int c : c_grid) check_degree(c, n_rows, n_cols);

    std::vector<SynthJob> jobs;
    for (const auto& name : algorithms) {
        const Method method = Method::parse(name);
        for (std::size_t ni = 0; ni < noises.size(); ++ni) {
            const std::vector<double> lam =
                lambda_sigma2 ? std::vector<double>{noises[ni].sigma * noises[ni].sigma} : lambdas;
            for (int c : c_grid)
                for (double g : dampings)
                    for (double l : lam) {
                        SolverConfig probe = base;
                        probe.rank = rank;
                        probe.damping = g;
                        probe.lambda = l;
                        probe.validate();
                        for (int k = 0; k < instances; ++k)
                            jobs.push_back({method.name(), method, static_cast<int>(ni), noises[ni], c, g, l, k});
                    }
        }
    }
    ensure_dir(options.out);
    log << "synth: " << jobs.size() << " runs\n";

    std::vector<SynthOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t j = begin; j < end; ++j) {
            const auto& job = jobs[j];
            auto& out = outcomes[j];
            const auto nc = static_cast<std::uint64_t>(job.c), ni = static_cast<std::uint64_t>(job.noise_index),
                       ki = static_cast<std::uint64_t>(job.instance);
            out.instance_seed = derive_seed(seed, {nc, ni, ki});
            out.solver_seed = derive_seed(seed, {nc, ni, ki, 99});
            const auto inst = generate_synthetic(n_rows, n_cols, rank, job.noise, job.c, out.instance_seed);
            SolverConfig sc = base;
            sc.rank = rank;
            sc.damping = job.damping;
            sc.lambda = job.lambda;
            sc.seed = out.solver_seed;
            Monitor monitor;
            if (want_trace) monitor.truth = &inst.truth;
            try {
                auto res = solve(inst.graph, job.method, sc, monitor);
                out.sweeps = res.trace.sweeps();
                out.converged = res.trace.converged;
                if (!res.trace.records.empty()) out.final_change = res.trace.records.back().max_change;
                out.nrmse = nrmse(res.U, res.V, inst.truth);
                if (want_trace) out.trace = std::move(res.trace);
            } catch (const SolverDivergence& e) {
                out.status = "diverged";
                out.error = e.what();
                out.sweeps = e.sweep();
                if (want_trace) out.trace = e.trace();
            } catch (const DivergenceError& e) {
                out.status = "diverged";
                out.error = e.what();
                out.sweeps = e.sweep();
            } catch (const SingularError& e) {
                out.status = "singular";
                out.error = e.what();
            }
        }
    });

    std::size_t failures = 0;
    {
        auto csv = open_csv(options.out / "synth.csv", cfg);
        csv << "algorithm,noise_kind,sigma,p,c,damping,lambda,instance,instance_seed,solver_seed,status,sweeps,"
               "converged,final_change,nrmse,error\n";
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const auto& job = jobs[j];
            const auto& o = outcomes[j];
            failures += o.status != "ok";
            csv << job.algorithm << ',' << to_string(job.noise.kind) << ',' << format_double(job.noise.sigma) << ','
                << format_double(job.noise.p) << ',' << job.c << ',' << format_double(job.damping) << ','
                << format_double(job.lambda) << ',' << job.instance << ',' << o.instance_seed << ','
                << o.solver_seed << ',' << o.status << ',' << o.sweeps << ',' << bool_str(o.converged) << ','
                << format_double(o.final_change) << ',' << format_double(o.nrmse) << ',' << csv_field(o.error)
                << '\n';
        }
    }
    if (want_trace) {
        auto csv = open_csv(options.out / "synth_traces.csv", cfg);
        csv << "algorithm,noise_kind,sigma,c,damping,lambda,instance,sweep,max_change,nrmse\n";
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const auto& job = jobs[j];
            for (const auto& r : outcomes[j].trace.records)
                csv << job.algorithm << ',' << to_string(job.noise.kind) << ',' << format_double(job.noise.sigma)
                    << ',' << job.c << ',' << format_double(job.damping) << ',' << format_double(job.lambda) << ','
                    << job.instance << ',' << r.sweep << ',' << format_double(r.max_change) << ','
                    << format_double(r.nrmse.value_or(std::numeric_limits<double>::quiet_NaN())) << '\n';
        }
    }

    // Aggregate per grid point (consecutive runs of `instances` jobs).
    Json rows = Json::array();
    std::map<std::string, Series> curves;
    {
        auto csv = open_csv(options.out / "synth_summary.csv", cfg);
        csv << "algorithm,noise_kind,sigma,p,c,damping,lambda,n,n_failed,nrmse_mean,nrmse_se,reconstruction_rate\n";
        for (std::size_t j = 0; j < jobs.size(); j += static_cast<std::size_t>(instances)) {
            const auto& job = jobs[j];
            std::vector<double> ok_values, all_values;
            for (int k = 0; k < instances; ++k) {
                const auto& o = outcomes[j + static_cast<std::size_t>(k)];
                // A failed run counts as not reconstructed.
                all_values.push_back(o.status == "ok" ? o.nrmse : std::numeric_limits<double>::infinity());
                if (o.status == "ok") ok_values.push_back(o.nrmse);
            }
            const Summary s = ok_values.empty() ? Summary{std::numeric_limits<double>::quiet_NaN(), 0.0, 0}
                                                : summarize(ok_values);
            const double rate = reconstruction_rate(all_values, eps);
            const std::size_t failed = all_values.size() - ok_values.size();
            csv << job.algorithm << ',' << to_string(job.noise.kind) << ',' << format_double(job.noise.sigma) << ','
                << format_double(job.noise.p) << ',' << job.c << ',' << format_double(job.damping) << ','
                << format_double(job.lambda) << ',' << s.n << ',' << failed << ',' << format_double(s.mean) << ','
                << format_double(s.std_error) << ',' << format_double(rate) << '\n';
            rows.push_back({{"algorithm", job.algorithm},
                            {"noise", noise_to_json(job.noise)},
                            {"c", job.c},
                            {"damping", job.damping},
                            {"lambda", job.lambda},
                            {"n", s.n},
                            {"n_failed", failed},
                            {"nrmse_mean", s.n ? Json(s.mean) : Json(nullptr)},
                            {"nrmse_se", s.std_error},
                            {"reconstruction_rate", rate}});
            std::ostringstream label;
            label << job.algorithm << " g=" << job.damping;
            if (noises.size() > 1) label << " s=" << job.noise.sigma;
            if (lambdas.size() > 1 && !lambda_sigma2) label << " l=" << job.lambda;
            auto& series = curves[label.str()];
            series.label = label.str();
            series.x.push_back(job.c);
            series.y.push_back(s.mean);
            series.err.push_back(s.std_error);
        }
    }
    {
        auto out = open_output(options.out / "summary.json");
        out << Json{{"config", cfg}, {"failures", failures}, {"summary", rows}}.dump(2) << '\n';
    }
    if (get_bool(cfg, "svg")) {
        LinePlot plot{"nRMSE vs c", "c", "nRMSE", true, {}};
        for (auto& [_, s] : curves) plot.series.push_back(std::move(s));
        write_line_svg(options.out / "synth.svg", plot);
    }
    log << "synth: wrote " << (options.out / "synth.csv").string() << " (" << failures << " failed runs)\n";
    if (failures && !options.allow_failures) {
        log << "synth: " << failures << " runs failed; rerun with --allow-failures to accept\n";
        return kRuntimeFailure;
    }
    return kOk;
}

// ---------------------------------------------------------------- pd

Json pd_defaults() {
    return {
        {"n_rows", 500},
        {"n_cols", 1000},
        {"rank", 10},
        {"n_pd", 2000},
        {"modes", {"gpbp", "alsmp"}},
        {"c_grid", {19}},
        {"lambda", {1e-4}},
        {"lambda_by_mode", nullptr},
        {"noise", gaussian_noise_json(0.01)},
        {"damping", {0.0}},
        {"drop_alpha", false},
        {"seed", 1},
        {"init_noise", 0.1},
        {"random_init", false},
        {"init_scale", 1.0},
        {"max_sweeps", 500},
        {"block", 10},
        {"stationarity_tol", 0.01},
        {"readout_samples", 100000},
        {"check_samples", 10000},
        {"threads", 1},
        {"svg", true},
    };
}

int run_pd(const Options& options, std::ostream& log) {
    const Json cfg = resolve(pd_defaults(), options, "modes");
    const int n_rows = get_int(cfg, "n_rows"), n_cols = get_int(cfg, "n_cols");
    const auto modes = get_string_list(cfg, "modes");
    const auto c_grid = get_int_list(cfg, "c_grid");
    const auto default_lambdas = get_double_list(cfg, "lambda");
    const auto noises = parse_noise_list(cfg.at("noise"));
    const auto dampings = get_double_list(cfg, "damping");
    const std::uint64_t seed = get_seed(cfg, "seed");

    PDConfig base;
    base.rank = get_int(cfg, "rank");
    base.n_pd = get_int(cfg, "n_pd");
    base.drop_alpha = get_bool(cfg, "drop_alpha");
    base.init_noise = get_double(cfg, "init_noise");
    base.random_init = get_bool(cfg, "random_init");
    base.init_scale = get_double(cfg, "init_scale");
    base.max_sweeps = get_int(cfg, "max_sweeps");
    base.block = get_int(cfg, "block");
    base.stationarity_tol = get_double(cfg, "stationarity_tol");
    base.readout_samples = get_int(cfg, "readout_samples");
    base.check_samples = get_int(cfg, "check_samples");
    base.threads = get_int(cfg, "threads");

    struct Point {
        std::string mode;
        int noise_index;
        int damping_index;
        int lambda_index;
        PDConfig config;
    };
    std::vector<Point> points;
    std::map<std::string, std::vector<double>> lambdas_of;
    for (const auto& mode_name : modes) {
        const Method m = Method::parse(mode_name);
        if (m.approximate) throw ConfigError("modes: population dynamics models gpbp or alsmp, not " + mode_name);
        std::vector<double> lambdas = default_lambdas;
        const Json& by_mode = cfg.at("lambda_by_mode");
        if (!by_mode.is_null()) {
            if (!by_mode.is_object()) throw ConfigError("lambda_by_mode: expected an object keyed by mode");
            for (auto it = by_mode.begin(); it != by_mode.end(); ++it)
                if (std::find(modes.begin(), modes.end(), it.key()) == modes.end())
                    throw ConfigError("lambda_by_mode: unknown mode '" + it.key() + "'");
            if (by_mode.contains(mode_name)) lambdas = get_double_list(by_mode, mode_name);
        }
        lambdas_of[mode_name] = lambdas;
        for (std::size_t ni = 0; ni < noises.size(); ++ni)
            for (std::size_t gi = 0; gi < dampings.size(); ++gi)
                for (int c : c_grid)
                    for (std::size_t li = 0; li < lambdas.size(); ++li) {
                        check_degree(c, n_rows, n_cols);
                        PDConfig pc = base;
                        const PDConfig degrees = PDConfig::for_ensemble(c, n_rows, n_cols);
                        pc.d_u = degrees.d_u;
                        pc.d_v = degrees.d_v;
                        pc.mode = m.family;
                        pc.noise = noises[ni];
                        pc.damping = dampings[gi];
                        pc.lambda = lambdas[li];
                        // Modes share seeds so they see the same planted draws.
                        pc.seed = derive_seed(seed, {static_cast<std::uint64_t>(c), li, ni, gi});
                        pc.validate();
                        points.push_back({mode_name, static_cast<int>(ni), static_cast<int>(gi),
                                          static_cast<int>(li), pc});
                    }
    }
    ensure_dir(options.out);
    log << "pd: " << points.size() << " grid points\n";

    struct PointResult {
        std::string status = "ok";
        std::string error;
        PDResult result;
        double readout = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<PointResult> results(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        try {
            results[k].result = pd_run(points[k].config);
            results[k].readout = results[k].result.readout;
        } catch (const DivergenceError& e) {
            results[k].status = "diverged";
            results[k].error = e.what();
            results[k].result.sweeps = e.sweep();
        } catch (const SingularError& e) {
            results[k].status = "singular";
            results[k].error = e.what();
        }
        log << "pd: " << points[k].mode << " c=" << points[k].config.d_v << " lambda=" << points[k].config.lambda
            << " -> " << (results[k].status == "ok" ? format_double(results[k].readout) : results[k].status) << '\n';
    }

    std::size_t failures = 0;
    {
        auto csv = open_csv(options.out / "pd.csv", cfg);
        csv << "mode,noise_kind,sigma,p,c,lambda,damping,d_u,d_v,n_pd,point_seed,status,sweeps,stationary,"
               "readout_nrmse,error\n";
        for (std::size_t k = 0; k < points.size(); ++k) {
            const auto& pc = points[k].config;
            const auto& r = results[k];
            failures += r.status != "ok";
            csv << points[k].mode << ',' << to_string(pc.noise.kind) << ',' << format_double(pc.noise.sigma) << ','
                << format_double(pc.noise.p) << ',' << pc.d_v << ',' << format_double(pc.lambda) << ','
                << format_double(pc.damping) << ',' << pc.d_u << ',' << pc.d_v << ',' << pc.n_pd << ',' << pc.seed
                << ',' << r.status << ',' << r.result.sweeps << ',' << bool_str(r.result.stationary) << ','
                << format_double(r.readout) << ',' << csv_field(r.error) << '\n';
        }
    }
    {
        auto csv = open_csv(options.out / "pd_traces.csv", cfg);
        csv << "mode,noise_kind,sigma,c,lambda,damping,sweep,readout_nrmse\n";
        for (std::size_t k = 0; k < points.size(); ++k) {
            const auto& pc = points[k].config;
            for (const auto& t : results[k].result.trace)
                csv << points[k].mode << ',' << to_string(pc.noise.kind) << ',' << format_double(pc.noise.sigma)
                    << ',' << pc.d_v << ',' << format_double(pc.lambda) << ',' << format_double(pc.damping) << ','
                    << t.sweep << ',' << format_double(t.readout) << '\n';
        }
    }
    if (get_bool(cfg, "svg")) {
        for (const auto& mode_name : modes) {
            const auto& lambdas = lambdas_of[mode_name];
            for (std::size_t ni = 0; ni < noises.size(); ++ni)
                for (std::size_t gi = 0; gi < dampings.size(); ++gi) {
                    Heatmap map;
                    map.title = mode_name + " PD nRMSE (sigma=" + format_double(noises[ni].sigma) +
                                ", gamma=" + format_double(dampings[gi]) + ")";
                    map.x_label = "c";
                    map.y_label = "lambda";
                    map.log_z = true;
                    for (int c : c_grid) map.x.push_back(c);
                    map.y = lambdas;
                    map.z.assign(lambdas.size(), std::vector<double>(c_grid.size()));
                    for (std::size_t k = 0; k < points.size(); ++k) {
                        const auto& p = points[k];
                        if (p.mode != mode_name || p.noise_index != static_cast<int>(ni) ||
                            p.damping_index != static_cast<int>(gi))
                            continue;
                        const auto ci = std::find(c_grid.begin(), c_grid.end(), p.config.d_v) - c_grid.begin();
                        map.z[static_cast<std::size_t>(p.lambda_index)][static_cast<std::size_t>(ci)] =
                            results[k].readout;
                    }
                    write_heatmap_svg(options.out / ("pd_" + mode_name + "_n" + std::to_string(ni) + "_g" +
                                                     std::to_string(gi) + ".svg"),
                                      map);
                }
        }
    }
    log << "pd: wrote " << (options.out / "pd.csv").string() << " (" << failures << " failed points)\n";
    if (failures && !options.allow_failures) {
        log << "pd: " << failures << " points failed; rerun with --allow-failures to accept\n";
        return kRuntimeFailure;
    }
    return kOk;
}

// ---------------------------------------------------------------- realdata

Json realdata_defaults() {
    return {
        {"dataset", ""},
        {"format", "movielens_dat"},
        {"dataset_name", ""},
        {"max_user_ratings", 0},
        {"algorithms", {"gpbp", "alsmp", "approxgpbp", "approxalsmp"}},
        {"rank", 10},
        {"lambda_grid", nullptr},
        {"lambda_lo", 1.0},
        {"lambda_hi", 5.0},
        {"lambda_points", 11},
        {"damping", 0.0},
        {"max_sweeps", 50},
        {"conv_tol", 1e-8},
        {"init_scale", 1.0},
        {"refresh_interval", 25},
        {"folds", 10},
        {"validation_fraction", 0.05},
        {"clip", nullptr},
        {"seed", 1},
        {"threads", 1},
        {"svg", true},
    };
}

int run_realdata(const Options& options, std::ostream& log) {
    const Json cfg = resolve(realdata_defaults(), options, "algorithms");
    const fs::path dataset = get_string(cfg, "dataset");
    if (dataset.empty()) throw ConfigError("dataset: no ratings file given");
    if (!fs::is_regular_file(dataset)) throw ConfigError("dataset: file not found: " + dataset.string());
    const std::string format = get_string(cfg, "format");
    RatingFormat fmt;
    if (format == "movielens_dat") fmt = RatingFormat::movielens_dat;
    else if (format == "csv") fmt = RatingFormat::csv;
    else throw ConfigError("format: expected movielens_dat or csv, got '" + format + "'");
    std::string name = get_string(cfg, "dataset_name");
    if (name.empty()) name = dataset.stem().string();
    const auto algorithms = get_string_list(cfg, "algorithms");
    std::vector<Method> methods;
    for (const auto& a : algorithms) methods.push_back(Method::parse(a));

    NestedCvConfig cv;
    if (cfg.at("lambda_grid").is_null())
        cv.lambda_grid =
            geometric_grid(get_double(cfg, "lambda_lo"), get_double(cfg, "lambda_hi"), get_int(cfg, "lambda_points"));
    else
        cv.lambda_grid = get_double_list(cfg, "lambda_grid");
    cv.folds = get_int(cfg, "folds");
    cv.validation_fraction = get_double(cfg, "validation_fraction");
    cv.seed = get_seed(cfg, "seed");
    cv.threads = get_int(cfg, "threads");
    if (!cfg.at("clip").is_null()) {
        const auto clip = get_double_list(cfg, "clip");
        if (clip.size() != 2 || !(clip[0] < clip[1])) throw ConfigError("clip: expected [lo, hi] with lo < hi");
        cv.clip = ClipRange{clip[0], clip[1]};
    }
    SolverConfig sc = solver_config(cfg);
    sc.damping = get_double(cfg, "damping");
    sc.seed = get_seed(cfg, "seed");
    sc.lambda = cv.lambda_grid.front();
    sc.validate();
    for (double l : cv.lambda_grid) {
        SolverConfig probe = sc;
        probe.lambda = l;
        probe.validate();
    }

    auto loaded = load_ratings(dataset, fmt);
    ObservationGraph graph = std::move(loaded.graph);
    const int max_ratings = get_int(cfg, "max_user_ratings");
    if (max_ratings < 0) throw ConfigError("max_user_ratings: must be nonnegative (0 keeps every user)");
    if (max_ratings > 0) graph = sparsify_by_user(graph, max_ratings);
    log << "realdata: " << name << ": " << graph.n_rows() << " users, " << graph.n_cols() << " items, "
        << graph.n_edges() << " ratings (" << loaded.duplicates << " duplicates)\n";
    ensure_dir(options.out);

    auto long_csv = open_csv(options.out / "cv_long.csv", cfg);
    auto folds_csv = open_csv(options.out / "cv_folds.csv", cfg);
    long_csv << "algorithm,dataset,fold,lambda,sweep,rmse_validation,rmse_test\n";
    folds_csv << "algorithm,dataset,fold,ok,selected_lambda,validation_rmse,test_rmse_terminal,test_rmse_best,"
                 "best_sweep,error\n";
    Json summary = Json::object();
    LinePlot plot{"test RMSE of the selected models (" + name + ")", "sweep", "RMSE", false, {}};
    std::size_t failed = 0;
    for (std::size_t a = 0; a < methods.size(); ++a) {
        const auto res = nested_cv(graph, methods[a], sc, cv);
        const std::string alg = methods[a].name();
        write_cv_long_csv(long_csv, alg, name, res, false);
        Series curve{alg, {}, {}, {}};
        std::vector<double> sums;
        std::vector<int> counts;
        for (const auto& f : res.folds) {
            folds_csv << alg << ',' << csv_field(name) << ',' << f.fold << ',' << bool_str(f.ok) << ','
                      << format_double(f.selected_lambda) << ',' << format_double(f.validation_rmse) << ','
                      << format_double(f.test_rmse_terminal) << ',' << format_double(f.test_rmse_best) << ','
                      << f.best_sweep << ',' << csv_field(f.error) << '\n';
            if (!f.ok) continue;
            for (const auto& run : res.runs) {
                if (run.fold != f.fold || run.lambda != f.selected_lambda) continue;
                if (sums.size() < run.rmse_test.size()) {
                    sums.resize(run.rmse_test.size(), 0.0);
                    counts.resize(run.rmse_test.size(), 0);
                }
                for (std::size_t t = 0; t < run.rmse_test.size(); ++t) {
                    sums[t] += run.rmse_test[t];
                    ++counts[t];
                }
            }
        }
        for (std::size_t t = 0; t < sums.size(); ++t) {
            curve.x.push_back(static_cast<double>(t + 1));
            curve.y.push_back(sums[t] / counts[t]);
        }
        plot.series.push_back(std::move(curve));
        failed += res.failed_folds;
        auto stats = [](const Summary& s) { return Json{{"mean", s.mean}, {"std_error", s.std_error}, {"n", s.n}}; };
        summary[alg] = {{"terminal", stats(res.terminal)},
                        {"best_sweep", stats(res.best)},
                        {"failed_folds", res.failed_folds}};
        log << "realdata: " << alg << " terminal RMSE " << format_double(res.terminal.mean) << " +- "
            << format_double(res.terminal.std_error) << ", best-sweep " << format_double(res.best.mean) << '\n';
    }
    {
        auto out = open_output(options.out / "summary.json");
        out << Json{{"config", cfg},
                    {"dataset", {{"name", name},
                                 {"users", graph.n_rows()},
                                 {"items", graph.n_cols()},
                                 {"ratings", graph.n_edges()},
                                 {"duplicates", loaded.duplicates}}},
                    {"lambda_grid", cv.lambda_grid},
                    {"results", summary}}
                   .dump(2)
            << '\n';
    }
    if (get_bool(cfg, "svg")) write_line_svg(options.out / "cv_curves.svg", plot);
    if (failed && !options.allow_failures) {
        log << "realdata: " << failed << " folds failed; rerun with --allow-failures to accept\n";
        return kRuntimeFailure;
    }
    return kOk;
}

// ---------------------------------------------------------------- verify

Json verify_defaults() {
    return {
        {"checks",
         {"reduction_identity", "quadrature_moments", "sherman_morrison_downdate", "inverse_drift",
          "global_optimum_singular_values", "global_optimum_objective", "pd_planted_fixed_point",
          "pd_seed_agreement"}},
        {"seed", 1},
        {"instances", 20},
        {"downdate_cases", 1000},
        {"drift_sweeps", 1000},
        {"optimum_runs", 20},
        {"n_pd", 2000},
        {"threads", 1},
    };
}

int run_verify(const Options& options, std::ostream& log) {
    const Json cfg = resolve(verify_defaults(), options, nullptr);
    const auto checks = get_string_list(cfg, "checks");
    const std::uint64_t seed = get_seed(cfg, "seed");
    const int instances = get_int(cfg, "instances");
    const int downdate_cases = get_int(cfg, "downdate_cases");
    const int drift_sweeps = get_int(cfg, "drift_sweeps");
    const int optimum_runs = get_int(cfg, "optimum_runs");
    const int n_pd = get_int(cfg, "n_pd");
    if (instances < 1 || downdate_cases < 1 || drift_sweeps < 1 || optimum_runs < 1)
        throw ConfigError("instances/downdate_cases/drift_sweeps/optimum_runs: must be positive");
    if (n_pd < 100) throw ConfigError("n_pd: population size must be at least 100");

    std::vector<std::function<CheckResult()>> todo;
    for (const auto& name : checks) {
        if (name == "reduction_identity") {
            ReductionCheck p;
            p.instances = instances;
            p.seed = derive_seed(seed, {1});
            todo.push_back([p] { return check_reduction_identity(p); });
        } else if (name == "quadrature_moments") {
            QuadratureCheck p;
            p.cases = instances;
            p.seed = derive_seed(seed, {2});
            todo.push_back([p] { return check_quadrature(p); });
        } else if (name == "sherman_morrison_downdate") {
            DowndateCheck p;
            p.cases = downdate_cases;
            p.seed = derive_seed(seed, {3});
            todo.push_back([p] { return check_downdate(p); });
        } else if (name == "inverse_drift") {
            DriftCheck p;
            p.sweeps = drift_sweeps;
            p.seed = derive_seed(seed, {4});
            todo.push_back([p] { return check_inverse_drift(p); });
        } else if (name == "global_optimum_singular_values" || name == "global_optimum_objective") {
            GlobalOptimumCheck p;
            p.runs = optimum_runs;
            if (name == "global_optimum_objective")
                todo.push_back([p] { return check_global_optimum_objective(p); });
            else
                todo.push_back([p] { return check_global_optimum_singular_values(p); });
        } else if (name == "pd_planted_fixed_point") {
            PdFixedPointCheck p;
            p.n_pd = n_pd;
            todo.push_back([p] { return check_pd_fixed_point(p); });
        } else if (name == "pd_seed_agreement") {
            PdSeedCheck p;
            p.n_pd = n_pd;
            todo.push_back([p] { return check_pd_seed_agreement(p); });
        } else {
            throw ConfigError("checks: unknown check '" + name + "'");
        }
    }
    ensure_dir(options.out);

    Json results = Json::array();
    bool all_pass = true;
    for (const auto& run : todo) {
        const CheckResult r = run();
        all_pass = all_pass && r.pass;
        results.push_back(r.to_json());
        log << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << format_double(r.value) << " (tol "
            << format_double(r.tolerance) << ") " << r.detail << '\n';
    }
    auto out = open_output(options.out / "verify.json");
    out << Json{{"config", cfg}, {"checks", results}, {"all_pass", all_pass}}.dump(2) << '\n';
    return all_pass || options.allow_failures ? kOk : kRuntimeFailure;
}

}  // namespace gpbp::cli
