#include "gpbp/pop_dynamics.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "gpbp/cavity.hpp"
#include "gpbp/errors.hpp"
#include "gpbp/io.hpp"
#include "gpbp/parallel.hpp"
#include "gpbp/rng.hpp"

namespace gpbp {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 40;
constexpr std::uint64_t kSweepStream = 41;
constexpr std::uint64_t kReadoutStream = 42;

/// Damped Gaussian accumulation over drawn tuples of the opposite pool.
class Accumulator {
public:
    Accumulator(int rank, double lambda) : rank_(rank), lambda_(lambda), A_(rank, rank), B_(rank), I_(Eigen::MatrixXd::Identity(rank, rank)) {}

    void reset() {
        A_ = lambda_ * I_;
        B_.setZero();
    }

    void add(const Eigen::Ref<const Eigen::VectorXd>& v, double alpha, double y, double weight, bool use_alpha) {
        if (weight == 0.0) return;
        const double w = weight * observation_scale(y, use_alpha ? alpha : 0.0, use_alpha);
        A_.noalias() += w * v * v.transpose();
        B_.noalias() += (w * y) * v;
    }

    /// Mean and alpha of the accumulated Gaussian; throws SingularError.
    double solve(Eigen::Ref<Eigen::VectorXd> mean, bool use_alpha) {
        llt_.compute(A_);
        if (llt_.info() != Eigen::Success || !(llt_.rcond() > 1e-14))
            throw SingularError("population update: singular precision (lambda = " + std::to_string(lambda_) + ")");
        mean = llt_.solve(B_);
        if (!use_alpha) return 0.0;
        const double n2 = mean.squaredNorm();
        if (n2 == 0.0) return 0.0;
        tmp_ = llt_.solve(mean);
        return mean.dot(tmp_) / (n2 * n2);
    }

private:
    int rank_;
    double lambda_;
    Eigen::MatrixXd A_;
    Eigen::VectorXd B_;
    Eigen::MatrixXd I_;
    Eigen::VectorXd tmp_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

void init_side(PopSide& side, const PDConfig& cfg, std::uint64_t tag) {
    Rng rng(derive_seed(cfg.seed, {kInitStream, tag}));
    side.planted.resize(cfg.rank, cfg.n_pd);
    side.cav.resize(cfg.rank, cfg.n_pd);
    for (int k = 0; k < cfg.n_pd; ++k)
        for (int r = 0; r < cfg.rank; ++r) side.planted(r, k) = rng.normal();
    for (int k = 0; k < cfg.n_pd; ++k)
        for (int r = 0; r < cfg.rank; ++r)
            side.cav(r, k) = cfg.random_init ? cfg.init_scale * rng.normal()
                                             : side.planted(r, k) + cfg.init_noise * rng.normal();
    side.alpha = Eigen::VectorXd::Zero(cfg.n_pd);
    side.prev_cav = side.cav;
    side.prev_alpha = side.alpha;
}

/// Refresh `self` from `degree - 1` draws of `other`.
void refresh_side(PopSide& self, const PopSide& other, int degree, const PDConfig& cfg, int sweep, std::uint64_t tag) {
    const int n = self.size();
    const double gamma = cfg.damping;
    const bool use_alpha = cfg.use_alpha();
    const bool family_alpha = cfg.mode == Algorithm::gpbp;
    Eigen::MatrixXd new_cav(cfg.rank, n);
    Eigen::VectorXd new_alpha(n);

    parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t begin, std::size_t end, int) {
        Accumulator acc(cfg.rank, cfg.lambda);
        Eigen::VectorXd mean(cfg.rank);
        for (std::size_t kk = begin; kk < end; ++kk) {
            const int k = static_cast<int>(kk);
            Rng rng(derive_seed(cfg.seed, {kSweepStream, static_cast<std::uint64_t>(sweep), tag, kk}));
            acc.reset();
            for (int d = 0; d < degree - 1; ++d) {
                const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(other.size())));
                const double y = self.planted.col(k).dot(other.planted.col(j)) + cfg.noise.sample(rng);
                acc.add(other.cav.col(j), other.alpha[j], y, 1.0 - gamma, family_alpha);
                acc.add(other.prev_cav.col(j), other.prev_alpha[j], y, gamma, family_alpha);
            }
            new_alpha[k] = acc.solve(mean, family_alpha);
            if (!use_alpha) new_alpha[k] = 0.0;
            for (Eigen::Index r = 0; r < mean.size(); ++r)
                if (!std::isfinite(mean[r]) || std::abs(mean[r]) > 1e8)
                    throw DivergenceError("population update diverged at sweep " + std::to_string(sweep), sweep);
            new_cav.col(k) = mean;
        }
    });

    self.prev_cav = std::move(self.cav);
    self.prev_alpha = std::move(self.alpha);
    self.cav = std::move(new_cav);
    self.alpha = std::move(new_alpha);
}

}  // namespace

PDConfig PDConfig::for_ensemble(int c, int n_rows, int n_cols) {
    if (n_rows < 1 || n_cols < 1 || c < 1) throw ConfigError("PD ensemble: dimensions and c must be positive");
    const long long row_stubs = static_cast<long long>(c) * n_cols;
    if (row_stubs % n_rows != 0) throw ConfigError("PD ensemble: c * n_cols must be divisible by n_rows");
    PDConfig cfg;
    cfg.d_v = c;
    cfg.d_u = static_cast<int>(row_stubs / n_rows);
    return cfg;
}

void PDConfig::validate() const {
    if (rank < 1) throw ConfigError("rank: must be at least 1");
    if (n_pd < 100) throw ConfigError("n_pd: population size must be at least 100");
    if (d_u < 2 || d_v < 2) throw ConfigError("d_u/d_v: degrees must be at least 2");
    if (!(lambda >= 0.0)) throw ConfigError("lambda: must be nonnegative");
    if (!(damping >= 0.0 && damping <= 1.0)) throw ConfigError("damping: gamma must lie in [0, 1]");
    if (!(init_noise >= 0.0) || !(init_scale >= 0.0)) throw ConfigError("init_noise/init_scale: must be nonnegative");
    if (max_sweeps < 1) throw ConfigError("max_sweeps: must be at least 1");
    if (block < 1) throw ConfigError("block: must be at least 1");
    if (!(stationarity_tol > 0.0)) throw ConfigError("stationarity_tol: must be positive");
    if (readout_samples < 1 || check_samples < 1) throw ConfigError("readout_samples/check_samples: must be positive");
    if (threads < 1) throw ConfigError("threads: must be at least 1");
    noise.validate();
}

PDPool pd_init(const PDConfig& config) {
    config.validate();
    PDPool pool;
    init_side(pool.u, config, 0);
    init_side(pool.v, config, 1);
    return pool;
}

void pd_sweep(PDPool& pool, const PDConfig& config) {
    refresh_side(pool.u, pool.v, config.d_u, config, pool.sweeps, 0);
    refresh_side(pool.v, pool.u, config.d_v, config, pool.sweeps, 1);
    ++pool.sweeps;
}

double pd_readout(const PDPool& pool, const PDConfig& config, int n_samples, std::uint64_t stream) {
    if (n_samples < 1) throw ConfigError("pd_readout: n_samples must be positive");
    const double gamma = config.damping;
    const bool family_alpha = config.mode == Algorithm::gpbp;
    const int workers = std::max(1, config.threads);

    // Per-sample seeds and a serial final sum keep the value independent of
    // the worker count.
    std::vector<double> sq(static_cast<std::size_t>(n_samples));
    parallel_for(static_cast<std::size_t>(n_samples), workers, [&](std::size_t begin, std::size_t end, int) {
        Accumulator acc(config.rank, config.lambda);
        Eigen::VectorXd u_hat(config.rank), v_hat(config.rank);
        for (std::size_t s = begin; s < end; ++s) {
            Rng rng(derive_seed(config.seed, {kReadoutStream, stream, s}));
            const auto iu = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.u.size())));
            const auto jv = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.v.size())));
            const auto u0 = pool.u.planted.col(iu);
            const auto v0 = pool.v.planted.col(jv);

            acc.reset();
            for (int d = 0; d < config.d_u; ++d) {
                const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.v.size())));
                const double y = u0.dot(pool.v.planted.col(j)) + config.noise.sample(rng);
                acc.add(pool.v.cav.col(j), pool.v.alpha[j], y, 1.0 - gamma, family_alpha);
                acc.add(pool.v.prev_cav.col(j), pool.v.prev_alpha[j], y, gamma, family_alpha);
            }
            acc.solve(u_hat, false);

            acc.reset();
            for (int d = 0; d < config.d_v; ++d) {
                const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.u.size())));
                const double y = pool.u.planted.col(i).dot(v0) + config.noise.sample(rng);
                acc.add(pool.u.cav.col(i), pool.u.alpha[i], y, 1.0 - gamma, family_alpha);
                acc.add(pool.u.prev_cav.col(i), pool.u.prev_alpha[i], y, gamma, family_alpha);
            }
            acc.solve(v_hat, false);

            const double r = u_hat.dot(v_hat) - u0.dot(v0);
            sq[s] = r * r;
        }
    });
    double sum = 0.0;
    for (double x : sq) sum += x;
    return std::sqrt(sum / n_samples / config.rank);
}

PDResult pd_run(const PDConfig& config) { return pd_run(pd_init(config), config); }

PDResult pd_run(PDPool pool, const PDConfig& config) {
    config.validate();
    PDResult res;
    double prev_block = -1.0, block_sum = 0.0;
    int in_block = 0;
    for (int t = 0; t < config.max_sweeps; ++t) {
        pd_sweep(pool, config);
        // Same readout stream every sweep, so block differences reflect the pool.
        const double r = pd_readout(pool, config, config.check_samples, 1);
        res.trace.push_back({pool.sweeps, r});
        block_sum += r;
        if (++in_block == config.block) {
            const double block_mean = block_sum / config.block;
            if (prev_block >= 0.0 &&
                std::abs(block_mean - prev_block) < config.stationarity_tol * block_mean + 1e-12) {
                res.stationary = true;
                break;
            }
            prev_block = block_mean;
            block_sum = 0.0;
            in_block = 0;
        }
    }
    res.sweeps = pool.sweeps;
    res.readout = pd_readout(pool, config, config.readout_samples, 2);
    res.pool = std::move(pool);
    return res;
}

void write_pd_trace_csv(std::ostream& out, const PDResult& result) {
    out << "sweep,readout_nrmse\n";
    for (const auto& p : result.trace) out << p.sweep << ',' << format_double(p.readout) << '\n';
}

}  // namespace gpbp
