#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace gpbp::cli {

enum ExitCode : int { kOk = 0, kUsageError = 2, kRuntimeFailure = 3 };

struct Options {
    std::filesystem::path config;  // empty: defaults (and environment) only
    std::filesystem::path out = ".";
    std::optional<int> threads;
    bool allow_failures = false;
    std::vector<std::string> algorithms;  // overrides the config's list when nonempty
};

/// Default configuration of each subcommand; every key the subcommand reads.
Json synth_defaults();
Json pd_defaults();
Json realdata_defaults();
Json verify_defaults();

/// Each command resolves its config, runs, writes its outputs under
/// options.out and returns an exit code. Errors propagate as exceptions.
int run_synth(const Options& options, std::ostream& log);
int run_pd(const Options& options, std::ostream& log);
int run_realdata(const Options& options, std::ostream& log);
int run_verify(const Options& options, std::ostream& log);

/// Runs `command`, mapping configuration, parse and usage errors to exit code
/// 2 and any other failure to 3.
int guarded(const std::function<int()>& command, std::ostream& err);

}  // namespace gpbp::cli
