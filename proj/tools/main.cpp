#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace gpbp::cli;

    CLI::App app{"Low-rank matrix completion by message passing: experiments and checks"};
    app.require_subcommand(1);

    Options options;
    std::string algorithms;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", options.config, "JSON config file (keys not given keep their defaults)");
        sub->add_option("--out", options.out, "output directory")->capture_default_str();
        sub->add_option("--threads", options.threads, "worker threads (overrides the config)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--allow-failures", options.allow_failures,
                      "record solver failures in the outputs and exit 0");
    };

    auto* synth = app.add_subcommand("synth", "synthetic-instance experiments");
    auto* pd = app.add_subcommand("pd", "population dynamics grid");
    auto* realdata = app.add_subcommand("realdata", "nested cross-validation on a ratings file");
    auto* verify = app.add_subcommand("verify", "oracle checks");
    for (auto* sub : {synth, pd, realdata, verify}) add_common(sub);
    realdata->add_option("--algorithms", algorithms, "comma-separated solver list, e.g. gpbp,alsmp");
    pd->add_option("--modes", algorithms, "comma-separated mode list (gpbp, alsmp)");
    synth->add_option("--algorithms", algorithms, "comma-separated solver list");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    std::string item;
    for (char c : algorithms + ",") {
        if (c == ',') {
            if (!item.empty()) options.algorithms.push_back(item);
            item.clear();
        } else if (c != ' ') {
            item += c;
        }
    }

    return guarded(
        [&] {
            if (*synth) return run_synth(options, std::cerr);
            if (*pd) return run_pd(options, std::cerr);
            if (*realdata) return run_realdata(options, std::cerr);
            return run_verify(options, std::cerr);
        },
        std::cerr);
}
