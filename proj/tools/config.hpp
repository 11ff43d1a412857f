#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpbp/obs_graph.hpp"

namespace gpbp::cli {

using Json = nlohmann::json;

/// Environment variables GPBP_<KEY> override top-level config keys.
inline constexpr const char* kEnvPrefix = "GPBP_";

/// defaults <- file (if given) <- environment. Unknown keys in the file are
/// a ConfigError naming the key.
Json resolve_config(const Json& defaults, const std::filesystem::path& file);

void apply_env_overrides(Json& config, const Json& defaults);

/// Typed lookups; errors name the key.
double get_double(const Json& cfg, const std::string& key);
int get_int(const Json& cfg, const std::string& key);
std::uint64_t get_seed(const Json& cfg, const std::string& key);
bool get_bool(const Json& cfg, const std::string& key);
std::string get_string(const Json& cfg, const std::string& key);
/// A number or an array of numbers.
std::vector<double> get_double_list(const Json& cfg, const std::string& key);
std::vector<int> get_int_list(const Json& cfg, const std::string& key);
std::vector<std::string> get_string_list(const Json& cfg, const std::string& key);

NoiseModel parse_noise(const Json& node);
Json noise_to_json(const NoiseModel& noise);

/// `# config: {...}` and `# seed: N` comment lines for CSV headers.
void write_config_header(std::ostream& out, const Json& config);

/// Writes the resolved config next to an output file as <file>.config.json.
void write_sidecar(const std::filesystem::path& output, const Json& config);

}  // namespace gpbp::cli
