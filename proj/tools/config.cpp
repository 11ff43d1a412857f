#include "config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "gpbp/errors.hpp"

namespace gpbp::cli {

namespace {

std::string env_name(const std::string& key) {
    std::string name = kEnvPrefix;
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

const Json& require(const Json& cfg, const std::string& key) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) throw ConfigError(key + ": missing");
    return *it;
}

}  // namespace

Json resolve_config(const Json& defaults, const std::filesystem::path& file) {
    Json cfg = defaults;
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw ConfigError("config: cannot open " + file.string());
        Json user;
        try {
            user = Json::parse(in, nullptr, true, true);
        } catch (const Json::parse_error& e) {
            throw ConfigError("config: " + file.string() + ": " + e.what());
        }
        if (!user.is_object()) throw ConfigError("config: top level must be an object");
        for (auto it = user.begin(); it != user.end(); ++it) {
            if (!defaults.contains(it.key())) throw ConfigError(it.key() + ": unknown config key");
            cfg[it.key()] = it.value();
        }
    }
    apply_env_overrides(cfg, defaults);
    return cfg;
}

void apply_env_overrides(Json& config, const Json& defaults) {
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
        const char* raw = std::getenv(env_name(it.key()).c_str());
        if (!raw) continue;
        // JSON literals and arrays parse as such; anything else is a string.
        Json value = Json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = std::string(raw);
        config[it.key()] = value;
    }
}

double get_double(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    return v.get<double>();
}

int get_int(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
    return v.get<int>();
}

std::uint64_t get_seed(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        throw ConfigError(key + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    return v.get<bool>();
}

std::string get_string(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    return v.get<std::string>();
}

std::vector<double> get_double_list(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array() || v.empty()) throw ConfigError(key + ": expected a number or a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(key + ": expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<int> get_int_list(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (v.is_number_integer()) return {v.get<int>()};
    if (!v.is_array() || v.empty()) throw ConfigError(key + ": expected an integer or a nonempty array of integers");
    std::vector<int> out;
    for (const auto& x : v) {
        if (!x.is_number_integer()) throw ConfigError(key + ": expected integers");
        out.push_back(x.get<int>());
    }
    return out;
}

std::vector<std::string> get_string_list(const Json& cfg, const std::string& key) {
    const Json& v = require(cfg, key);
    if (v.is_string()) {
        // Comma-separated lists are accepted for command-line style overrides.
        std::vector<std::string> out;
        std::string s = v.get<std::string>(), item;
        for (char c : s) {
            if (c == ',') {
                if (!item.empty()) out.push_back(item);
                item.clear();
            } else if (!std::isspace(static_cast<unsigned char>(c))) {
                item += c;
            }
        }
        if (!item.empty()) out.push_back(item);
        if (out.empty()) throw ConfigError(key + ": empty list");
        return out;
    }
    if (!v.is_array() || v.empty()) throw ConfigError(key + ": expected a string or a nonempty array of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
        if (!x.is_string()) throw ConfigError(key + ": expected strings");
        out.push_back(x.get<std::string>());
    }
    return out;
}

NoiseModel parse_noise(const Json& node) {
    if (!node.is_object()) throw ConfigError("noise: expected an object with kind, sigma, p");
    NoiseModel m;
    m.kind = noise_kind_from_string(get_string(node, "kind"));
    if (m.kind != NoiseModel::Kind::none) m.sigma = get_double(node, "sigma");
    if (m.kind == NoiseModel::Kind::bernoulli_gaussian) m.p = node.contains("p") ? get_double(node, "p") : 0.1;
    if (m.kind == NoiseModel::Kind::gaussian) m.p = 1.0;
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("noise: ") + e.what());
    }
    return m;
}

Json noise_to_json(const NoiseModel& noise) {
    return {{"kind", to_string(noise.kind)}, {"sigma", noise.sigma}, {"p", noise.p}};
}

void write_config_header(std::ostream& out, const Json& config) {
    out << "# config: " << config.dump() << '\n';
    if (config.contains("seed")) out << "# seed: " << config["seed"].dump() << '\n';
}

void write_sidecar(const std::filesystem::path& output, const Json& config) {
    std::ofstream out(output.string() + ".config.json");
    if (!out) throw std::runtime_error("cannot write " + output.string() + ".config.json");
    out << config.dump(2) << '\n';
}

}  // namespace gpbp::cli
