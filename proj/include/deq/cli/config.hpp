#pragma once

#include "deq/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace deq::cli {

using Json = nlohmann::ordered_json;

// Missing/unknown keys, wrong types, out-of-range values, missing files.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Every key the tool understands, with its default value. A config file may
// only set keys that appear here.
Json default_config();

// Defaults, then the file (if any), then each "section.key=value" override in
// order. Values in overrides are parsed as JSON, falling back to a plain string.
Json load_config(const std::optional<std::filesystem::path>& file,
                 const std::vector<std::string>& overrides = {});

void apply_override(Json& cfg, const std::string& assignment);

// Range checks for the sections a command reads, plus existence of every path
// those sections reference.
void validate_config(const Json& cfg, const std::string& command);

// FNV-1a over the compact dump of everything except the output section, as 16
// hex digits. Moving the output directory does not change the hash.
std::string config_hash(const Json& cfg);

// Typed lookup by dotted path, e.g. get<long>(cfg, "model.m").
const Json& at_path(const Json& cfg, const std::string& dotted);

template <class T>
T get(const Json& cfg, const std::string& dotted) {
    const Json& v = at_path(cfg, dotted);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: " + dotted + " has the wrong type (" + v.dump() + ")");
    }
}

}  // namespace deq::cli
