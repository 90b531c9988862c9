#include "deq/cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace deq::cli {

Json default_config() {
    return Json::parse(R"({
  "data": {
    "kind": "synthetic",
    "n": 1000,
    "d": 1000,
    "seed": 0,
    "y_cap": 10.0,
    "x_path": null,
    "y_path": null,
    "images_path": null,
    "labels_path": null,
    "cifar_paths": [],
    "classes": [0, 1],
    "per_class": 500
  },
  "model": {
    "m": 500,
    "sigma_w2": 0.08,
    "seed": 0
  },
  "solver": {
    "tol": 1e-10,
    "max_iter": 10000
  },
  "train": {
    "eta": "auto",
    "eta_safety": 0.5,
    "steps": 500,
    "monitor_every": 0,
    "assert_mode": "record",
    "delta": null,
    "warm_start": true,
    "checkpoint_every": 0,
    "resume": null
  },
  "check": {
    "zero_residual": false,
    "delta": null
  },
  "kernel": {
    "l_max": 30,
    "tol": 1e-14,
    "width_constant": 1.0,
    "width_t": 0.1,
    "depth_constant": 1.0
  },
  "concentration": {
    "experiments": ["tied_vs_population", "lambda0_vs_width"],
    "m_list": [100, 400, 1600],
    "l": 6,
    "trials": 20,
    "base_seed": 1,
    "l_max": 12,
    "reconstruct": {"i": 0, "j": 1, "l": 3}
  },
  "grad_check": {
    "m": 30,
    "n": 5,
    "d": 8,
    "sigma_w2": 0.08,
    "seed": 0,
    "step": 1e-5,
    "rel_tol": 1e-4,
    "kink_tol": 1e-7,
    "solver_tol": 1e-12,
    "kronecker_tol": 1e-8,
    "corrupt_scale": 0.0,
    "w_scale": 1.0
  },
  "output": {
    "directory": "out"
  }
})");
}

namespace {

void merge_checked(Json& base, const Json& patch, const std::string& prefix) {
    if (!patch.is_object()) throw ConfigError("config: " + (prefix.empty() ? "document" : prefix) +
                                              " must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key " + key);
        Json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_checked(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

std::vector<std::string> split_dots(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = s.find('.', start);
        parts.push_back(s.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return parts;
}

double num(const Json& cfg, const std::string& key) { return get<double>(cfg, key); }

long integer(const Json& cfg, const std::string& key) {
    const Json& v = at_path(cfg, key);
    if (!v.is_number_integer()) throw ConfigError("config: " + key + " must be an integer");
    return v.get<long>();
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
}

void require_file(const Json& cfg, const std::string& key) {
    const Json& v = at_path(cfg, key);
    require(v.is_string() && !v.get<std::string>().empty(), key + " must name a file");
    require(std::filesystem::exists(v.get<std::string>()),
            key + " does not exist: " + v.get<std::string>());
}

void validate_data(const Json& cfg) {
    const auto kind = get<std::string>(cfg, "data.kind");
    if (kind == "synthetic") {
        require(integer(cfg, "data.n") >= 1, "data.n must be >= 1");
        require(integer(cfg, "data.d") >= 1, "data.d must be >= 1");
        require(integer(cfg, "data.seed") >= 0, "data.seed must be >= 0");
        require(num(cfg, "data.y_cap") > 0.0, "data.y_cap must be positive");
    } else if (kind == "file") {
        require_file(cfg, "data.x_path");
        require_file(cfg, "data.y_path");
    } else if (kind == "mnist" || kind == "cifar10") {
        if (kind == "mnist") {
            require_file(cfg, "data.images_path");
            require_file(cfg, "data.labels_path");
        } else {
            const Json& paths = at_path(cfg, "data.cifar_paths");
            require(paths.is_array() && !paths.empty(), "data.cifar_paths must be a non-empty list");
            for (const auto& p : paths) {
                require(p.is_string() && std::filesystem::exists(p.get<std::string>()),
                        "data.cifar_paths entry does not exist: " + p.dump());
            }
        }
        const Json& classes = at_path(cfg, "data.classes");
        require(classes.is_array() && classes.size() == 2 && classes[0].is_number_integer() &&
                    classes[1].is_number_integer() && classes[0] != classes[1],
                "data.classes must be two distinct integers");
        require(integer(cfg, "data.per_class") >= 1, "data.per_class must be >= 1");
        require(integer(cfg, "data.seed") >= 0, "data.seed must be >= 0");
    } else {
        throw ConfigError("config: data.kind must be synthetic, file, mnist or cifar10");
    }
}

void validate_model(const Json& cfg) {
    require(integer(cfg, "model.m") >= 1, "model.m must be >= 1");
    const double s = num(cfg, "model.sigma_w2");
    require(s > 0.0 && s < 0.125, "model.sigma_w2 must lie in (0, 1/8)");
    require(integer(cfg, "model.seed") >= 0, "model.seed must be >= 0");
}

void validate_solver(const Json& cfg) {
    require(num(cfg, "solver.tol") > 0.0, "solver.tol must be positive");
    require(integer(cfg, "solver.max_iter") >= 1, "solver.max_iter must be >= 1");
}

void validate_optional_positive(const Json& cfg, const std::string& key) {
    const Json& v = at_path(cfg, key);
    require(v.is_null() || (v.is_number() && v.get<double>() > 0.0), key + " must be null or positive");
}

void validate_train(const Json& cfg) {
    const Json& eta = at_path(cfg, "train.eta");
    require((eta.is_string() && eta.get<std::string>() == "auto") ||
                (eta.is_number() && eta.get<double>() > 0.0),
            "train.eta must be \"auto\" or a positive number");
    require(num(cfg, "train.eta_safety") > 0.0, "train.eta_safety must be positive");
    require(integer(cfg, "train.steps") >= 0, "train.steps must be >= 0");
    require(integer(cfg, "train.monitor_every") >= 0, "train.monitor_every must be >= 0");
    const auto mode = get<std::string>(cfg, "train.assert_mode");
    require(mode == "record" || mode == "fail_fast", "train.assert_mode must be record or fail_fast");
    validate_optional_positive(cfg, "train.delta");
    get<bool>(cfg, "train.warm_start");
    require(integer(cfg, "train.checkpoint_every") >= 0, "train.checkpoint_every must be >= 0");
    const Json& resume = at_path(cfg, "train.resume");
    if (!resume.is_null()) {
        require_file(cfg, "train.resume");
        const std::string sidecar = resume.get<std::string>() + ".json";
        require(std::filesystem::exists(sidecar), "train state " + sidecar + " does not exist");
    }
}

void validate_kernel(const Json& cfg) {
    require(integer(cfg, "kernel.l_max") >= 1, "kernel.l_max must be >= 1");
    require(num(cfg, "kernel.tol") > 0.0, "kernel.tol must be positive");
    require(num(cfg, "kernel.width_constant") > 0.0, "kernel.width_constant must be positive");
    const double t = num(cfg, "kernel.width_t");
    require(t > 0.0 && t < 1.0, "kernel.width_t must lie in (0, 1)");
    require(num(cfg, "kernel.depth_constant") > 0.0, "kernel.depth_constant must be positive");
}

void validate_concentration(const Json& cfg) {
    static const std::set<std::string> known = {"tied_vs_population", "lambda0_vs_width",
                                                "kernel_depth", "equilibrium_depth", "reconstruct"};
    const Json& ex = at_path(cfg, "concentration.experiments");
    require(ex.is_array() && !ex.empty(), "concentration.experiments must be a non-empty list");
    for (const auto& e : ex) {
        require(e.is_string() && known.count(e.get<std::string>()) == 1,
                "unknown concentration experiment " + e.dump());
    }
    const Json& ms = at_path(cfg, "concentration.m_list");
    require(ms.is_array() && !ms.empty(), "concentration.m_list must be a non-empty list");
    long prev = 0;
    for (const auto& m : ms) {
        require(m.is_number_integer() && m.get<long>() > prev,
                "concentration.m_list must hold strictly ascending positive integers");
        prev = m.get<long>();
    }
    require(integer(cfg, "concentration.l") >= 1, "concentration.l must be >= 1");
    require(integer(cfg, "concentration.trials") >= 1, "concentration.trials must be >= 1");
    require(integer(cfg, "concentration.base_seed") >= 0, "concentration.base_seed must be >= 0");
    require(integer(cfg, "concentration.l_max") >= 1, "concentration.l_max must be >= 1");
    require(integer(cfg, "concentration.reconstruct.i") >= 0, "concentration.reconstruct.i must be >= 0");
    require(integer(cfg, "concentration.reconstruct.j") >= 0, "concentration.reconstruct.j must be >= 0");
    require(integer(cfg, "concentration.reconstruct.l") >= 1, "concentration.reconstruct.l must be >= 1");
}

void validate_grad_check(const Json& cfg) {
    for (const char* k : {"grad_check.m", "grad_check.n", "grad_check.d"}) {
        require(integer(cfg, k) >= 1, std::string(k) + " must be >= 1");
    }
    require(integer(cfg, "grad_check.n") >= 2, "grad_check.n must be >= 2");
    const double s = num(cfg, "grad_check.sigma_w2");
    require(s > 0.0 && s < 0.125, "grad_check.sigma_w2 must lie in (0, 1/8)");
    require(integer(cfg, "grad_check.seed") >= 0, "grad_check.seed must be >= 0");
    for (const char* k : {"grad_check.step", "grad_check.rel_tol", "grad_check.kink_tol",
                          "grad_check.solver_tol", "grad_check.kronecker_tol", "grad_check.w_scale"}) {
        require(num(cfg, k) > 0.0, std::string(k) + " must be positive");
    }
    num(cfg, "grad_check.corrupt_scale");
}

}  // namespace

const Json& at_path(const Json& cfg, const std::string& dotted) {
    const Json* node = &cfg;
    for (const auto& part : split_dots(dotted)) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("config: missing key " + dotted);
        node = &(*node)[part];
    }
    return *node;
}

void apply_override(Json& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("config: override must look like section.key=value, got " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    Json* node = &cfg;
    for (const auto& part : split_dots(key)) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("config: unknown key " + key);
        node = &(*node)[part];
    }
    if (node->is_object()) throw ConfigError("config: " + key + " is a section, not a value");
    *node = std::move(value);
}

Json load_config(const std::optional<std::filesystem::path>& file,
                 const std::vector<std::string>& overrides) {
    Json cfg = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("config: cannot open " + file->string());
        Json doc = Json::parse(in, nullptr, false, true);
        if (doc.is_discarded()) throw ConfigError("config: " + file->string() + " is not valid JSON");
        merge_checked(cfg, doc, "");
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

void validate_config(const Json& cfg, const std::string& command) {
    require(at_path(cfg, "output.directory").is_string(), "output.directory must be a string");
    if (command == "gen-data") {
        require(get<std::string>(cfg, "data.kind") == "synthetic",
                "gen-data only generates synthetic data");
        validate_data(cfg);
    } else if (command == "kernel") {
        validate_data(cfg);
        validate_model(cfg);
        validate_kernel(cfg);
    } else if (command == "check") {
        validate_data(cfg);
        validate_model(cfg);
        validate_solver(cfg);
        validate_optional_positive(cfg, "check.delta");
        get<bool>(cfg, "check.zero_residual");
    } else if (command == "train") {
        validate_data(cfg);
        validate_model(cfg);
        validate_solver(cfg);
        validate_train(cfg);
    } else if (command == "concentration") {
        validate_data(cfg);
        validate_model(cfg);
        validate_solver(cfg);
        validate_concentration(cfg);
    } else if (command == "grad-check") {
        validate_grad_check(cfg);
    } else {
        throw ConfigError("unknown command " + command);
    }
}

std::string config_hash(const Json& cfg) {
    Json copy = cfg;
    copy.erase("output");
    const std::string text = copy.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace deq::cli
