#include "qhd/sweep_config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qhd/detail/atomic_file.hpp"

namespace qhd {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = "invalid experiment config:";
    for (const auto& p : problems) msg += "\n  " + p;
    return msg;
}

std::string_view to_string(DropoutReading r) { return r == DropoutReading::drop_probability ? "drop" : "keep"; }
std::string_view to_string(nn::InitScheme s) {
    return s == nn::InitScheme::he_normal ? "he-normal" : "glorot-uniform";
}

// Collects type and key errors while reading one JSON object.
class Reader {
public:
    Reader(const json& obj, std::string prefix, std::vector<std::string>& problems)
        : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {}

    void allow_only(std::initializer_list<std::string_view> keys) {
        for (const auto& [key, _] : obj_.items()) {
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                problems_.push_back(fmt::format("unknown key '{}{}'", prefix_, key));
            }
        }
    }

    [[nodiscard]] bool has(const char* key) const { return obj_.contains(key); }

    void number(const char* key, double& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number()) return bad(key, "a number");
        out = v.get<double>();
    }

    template <class UInt>
    void count(const char* key, UInt& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number_unsigned()) return bad(key, "a non-negative integer");
        out = static_cast<UInt>(v.get<std::uint64_t>());
    }

    void numbers(const char* key, std::vector<double>& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_array()) return bad(key, "an array of numbers");
        std::vector<double> tmp;
        for (const auto& e : v) {
            if (!e.is_number()) return bad(key, "an array of numbers");
            tmp.push_back(e.get<double>());
        }
        out = std::move(tmp);
    }

    void counts(const char* key, std::vector<std::size_t>& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_array()) return bad(key, "an array of non-negative integers");
        std::vector<std::size_t> tmp;
        for (const auto& e : v) {
            if (!e.is_number_unsigned()) return bad(key, "an array of non-negative integers");
            tmp.push_back(e.get<std::size_t>());
        }
        out = std::move(tmp);
    }

    void flag(const char* key, bool& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_boolean()) return bad(key, "true or false");
        out = v.get<bool>();
    }

    void text(const char* key, std::string& out) {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_string()) return bad(key, "a string");
        out = v.get<std::string>();
    }

    void reading(const char* key, DropoutReading& out) {
        std::string s;
        if (!has(key)) return;
        text(key, s);
        if (s == "drop") {
            out = DropoutReading::drop_probability;
        } else if (s == "keep") {
            out = DropoutReading::keep_probability;
        } else if (obj_.at(key).is_string()) {
            bad(key, "\"drop\" or \"keep\"");
        }
    }

    void init(const char* key, nn::InitScheme& out) {
        std::string s;
        if (!has(key)) return;
        text(key, s);
        if (s == "he-normal") {
            out = nn::InitScheme::he_normal;
        } else if (s == "glorot-uniform") {
            out = nn::InitScheme::glorot_uniform;
        } else if (obj_.at(key).is_string()) {
            bad(key, "\"he-normal\" or \"glorot-uniform\"");
        }
    }

    void pair(const char* key, std::array<double, 2>& out) {
        std::vector<double> v;
        numbers(key, v);
        if (!has(key) || !obj_.at(key).is_array()) return;
        if (v.size() != 2) return bad(key, "two numbers");
        out = {v[0], v[1]};
    }

    void pair(const char* key, std::array<std::size_t, 2>& out) {
        std::vector<std::size_t> v;
        counts(key, v);
        if (!has(key) || !obj_.at(key).is_array()) return;
        if (v.size() != 2) return bad(key, "two positive integers");
        out = {v[0], v[1]};
    }

    [[nodiscard]] const json* object(const char* key) {
        if (!has(key)) return nullptr;
        const auto& v = obj_.at(key);
        if (!v.is_object()) {
            bad(key, "an object");
            return nullptr;
        }
        return &v;
    }

private:
    void bad(const char* key, const char* expected) {
        problems_.push_back(fmt::format("'{}{}' must be {}", prefix_, key, expected));
    }

    const json& obj_;
    std::string prefix_;
    std::vector<std::string>& problems_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

ExperimentConfig parse_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("not valid JSON: ") + e.what()});
    }
    if (!root.is_object()) throw ConfigError({"top level must be a JSON object"});

    std::vector<std::string> problems;
    Reader top(root, "", problems);
    top.allow_only({"sweep", "message_db", "target_db", "widths", "train_per_key", "test_per_key",
                    "cnn_held_out_per_key", "gnn_epochs", "cnn_epochs", "seed", "replicates", "output_dir", "workers",
                    "gnn", "cnn"});

    ExperimentConfig cfg;
    std::string kind_text;
    if (!top.has("sweep")) {
        problems.emplace_back("missing required key 'sweep'");
    } else {
        top.text("sweep", kind_text);
    }
    if (!kind_text.empty()) {
        try {
            cfg.spec = SweepSpec::defaults(parse_sweep_kind(kind_text));
        } catch (const std::invalid_argument&) {
            problems.push_back(fmt::format(
                "'sweep' must be one of \"target-amplitude\", \"scan-range\", \"message-amplitude\" (got \"{}\")",
                kind_text));
        }
    }
    auto& s = cfg.spec;
    top.numbers("message_db", s.message_db);
    top.numbers("target_db", s.target_db);
    top.counts("widths", s.widths);
    top.count("train_per_key", s.train_per_key);
    top.count("test_per_key", s.test_per_key);
    top.count("cnn_held_out_per_key", s.cnn_held_out_per_key);
    top.count("gnn_epochs", s.gnn_epochs);
    top.count("cnn_epochs", s.cnn_epochs);
    top.count("seed", s.base_seed);
    top.count("replicates", s.replicates);
    top.count("workers", cfg.workers);
    std::string out_dir;
    top.text("output_dir", out_dir);
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    if (const json* g = top.object("gnn")) {
        Reader r(*g, "gnn.", problems);
        r.allow_only({"learning_rate", "batch_size", "adam_epsilon", "dropout_rate", "dropout_reading", "init",
                      "center_input"});
        r.number("learning_rate", s.gnn.learning_rate);
        r.count("batch_size", s.gnn.batch_size);
        r.number("adam_epsilon", s.gnn.adam_epsilon);
        r.number("dropout_rate", s.gnn.dropout_rate);
        r.reading("dropout_reading", s.gnn.dropout_reading);
        r.init("init", s.gnn.init);
        r.flag("center_input", s.gnn.center_input);
    }
    if (const json* c = top.object("cnn")) {
        Reader r(*c, "cnn.", problems);
        r.allow_only({"learning_rate", "batch_size", "adam_epsilon", "fc_units", "dropout_rates", "dropout_reading",
                      "init"});
        r.number("learning_rate", s.cnn.learning_rate);
        r.count("batch_size", s.cnn.batch_size);
        r.number("adam_epsilon", s.cnn.adam_epsilon);
        r.pair("fc_units", s.cnn.fc_units);
        r.pair("dropout_rates", s.cnn.dropout_rates);
        r.reading("dropout_reading", s.cnn.dropout_reading);
        r.init("init", s.cnn.init);
    }
    if (!kind_text.empty() && problems.empty()) {
        for (auto& p : s.problems()) problems.push_back(std::move(p));
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_json(const SweepSpec& s) {
    ordered_json j;
    j["sweep"] = to_string(s.kind);
    j["message_db"] = s.message_db;
    j["target_db"] = s.target_db;
    j["widths"] = s.widths;
    j["train_per_key"] = s.train_per_key;
    j["test_per_key"] = s.test_per_key;
    j["cnn_held_out_per_key"] = s.cnn_held_out_per_key;
    j["gnn_epochs"] = s.gnn_epochs;
    j["cnn_epochs"] = s.cnn_epochs;
    j["seed"] = s.base_seed;
    j["replicates"] = s.replicates;
    j["gnn"] = ordered_json{{"learning_rate", s.gnn.learning_rate},
                            {"batch_size", s.gnn.batch_size},
                            {"adam_epsilon", s.gnn.adam_epsilon},
                            {"dropout_rate", s.gnn.dropout_rate},
                            {"dropout_reading", to_string(s.gnn.dropout_reading)},
                            {"init", to_string(s.gnn.init)},
                            {"center_input", s.gnn.center_input}};
    j["cnn"] = ordered_json{{"learning_rate", s.cnn.learning_rate},
                            {"batch_size", s.cnn.batch_size},
                            {"adam_epsilon", s.cnn.adam_epsilon},
                            {"fc_units", s.cnn.fc_units},
                            {"dropout_rates", s.cnn.dropout_rates},
                            {"dropout_reading", to_string(s.cnn.dropout_reading)},
                            {"init", to_string(s.cnn.init)}};
    return j.dump(2) + "\n";
}

std::string config_hash(const SweepSpec& spec) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canonical_json(spec)) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return fmt::format("{:016x}", h);
}

fs::path run_directory(const ExperimentConfig& cfg) {
    return cfg.output_dir / fmt::format("{}-s{}", config_hash(cfg.spec), cfg.spec.base_seed);
}

RunConfigResult run_config(const ExperimentConfig& cfg, const RunConfigOptions& opts) {
    cfg.spec.validate();
    RunConfigResult result;
    result.run_dir = run_directory(cfg);
    fs::create_directories(result.run_dir);
    const auto snapshot = canonical_json(cfg.spec);
    const auto snapshot_path = result.run_dir / "config.snapshot";
    if (fs::exists(snapshot_path)) {
        std::ifstream in(snapshot_path);
        std::stringstream ss;
        ss << in.rdbuf();
        if (ss.str() != snapshot) {
            throw std::runtime_error("run directory " + result.run_dir.string() + " belongs to a different config");
        }
    } else {
        detail::write_atomically(snapshot_path, [&](std::ostream& out) { out << snapshot; }, false);
    }
    SweepOptions so;
    so.run_dir = result.run_dir;
    so.workers = opts.workers.value_or(cfg.workers);
    so.plot = opts.plot;
    so.log = opts.log;
    result.outcome = run_sweep(cfg.spec, so);
    return result;
}

RunConfigResult run_config(const fs::path& config_path, const RunConfigOptions& opts) {
    return run_config(load_config(config_path), opts);
}

}  // namespace qhd
