#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gfpo/adaptive.hpp"
#include "gfpo/env.hpp"
#include "gfpo/errors.hpp"
#include "gfpo/log.hpp"
#include "gfpo/reward.hpp"
#include "gfpo/rng.hpp"
#include "gfpo/selection.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

struct RunConfig {
    TrainConfig train;
    RewardConfig reward;
    AdaptiveConfig adaptive;
    EnvConfig env;
};

inline const char* mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::grpo: return "grpo";
        case TrainMode::gfpo_fixed: return "gfpo_fixed";
        default: return "gfpo_adaptive";
    }
}

inline const char* metric_name(MetricKind k) { return k == MetricKind::length ? "length" : "token_efficiency"; }

inline const char* aggregation_name(Aggregation a) {
    return a == Aggregation::token_level ? "token_level" : "per_response";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::uint64_t parse_u64(std::string_view v, const std::string& where) {
    std::uint64_t out = 0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError(where + ": expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
}

inline std::size_t parse_size(std::string_view v, const std::string& where) {
    return static_cast<std::size_t>(parse_u64(v, where));
}

inline double parse_f64(std::string_view v, const std::string& where) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError(where + ": expected a number, got '" + std::string(v) + "'");
    return out;
}

// Applies one key. Returns false when the key does not exist in the section;
// value errors throw with the section.key path in the message.
inline bool apply_key(RunConfig& cfg, std::string_view section, std::string_view key, std::string_view value) {
    const std::string where = std::string(section) + "." + std::string(key);
    auto is = [&](std::string_view s, std::string_view k) { return section == s && key == k; };

    if (is("trainer", "mode")) {
        if (value == "grpo") cfg.train.mode = TrainMode::grpo;
        else if (value == "gfpo_fixed") cfg.train.mode = TrainMode::gfpo_fixed;
        else if (value == "gfpo_adaptive") cfg.train.mode = TrainMode::gfpo_adaptive;
        else throw ConfigError(where + ": expected grpo | gfpo_fixed | gfpo_adaptive, got '" + std::string(value) + "'");
        return true;
    }
    if (is("trainer", "steps")) { cfg.train.steps = parse_size(value, where); return true; }
    if (is("trainer", "batch_size")) { cfg.train.batch_size = parse_size(value, where); return true; }
    if (is("trainer", "group_size")) { cfg.train.group_size = parse_size(value, where); return true; }
    if (is("trainer", "learning_rate")) { cfg.train.learning_rate = parse_f64(value, where); return true; }
    if (is("trainer", "epsilon")) { cfg.train.epsilon = parse_f64(value, where); return true; }
    if (is("trainer", "dual_clip_c")) { cfg.train.dual_clip_c = parse_f64(value, where); return true; }
    if (is("trainer", "beta")) { cfg.train.beta = parse_f64(value, where); return true; }
    if (is("trainer", "gamma")) { cfg.train.gamma = parse_f64(value, where); return true; }
    if (is("trainer", "temperature")) { cfg.train.temperature = parse_f64(value, where); return true; }
    if (is("trainer", "seed")) { cfg.train.seed = parse_u64(value, where); return true; }
    if (is("trainer", "aggregation")) {
        if (value == "token_level") cfg.train.aggregation = Aggregation::token_level;
        else if (value == "per_response") cfg.train.aggregation = Aggregation::per_response;
        else throw ConfigError(where + ": expected token_level | per_response, got '" + std::string(value) + "'");
        return true;
    }

    if (is("selection", "retain_k")) { cfg.train.retain_k = parse_size(value, where); return true; }
    if (is("selection", "metric")) {
        if (value == "length") { cfg.train.metric = MetricKind::length; cfg.train.order = SortOrder::ascending; }
        else if (value == "token_efficiency") { cfg.train.metric = MetricKind::token_efficiency; cfg.train.order = SortOrder::descending; }
        else throw ConfigError(where + ": expected length | token_efficiency, got '" + std::string(value) + "'");
        return true;
    }

    if (is("adaptive", "k_easy")) { cfg.adaptive.k_easy = parse_size(value, where); return true; }
    if (is("adaptive", "k_medium")) { cfg.adaptive.k_medium = parse_size(value, where); return true; }
    if (is("adaptive", "k_hard")) { cfg.adaptive.k_hard = parse_size(value, where); return true; }
    if (is("adaptive", "k_very_hard")) { cfg.adaptive.k_very_hard = parse_size(value, where); return true; }
    if (is("adaptive", "warmup_steps")) { cfg.adaptive.warmup_steps = parse_size(value, where); return true; }
    if (is("adaptive", "ready_min_weight")) { cfg.adaptive.ready_min_weight = parse_f64(value, where); return true; }
    if (is("adaptive", "compression")) { cfg.adaptive.compression = parse_f64(value, where); return true; }

    if (is("reward", "w_acc")) { cfg.reward.w_acc = parse_f64(value, where); return true; }
    if (is("reward", "w_rep")) { cfg.reward.w_rep = parse_f64(value, where); return true; }
    if (is("reward", "len_lo")) { cfg.reward.len_lo = parse_size(value, where); return true; }
    if (is("reward", "len_hi")) { cfg.reward.len_hi = parse_size(value, where); return true; }
    if (is("reward", "min_scale")) { cfg.reward.min_scale = parse_f64(value, where); return true; }
    if (is("reward", "ngram_n")) { cfg.reward.ngram_n = parse_size(value, where); return true; }

    if (is("env", "n_prompts")) { cfg.env.n_prompts = parse_size(value, where); return true; }
    if (is("env", "w_star_min")) { cfg.env.w_star_min = parse_size(value, where); return true; }
    if (is("env", "w_star_max")) { cfg.env.w_star_max = parse_size(value, where); return true; }
    if (is("env", "work_cap")) { cfg.env.work_cap = parse_size(value, where); return true; }
    if (is("env", "max_len")) { cfg.env.max_len = parse_size(value, where); return true; }
    if (is("env", "position_bucket_width")) { cfg.env.position_bucket_width = parse_size(value, where); return true; }

    return false;
}

inline constexpr std::string_view kSections[] = {"trainer", "selection", "adaptive", "reward", "env"};

inline bool known_section(std::string_view s) {
    for (auto sec : kSections) {
        if (sec == s) return true;
    }
    return false;
}

}  // namespace detail

inline RunConfig default_run_config() { return RunConfig{}; }

// env.max_len is the authority on response length; the trainer copy exists so
// the optimizer modules do not depend on the environment header.
inline void finalize_run_config(RunConfig& cfg) {
    cfg.train.max_len = cfg.env.max_len;
    validate_env_config(cfg.env);
    validate_reward_config(cfg.reward);
    validate_train_config(cfg.train);
    if (cfg.train.mode == TrainMode::gfpo_adaptive) validate_adaptive_config(cfg.adaptive, cfg.train.group_size);
}

// Strict sectioned key = value text. Full-line comments start with '#' or
// ';'. Unknown sections, unknown keys, and duplicate keys are hard errors.
inline RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::string section;
    std::vector<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        const std::string at = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + ": malformed section header '" + std::string(line) + "'");
            const std::string_view name = detail::trim(line.substr(1, line.size() - 2));
            if (!detail::known_section(name)) throw ConfigError(at + ": unknown section '" + std::string(name) + "'");
            section = std::string(name);
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(at + ": expected 'key = value', got '" + std::string(line) + "'");
        if (section.empty()) throw ConfigError(at + ": key before any [section] header");
        const std::string_view key = detail::trim(line.substr(0, eq));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(at + ": empty key");
        const std::string path = section + "." + std::string(key);
        for (const auto& s : seen) {
            if (s == path) throw ConfigError(at + ": duplicate key '" + path + "'");
        }
        seen.push_back(path);
        if (!detail::apply_key(cfg, section, key, value)) throw ConfigError(at + ": unknown key '" + path + "'");
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

// Override syntax: "section.key=value". A bare "key=value" is accepted when
// the key is unambiguous across sections; "G" and "k" are shorthands for the
// group size and retained count.
inline void apply_override(RunConfig& cfg, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + spec + "' is not of the form key=value");
    std::string key = std::string(detail::trim(std::string_view(spec).substr(0, eq)));
    const std::string_view value = detail::trim(std::string_view(spec).substr(eq + 1));
    if (key == "G") key = "trainer.group_size";
    if (key == "k") key = "selection.retain_k";
    const std::size_t dot = key.find('.');
    if (dot != std::string::npos) {
        const std::string section = key.substr(0, dot);
        const std::string name = key.substr(dot + 1);
        if (!detail::known_section(section)) throw ConfigError("override: unknown section '" + section + "'");
        if (!detail::apply_key(cfg, section, name, value)) throw ConfigError("override: unknown key '" + key + "'");
        return;
    }
    int hits = 0;
    std::string hit_section;
    for (auto section : detail::kSections) {
        RunConfig probe = cfg;
        if (detail::apply_key(probe, section, key, value)) {
            ++hits;
            hit_section = std::string(section);
        }
    }
    if (hits == 0) throw ConfigError("override: unknown key '" + key + "'");
    if (hits > 1) throw ConfigError("override: key '" + key + "' is ambiguous, qualify it as section.key");
    detail::apply_key(cfg, hit_section, key, value);
}

// Fixed section and key order so equal configs serialize to equal bytes.
inline std::string canonical_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[trainer]\n";
    out << "mode = " << mode_name(cfg.train.mode) << "\n";
    out << "steps = " << cfg.train.steps << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "group_size = " << cfg.train.group_size << "\n";
    out << "learning_rate = " << format_double(cfg.train.learning_rate) << "\n";
    out << "epsilon = " << format_double(cfg.train.epsilon) << "\n";
    out << "dual_clip_c = " << format_double(cfg.train.dual_clip_c) << "\n";
    out << "beta = " << format_double(cfg.train.beta) << "\n";
    out << "gamma = " << format_double(cfg.train.gamma) << "\n";
    out << "temperature = " << format_double(cfg.train.temperature) << "\n";
    out << "seed = " << cfg.train.seed << "\n";
    out << "aggregation = " << aggregation_name(cfg.train.aggregation) << "\n";
    out << "\n[selection]\n";
    out << "retain_k = " << cfg.train.retain_k << "\n";
    out << "metric = " << metric_name(cfg.train.metric) << "\n";
    out << "\n[adaptive]\n";
    out << "k_easy = " << cfg.adaptive.k_easy << "\n";
    out << "k_medium = " << cfg.adaptive.k_medium << "\n";
    out << "k_hard = " << cfg.adaptive.k_hard << "\n";
    out << "k_very_hard = " << cfg.adaptive.k_very_hard << "\n";
    out << "warmup_steps = " << cfg.adaptive.warmup_steps << "\n";
    out << "ready_min_weight = " << format_double(cfg.adaptive.ready_min_weight) << "\n";
    out << "compression = " << format_double(cfg.adaptive.compression) << "\n";
    out << "\n[reward]\n";
    out << "w_acc = " << format_double(cfg.reward.w_acc) << "\n";
    out << "w_rep = " << format_double(cfg.reward.w_rep) << "\n";
    out << "len_lo = " << cfg.reward.len_lo << "\n";
    out << "len_hi = " << cfg.reward.len_hi << "\n";
    out << "min_scale = " << format_double(cfg.reward.min_scale) << "\n";
    out << "ngram_n = " << cfg.reward.ngram_n << "\n";
    out << "\n[env]\n";
    out << "n_prompts = " << cfg.env.n_prompts << "\n";
    out << "w_star_min = " << cfg.env.w_star_min << "\n";
    out << "w_star_max = " << cfg.env.w_star_max << "\n";
    out << "work_cap = " << cfg.env.work_cap << "\n";
    out << "max_len = " << cfg.env.max_len << "\n";
    out << "position_bucket_width = " << cfg.env.position_bucket_width << "\n";
    return out.str();
}

inline std::string config_hash_hex(const RunConfig& cfg) {
    const std::uint64_t h = fnv1a64(canonical_config(cfg));
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

}  // namespace gfpo
