#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfpo/errors.hpp"
#include "gfpo/rng.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

// Alphabet: WORK advances the task, FILLER only adds length, ANSWER stops.
enum Token : int { WORK = 0, FILLER = 1, ANSWER = 2 };
inline constexpr std::size_t kAlphabetSize = 3;

struct EnvConfig {
    std::size_t n_prompts = 256;
    std::size_t w_star_min = 2;
    std::size_t w_star_max = 12;
    std::size_t work_cap = 16;
    std::size_t max_len = 64;
    std::size_t position_bucket_width = 8;
};

inline void validate_env_config(const EnvConfig& cfg) {
    if (cfg.n_prompts < 1) throw ConfigError("env.n_prompts must be at least 1");
    if (cfg.w_star_min < 1) throw ConfigError("env.w_star_min must be at least 1");
    if (cfg.w_star_max < cfg.w_star_min) throw ConfigError("env.w_star_max must be at least env.w_star_min");
    if (cfg.work_cap < 1) throw ConfigError("env.work_cap must be at least 1");
    if (cfg.max_len < 1) throw ConfigError("env.max_len must be at least 1");
    if (cfg.position_bucket_width < 1) throw ConfigError("env.position_bucket_width must be at least 1");
}

struct SyntheticTask {
    std::string prompt_id;
    std::size_t required_work = 1;
    int difficulty_label = 0;  // 0 easy .. 3 very hard, by required_work quartile
};

// Tabular softmax policy over (saturated work count, position bucket) states.
class ToyPolicy {
public:
    ToyPolicy() = default;

    ToyPolicy(std::size_t work_cap, std::size_t max_len, std::size_t bucket_width)
        : work_cap_(work_cap),
          bucket_width_(bucket_width),
          n_buckets_((max_len + bucket_width - 1) / bucket_width),
          logits_((work_cap + 1) * n_buckets_ * kAlphabetSize, 0.0) {}

    explicit ToyPolicy(const EnvConfig& cfg) : ToyPolicy(cfg.work_cap, cfg.max_len, cfg.position_bucket_width) {}

    std::size_t state_index(std::size_t work_done, std::size_t position) const {
        const std::size_t w = std::min(work_done, work_cap_);
        const std::size_t b = std::min(position / bucket_width_, n_buckets_ - 1);
        return w * n_buckets_ + b;
    }

    std::size_t state_count() const { return (work_cap_ + 1) * n_buckets_; }
    std::size_t parameter_count() const { return logits_.size(); }

    double logit(std::size_t state, std::size_t action) const { return logits_[state * kAlphabetSize + action]; }
    double& logit(std::size_t state, std::size_t action) { return logits_[state * kAlphabetSize + action]; }

    std::vector<double> probs(std::size_t state, double temperature) const {
        const double* z = logits_.data() + state * kAlphabetSize;
        double zmax = z[0];
        for (std::size_t a = 1; a < kAlphabetSize; ++a) zmax = std::max(zmax, z[a]);
        std::vector<double> p(kAlphabetSize);
        double sum = 0.0;
        for (std::size_t a = 0; a < kAlphabetSize; ++a) {
            p[a] = std::exp((z[a] - zmax) / temperature);
            sum += p[a];
        }
        for (auto& v : p) v /= sum;
        return p;
    }

    const std::vector<double>& raw_logits() const { return logits_; }
    std::vector<double>& raw_logits() { return logits_; }
    std::size_t work_cap() const { return work_cap_; }
    std::size_t bucket_width() const { return bucket_width_; }
    std::size_t bucket_count() const { return n_buckets_; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["work_cap"] = work_cap_;
        j["bucket_width"] = bucket_width_;
        j["bucket_count"] = n_buckets_;
        j["logits"] = logits_;
        return j;
    }

    static ToyPolicy from_json(const nlohmann::json& j) {
        ToyPolicy p;
        p.work_cap_ = j.at("work_cap").get<std::size_t>();
        p.bucket_width_ = j.at("bucket_width").get<std::size_t>();
        p.n_buckets_ = j.at("bucket_count").get<std::size_t>();
        p.logits_ = j.at("logits").get<std::vector<double>>();
        if (p.logits_.size() != p.state_count() * kAlphabetSize) {
            throw IoError("policy checkpoint logit table size does not match its shape fields");
        }
        return p;
    }

private:
    std::size_t work_cap_ = 16;
    std::size_t bucket_width_ = 8;
    std::size_t n_buckets_ = 8;
    std::vector<double> logits_;
};

// Starting policy for training runs, standing in for the pre-RL model:
// mostly correct but verbose. Below the hardest work requirement it mixes
// WORK and FILLER with a small stray-ANSWER rate; once enough work is done
// it answers quickly. A uniform start would make response filtering
// degenerate (almost no correct responses to retain), which matches nothing
// in the protocol this mirrors.
inline ToyPolicy initial_policy(const EnvConfig& cfg) {
    ToyPolicy p(cfg);
    const std::size_t enough = std::min(cfg.w_star_max, cfg.work_cap);
    for (std::size_t w = 0; w <= cfg.work_cap; ++w) {
        for (std::size_t b = 0; b < p.bucket_count(); ++b) {
            const std::size_t s = w * p.bucket_count() + b;
            if (w >= enough) {
                p.logit(s, WORK) = 0.0;
                p.logit(s, FILLER) = 0.0;
                p.logit(s, ANSWER) = 3.0;
            } else {
                p.logit(s, WORK) = 1.0;
                p.logit(s, FILLER) = 1.0;
                p.logit(s, ANSWER) = -2.0;
            }
        }
    }
    return p;
}

// 1 iff the response stopped by emitting ANSWER and did enough WORK first.
// Truncated responses never verify.
inline int verify(const Response& response, const SyntheticTask& task) {
    if (response.tokens.empty() || response.tokens.back() != ANSWER) return 0;
    std::size_t work = 0;
    for (int t : response.tokens) {
        if (t == WORK) ++work;
    }
    return work >= task.required_work ? 1 : 0;
}

// Samples one response token by token from softmax(logits / T), stopping at
// ANSWER or max_len. Records the sampling logprob of each chosen token.
inline Response rollout(const ToyPolicy& policy, const SyntheticTask& task, double temperature, std::size_t max_len,
                        Rng& rng) {
    Response r;
    r.prompt_id = task.prompt_id;
    std::size_t work_done = 0;
    for (std::size_t pos = 0; pos < max_len; ++pos) {
        const std::size_t s = policy.state_index(work_done, pos);
        const std::vector<double> p = policy.probs(s, temperature);
        const std::size_t a = rng.categorical(p);
        r.tokens.push_back(static_cast<int>(a));
        r.logprobs_old.push_back(std::log(p[a]));
        if (a == WORK) ++work_done;
        if (a == ANSWER) break;
    }
    r.length = r.tokens.size();
    r.accuracy = verify(r, task);
    return r;
}

// Quartile labels by required_work, ties broken by original order. Bucket
// sizes are n/4 with the remainder spread over the first buckets.
inline void assign_difficulty_labels(std::vector<SyntheticTask>& tasks) {
    const std::size_t n = tasks.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tasks[a].required_work < tasks[b].required_work; });
    std::size_t pos = 0;
    for (int q = 0; q < 4; ++q) {
        std::size_t count = n / 4 + (static_cast<std::size_t>(q) < n % 4 ? 1 : 0);
        for (std::size_t j = 0; j < count && pos < n; ++j, ++pos) tasks[order[pos]].difficulty_label = q;
    }
}

// Deterministic-for-seed task set with uniform required_work and quartile
// difficulty labels (0 = lowest required_work quartile).
inline std::vector<SyntheticTask> make_task_distribution(std::uint64_t seed, std::size_t n_prompts,
                                                         std::size_t w_star_min, std::size_t w_star_max) {
    if (w_star_min < 1 || w_star_max < w_star_min) throw ConfigError("required-work range must satisfy 1 <= min <= max");
    Rng rng(mix_seed({seed, 0x7461736b736574ULL}));  // "taskset"
    std::vector<SyntheticTask> tasks(n_prompts);
    std::size_t width = 4;
    while (n_prompts > static_cast<std::size_t>(std::pow(10.0, static_cast<double>(width)))) ++width;
    for (std::size_t i = 0; i < n_prompts; ++i) {
        std::string id = std::to_string(i);
        id.insert(0, width - std::min(width, id.size()), '0');
        tasks[i].prompt_id = "p" + id;
        tasks[i].required_work = w_star_min + rng.below(w_star_max - w_star_min + 1);
    }
    assign_difficulty_labels(tasks);
    return tasks;
}

inline std::vector<SyntheticTask> make_task_distribution(const EnvConfig& cfg, std::uint64_t seed) {
    return make_task_distribution(seed, cfg.n_prompts, cfg.w_star_min, cfg.w_star_max);
}

inline void write_tasks_jsonl(const std::string& path, const std::vector<SyntheticTask>& tasks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& t : tasks) {
        nlohmann::ordered_json j;
        j["prompt_id"] = t.prompt_id;
        j["required_work"] = t.required_work;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

// Reads {prompt_id, required_work} lines and recomputes difficulty labels.
inline std::vector<SyntheticTask> read_tasks_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<SyntheticTask> tasks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        SyntheticTask t;
        t.prompt_id = j.at("prompt_id").get<std::string>();
        t.required_work = j.at("required_work").get<std::size_t>();
        if (t.required_work < 1) throw IoError(path + ":" + std::to_string(lineno) + ": required_work must be >= 1");
        tasks.push_back(std::move(t));
    }
    assign_difficulty_labels(tasks);
    return tasks;
}

}  // namespace gfpo
