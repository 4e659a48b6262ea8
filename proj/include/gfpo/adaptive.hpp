#pragma once

#include <cstddef>

#include "gfpo/errors.hpp"
#include "gfpo/selection.hpp"
#include "gfpo/tdigest.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

// Retention sizes per difficulty bucket, plus the gate that keeps early
// percentile estimates from steering k before the digest has seen enough
// group-level rewards.
struct AdaptiveConfig {
    std::size_t k_easy = 4;
    std::size_t k_medium = 6;
    std::size_t k_hard = 8;
    std::size_t k_very_hard = 8;
    std::size_t warmup_steps = 5;
    double ready_min_weight = 64.0;
    double compression = 100.0;
};

inline void validate_adaptive_config(const AdaptiveConfig& cfg, std::size_t group_size) {
    auto check_k = [&](std::size_t k, const char* name) {
        if (k < 1 || k > group_size) throw ConfigError(std::string("adaptive.") + name + " out of range for group size");
    };
    check_k(cfg.k_easy, "k_easy");
    check_k(cfg.k_medium, "k_medium");
    check_k(cfg.k_hard, "k_hard");
    check_k(cfg.k_very_hard, "k_very_hard");
    if (cfg.ready_min_weight < 1.0) throw ConfigError("adaptive.ready_min_weight must be at least 1");
    if (cfg.compression < 1.0) throw ConfigError("adaptive.compression must be at least 1");
}

// Tracks mean group reward per update and exposes whether the digest has
// enough history to classify difficulty.
class DifficultyTracker {
public:
    explicit DifficultyTracker(const AdaptiveConfig& cfg) : cfg_(cfg), digest_(cfg.compression) {}

    DifficultyTracker(const AdaptiveConfig& cfg, TDigest digest, std::size_t steps_seen)
        : cfg_(cfg), digest_(std::move(digest)), steps_seen_(steps_seen) {}

    bool ready() const { return digest_.total_weight() >= cfg_.ready_min_weight && steps_seen_ >= cfg_.warmup_steps; }

    // Records one group's mean reward, then picks k. The update happens
    // before the readiness check so the current group contributes to its own
    // classification once the gate opens.
    std::size_t observe_and_pick_k(double mean_reward) {
        digest_.update(mean_reward);
        if (!ready()) return cfg_.k_very_hard;
        const double q25 = digest_.percentile(25.0);
        const double q50 = digest_.percentile(50.0);
        const double q75 = digest_.percentile(75.0);
        // Low mean reward means a hard prompt. Equal-to-threshold falls into
        // the easier bucket.
        if (mean_reward < q25) return cfg_.k_very_hard;
        if (mean_reward < q50) return cfg_.k_hard;
        if (mean_reward < q75) return cfg_.k_medium;
        return cfg_.k_easy;
    }

    void end_step() { ++steps_seen_; }

    std::size_t steps_seen() const { return steps_seen_; }
    TDigest& digest() { return digest_; }
    const TDigest& digest() const { return digest_; }
    const AdaptiveConfig& config() const { return cfg_; }

private:
    AdaptiveConfig cfg_;
    TDigest digest_;
    std::size_t steps_seen_ = 0;
};

inline double mean_group_reward(const Group& group) {
    if (group.responses.empty()) throw GroupTooSmall("mean reward of empty group");
    double sum = 0.0;
    for (const auto& r : group.responses) sum += r.reward;
    return sum / static_cast<double>(group.responses.size());
}

// Difficulty-adaptive retention: classify the group by its mean reward, then
// keep the k shortest responses.
inline SelectionMask adaptive_rejection_sample(const Group& group, DifficultyTracker& tracker, const Metric& metric) {
    const std::size_t k = tracker.observe_and_pick_k(mean_group_reward(group));
    return rejection_sample(group, k, metric);
}

}  // namespace gfpo
