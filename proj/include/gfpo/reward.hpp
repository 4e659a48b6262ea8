#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "gfpo/errors.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

// Composite reward R = w_acc * LengthScale(R_acc) + w_rep * R_rep.
// The length scale is piecewise linear: full reward for correct answers up to
// len_lo tokens, sloping down to min_scale at len_hi, flat beyond.
struct RewardConfig {
    double w_acc = 0.9;
    double w_rep = 0.1;
    std::size_t len_lo = 16;
    std::size_t len_hi = 64;
    double min_scale = 0.5;
    std::size_t ngram_n = 5;
};

inline void validate_reward_config(const RewardConfig& c) {
    if (c.w_acc <= 0.0) throw InvariantViolation("w_acc", "must be > 0");
    if (c.w_rep < 0.0) throw InvariantViolation("w_rep", "must be >= 0");
    // Range guarantee: w_acc*1 + w_rep*0 <= 1 and w_acc*(-1) + w_rep*(-1) >= -1.
    if (c.w_acc > 1.0) throw InvariantViolation("w_acc", "w_acc > 1 breaks the reward range");
    if (c.w_acc + c.w_rep > 1.0)
        throw InvariantViolation("w_rep", "w_acc + w_rep > 1 breaks the reward range");
    if (!(c.len_lo > 0 && c.len_lo < c.len_hi))
        throw InvariantViolation("len_lo", "need 0 < len_lo < len_hi");
    if (!(c.min_scale > 0.0 && c.min_scale <= 1.0))
        throw InvariantViolation("min_scale", "must lie in (0, 1]");
    if (c.ngram_n < 1) throw InvariantViolation("ngram_n", "must be >= 1");
}

// Length-aware accuracy scale. Incorrect answers get the minimum (-1.0)
// regardless of length; correct answers decay linearly from 1.0 past len_lo
// down to min_scale at len_hi.
inline double length_scale(int r_acc, std::size_t length, const RewardConfig& cfg) {
    if (r_acc == 0) return -1.0;
    if (length <= cfg.len_lo) return 1.0;
    if (length >= cfg.len_hi) return cfg.min_scale;
    const double t = static_cast<double>(length - cfg.len_lo) / static_cast<double>(cfg.len_hi - cfg.len_lo);
    return 1.0 + (cfg.min_scale - 1.0) * t;
}

// Fraction of n-grams that are repeats of an earlier n-gram, negated.
// Sequences shorter than n carry no penalty.
inline double repetition_penalty(std::span<const int> tokens, std::size_t n) {
    if (n < 1) throw InvariantViolation("ngram_n", "must be >= 1");
    if (tokens.size() < n) return 0.0;
    const std::size_t total = tokens.size() - n + 1;
    std::unordered_map<std::string, int> seen;
    seen.reserve(total * 2);
    std::size_t duplicates = 0;
    std::string key;
    for (std::size_t i = 0; i < total; ++i) {
        key.clear();
        for (std::size_t j = 0; j < n; ++j) {
            key += std::to_string(tokens[i + j]);
            key += ',';
        }
        if (seen[key]++ > 0) ++duplicates;
    }
    return -static_cast<double>(duplicates) / static_cast<double>(total);
}

inline double composite_reward(const Response& response, int verified, const RewardConfig& cfg) {
    const double acc_term = length_scale(verified, response.length, cfg);
    const double rep_term = repetition_penalty(response.tokens, cfg.ngram_n);
    return cfg.w_acc * acc_term + cfg.w_rep * rep_term;
}

}  // namespace gfpo
