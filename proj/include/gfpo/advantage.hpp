#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gfpo/errors.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

struct AdvantageVector {
    std::vector<double> values;
    bool mask_applied = false;
};

namespace detail {

// Normalizes `rewards` at the retained positions: subtract the retained mean,
// divide by the retained population standard deviation. Rejected positions
// stay exactly 0.0. A zero or non-finite std collapses every advantage to 0
// so degenerate groups drop out of the update instead of exploding it.
inline AdvantageVector masked_normalize(const std::vector<double>& rewards, const std::vector<std::size_t>& retained,
                                        std::size_t group_size, bool mask_applied) {
    const double k = static_cast<double>(retained.size());
    double mean = 0.0;
    for (std::size_t idx : retained) mean += rewards[idx];
    mean /= k;

    double var = 0.0;
    for (std::size_t idx : retained) {
        const double d = rewards[idx] - mean;
        var += d * d;
    }
    var /= k;
    const double stddev = std::sqrt(var);

    AdvantageVector out;
    out.values.assign(group_size, 0.0);
    out.mask_applied = mask_applied;
    if (stddev <= 0.0 || !std::isfinite(stddev)) return out;
    for (std::size_t idx : retained) out.values[idx] = (rewards[idx] - mean) / stddev;
    return out;
}

}  // namespace detail

// Group-relative advantages over every response: (R_i - mean) / std with
// population std. All-zero output when the group's rewards are identical.
inline AdvantageVector grpo_advantages(const std::vector<double>& rewards) {
    if (rewards.size() < 2) throw GroupTooSmall("advantage normalization needs at least 2 responses");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw NonFiniteValue("non-finite reward in advantage normalization");
    }
    std::vector<std::size_t> all(rewards.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return detail::masked_normalize(rewards, all, rewards.size(), false);
}

// Masked variant: normalization statistics come from the retained subset
// only, and rejected responses receive an exact 0.0 advantage. Retaining the
// whole group reproduces grpo_advantages bit for bit.
inline AdvantageVector gfpo_advantages(const std::vector<double>& rewards, const SelectionMask& mask) {
    if (rewards.size() < 2) throw GroupTooSmall("advantage normalization needs at least 2 responses");
    if (mask.mask.size() != rewards.size()) throw ShapeMismatch("selection mask size does not match reward count");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw NonFiniteValue("non-finite reward in advantage normalization");
    }
    if (mask.retained_indices.empty()) throw InvalidK("selection mask retains no responses");
    if (mask.retained_indices.size() < 2) {
        // A single retained response has zero variance by construction.
        AdvantageVector out;
        out.values.assign(rewards.size(), 0.0);
        out.mask_applied = true;
        return out;
    }
    // Iterate positions in ascending index order so the k = G case performs
    // the same additions in the same order as grpo_advantages.
    std::vector<std::size_t> sorted = mask.retained_indices;
    std::sort(sorted.begin(), sorted.end());
    return detail::masked_normalize(rewards, sorted, rewards.size(), true);
}

inline AdvantageVector group_advantages(const Group& group, const SelectionMask& mask) {
    validate_mask(mask, group.size());
    std::vector<double> rewards;
    rewards.reserve(group.size());
    for (const auto& r : group.responses) rewards.push_back(r.reward);
    return gfpo_advantages(rewards, mask);
}

}  // namespace gfpo
