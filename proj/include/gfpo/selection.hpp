#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gfpo/errors.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

// Scoring metric for response filtering. Each kind has a fixed sort order:
// length retains the shortest responses, token efficiency (reward/length)
// retains the highest-scoring ones.
struct Metric {
    MetricKind kind = MetricKind::length;
    SortOrder order = SortOrder::ascending;

    static Metric length() { return {MetricKind::length, SortOrder::ascending}; }
    static Metric token_efficiency() { return {MetricKind::token_efficiency, SortOrder::descending}; }
};

inline void validate_metric(const Metric& m) {
    if (m.kind == MetricKind::length && m.order != SortOrder::ascending)
        throw InvariantViolation("order", "length metric requires ascending order");
    if (m.kind == MetricKind::token_efficiency && m.order != SortOrder::descending)
        throw InvariantViolation("order", "token_efficiency metric requires descending order");
}

inline double score(const Response& response, const Metric& metric) {
    switch (metric.kind) {
        case MetricKind::length:
            return static_cast<double>(response.length);
        case MetricKind::token_efficiency:
            return response.reward / static_cast<double>(response.length);
    }
    return 0.0;  // unreachable
}

// Scores all G responses, stable-argsorts in metric order and keeps the first
// k. Ties break by original index, so the mask is identical across platforms.
inline SelectionMask rejection_sample(const Group& group, std::size_t k, const Metric& metric) {
    const std::size_t g = group.size();
    if (k < 1 || k > g)
        throw InvalidK("k=" + std::to_string(k) + " outside [1, G=" + std::to_string(g) + "]");
    validate_metric(metric);

    std::vector<double> scores(g);
    for (std::size_t i = 0; i < g; ++i) scores[i] = score(group.responses[i], metric);

    std::vector<std::size_t> idx(g);
    std::iota(idx.begin(), idx.end(), 0);
    if (metric.order == SortOrder::ascending) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    } else {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    }
    idx.resize(k);
    return SelectionMask::from_indices(std::move(idx), g);
}

}  // namespace gfpo
