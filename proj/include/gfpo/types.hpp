#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gfpo/errors.hpp"

namespace gfpo {

enum class MetricKind { length, token_efficiency };
enum class SortOrder { ascending, descending };
enum class Aggregation { token_level, per_response };
enum class TrainMode { grpo, gfpo_fixed, gfpo_adaptive };

// One sampled trajectory. Tokens are abstract symbol ids (the environment
// fixes the concrete alphabet); logprobs_old are the per-token log
// probabilities under the policy that generated the sample.
struct Response {
    std::string prompt_id;
    std::vector<int> tokens;
    std::size_t length = 0;  // must equal tokens.size() and logprobs_old.size()
    std::vector<double> logprobs_old;
    double reward = 0.0;      // composite reward in [-1, 1]
    int accuracy = 0;         // 0/1 verification outcome
    double repetition = 0.0;  // n-gram penalty in [-1, 0]
};

// The G responses sampled for one prompt; the unit of filtering and
// advantage normalization.
struct Group {
    std::string prompt_id;
    std::vector<Response> responses;

    std::size_t size() const { return responses.size(); }
};

// Binary retention mask over a group. mask[i] == 1 exactly for the indices
// listed in retained_indices; k is the retained count.
struct SelectionMask {
    std::vector<std::uint8_t> mask;
    std::vector<std::size_t> retained_indices;
    std::size_t k = 0;

    static SelectionMask full(std::size_t g) {
        SelectionMask m;
        m.mask.assign(g, 1);
        m.retained_indices.resize(g);
        for (std::size_t i = 0; i < g; ++i) m.retained_indices[i] = i;
        m.k = g;
        return m;
    }

    static SelectionMask from_indices(std::vector<std::size_t> indices, std::size_t g) {
        SelectionMask m;
        m.mask.assign(g, 0);
        for (auto i : indices) m.mask[i] = 1;
        m.retained_indices = std::move(indices);
        m.k = m.retained_indices.size();
        return m;
    }
};

inline void validate_mask(const SelectionMask& m, std::size_t g) {
    if (m.mask.size() != g)
        throw InvariantViolation("mask", "length " + std::to_string(m.mask.size()) +
                                             " does not match group size " + std::to_string(g));
    if (m.k < 1 || m.k > g)
        throw InvariantViolation("k", "k=" + std::to_string(m.k) + " outside [1, G]");
    if (m.retained_indices.size() != m.k)
        throw InvariantViolation("retained_indices", "count does not match k");
    std::size_t ones = 0;
    for (auto b : m.mask) ones += b;
    if (ones != m.k) throw InvariantViolation("mask", "popcount does not match k");
    for (auto i : m.retained_indices) {
        if (i >= g) throw InvariantViolation("retained_indices", "index " + std::to_string(i) + " out of range");
        if (!m.mask[i]) throw InvariantViolation("mask", "mask[" + std::to_string(i) + "] == 0 for retained index");
    }
}

// Optimizer-facing knobs. max_len mirrors the environment setting after
// config resolution so the optimizer never reaches into env config.
struct TrainConfig {
    TrainMode mode = TrainMode::gfpo_fixed;
    std::size_t group_size = 16;  // G
    std::size_t retain_k = 8;     // k (ignored in grpo / adaptive modes)
    double epsilon = 0.2;
    double dual_clip_c = 3.0;
    double beta = 0.001;   // KL coefficient
    double gamma = 0.001;  // entropy coefficient
    double learning_rate = 0.5;  // tuned for the tabular policy; token-level scaling divides by batch tokens
    double temperature = 1.0;
    std::size_t max_len = 64;
    std::uint64_t seed = 1;
    MetricKind metric = MetricKind::length;
    SortOrder order = SortOrder::ascending;
    Aggregation aggregation = Aggregation::token_level;
    std::size_t steps = 300;
    std::size_t batch_size = 16;
};

inline void validate_train_config(const TrainConfig& c) {
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0))
        throw InvariantViolation("epsilon", "must lie in (0, 1)");
    if (!(c.dual_clip_c > 1.0 + c.epsilon))
        throw InvariantViolation("dual_clip_c", "must exceed 1 + epsilon");
    if (c.beta < 0.0) throw InvariantViolation("beta", "must be >= 0");
    if (c.gamma < 0.0) throw InvariantViolation("gamma", "must be >= 0");
    if (c.group_size < 1) throw InvariantViolation("G", "must be >= 1");
    if (c.retain_k < 1 || c.retain_k > c.group_size)
        throw InvariantViolation("k", "must lie in [1, G]");
    if (c.batch_size < 1) throw InvariantViolation("batch_size", "must be >= 1");
    if (c.temperature <= 0.0) throw InvariantViolation("temperature", "must be > 0");
    if (c.max_len < 1) throw InvariantViolation("max_len", "must be >= 1");
}

namespace detail {
inline std::string at(std::size_t i) { return "[" + std::to_string(i) + "]"; }
}  // namespace detail

// Checks every Response and Group invariant; returns the group unchanged.
// Idempotent by construction (pure check, no mutation).
inline const Group& validate_group(const Group& group) {
    if (group.responses.empty()) throw InvariantViolation("G", "group has no responses");
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
        const Response& r = group.responses[i];
        if (r.prompt_id != group.prompt_id)
            throw InvariantViolation("prompt_id", "response" + detail::at(i) + " has prompt_id '" + r.prompt_id +
                                                      "', group has '" + group.prompt_id + "'");
        if (r.length != r.tokens.size())
            throw InvariantViolation("length", "response" + detail::at(i) + " length field does not match token count");
        if (r.logprobs_old.size() != r.tokens.size())
            throw InvariantViolation("logprobs_old", "response" + detail::at(i) + " has " +
                                                         std::to_string(r.logprobs_old.size()) + " entries for " +
                                                         std::to_string(r.tokens.size()) + " tokens");
        if (!(r.reward >= -1.0 && r.reward <= 1.0))
            throw InvariantViolation("reward", "response" + detail::at(i) + " reward outside [-1, 1]");
        if (r.accuracy != 0 && r.accuracy != 1)
            throw InvariantViolation("accuracy", "response" + detail::at(i) + " accuracy not in {0, 1}");
        if (!(r.repetition >= -1.0 && r.repetition <= 0.0))
            throw InvariantViolation("repetition", "response" + detail::at(i) + " repetition outside [-1, 0]");
    }
    return group;
}

}  // namespace gfpo
