#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gfpo/advantage.hpp"
#include "gfpo/errors.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

struct LossReport {
    double surrogate = 0.0;
    double kl = 0.0;
    double entropy = 0.0;
    double total = 0.0;
    std::size_t token_count = 0;
};

// Clipped surrogate with a dual-clip lower bound for negative advantages.
// base = min(r * A, clip(r, 1-eps, 1+eps) * A); negative A additionally
// floors at c * A so huge ratios cannot produce unbounded penalties.
inline double surrogate_term(double ratio, double advantage, double epsilon, double dual_clip_c) {
    const double clipped = std::min(std::max(ratio, 1.0 - epsilon), 1.0 + epsilon);
    const double base = std::min(ratio * advantage, clipped * advantage);
    if (advantage >= 0.0) return base;
    return std::max(base, dual_clip_c * advantage);
}

// d surrogate_term / d ratio. Undefined exactly at the clip kinks; callers
// that compare against finite differences must stay away from them.
inline double surrogate_ratio_derivative(double ratio, double advantage, double epsilon, double dual_clip_c) {
    const bool active =
        advantage >= 0.0 ? ratio <= 1.0 + epsilon : (ratio >= 1.0 - epsilon && ratio < dual_clip_c);
    return active ? advantage : 0.0;
}

// Per-token estimator exp(d) - d - 1 with d = logp_old - logp_new, averaged
// over tokens. Non-negative for every d, zero iff the logprobs agree.
inline double kl_estimate(const std::vector<double>& logprobs_new, const std::vector<double>& logprobs_old) {
    if (logprobs_new.size() != logprobs_old.size()) throw ShapeMismatch("kl_estimate logprob lengths differ");
    if (logprobs_new.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 0; t < logprobs_new.size(); ++t) {
        const double d = logprobs_old[t] - logprobs_new[t];
        sum += std::expm1(d) - d;
    }
    return sum / static_cast<double>(logprobs_new.size());
}

// d(exp(d) - d - 1)/d logp_new with d = logp_old - logp_new.
inline double kl_term_derivative(double logp_new, double logp_old) {
    return 1.0 - std::exp(logp_old - logp_new);
}

inline double entropy_of(const std::vector<double>& dist) {
    double sum = 0.0;
    for (double p : dist) sum += p;
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidDistribution("distribution does not sum to 1");
    double h = 0.0;
    for (double p : dist) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// Exact categorical entropy averaged over tokens.
inline double entropy_term(const std::vector<std::vector<double>>& policy_distributions) {
    if (policy_distributions.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& dist : policy_distributions) sum += entropy_of(dist);
    return sum / static_cast<double>(policy_distributions.size());
}

// Everything the loss needs about one response, all indexed per token.
// `dists` are the current policy's full distributions at each sampled state,
// used for the exact entropy term.
struct ResponseTerms {
    std::vector<double> ratios;
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<std::vector<double>> dists;
};

struct GroupTerms {
    std::vector<ResponseTerms> responses;
};

namespace detail {

inline void check_group_shapes(const GroupTerms& group, const AdvantageVector& adv) {
    if (group.responses.size() != adv.values.size()) throw ShapeMismatch("advantage count does not match group size");
    for (const auto& r : group.responses) {
        if (r.ratios.empty()) throw ShapeMismatch("response with zero tokens");
        if (r.logp_new.size() != r.ratios.size() || r.logp_old.size() != r.ratios.size() ||
            r.dists.size() != r.ratios.size()) {
            throw ShapeMismatch("per-token arrays of one response disagree in length");
        }
    }
}

}  // namespace detail

// Batch objective. Surrogate aggregation is selectable: token_level divides
// each group's token sum by the group's total token count, per_response
// averages per-response means. KL and entropy are always token-averaged
// within the group. Every group contributes equally to the batch mean.
inline LossReport aggregate_loss(const std::vector<GroupTerms>& groups, const std::vector<AdvantageVector>& advantages,
                                 const TrainConfig& cfg) {
    if (groups.size() != advantages.size()) throw ShapeMismatch("group count does not match advantage count");
    if (groups.empty()) throw ShapeMismatch("empty batch");

    LossReport report;
    double surrogate_sum = 0.0;
    double kl_sum = 0.0;
    double entropy_sum = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const GroupTerms& group = groups[g];
        const AdvantageVector& adv = advantages[g];
        detail::check_group_shapes(group, adv);

        double group_surrogate = 0.0;
        double group_kl = 0.0;
        double group_entropy = 0.0;
        std::size_t group_tokens = 0;
        for (std::size_t i = 0; i < group.responses.size(); ++i) {
            const ResponseTerms& r = group.responses[i];
            double response_sum = 0.0;
            for (double ratio : r.ratios) {
                response_sum += surrogate_term(ratio, adv.values[i], cfg.epsilon, cfg.dual_clip_c);
            }
            if (cfg.aggregation == Aggregation::per_response) {
                group_surrogate += response_sum / static_cast<double>(r.ratios.size());
            } else {
                group_surrogate += response_sum;
            }
            for (std::size_t t = 0; t < r.ratios.size(); ++t) {
                const double d = r.logp_old[t] - r.logp_new[t];
                group_kl += std::expm1(d) - d;
                group_entropy += entropy_of(r.dists[t]);
            }
            group_tokens += r.ratios.size();
        }
        if (cfg.aggregation == Aggregation::per_response) {
            group_surrogate /= static_cast<double>(group.responses.size());
        } else {
            group_surrogate /= static_cast<double>(group_tokens);
        }
        surrogate_sum += group_surrogate;
        kl_sum += group_kl / static_cast<double>(group_tokens);
        entropy_sum += group_entropy / static_cast<double>(group_tokens);
        report.token_count += group_tokens;
    }

    const double n = static_cast<double>(groups.size());
    report.surrogate = surrogate_sum / n;
    report.kl = kl_sum / n;
    report.entropy = entropy_sum / n;
    report.total = report.surrogate - cfg.beta * report.kl + cfg.gamma * report.entropy;
    return report;
}

}  // namespace gfpo
