#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gfpo/errors.hpp"
#include "gfpo/log.hpp"

namespace gfpo {

// Percentile of a value list under the midpoint-rank convention: the i-th
// sorted value (0-based) sits at rank i + 0.5, with linear interpolation
// between neighbors and clamping at the extremes.
inline double exact_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw InvariantViolation("percentile", "empty value list");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    const double rank = (p / 100.0) * n;
    if (rank <= 0.5) return values.front();
    if (rank >= n - 0.5) return values.back();
    const double shifted = rank - 0.5;
    const std::size_t lo = static_cast<std::size_t>(shifted);
    const double t = shifted - static_cast<double>(lo);
    return values[lo] + t * (values[lo + 1] - values[lo]);
}

struct PromptScore {
    std::string prompt_id;
    double pass1 = 0.0;
    std::size_t n_samples = 0;
    double mean_length = 0.0;
};

struct PassSummary {
    std::vector<PromptScore> per_prompt;  // sorted by prompt_id
    double macro_pass1 = 0.0;             // mean of per-prompt means
    double mean_length = 0.0;             // micro mean over all samples
};

// Per-prompt mean correctness and the macro average over prompts. Prompts
// enter equally regardless of their sample counts.
inline PassSummary pass_at_1(const std::vector<EvalRecord>& samples) {
    if (samples.empty()) throw EmptyPrompt("no samples");
    std::map<std::string, std::vector<const EvalRecord*>> by_prompt;
    for (const auto& s : samples) by_prompt[s.prompt_id].push_back(&s);

    PassSummary out;
    double macro_sum = 0.0;
    double length_sum = 0.0;
    for (const auto& [prompt_id, recs] : by_prompt) {
        PromptScore score;
        score.prompt_id = prompt_id;
        score.n_samples = recs.size();
        double correct = 0.0;
        double length = 0.0;
        for (const auto* r : recs) {
            correct += r->correct;
            length += static_cast<double>(r->length);
        }
        score.pass1 = correct / static_cast<double>(recs.size());
        score.mean_length = length / static_cast<double>(recs.size());
        macro_sum += score.pass1;
        length_sum += length;
        out.per_prompt.push_back(std::move(score));
    }
    out.macro_pass1 = macro_sum / static_cast<double>(out.per_prompt.size());
    out.mean_length = length_sum / static_cast<double>(samples.size());
    return out;
}

// Variant that also demands coverage of an expected prompt set.
inline PassSummary pass_at_1(const std::vector<EvalRecord>& samples, const std::vector<std::string>& required_prompts) {
    PassSummary out = pass_at_1(samples);
    for (const auto& p : required_prompts) {
        const bool present = std::any_of(out.per_prompt.begin(), out.per_prompt.end(),
                                         [&](const PromptScore& s) { return s.prompt_id == p; });
        if (!present) throw EmptyPrompt("prompt '" + p + "' has no samples");
    }
    return out;
}

// Share of the length inflation over the reference that the candidate
// removed, in percent. Values outside [0, 100] are legitimate outcomes.
inline double excess_length_reduction(double l_grpo, double l_gfpo, double l_sft) {
    if (l_grpo == l_sft) throw DegenerateBaseline("reference and baseline mean lengths are equal");
    return 100.0 * (l_grpo - l_gfpo) / (l_grpo - l_sft);
}

struct QuartileAssignment {
    std::vector<int> bucket;  // 0 easy .. 3 very hard, parallel to the input
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
    bool degenerate = false;  // all difficulties equal: everything lands in bucket 0
};

// Difficulty = 1 - accuracy under a reference model; buckets split at the
// 25/50/75 percentiles with equality falling toward the easier bucket.
inline QuartileAssignment difficulty_quartiles(const std::vector<double>& reference_accuracy) {
    if (reference_accuracy.size() < 4) throw TooFewPrompts("difficulty quartiles need at least 4 prompts");
    std::vector<double> difficulty(reference_accuracy.size());
    for (std::size_t i = 0; i < difficulty.size(); ++i) difficulty[i] = 1.0 - reference_accuracy[i];

    QuartileAssignment out;
    out.q25 = exact_percentile(difficulty, 25.0);
    out.q50 = exact_percentile(difficulty, 50.0);
    out.q75 = exact_percentile(difficulty, 75.0);
    out.degenerate = *std::min_element(difficulty.begin(), difficulty.end()) ==
                     *std::max_element(difficulty.begin(), difficulty.end());
    out.bucket.resize(difficulty.size());
    for (std::size_t i = 0; i < difficulty.size(); ++i) {
        const double d = difficulty[i];
        out.bucket[i] = d <= out.q25 ? 0 : d <= out.q50 ? 1 : d <= out.q75 ? 2 : 3;
    }
    return out;
}

enum class BinMode { relative_quartile, absolute_edges };

struct BinStats {
    double lo = 0.0;  // exclusive lower edge (-inf for the first bin)
    double hi = 0.0;  // inclusive upper edge (+inf for the last bin)
    std::size_t count = 0;
    double share = 0.0;
    double accuracy = 0.0;         // meaningless when empty
    double mean_difficulty = 0.0;  // meaningless when empty or no difficulty map given
    bool empty = true;
    bool has_difficulty = false;
};

// Default absolute edges scaled to the response budget: bin width 5/32 of
// max_len, four edges, five bins.
inline std::vector<double> default_absolute_edges(std::size_t max_len) {
    const double w = std::max(1.0, std::round(static_cast<double>(max_len) * 5.0 / 32.0));
    return {w, 2.0 * w, 3.0 * w, 4.0 * w};
}

// Buckets samples by response length. relative_quartile derives edges from
// this sample set's own length quartiles; absolute_edges uses the given
// edges. Each bin reports its share, accuracy, and (when a per-prompt
// difficulty map is supplied) the mean difficulty of its prompts.
inline std::vector<BinStats> length_bins(const std::vector<EvalRecord>& samples, BinMode mode,
                                         const std::vector<double>& absolute_edges,
                                         const std::map<std::string, double>* prompt_difficulty = nullptr) {
    std::vector<double> edges;
    if (mode == BinMode::relative_quartile) {
        if (samples.size() < 4) throw TooFewPrompts("relative length bins need at least 4 samples");
        std::vector<double> lengths;
        lengths.reserve(samples.size());
        for (const auto& s : samples) lengths.push_back(static_cast<double>(s.length));
        edges = {exact_percentile(lengths, 25.0), exact_percentile(lengths, 50.0), exact_percentile(lengths, 75.0)};
    } else {
        edges = absolute_edges;
        if (!std::is_sorted(edges.begin(), edges.end())) throw ConfigError("length bin edges must be ascending");
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<BinStats> bins(edges.size() + 1);
    for (std::size_t b = 0; b < bins.size(); ++b) {
        bins[b].lo = b == 0 ? -inf : edges[b - 1];
        bins[b].hi = b == edges.size() ? inf : edges[b];
    }

    std::vector<double> correct(bins.size(), 0.0);
    std::vector<double> difficulty(bins.size(), 0.0);
    std::vector<std::size_t> with_difficulty(bins.size(), 0);
    for (const auto& s : samples) {
        const double len = static_cast<double>(s.length);
        std::size_t b = 0;
        while (b < edges.size() && len > edges[b]) ++b;
        bins[b].count += 1;
        correct[b] += s.correct;
        if (prompt_difficulty) {
            auto it = prompt_difficulty->find(s.prompt_id);
            if (it != prompt_difficulty->end()) {
                difficulty[b] += it->second;
                with_difficulty[b] += 1;
            }
        }
    }

    for (std::size_t b = 0; b < bins.size(); ++b) {
        bins[b].empty = bins[b].count == 0;
        bins[b].share = samples.empty() ? 0.0 : static_cast<double>(bins[b].count) / static_cast<double>(samples.size());
        if (!bins[b].empty) bins[b].accuracy = correct[b] / static_cast<double>(bins[b].count);
        if (with_difficulty[b] > 0) {
            bins[b].mean_difficulty = difficulty[b] / static_cast<double>(with_difficulty[b]);
            bins[b].has_difficulty = true;
        }
    }
    return bins;
}

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0;  // min(w_plus, w_minus)
    double p_value = 1.0;
    std::size_t n_nonzero = 0;
    bool exact = true;
    bool all_zero = false;
};

// Paired two-sided signed-rank test. Zero differences are dropped; tied
// magnitudes get average ranks. Exact permutation distribution up to 20
// nonzero pairs (computed over doubled ranks so every sum is an integer),
// normal approximation with tie and continuity corrections beyond.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& paired_a, const std::vector<double>& paired_b) {
    if (paired_a.size() != paired_b.size()) throw ShapeMismatch("paired vectors differ in length");
    std::vector<double> diffs;
    diffs.reserve(paired_a.size());
    for (std::size_t i = 0; i < paired_a.size(); ++i) {
        const double d = paired_a[i] - paired_b[i];
        if (d != 0.0) diffs.push_back(d);
    }

    WilcoxonResult out;
    out.n_nonzero = diffs.size();
    if (diffs.empty()) {
        out.all_zero = true;
        out.p_value = 1.0;
        return out;
    }

    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });

    // doubled_rank[i] = 2 * average rank of |d_i|; a run of equal magnitudes
    // spanning 1-based ranks [lo, hi] all receive lo + hi.
    std::vector<std::uint64_t> doubled_rank(n, 0);
    double tie_correction = 0.0;  // sum of t^3 - t over tie groups
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        const std::uint64_t doubled = static_cast<std::uint64_t>(i + 1) + static_cast<std::uint64_t>(j + 1);
        for (std::size_t r = i; r <= j; ++r) doubled_rank[order[r]] = doubled;
        const double t = static_cast<double>(j - i + 1);
        tie_correction += t * t * t - t;
        i = j + 1;
    }

    std::uint64_t doubled_w_plus = 0;
    std::uint64_t doubled_total = 0;
    for (std::size_t idx = 0; idx < n; ++idx) {
        doubled_total += doubled_rank[idx];
        if (diffs[idx] > 0.0) doubled_w_plus += doubled_rank[idx];
    }
    out.w_plus = static_cast<double>(doubled_w_plus) / 2.0;
    out.w_minus = static_cast<double>(doubled_total - doubled_w_plus) / 2.0;
    out.statistic = std::min(out.w_plus, out.w_minus);

    if (n <= 20) {
        // Subset-sum counts of doubled ranks; each of the 2^n sign vectors is
        // equally likely under the null.
        const std::uint64_t total = doubled_total;
        std::vector<std::uint64_t> count(total + 1, 0);
        count[0] = 1;
        for (std::size_t idx = 0; idx < n; ++idx) {
            const std::uint64_t r = doubled_rank[idx];
            for (std::uint64_t s = total; s >= r; --s) count[s] += count[s - r];
        }
        const std::uint64_t t_min = std::min(doubled_w_plus, total - doubled_w_plus);
        const std::uint64_t t_max = total - t_min;
        std::uint64_t tail = 0;
        for (std::uint64_t s = 0; s <= total; ++s) {
            if (s <= t_min || s >= t_max) tail += count[s];
        }
        out.exact = true;
        out.p_value = std::min(1.0, static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n)));
        return out;
    }

    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_correction / 48.0;
    out.exact = false;
    if (var <= 0.0) {
        out.p_value = 1.0;
        return out;
    }
    const double z = std::max(0.0, std::abs(out.w_plus - mu) - 0.5) / std::sqrt(var);
    out.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return out;
}

}  // namespace gfpo
