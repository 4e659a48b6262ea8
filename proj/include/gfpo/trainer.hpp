#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gfpo/adaptive.hpp"
#include "gfpo/advantage.hpp"
#include "gfpo/config.hpp"
#include "gfpo/env.hpp"
#include "gfpo/errors.hpp"
#include "gfpo/log.hpp"
#include "gfpo/loss.hpp"
#include "gfpo/reward.hpp"
#include "gfpo/rng.hpp"
#include "gfpo/selection.hpp"
#include "gfpo/tdigest.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

// The states a trajectory visited, reconstructed from its tokens. Must mirror
// the walk in rollout(): state precedes the token sampled from it.
inline std::vector<std::size_t> trajectory_states(const ToyPolicy& policy, const std::vector<int>& tokens) {
    std::vector<std::size_t> states(tokens.size());
    std::size_t work = 0;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        states[pos] = policy.state_index(work, pos);
        if (tokens[pos] == WORK) ++work;
    }
    return states;
}

// A batch in optimizer coordinates: states, actions, sampling logprobs, and
// the per-response advantage. Everything the objective needs besides the
// current policy.
struct SampledToken {
    std::size_t state = 0;
    std::size_t action = 0;
    double logp_old = 0.0;
};

struct SampledResponse {
    std::vector<SampledToken> tokens;
    double advantage = 0.0;
};

struct SampledGroup {
    std::vector<SampledResponse> responses;
};

// Evaluates the batch objective at `policy` and optionally its gradient with
// respect to the policy logits. The scalar is aggregate_loss on per-token
// terms recomputed under `policy`; the gradient loops differentiate exactly
// that arithmetic, so central finite differences of the returned total
// converge to the returned gradient.
inline LossReport objective_and_gradient(const ToyPolicy& policy, const std::vector<SampledGroup>& batch,
                                         const TrainConfig& cfg, std::vector<double>* grad) {
    std::vector<GroupTerms> terms(batch.size());
    std::vector<AdvantageVector> advs(batch.size());
    for (std::size_t g = 0; g < batch.size(); ++g) {
        advs[g].mask_applied = true;
        for (const SampledResponse& resp : batch[g].responses) {
            advs[g].values.push_back(resp.advantage);
            ResponseTerms rt;
            rt.ratios.reserve(resp.tokens.size());
            for (const SampledToken& tok : resp.tokens) {
                std::vector<double> p = policy.probs(tok.state, cfg.temperature);
                const double lp_new = std::log(p[tok.action]);
                rt.ratios.push_back(std::exp(lp_new - tok.logp_old));
                rt.logp_new.push_back(lp_new);
                rt.logp_old.push_back(tok.logp_old);
                rt.dists.push_back(std::move(p));
            }
            terms[g].responses.push_back(std::move(rt));
        }
    }
    const LossReport report = aggregate_loss(terms, advs, cfg);
    if (!grad) return report;

    grad->assign(policy.parameter_count(), 0.0);
    const double batch_n = static_cast<double>(batch.size());
    const double inv_t = 1.0 / cfg.temperature;
    for (std::size_t g = 0; g < batch.size(); ++g) {
        std::size_t group_tokens = 0;
        for (const auto& resp : batch[g].responses) group_tokens += resp.tokens.size();
        const double tok_scale = 1.0 / (batch_n * static_cast<double>(group_tokens));
        for (std::size_t i = 0; i < batch[g].responses.size(); ++i) {
            const SampledResponse& resp = batch[g].responses[i];
            const double adv = resp.advantage;
            const double surr_scale =
                cfg.aggregation == Aggregation::token_level
                    ? tok_scale
                    : 1.0 / (batch_n * static_cast<double>(batch[g].responses.size()) *
                             static_cast<double>(resp.tokens.size()));
            for (std::size_t t = 0; t < resp.tokens.size(); ++t) {
                const SampledToken& tok = resp.tokens[t];
                const ResponseTerms& rt = terms[g].responses[i];
                const std::vector<double>& p = rt.dists[t];
                const double ratio = rt.ratios[t];

                double entropy_h = 0.0;
                for (double pb : p) {
                    if (pb > 0.0) entropy_h -= pb * std::log(pb);
                }
                double d_lp = surr_scale * surrogate_ratio_derivative(ratio, adv, cfg.epsilon, cfg.dual_clip_c) * ratio;
                d_lp -= cfg.beta * tok_scale * kl_term_derivative(rt.logp_new[t], tok.logp_old);

                double* row = grad->data() + tok.state * kAlphabetSize;
                for (std::size_t b = 0; b < kAlphabetSize; ++b) {
                    const double d_lp_dz = inv_t * ((b == tok.action ? 1.0 : 0.0) - p[b]);
                    double gb = d_lp * d_lp_dz;
                    if (p[b] > 0.0) gb -= cfg.gamma * tok_scale * inv_t * p[b] * (std::log(p[b]) + entropy_h);
                    row[b] += gb;
                }
            }
        }
    }
    return report;
}

struct StepMetrics {
    std::size_t step = 0;
    LossReport loss;
    double mean_reward = 0.0;
    double mean_length = 0.0;
    double mean_k = 0.0;
};

struct RunResult {
    ToyPolicy policy;
    RunLog log;
    std::vector<StepMetrics> metrics;
    std::vector<SyntheticTask> tasks;
    DifficultyTracker tracker;
};

// Binds environment, reward, selection, and optimizer into the training
// loop. One gradient step per batch; rollouts always come from the policy
// snapshot taken at the end of the previous step.
class Trainer {
public:
    explicit Trainer(RunConfig cfg) : cfg_(std::move(cfg)), tracker_(cfg_.adaptive) {
        finalize_run_config(cfg_);
        if (cfg_.train.group_size < 2) throw ConfigError("trainer.group_size must be at least 2");
        tasks_ = make_task_distribution(cfg_.env, cfg_.train.seed);
        policy_ = initial_policy(cfg_.env);
        old_policy_ = policy_;
    }

    const std::vector<SyntheticTask>& tasks() const { return tasks_; }
    const ToyPolicy& policy() const { return policy_; }
    const RunLog& log() const { return log_; }
    std::size_t step() const { return step_; }
    const RunConfig& config() const { return cfg_; }
    const DifficultyTracker& tracker() const { return tracker_; }

    // One optimization step over the given task indices. All state mutation
    // happens after every computation has succeeded, so a thrown error
    // leaves the trainer exactly as before the call.
    StepMetrics train_step(const std::vector<std::size_t>& batch) {
        if (batch.empty()) throw InvariantViolation("batch", "train_step on empty batch");
        const TrainConfig& tc = cfg_.train;
        const Metric metric{tc.metric, tc.order};

        DifficultyTracker tracker_scratch = tracker_;
        std::vector<SampledGroup> sampled;
        sampled.reserve(batch.size());
        std::vector<LogRecord> records;
        records.reserve(batch.size() * tc.group_size);
        double reward_sum = 0.0;
        double length_sum = 0.0;
        double k_sum = 0.0;
        std::size_t response_count = 0;

        for (std::size_t task_index : batch) {
            const SyntheticTask& task = tasks_.at(task_index);
            Group group;
            group.prompt_id = task.prompt_id;
            group.responses.reserve(tc.group_size);
            for (std::size_t j = 0; j < tc.group_size; ++j) {
                Rng rng(mix_seed({tc.seed, step_, fnv1a64(task.prompt_id), j}));
                Response r = rollout(old_policy_, task, tc.temperature, tc.max_len, rng);
                r.repetition = repetition_penalty(r.tokens, cfg_.reward.ngram_n);
                r.reward = composite_reward(r, r.accuracy, cfg_.reward);
                group.responses.push_back(std::move(r));
            }

            SelectionMask mask;
            switch (tc.mode) {
                case TrainMode::grpo: mask = SelectionMask::full(group.size()); break;
                case TrainMode::gfpo_fixed: mask = rejection_sample(group, tc.retain_k, metric); break;
                case TrainMode::gfpo_adaptive: mask = adaptive_rejection_sample(group, tracker_scratch, metric); break;
            }
            const AdvantageVector adv = group_advantages(group, mask);

            SampledGroup sg;
            sg.responses.reserve(group.size());
            for (std::size_t i = 0; i < group.size(); ++i) {
                const Response& r = group.responses[i];
                const std::vector<std::size_t> states = trajectory_states(old_policy_, r.tokens);
                SampledResponse sr;
                sr.advantage = adv.values[i];
                sr.tokens.reserve(r.tokens.size());
                for (std::size_t t = 0; t < r.tokens.size(); ++t) {
                    sr.tokens.push_back({states[t], static_cast<std::size_t>(r.tokens[t]), r.logprobs_old[t]});
                }
                sg.responses.push_back(std::move(sr));

                LogRecord rec;
                rec.step = step_;
                rec.prompt_id = r.prompt_id;
                rec.response_index = i;
                rec.length = r.length;
                rec.reward = r.reward;
                rec.accuracy = r.accuracy;
                rec.repetition = r.repetition;
                rec.selected = mask.mask[i];
                rec.advantage = adv.values[i];
                rec.k_used = mask.k;
                records.push_back(std::move(rec));

                reward_sum += r.reward;
                length_sum += static_cast<double>(r.length);
                ++response_count;
            }
            sampled.push_back(std::move(sg));
            k_sum += static_cast<double>(mask.k);
        }

        std::vector<double> grad;
        const LossReport report = objective_and_gradient(policy_, sampled, tc, &grad);

        ToyPolicy updated = policy_;
        for (std::size_t j = 0; j < grad.size(); ++j) updated.raw_logits()[j] += tc.learning_rate * grad[j];

        tracker_scratch.end_step();

        // Commit.
        policy_ = std::move(updated);
        old_policy_ = policy_;
        tracker_ = std::move(tracker_scratch);
        for (auto& rec : records) log_.append(std::move(rec));

        StepMetrics m;
        m.step = step_;
        m.loss = report;
        m.mean_reward = reward_sum / static_cast<double>(response_count);
        m.mean_length = length_sum / static_cast<double>(response_count);
        m.mean_k = k_sum / static_cast<double>(batch.size());
        ++step_;
        return m;
    }

    // Shuffled epochs without replacement; a trailing partial batch is used
    // rather than dropped.
    RunResult run() {
        std::vector<StepMetrics> metrics;
        metrics.reserve(cfg_.train.steps);
        std::vector<std::size_t> order(tasks_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::size_t cursor = order.size();
        std::uint64_t epoch = 0;
        for (std::size_t s = 0; s < cfg_.train.steps; ++s) {
            if (cursor >= order.size()) {
                Rng rng(mix_seed({cfg_.train.seed, 0x7363686564756c65ULL, epoch}));  // "schedule"
                rng.shuffle(order);
                cursor = 0;
                ++epoch;
            }
            const std::size_t take = std::min(cfg_.train.batch_size, order.size() - cursor);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                           order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
            cursor += take;
            metrics.push_back(train_step(batch));
        }
        return RunResult{policy_, log_, std::move(metrics), tasks_, tracker_};
    }

private:
    RunConfig cfg_;
    std::vector<SyntheticTask> tasks_;
    ToyPolicy policy_;
    ToyPolicy old_policy_;
    DifficultyTracker tracker_;
    RunLog log_;
    std::size_t step_ = 0;
};

inline RunResult train_run(const RunConfig& cfg) {
    Trainer t(cfg);
    return t.run();
}

inline const std::vector<std::string>& training_csv_header() {
    static const std::vector<std::string> header = {"step",        "surrogate",   "kl",          "entropy",
                                                    "total",       "mean_reward", "mean_length", "mean_k"};
    return header;
}

inline std::vector<std::string> training_csv_row(const StepMetrics& m) {
    return {std::to_string(m.step),          format_double(m.loss.surrogate), format_double(m.loss.kl),
            format_double(m.loss.entropy),   format_double(m.loss.total),     format_double(m.mean_reward),
            format_double(m.mean_length),    format_double(m.mean_k)};
}

// Full training run plus the four run artifacts in `dir` (which must exist).
inline RunResult run_to_dir(const RunConfig& cfg, const std::string& dir) {
    RunResult res = train_run(cfg);

    write_jsonl(res.log, dir + "/rollouts.jsonl");

    CsvWriter csv(dir + "/training.csv", training_csv_header());
    for (const auto& m : res.metrics) csv.write_row(training_csv_row(m));

    std::ofstream policy_out(dir + "/policy.ckpt", std::ios::binary);
    if (!policy_out) throw IoError("cannot open for writing: " + dir + "/policy.ckpt");
    policy_out << res.policy.to_json().dump(2) << '\n';

    nlohmann::ordered_json digest_json = res.tracker.digest().to_json();
    digest_json["steps_seen"] = res.tracker.steps_seen();
    std::ofstream digest_out(dir + "/digest.ckpt", std::ios::binary);
    if (!digest_out) throw IoError("cannot open for writing: " + dir + "/digest.ckpt");
    digest_out << digest_json.dump(2) << '\n';

    return res;
}

// n_samples verified rollouts per task from a frozen policy. Sample seeds
// are independent of training seeds but derived from the same run seed.
inline std::vector<EvalRecord> sample_policy(const ToyPolicy& policy, const std::vector<SyntheticTask>& tasks,
                                             std::size_t n_samples, double temperature, std::size_t max_len,
                                             std::uint64_t seed) {
    std::vector<EvalRecord> out;
    out.reserve(tasks.size() * n_samples);
    for (const auto& task : tasks) {
        for (std::size_t j = 0; j < n_samples; ++j) {
            Rng rng(mix_seed({seed, 0x6576616cULL, fnv1a64(task.prompt_id), j}));  // "eval"
            const Response r = rollout(policy, task, temperature, max_len, rng);
            EvalRecord rec;
            rec.prompt_id = task.prompt_id;
            rec.sample_index = j;
            rec.correct = r.accuracy;
            rec.length = r.length;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace gfpo
