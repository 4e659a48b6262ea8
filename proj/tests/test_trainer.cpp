#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gfpo/trainer.hpp"

namespace {

gfpo::RunConfig small_config() {
    gfpo::RunConfig cfg;
    cfg.env.n_prompts = 16;
    cfg.train.steps = 4;
    cfg.train.batch_size = 4;
    cfg.train.group_size = 6;
    cfg.train.retain_k = 3;
    cfg.train.seed = 11;
    return cfg;
}

// Small policy for derivative checks: 3 work levels x 2 buckets = 6 states.
gfpo::ToyPolicy tiny_policy(gfpo::Rng& rng) {
    gfpo::ToyPolicy p(2, 8, 4);
    for (auto& z : p.raw_logits()) z = rng.gaussian() * 0.7;
    return p;
}

// Random batch with ratios held away from the clip kinks so the objective is
// differentiable at the evaluation point.
std::vector<gfpo::SampledGroup> random_batch(const gfpo::ToyPolicy& policy, const gfpo::TrainConfig& cfg,
                                             gfpo::Rng& rng) {
    const double kink_a = std::log(1.0 - cfg.epsilon);
    const double kink_b = std::log(1.0 + cfg.epsilon);
    const double kink_c = std::log(cfg.dual_clip_c);
    std::vector<gfpo::SampledGroup> batch(2);
    for (auto& group : batch) {
        const std::size_t n_resp = 2 + rng.below(2);
        for (std::size_t i = 0; i < n_resp; ++i) {
            gfpo::SampledResponse resp;
            do {
                resp.advantage = rng.real01() * 3.0 - 1.5;
            } while (std::abs(resp.advantage) < 0.05);
            const std::size_t n_tok = 1 + rng.below(4);
            for (std::size_t t = 0; t < n_tok; ++t) {
                gfpo::SampledToken tok;
                tok.state = rng.below(policy.state_count());
                tok.action = rng.below(gfpo::kAlphabetSize);
                double delta;
                do {
                    delta = rng.real01() * 3.0 - 1.5;
                } while (std::abs(delta - kink_a) < 5e-3 || std::abs(delta - kink_b) < 5e-3 ||
                         std::abs(delta - kink_c) < 5e-3);
                const auto p = policy.probs(tok.state, cfg.temperature);
                tok.logp_old = std::log(p[tok.action]) - delta;
                resp.tokens.push_back(tok);
            }
            group.responses.push_back(std::move(resp));
        }
    }
    return batch;
}

}  // namespace

TEST_CASE("trajectory_states replays the rollout walk") {
    const gfpo::EnvConfig cfg;
    const gfpo::ToyPolicy p(cfg);
    const std::vector<int> tokens{gfpo::WORK, gfpo::FILLER, gfpo::WORK, gfpo::ANSWER};
    const auto states = gfpo::trajectory_states(p, tokens);

    REQUIRE(states.size() == 4);
    REQUIRE(states[0] == p.state_index(0, 0));
    REQUIRE(states[1] == p.state_index(1, 1));
    REQUIRE(states[2] == p.state_index(1, 2));
    REQUIRE(states[3] == p.state_index(2, 3));
}

TEST_CASE("analytic gradient matches central differences of the objective") {
    const double kTol = 1e-4;
    gfpo::Rng rng(271);
    for (int instance = 0; instance < 10; ++instance) {
        gfpo::TrainConfig cfg;
        cfg.temperature = instance % 3 == 0 ? 0.7 : 1.0;
        cfg.aggregation = instance % 2 == 0 ? gfpo::Aggregation::token_level : gfpo::Aggregation::per_response;

        const auto policy = tiny_policy(rng);
        const auto batch = random_batch(policy, cfg, rng);

        std::vector<double> grad;
        gfpo::objective_and_gradient(policy, batch, cfg, &grad);
        REQUIRE(grad.size() == policy.parameter_count());

        const double h = 1e-6;
        for (std::size_t j = 0; j < grad.size(); ++j) {
            gfpo::ToyPolicy up = policy;
            gfpo::ToyPolicy down = policy;
            up.raw_logits()[j] += h;
            down.raw_logits()[j] -= h;
            const double f_up = gfpo::objective_and_gradient(up, batch, cfg, nullptr).total;
            const double f_down = gfpo::objective_and_gradient(down, batch, cfg, nullptr).total;
            const double numeric = (f_up - f_down) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[j]), 1e-8});
            REQUIRE(std::abs(numeric - grad[j]) / denom < kTol);
        }
    }
}

TEST_CASE("zero learning rate leaves the policy bitwise unchanged") {
    auto cfg = small_config();
    cfg.train.learning_rate = 0.0;
    const auto before = gfpo::initial_policy(cfg.env);
    const auto result = gfpo::train_run(cfg);
    REQUIRE(result.policy.raw_logits() == before.raw_logits());
    REQUIRE(result.metrics.size() == cfg.train.steps);
}

TEST_CASE("identical configs give bitwise identical runs") {
    const auto cfg = small_config();
    const auto a = gfpo::train_run(cfg);
    const auto b = gfpo::train_run(cfg);

    REQUIRE(a.policy.raw_logits() == b.policy.raw_logits());
    REQUIRE(a.log.records.size() == b.log.records.size());
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
        REQUIRE(a.log.records[i].reward == b.log.records[i].reward);
        REQUIRE(a.log.records[i].advantage == b.log.records[i].advantage);
        REQUIRE(a.log.records[i].length == b.log.records[i].length);
        REQUIRE(a.log.records[i].selected == b.log.records[i].selected);
    }
    for (std::size_t s = 0; s < a.metrics.size(); ++s) {
        REQUIRE(a.metrics[s].loss.total == b.metrics[s].loss.total);
        REQUIRE(a.metrics[s].mean_reward == b.metrics[s].mean_reward);
    }
}

TEST_CASE("a different seed changes the run") {
    auto cfg = small_config();
    const auto a = gfpo::train_run(cfg);
    cfg.train.seed = 12;
    const auto b = gfpo::train_run(cfg);
    REQUIRE(a.policy.raw_logits() != b.policy.raw_logits());
}

TEST_CASE("retaining the full group reproduces the unfiltered trainer bitwise") {
    auto grpo_cfg = small_config();
    grpo_cfg.train.mode = gfpo::TrainMode::grpo;

    auto full_cfg = small_config();
    full_cfg.train.mode = gfpo::TrainMode::gfpo_fixed;
    full_cfg.train.retain_k = full_cfg.train.group_size;

    const auto a = gfpo::train_run(grpo_cfg);
    const auto b = gfpo::train_run(full_cfg);

    REQUIRE(a.policy.raw_logits() == b.policy.raw_logits());
    REQUIRE(a.log.records.size() == b.log.records.size());
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
        REQUIRE(a.log.records[i].advantage == b.log.records[i].advantage);
        REQUIRE(b.log.records[i].selected == 1);
        REQUIRE(b.log.records[i].k_used == full_cfg.train.group_size);
    }
}

TEST_CASE("selection accounting in the log is consistent") {
    const auto cfg = small_config();
    const auto result = gfpo::train_run(cfg);

    REQUIRE(result.log.records.size() == cfg.train.steps * cfg.train.batch_size * cfg.train.group_size);

    std::map<std::pair<std::size_t, std::string>, std::size_t> selected_per_group;
    for (const auto& rec : result.log.records) {
        REQUIRE(rec.k_used == cfg.train.retain_k);
        if (rec.selected) {
            selected_per_group[{rec.step, rec.prompt_id}]++;
        } else {
            REQUIRE(rec.advantage == 0.0);
        }
    }
    REQUIRE(selected_per_group.size() == cfg.train.steps * cfg.train.batch_size);
    for (const auto& [key, count] : selected_per_group) REQUIRE(count == cfg.train.retain_k);

    for (const auto& m : result.metrics) {
        REQUIRE(m.mean_k == static_cast<double>(cfg.train.retain_k));
    }
}

TEST_CASE("first step sees unit ratios: zero KL and an advantage-weighted surrogate") {
    auto cfg = small_config();
    cfg.train.steps = 1;
    const auto result = gfpo::train_run(cfg);

    REQUIRE(result.metrics.size() == 1);
    REQUIRE(result.metrics[0].loss.kl == 0.0);

    // With every ratio exactly 1 the token-level surrogate reduces to the
    // advantage-weighted token share, recoverable from the log alone.
    std::map<std::string, std::pair<double, std::size_t>> groups;  // prompt -> (sum adv over tokens, tokens)
    for (const auto& rec : result.log.records) {
        auto& [adv_sum, tokens] = groups[rec.prompt_id];
        for (std::size_t t = 0; t < rec.length; ++t) adv_sum += rec.advantage;
        tokens += rec.length;
    }
    double expected = 0.0;
    for (const auto& [prompt, acc] : groups) expected += acc.first / static_cast<double>(acc.second);
    expected /= static_cast<double>(groups.size());
    REQUIRE(result.metrics[0].loss.surrogate == Catch::Approx(expected).margin(1e-9));
}

TEST_CASE("adaptive mode uses the fallback k through warmup and bucket sizes after") {
    gfpo::RunConfig cfg;
    cfg.env.n_prompts = 32;
    cfg.train.steps = 8;
    cfg.train.batch_size = 16;
    cfg.train.group_size = 8;
    cfg.train.mode = gfpo::TrainMode::gfpo_adaptive;
    cfg.train.seed = 5;

    const auto result = gfpo::train_run(cfg);

    // Gates: warmup needs 5 finished steps and 64 observed groups; both are
    // satisfied from step 5 on with this batch size.
    std::set<std::size_t> late_ks;
    for (const auto& rec : result.log.records) {
        if (rec.step < 5) {
            REQUIRE(rec.k_used == cfg.adaptive.k_very_hard);
        } else {
            REQUIRE((rec.k_used == 4 || rec.k_used == 6 || rec.k_used == 8));
            late_ks.insert(rec.k_used);
        }
    }
    REQUIRE(late_ks.size() >= 2);  // difficulty spread actually moves k

    REQUIRE(result.tracker.steps_seen() == cfg.train.steps);
    REQUIRE(result.tracker.digest().total_weight() ==
            static_cast<double>(cfg.train.steps * cfg.train.batch_size));
}

TEST_CASE("zero steps returns the initial policy and an empty log") {
    auto cfg = small_config();
    cfg.train.steps = 0;
    const auto result = gfpo::train_run(cfg);
    REQUIRE(result.metrics.empty());
    REQUIRE(result.log.records.empty());
    REQUIRE(result.policy.raw_logits() == gfpo::initial_policy(cfg.env).raw_logits());
}

TEST_CASE("epochs shuffle without replacement and keep the trailing partial batch") {
    gfpo::RunConfig cfg;
    cfg.env.n_prompts = 10;
    cfg.train.steps = 4;
    cfg.train.batch_size = 4;
    cfg.train.group_size = 4;
    cfg.train.retain_k = 2;
    cfg.train.seed = 3;

    const auto result = gfpo::train_run(cfg);

    std::map<std::size_t, std::set<std::string>> prompts_per_step;
    std::map<std::size_t, std::size_t> records_per_step;
    for (const auto& rec : result.log.records) {
        prompts_per_step[rec.step].insert(rec.prompt_id);
        records_per_step[rec.step]++;
    }
    REQUIRE(prompts_per_step[0].size() == 4);
    REQUIRE(prompts_per_step[1].size() == 4);
    REQUIRE(prompts_per_step[2].size() == 2);  // 10 tasks leave a remainder of 2
    REQUIRE(prompts_per_step[3].size() == 4);
    REQUIRE(records_per_step[2] == 2 * cfg.train.group_size);

    // First epoch covers every task exactly once.
    std::set<std::string> epoch0;
    for (std::size_t s = 0; s < 3; ++s) epoch0.insert(prompts_per_step[s].begin(), prompts_per_step[s].end());
    REQUIRE(epoch0.size() == 10);
}

TEST_CASE("trainer rejects unusable configurations and empty batches") {
    auto cfg = small_config();
    cfg.train.group_size = 1;
    cfg.train.retain_k = 1;
    REQUIRE_THROWS_AS(gfpo::Trainer(cfg), gfpo::ConfigError);

    gfpo::Trainer ok(small_config());
    REQUIRE_THROWS_AS(ok.train_step({}), gfpo::InvariantViolation);
}

TEST_CASE("a failed step leaves the trainer state untouched") {
    gfpo::Trainer t(small_config());
    const auto logits_before = t.policy().raw_logits();
    const std::size_t steps_before = t.step();

    REQUIRE_THROWS_AS(t.train_step({9999}), std::out_of_range);  // task index out of range
    REQUIRE(t.policy().raw_logits() == logits_before);
    REQUIRE(t.step() == steps_before);
    REQUIRE(t.log().records.empty());

    REQUIRE_NOTHROW(t.train_step({0, 1}));
    REQUIRE(t.step() == 1);
}

TEST_CASE("csv header and row shapes line up") {
    const auto& header = gfpo::training_csv_header();
    REQUIRE(header == std::vector<std::string>{"step", "surrogate", "kl", "entropy", "total", "mean_reward",
                                               "mean_length", "mean_k"});

    gfpo::StepMetrics m;
    m.step = 7;
    m.loss.surrogate = 0.5;
    m.loss.total = 0.25;
    m.mean_k = 8.0;
    const auto row = gfpo::training_csv_row(m);
    REQUIRE(row.size() == header.size());
    REQUIRE(row[0] == "7");
    REQUIRE(row[1] == "0.5");
    REQUIRE(row[7] == "8");
}

TEST_CASE("run_to_dir writes the four artifacts consistently with the result") {
    namespace fs = std::filesystem;
    const std::string dir = "trainer_run_artifacts";
    fs::create_directories(dir);

    auto cfg = small_config();
    cfg.train.steps = 3;
    const auto result = gfpo::run_to_dir(cfg, dir);

    const auto log = gfpo::read_jsonl(dir + "/rollouts.jsonl");
    REQUIRE(log.records.size() == result.log.records.size());
    REQUIRE(log.records.back().reward == result.log.records.back().reward);

    std::ifstream csv(dir + "/training.csv");
    std::string line;
    REQUIRE(std::getline(csv, line));
    REQUIRE(line == "step,surrogate,kl,entropy,total,mean_reward,mean_length,mean_k");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        if (!line.empty()) ++rows;
    }
    REQUIRE(rows == cfg.train.steps);

    std::ifstream ckpt(dir + "/policy.ckpt");
    nlohmann::json pj;
    ckpt >> pj;
    const auto restored = gfpo::ToyPolicy::from_json(pj);
    REQUIRE(restored.raw_logits() == result.policy.raw_logits());

    std::ifstream digest(dir + "/digest.ckpt");
    nlohmann::json dj;
    digest >> dj;
    REQUIRE(dj.at("steps_seen").get<std::size_t>() == cfg.train.steps);

    fs::remove_all(dir);
}

TEST_CASE("sample_policy is reproducible and sized tasks times samples") {
    const gfpo::EnvConfig env;
    const auto tasks = gfpo::make_task_distribution(1, 12, 2, 12);
    const auto policy = gfpo::initial_policy(env);

    const auto a = gfpo::sample_policy(policy, tasks, 3, 1.0, env.max_len, 777);
    const auto b = gfpo::sample_policy(policy, tasks, 3, 1.0, env.max_len, 777);
    const auto c = gfpo::sample_policy(policy, tasks, 3, 1.0, env.max_len, 778);

    REQUIRE(a.size() == 36);
    bool same = true;
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same &= a[i].length == b[i].length && a[i].correct == b[i].correct && a[i].prompt_id == b[i].prompt_id &&
                a[i].sample_index == b[i].sample_index;
        differs |= a[i].length != c[i].length;
        REQUIRE(a[i].length >= 1);
        REQUIRE(a[i].length <= env.max_len);
    }
    REQUIRE(same);
    REQUIRE(differs);
}
