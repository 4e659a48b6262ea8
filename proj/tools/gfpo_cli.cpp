#include <algorithm>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfpo/config.hpp"
#include "gfpo/env.hpp"
#include "gfpo/errors.hpp"
#include "gfpo/log.hpp"
#include "gfpo/stats.hpp"
#include "gfpo/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& dir, const gfpo::RunConfig& cfg, const std::vector<std::string>& outputs,
                    const std::string& started, const std::string& finished) {
    nlohmann::ordered_json j;
    j["artifact_version"] = kVersion;
    j["config_hash"] = gfpo::config_hash_hex(cfg);
    j["seed"] = cfg.train.seed;
    j["started_utc"] = started;
    j["finished_utc"] = finished;
    j["outputs"] = outputs;
    j["resolved_config"] = gfpo::canonical_config(cfg);
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw gfpo::IoError("cannot open for writing: " + dir + "/manifest.json");
    out << j.dump(2) << '\n';
}

struct TrainOpts {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
};

gfpo::RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    gfpo::RunConfig cfg = config_path.empty() ? gfpo::default_run_config() : gfpo::parse_config_file(config_path);
    for (const auto& o : overrides) gfpo::apply_override(cfg, o);
    // Invariant failures at this point come from user-supplied values, so they
    // are usage errors (exit 2), not runtime errors.
    try {
        gfpo::finalize_run_config(cfg);
    } catch (const gfpo::InvariantViolation& e) {
        throw gfpo::ConfigError(e.what());
    }
    return cfg;
}

int do_train(const TrainOpts& opts) {
    const gfpo::RunConfig cfg = resolve_config(opts.config_path, opts.overrides);
    fs::create_directories(opts.out_dir);
    const std::string started = utc_now();
    const gfpo::RunResult res = gfpo::run_to_dir(cfg, opts.out_dir);
    gfpo::write_tasks_jsonl(opts.out_dir + "/tasks.jsonl", res.tasks);
    write_manifest(opts.out_dir, cfg, {"rollouts.jsonl", "training.csv", "policy.ckpt", "digest.ckpt", "tasks.jsonl"},
                   started, utc_now());
    std::cout << "trained " << cfg.train.steps << " steps (" << gfpo::mode_name(cfg.train.mode) << "), outputs in "
              << opts.out_dir << "\n";
    return 0;
}

struct EvalOpts {
    std::string checkpoint;
    std::string tasks_path;
    std::string out_path;
    std::size_t n_samples = 8;
    double temperature = 1.0;
    std::size_t max_len = 64;
    std::uint64_t seed = 1;
};

gfpo::ToyPolicy load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw gfpo::IoError("cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return gfpo::ToyPolicy::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw gfpo::IoError("malformed checkpoint " + path + ": " + e.what());
    }
}

int do_eval(const EvalOpts& opts) {
    if (opts.n_samples < 1) throw gfpo::ConfigError("--samples must be at least 1");
    if (opts.temperature <= 0.0) throw gfpo::ConfigError("--temperature must be positive");
    const gfpo::ToyPolicy policy = load_policy(opts.checkpoint);
    const std::vector<gfpo::SyntheticTask> tasks = gfpo::read_tasks_jsonl(opts.tasks_path);
    if (tasks.empty()) throw gfpo::IoError("no tasks in " + opts.tasks_path);
    const auto records = gfpo::sample_policy(policy, tasks, opts.n_samples, opts.temperature, opts.max_len, opts.seed);
    gfpo::write_eval_jsonl(records, opts.out_path);
    const gfpo::PassSummary summary = gfpo::pass_at_1(records);
    std::cout << "evaluated " << tasks.size() << " tasks x " << opts.n_samples << " samples: pass@1 "
              << gfpo::format_double(summary.macro_pass1) << ", mean length "
              << gfpo::format_double(summary.mean_length) << "\n";
    return 0;
}

struct AnalyzeOpts {
    std::vector<std::string> inputs;  // role=path
    std::string out_dir;
    std::string bin_mode = "absolute";
    std::string edges_spec;
    std::size_t max_len = 64;
};

std::vector<double> parse_edges(const std::string& spec) {
    std::vector<double> edges;
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            edges.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw gfpo::ConfigError("--edges: cannot parse '" + cell + "' as a number");
        }
    }
    if (edges.empty()) throw gfpo::ConfigError("--edges: empty list");
    return edges;
}

std::string csv_num(double v) { return gfpo::format_double(v); }

int do_analyze(const AnalyzeOpts& opts) {
    // Roles: "sft" and "grpo" are reference roles; everything else is a
    // candidate. Duplicate labels are a usage error.
    std::map<std::string, std::vector<gfpo::EvalRecord>> roles;
    for (const auto& spec : opts.inputs) {
        const std::size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size()) {
            throw gfpo::ConfigError("--input expects role=path, got '" + spec + "'");
        }
        const std::string role = spec.substr(0, eq);
        const std::string path = spec.substr(eq + 1);
        if (roles.count(role)) throw gfpo::ConfigError("duplicate role label '" + role + "'");
        roles[role] = gfpo::read_samples_jsonl(path);
        if (roles[role].empty()) throw gfpo::IoError("no samples in " + path);
    }
    std::vector<std::string> candidates;
    for (const auto& [role, _] : roles) {
        if (role != "sft" && role != "grpo") candidates.push_back(role);
    }
    if (candidates.empty()) throw gfpo::ConfigError("at least one candidate role is required (any label besides sft/grpo)");
    fs::create_directories(opts.out_dir);

    std::map<std::string, gfpo::PassSummary> summaries;
    for (const auto& [role, samples] : roles) summaries[role] = gfpo::pass_at_1(samples);

    // elr.csv: needs sft and grpo references.
    if (roles.count("sft") && roles.count("grpo")) {
        gfpo::CsvWriter csv(opts.out_dir + "/elr.csv", {"role", "mean_length", "elr_percent"});
        const double l_sft = summaries["sft"].mean_length;
        const double l_grpo = summaries["grpo"].mean_length;
        csv.write_row({"sft", csv_num(l_sft), ""});
        csv.write_row({"grpo", csv_num(l_grpo), csv_num(0.0)});
        for (const auto& role : candidates) {
            std::string cell;
            try {
                cell = csv_num(gfpo::excess_length_reduction(l_grpo, summaries[role].mean_length, l_sft));
            } catch (const gfpo::DegenerateBaseline&) {
                std::cerr << "warning: grpo and sft mean lengths are equal, elr undefined\n";
            }
            csv.write_row({role, csv_num(summaries[role].mean_length), cell});
        }
    } else {
        std::cerr << "warning: elr.csv skipped (needs sft, grpo, and a candidate role)\n";
    }

    // Difficulty source: sft accuracy when present, otherwise the first
    // candidate's own accuracy.
    const std::string difficulty_role = roles.count("sft") ? "sft" : candidates.front();
    const gfpo::PassSummary& source = summaries[difficulty_role];
    std::vector<std::string> prompt_ids;
    std::vector<double> source_accuracy;
    for (const auto& s : source.per_prompt) {
        prompt_ids.push_back(s.prompt_id);
        source_accuracy.push_back(s.pass1);
    }

    std::map<std::string, int> prompt_bucket;
    std::map<std::string, double> prompt_difficulty;
    bool have_buckets = false;
    if (prompt_ids.size() >= 4) {
        const gfpo::QuartileAssignment q = gfpo::difficulty_quartiles(source_accuracy);
        for (std::size_t i = 0; i < prompt_ids.size(); ++i) {
            prompt_bucket[prompt_ids[i]] = q.bucket[i];
            prompt_difficulty[prompt_ids[i]] = 1.0 - source_accuracy[i];
        }
        have_buckets = true;
        if (q.degenerate) std::cerr << "warning: all prompts have equal difficulty, quartiles are degenerate\n";
    } else {
        std::cerr << "warning: quartiles.csv skipped (need at least 4 prompts with " << difficulty_role
                  << " samples)\n";
    }

    static const char* kBucketNames[4] = {"easy", "medium", "hard", "very_hard"};
    if (have_buckets) {
        gfpo::CsvWriter csv(opts.out_dir + "/quartiles.csv",
                            {"role", "bucket", "n_prompts", "pass1", "mean_length"});
        for (const auto& [role, summary] : summaries) {
            for (int b = 0; b < 4; ++b) {
                double pass_sum = 0.0;
                double len_sum = 0.0;
                std::size_t n_prompts = 0;
                for (const auto& s : summary.per_prompt) {
                    auto it = prompt_bucket.find(s.prompt_id);
                    if (it == prompt_bucket.end() || it->second != b) continue;
                    pass_sum += s.pass1;
                    len_sum += s.mean_length;
                    ++n_prompts;
                }
                if (n_prompts == 0) {
                    csv.write_row({role, kBucketNames[b], "0", "", ""});
                } else {
                    const double n = static_cast<double>(n_prompts);
                    csv.write_row({role, kBucketNames[b], std::to_string(n_prompts), csv_num(pass_sum / n),
                                   csv_num(len_sum / n)});
                }
            }
        }
    }

    // length_bins.csv: per-role length histogram with accuracy and mean
    // prompt difficulty per bin. Empty bins keep their row with blank stats.
    {
        const gfpo::BinMode mode =
            opts.bin_mode == "relative" ? gfpo::BinMode::relative_quartile : gfpo::BinMode::absolute_edges;
        const std::vector<double> edges =
            opts.edges_spec.empty() ? gfpo::default_absolute_edges(opts.max_len) : parse_edges(opts.edges_spec);
        gfpo::CsvWriter csv(opts.out_dir + "/length_bins.csv",
                            {"role", "bin_lo", "bin_hi", "count", "share", "accuracy", "mean_difficulty"});
        for (const auto& [role, samples] : roles) {
            const auto bins = gfpo::length_bins(samples, mode, edges, have_buckets ? &prompt_difficulty : nullptr);
            for (const auto& bin : bins) {
                const std::string lo = std::isinf(bin.lo) ? "" : csv_num(bin.lo);
                const std::string hi = std::isinf(bin.hi) ? "" : csv_num(bin.hi);
                csv.write_row({role, lo, hi, std::to_string(bin.count), csv_num(bin.share),
                               bin.empty ? "" : csv_num(bin.accuracy),
                               bin.has_difficulty ? csv_num(bin.mean_difficulty) : ""});
            }
        }
    }

    // wilcoxon.csv: pairwise per-prompt pass@1 comparisons over shared
    // prompts, every pair of supplied roles.
    {
        gfpo::CsvWriter csv(opts.out_dir + "/wilcoxon.csv",
                            {"role_a", "role_b", "n_pairs", "n_nonzero", "w_statistic", "p_value", "method"});
        std::vector<std::string> role_names;
        for (const auto& [role, _] : roles) role_names.push_back(role);
        for (std::size_t a = 0; a < role_names.size(); ++a) {
            for (std::size_t b = a + 1; b < role_names.size(); ++b) {
                std::map<std::string, double> pa;
                for (const auto& s : summaries[role_names[a]].per_prompt) pa[s.prompt_id] = s.pass1;
                std::vector<double> xs;
                std::vector<double> ys;
                for (const auto& s : summaries[role_names[b]].per_prompt) {
                    auto it = pa.find(s.prompt_id);
                    if (it == pa.end()) continue;
                    xs.push_back(it->second);
                    ys.push_back(s.pass1);
                }
                if (xs.empty()) {
                    std::cerr << "warning: roles " << role_names[a] << " and " << role_names[b]
                              << " share no prompts, wilcoxon skipped\n";
                    continue;
                }
                const gfpo::WilcoxonResult w = gfpo::wilcoxon_signed_rank(xs, ys);
                csv.write_row({role_names[a], role_names[b], std::to_string(xs.size()),
                               std::to_string(w.n_nonzero), csv_num(w.statistic), csv_num(w.p_value),
                               w.all_zero ? "all_zero" : (w.exact ? "exact" : "normal")});
            }
        }
    }

    std::cout << "analysis written to " << opts.out_dir << "\n";
    return 0;
}

struct CompareOpts {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    std::size_t eval_samples = 8;
    double eval_temperature = 1.0;
};

int do_compare(const CompareOpts& opts) {
    gfpo::RunConfig base = resolve_config(opts.config_path, opts.overrides);
    if (base.train.mode == gfpo::TrainMode::grpo) base.train.mode = gfpo::TrainMode::gfpo_fixed;
    gfpo::RunConfig grpo_cfg = base;
    grpo_cfg.train.mode = gfpo::TrainMode::grpo;

    fs::create_directories(opts.out_dir + "/grpo");
    fs::create_directories(opts.out_dir + "/gfpo");

    const std::string started = utc_now();
    const std::vector<std::string> run_outputs = {"rollouts.jsonl", "training.csv", "policy.ckpt", "digest.ckpt",
                                                  "tasks.jsonl"};

    std::string grpo_start = utc_now();
    const gfpo::RunResult grpo_res = gfpo::run_to_dir(grpo_cfg, opts.out_dir + "/grpo");
    gfpo::write_tasks_jsonl(opts.out_dir + "/grpo/tasks.jsonl", grpo_res.tasks);
    write_manifest(opts.out_dir + "/grpo", grpo_cfg, run_outputs, grpo_start, utc_now());

    std::string gfpo_start = utc_now();
    const gfpo::RunResult gfpo_res = gfpo::run_to_dir(base, opts.out_dir + "/gfpo");
    gfpo::write_tasks_jsonl(opts.out_dir + "/gfpo/tasks.jsonl", gfpo_res.tasks);
    write_manifest(opts.out_dir + "/gfpo", base, run_outputs, gfpo_start, utc_now());

    // The untrained policy plays the pre-RL reference role for length
    // inflation accounting.
    const gfpo::ToyPolicy pre_rl_policy = gfpo::initial_policy(base.env);
    const std::uint64_t eval_seed = base.train.seed;
    const auto eval_of = [&](const gfpo::ToyPolicy& policy) {
        return gfpo::pass_at_1(gfpo::sample_policy(policy, grpo_res.tasks, opts.eval_samples, opts.eval_temperature,
                                                   base.env.max_len, eval_seed));
    };
    const gfpo::PassSummary initial_eval = eval_of(pre_rl_policy);
    const gfpo::PassSummary grpo_eval = eval_of(grpo_res.policy);
    const gfpo::PassSummary gfpo_eval = eval_of(gfpo_res.policy);

    std::string elr_cell;
    try {
        elr_cell = csv_num(gfpo::excess_length_reduction(grpo_eval.mean_length, gfpo_eval.mean_length,
                                                         initial_eval.mean_length));
    } catch (const gfpo::DegenerateBaseline&) {
        std::cerr << "warning: grpo did not change mean length over the initial policy, elr undefined\n";
    }

    const std::string gfpo_label = gfpo::mode_name(base.train.mode);
    gfpo::CsvWriter csv(opts.out_dir + "/summary.csv", {"role", "pass1", "mean_length", "elr_percent"});
    csv.write_row({"initial", csv_num(initial_eval.macro_pass1), csv_num(initial_eval.mean_length), ""});
    csv.write_row({"grpo", csv_num(grpo_eval.macro_pass1), csv_num(grpo_eval.mean_length), csv_num(0.0)});
    csv.write_row({gfpo_label, csv_num(gfpo_eval.macro_pass1), csv_num(gfpo_eval.mean_length), elr_cell});

    write_manifest(opts.out_dir, base, {"grpo", "gfpo", "summary.csv"}, started, utc_now());

    std::cout << "role          pass@1    mean_len  elr%\n";
    const auto line = [](const std::string& role, const gfpo::PassSummary& s, const std::string& elr) {
        std::ostringstream os;
        os << role;
        os << std::string(role.size() < 14 ? 14 - role.size() : 1, ' ');
        std::ostringstream p1;
        p1.precision(4);
        p1 << std::fixed << s.macro_pass1;
        os << p1.str() << "    ";
        std::ostringstream ml;
        ml.precision(2);
        ml << std::fixed << s.mean_length;
        os << ml.str();
        if (!elr.empty()) os << "      " << elr;
        return os.str();
    };
    std::cout << line("initial", initial_eval, "") << "\n";
    std::cout << line("grpo", grpo_eval, "0") << "\n";
    std::cout << line(gfpo_label, gfpo_eval, elr_cell) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-filtered policy optimization toolkit: train, evaluate, and analyze "
                 "filtered group-relative RL runs in a synthetic verifiable environment."};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    TrainOpts train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "Run training and write run artifacts");
    train_cmd->add_option("--config", train_opts.config_path, "Config file (sections: trainer, selection, adaptive, reward, env)");
    train_cmd->add_option("--out", train_opts.out_dir, "Output directory")->required();
    train_cmd->add_option("--set", train_opts.overrides,
                          "Override a config key (section.key=value; G and k are shorthands)");

    EvalOpts eval_opts;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Sample a frozen policy checkpoint on a task file");
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "policy.ckpt path")->required();
    eval_cmd->add_option("--tasks", eval_opts.tasks_path, "tasks.jsonl path")->required();
    eval_cmd->add_option("--out", eval_opts.out_path, "eval.jsonl output path")->required();
    eval_cmd->add_option("--samples", eval_opts.n_samples, "Samples per task (default 8)");
    eval_cmd->add_option("--temperature", eval_opts.temperature, "Sampling temperature (default 1.0)");
    eval_cmd->add_option("--max-len", eval_opts.max_len, "Response token budget (default 64)");
    eval_cmd->add_option("--seed", eval_opts.seed, "Eval seed (default 1)");

    AnalyzeOpts analyze_opts;
    CLI::App* analyze_cmd = app.add_subcommand(
        "analyze",
        "Compute pass@1, length-inflation, difficulty-quartile, length-bin, and signed-rank stats from sample files.\n"
        "Outputs: elr.csv (role, mean_length, elr_percent), quartiles.csv (role, bucket, n_prompts, pass1, mean_length),\n"
        "length_bins.csv (role, bin_lo, bin_hi, count, share, accuracy, mean_difficulty),\n"
        "wilcoxon.csv (role_a, role_b, n_pairs, n_nonzero, w_statistic, p_value, method)");
    analyze_cmd->add_option("--input", analyze_opts.inputs,
                            "role=path, repeatable; roles sft and grpo are references, any other label is a candidate")
        ->required();
    analyze_cmd->add_option("--out", analyze_opts.out_dir, "Output directory for CSVs")->required();
    analyze_cmd->add_option("--bin-mode", analyze_opts.bin_mode, "Length bins: absolute (default) or relative")
        ->check(CLI::IsMember({"absolute", "relative"}));
    analyze_cmd->add_option("--edges", analyze_opts.edges_spec, "Absolute bin edges, comma-separated");
    analyze_cmd->add_option("--max-len", analyze_opts.max_len,
                            "Token budget used to scale default absolute edges (default 64)");

    CompareOpts compare_opts;
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "Train GRPO and the configured filtered variant with a shared seed, then "
                                      "evaluate both and the untrained policy side by side");
    compare_cmd->add_option("--config", compare_opts.config_path, "Config file for the filtered variant");
    compare_cmd->add_option("--out", compare_opts.out_dir, "Output directory")->required();
    compare_cmd->add_option("--set", compare_opts.overrides, "Config override (section.key=value)");
    compare_cmd->add_option("--eval-samples", compare_opts.eval_samples, "Eval samples per task (default 8)");
    compare_cmd->add_option("--eval-temperature", compare_opts.eval_temperature, "Eval temperature (default 1.0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train_cmd)) return do_train(train_opts);
        if (app.got_subcommand(eval_cmd)) return do_eval(eval_opts);
        if (app.got_subcommand(analyze_cmd)) return do_analyze(analyze_opts);
        if (app.got_subcommand(compare_cmd)) return do_compare(compare_opts);
    } catch (const gfpo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gfpo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
