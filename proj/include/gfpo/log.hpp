#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfpo/errors.hpp"
#include "gfpo/types.hpp"

namespace gfpo {

using ordered_json = nlohmann::ordered_json;

// Shortest round-trip decimal form of a double (std::to_chars), so logs are
// byte-stable across runs and parse back to the identical bit pattern.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// One rollouts.jsonl line: per-step, per-response training metrics.
// `selected` is 0/1; `advantage` is 0.0 for unselected responses.
struct LogRecord {
    std::size_t step = 0;
    std::string prompt_id;
    std::size_t response_index = 0;
    std::size_t length = 0;
    double reward = 0.0;
    int accuracy = 0;
    double repetition = 0.0;
    int selected = 0;
    double advantage = 0.0;
    std::size_t k_used = 0;
};

inline ordered_json to_json(const LogRecord& r) {
    ordered_json j;
    j["step"] = r.step;
    j["prompt_id"] = r.prompt_id;
    j["response_index"] = r.response_index;
    j["length"] = r.length;
    j["reward"] = r.reward;
    j["accuracy"] = r.accuracy;
    j["repetition"] = r.repetition;
    j["selected"] = r.selected;
    j["advantage"] = r.advantage;
    j["k_used"] = r.k_used;
    return j;
}

inline LogRecord log_record_from_json(const ordered_json& j) {
    LogRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.response_index = j.at("response_index").get<std::size_t>();
    r.length = j.at("length").get<std::size_t>();
    r.reward = j.at("reward").get<double>();
    r.accuracy = j.at("accuracy").get<int>();
    r.repetition = j.at("repetition").get<double>();
    r.selected = j.at("selected").get<int>();
    r.advantage = j.at("advantage").get<double>();
    r.k_used = j.at("k_used").get<std::size_t>();
    return r;
}

// Append-only per-response record of a run.
struct RunLog {
    std::vector<LogRecord> records;

    void append(LogRecord r) { records.push_back(std::move(r)); }
};

inline void write_jsonl(const RunLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& r : log.records) out << to_json(r).dump() << '\n';
}

inline RunLog read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    RunLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        log.append(log_record_from_json(ordered_json::parse(line)));
    }
    return log;
}

// One eval.jsonl line: a verified sample from a frozen policy.
struct EvalRecord {
    std::string prompt_id;
    std::size_t sample_index = 0;
    int correct = 0;
    std::size_t length = 0;
};

inline ordered_json to_json(const EvalRecord& r) {
    ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["sample_index"] = r.sample_index;
    j["correct"] = r.correct;
    j["length"] = r.length;
    return j;
}

inline void write_eval_jsonl(const std::vector<EvalRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

// Reads either eval.jsonl ("correct") or rollouts.jsonl ("accuracy") into the
// shared sample shape the analysis code consumes.
inline std::vector<EvalRecord> read_samples_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<EvalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto j = ordered_json::parse(line);
        EvalRecord r;
        r.prompt_id = j.at("prompt_id").get<std::string>();
        r.length = j.at("length").get<std::size_t>();
        if (j.contains("correct")) {
            r.correct = j.at("correct").get<int>();
            r.sample_index = j.value("sample_index", std::size_t{0});
        } else if (j.contains("accuracy")) {
            r.correct = j.at("accuracy").get<int>();
            r.sample_index = j.value("response_index", std::size_t{0});
        } else {
            throw IoError(path + ":" + std::to_string(lineno) + ": record has neither 'correct' nor 'accuracy'");
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Minimal CSV writer: header once, then rows of preformatted cells.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace gfpo
