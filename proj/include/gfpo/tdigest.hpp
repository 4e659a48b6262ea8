#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfpo/errors.hpp"

namespace gfpo {

// Streaming quantile sketch. Values accumulate in an insertion buffer that is
// periodically merged into a sorted centroid list; a merge joins adjacent
// centroids while the combined weight stays under total_weight / compression.
// Consequences used by callers and tests:
//   - centroid count stays below 2 * compression + 2 after every flush
//   - streams of at most `compression` values never merge, so small-stream
//     percentiles are exact
//   - quantile-rank error is bounded by the per-centroid weight cap
class TDigest {
public:
    struct Centroid {
        double mean = 0.0;
        double weight = 0.0;
    };

    explicit TDigest(double compression = 100.0) : compression_(compression < 1.0 ? 1.0 : compression) {}

    void update(double value) {
        if (!std::isfinite(value)) throw NonFiniteValue("t-digest update with non-finite value");
        buffer_.push_back(value);
        total_weight_ += 1.0;
        if (buffer_.size() >= buffer_limit()) flush();
    }

    // Interpolated quantile estimate for p in [0, 100]. Centroid means act as
    // point masses at their midpoint ranks.
    double percentile(double p) {
        if (total_weight_ < 1.0) throw EmptyDigest("percentile of empty digest");
        flush();
        if (centroids_.size() == 1) return centroids_[0].mean;

        const double rank = (p / 100.0) * total_weight_;
        double cum = 0.0;
        double prev_pos = 0.0;
        double prev_mean = centroids_.front().mean;
        for (std::size_t i = 0; i < centroids_.size(); ++i) {
            const double pos = cum + centroids_[i].weight / 2.0;
            if (rank < pos) {
                if (i == 0) return centroids_.front().mean;
                const double t = (rank - prev_pos) / (pos - prev_pos);
                return prev_mean + t * (centroids_[i].mean - prev_mean);
            }
            prev_pos = pos;
            prev_mean = centroids_[i].mean;
            cum += centroids_[i].weight;
        }
        return centroids_.back().mean;
    }

    double total_weight() const { return total_weight_; }
    double compression() const { return compression_; }

    const std::vector<Centroid>& centroids() {
        flush();
        return centroids_;
    }

    std::size_t centroid_bound() const { return 2 * static_cast<std::size_t>(std::ceil(compression_)) + 2; }

    nlohmann::ordered_json to_json() {
        flush();
        nlohmann::ordered_json j;
        j["compression"] = compression_;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& c : centroids_) arr.push_back({c.mean, c.weight});
        j["centroids"] = arr;
        return j;
    }

    static TDigest from_json(const nlohmann::json& j) {
        TDigest d(j.at("compression").get<double>());
        for (const auto& pair : j.at("centroids")) {
            d.centroids_.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
            d.total_weight_ += pair.at(1).get<double>();
        }
        return d;
    }

private:
    std::size_t buffer_limit() const { return static_cast<std::size_t>(4.0 * compression_) + 16; }

    void flush() {
        if (buffer_.empty()) return;
        std::sort(buffer_.begin(), buffer_.end());

        std::vector<Centroid> items;
        items.reserve(centroids_.size() + buffer_.size());
        std::size_t bi = 0;
        for (const auto& c : centroids_) {
            while (bi < buffer_.size() && buffer_[bi] < c.mean) items.push_back({buffer_[bi++], 1.0});
            items.push_back(c);
        }
        while (bi < buffer_.size()) items.push_back({buffer_[bi++], 1.0});
        buffer_.clear();

        const double weight_cap = total_weight_ / compression_;
        std::vector<Centroid> merged;
        merged.reserve(items.size());
        Centroid cur = items.front();
        for (std::size_t i = 1; i < items.size(); ++i) {
            const Centroid& next = items[i];
            if (cur.weight + next.weight <= weight_cap) {
                const double w = cur.weight + next.weight;
                cur.mean = (cur.mean * cur.weight + next.mean * next.weight) / w;
                cur.weight = w;
            } else {
                merged.push_back(cur);
                cur = next;
            }
        }
        merged.push_back(cur);
        centroids_ = std::move(merged);
    }

    double compression_;
    std::vector<double> buffer_;
    std::vector<Centroid> centroids_;  // sorted by mean
    double total_weight_ = 0.0;
};

}  // namespace gfpo
