#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "sanet/sample.hpp"

namespace sanet {

struct BinaryCounts {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;
    std::uint64_t pred_pos = 0;
    std::uint64_t gt_pos = 0;

    BinaryCounts& operator+=(const BinaryCounts& o) {
        intersection += o.intersection;
        union_ += o.union_;
        pred_pos += o.pred_pos;
        gt_pos += o.gt_pos;
        return *this;
    }
};

enum class EmptyConvention { one, zero };

inline BinaryCounts binary_counts(const Mask& pred, const Mask& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("binary_counts: extent mismatch");
    BinaryCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        c.intersection += p && g;
        c.union_ += p || g;
        c.pred_pos += p;
        c.gt_pos += g;
    }
    return c;
}

inline std::pair<double, double> jaccard_dice(const BinaryCounts& c,
                                              EmptyConvention empty = EmptyConvention::one) {
    if (c.union_ == 0) {
        double v = empty == EmptyConvention::one ? 1.0 : 0.0;
        return {v, v};
    }
    double jaccard = static_cast<double>(c.intersection) / static_cast<double>(c.union_);
    double dice = 2.0 * static_cast<double>(c.intersection) /
                  static_cast<double>(c.pred_pos + c.gt_pos);
    return {jaccard, dice};
}

struct MetricReport {
    std::array<double, kAttributeCount> jaccard{};
    std::array<double, kAttributeCount> dice{};
    double macro_jaccard = 0, macro_dice = 0;
    double micro_jaccard = 0, micro_dice = 0;
    double challenge_avg_jaccard = 0;  // mean of {5 per-class JA, micro JA}
};

/// Dataset-pooled aggregation: counts are summed over images before ratios.
inline MetricReport aggregate(const std::vector<std::array<BinaryCounts, kAttributeCount>>& per_image,
                              EmptyConvention empty = EmptyConvention::one) {
    if (per_image.empty()) throw std::invalid_argument("aggregate: at least one image required");
    std::array<BinaryCounts, kAttributeCount> pooled{};
    BinaryCounts micro{};
    for (const auto& image : per_image)
        for (int k = 0; k < kAttributeCount; ++k) {
            pooled[k] += image[k];
            micro += image[k];
        }

    MetricReport report;
    for (int k = 0; k < kAttributeCount; ++k) {
        auto [ja, dice] = jaccard_dice(pooled[k], empty);
        report.jaccard[k] = ja;
        report.dice[k] = dice;
        report.macro_jaccard += ja / kAttributeCount;
        report.macro_dice += dice / kAttributeCount;
    }
    auto [mja, mdice] = jaccard_dice(micro, empty);
    report.micro_jaccard = mja;
    report.micro_dice = mdice;
    report.challenge_avg_jaccard =
        (report.jaccard[0] + report.jaccard[1] + report.jaccard[2] + report.jaccard[3] +
         report.jaccard[4] + report.micro_jaccard) /
        6.0;
    return report;
}

/// Convenience for rows already expressed as per-class values (e.g. published
/// tables): plain unweighted mean.
inline double macro_average(const std::array<double, kAttributeCount>& per_class) {
    double sum = 0;
    for (double v : per_class) sum += v;
    return sum / kAttributeCount;
}

/// CSV rows per class plus macro/micro/challenge_avg, percentages, 2 decimals.
inline void write_metrics_csv(const MetricReport& report, std::ostream& out) {
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
        return std::string(buf);
    };
    out << "class,jaccard,dice\n";
    for (int k = 0; k < kAttributeCount; ++k)
        out << attribute_name(k) << "," << pct(report.jaccard[k]) << "," << pct(report.dice[k]) << "\n";
    out << "macro," << pct(report.macro_jaccard) << "," << pct(report.macro_dice) << "\n";
    out << "micro," << pct(report.micro_jaccard) << "," << pct(report.micro_dice) << "\n";
    out << "challenge_avg," << pct(report.challenge_avg_jaccard) << ",\n";
}

}  // namespace sanet
