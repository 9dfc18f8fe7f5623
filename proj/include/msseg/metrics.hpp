#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msseg/data.hpp"

namespace msseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Voxel-wise tallies with lesion (1) as the positive class.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
ConfusionCounts confusion(const MaskVolume& pred, const MaskVolume& gt);

// Empty denominators score 1 (nothing to find, nothing wrongly found), except
// extra_fraction which throws.
double dice(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
/// fp / (tn + fn).
double extra_fraction(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
double ppv(const ConfusionCounts& c);
double npv(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // population
};

MeanSd aggregate(std::span<const double> values);

inline constexpr std::size_t kMetricCount = 8;
/// Report column order.
inline constexpr std::array<const char*, kMetricCount> kMetricNames = {
    "dice", "sensitivity", "specificity", "iou", "extra_fraction", "ppv", "npv", "accuracy"};

using MetricRow = std::array<double, kMetricCount>;

MetricRow all_metrics(const ConfusionCounts& c);

struct MetricsReport {
    std::vector<std::string> volume_ids;
    std::vector<ConfusionCounts> counts;
    std::vector<MetricRow> rows;
    std::array<MeanSd, kMetricCount> summary{};

    void add(std::string id, const ConfusionCounts& c);
    /// Recomputes the summary; throws when there are no volumes.
    void finalize();

    std::string to_text() const;
    std::string to_json() const;
};

}  // namespace msseg
