#include "msseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace msseg {

namespace {

double ratio_or_one(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("confusion: prediction has " + std::to_string(pred.size()) +
                                    " voxels, reference has " + std::to_string(gt.size()));
    }
    // Index 2*gt + pred: tn, fp, fn, tp.
    std::uint64_t tally[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || gt[i] > 1) throw std::invalid_argument("confusion: masks must be binary");
        ++tally[2 * gt[i] + pred[i]];
    }
    return {tally[3], tally[1], tally[2], tally[0]};
}

ConfusionCounts confusion(const MaskVolume& pred, const MaskVolume& gt) {
    if (!(pred.dims == gt.dims)) {
        throw std::invalid_argument("confusion: dims " + to_string(pred.dims) + " vs " + to_string(gt.dims));
    }
    return confusion(std::span<const std::uint8_t>(pred.labels), std::span<const std::uint8_t>(gt.labels));
}

double dice(const ConfusionCounts& c) { return ratio_or_one(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
double sensitivity(const ConfusionCounts& c) { return ratio_or_one(c.tp, c.tp + c.fn); }
double specificity(const ConfusionCounts& c) { return ratio_or_one(c.tn, c.tn + c.fp); }

double extra_fraction(const ConfusionCounts& c) {
    if (c.tn + c.fn == 0) throw std::domain_error("extra_fraction: tn + fn is zero");
    return static_cast<double>(c.fp) / static_cast<double>(c.tn + c.fn);
}

double iou(const ConfusionCounts& c) { return ratio_or_one(c.tp, c.tp + c.fn + c.fp); }
double ppv(const ConfusionCounts& c) { return ratio_or_one(c.tp, c.tp + c.fp); }
double npv(const ConfusionCounts& c) { return ratio_or_one(c.tn, c.tn + c.fn); }
double accuracy(const ConfusionCounts& c) { return ratio_or_one(c.tp + c.tn, c.total()); }

MeanSd aggregate(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("aggregate: empty list");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

MetricRow all_metrics(const ConfusionCounts& c) {
    return {dice(c), sensitivity(c), specificity(c), iou(c), extra_fraction(c), ppv(c), npv(c), accuracy(c)};
}

void MetricsReport::add(std::string id, const ConfusionCounts& c) {
    volume_ids.push_back(std::move(id));
    counts.push_back(c);
    rows.push_back(all_metrics(c));
}

void MetricsReport::finalize() {
    if (rows.empty()) throw std::invalid_argument("metrics report has no volumes");
    std::vector<double> column(rows.size());
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][m];
        summary[m] = aggregate(column);
    }
}

std::string MetricsReport::to_text() const {
    std::string out = "volume";
    for (const char* name : kMetricNames) out += std::string("\t") + name;
    out += '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out += volume_ids[i];
        for (double v : rows[i]) out += "\t" + fixed(v);
        out += '\n';
    }
    out += "mean";
    for (const auto& s : summary) out += "\t" + fixed(s.mean);
    out += "\nsd";
    for (const auto& s : summary) out += "\t" + fixed(s.sd);
    out += '\n';
    return out;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json doc;
    auto& vols = doc["volumes"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::ordered_json v;
        v["id"] = volume_ids[i];
        v["tp"] = counts[i].tp;
        v["fp"] = counts[i].fp;
        v["fn"] = counts[i].fn;
        v["tn"] = counts[i].tn;
        for (std::size_t m = 0; m < kMetricCount; ++m) v[kMetricNames[m]] = rows[i][m];
        vols.push_back(std::move(v));
    }
    auto& agg = doc["aggregate"];
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        agg[kMetricNames[m]] = {{"mean", summary[m].mean}, {"sd", summary[m].sd}};
    }
    return doc.dump(2) + "\n";
}

}  // namespace msseg
