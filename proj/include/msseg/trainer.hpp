#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msseg/checkpoint.hpp"
#include "msseg/data.hpp"
#include "msseg/metrics.hpp"

namespace msseg {

/// loss = 1 - (2 * sum(p1 * g) + eps) / (sum(p1) + sum(g) + eps), with p1 the
/// lesion channel of `prob` (B, 2, H, W) and `gt` (B, 1, H, W) binary. Sums
/// run over the whole batch.
Tensor soft_dice_loss(const Tensor& prob, const Tensor& gt, double eps = 1e-6);

/// Preprocessed volumes with their masks, in a fixed order.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<Volume> volumes;
    std::vector<MaskVolume> masks;

    std::size_t size() const { return ids.size(); }
    void add(std::string id, Volume v, MaskVolume m);
};

/// Loads the listed manifest ids (in the given order).
Dataset load_dataset(const std::vector<ManifestEntry>& manifest, const std::vector<std::string>& ids);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_dice = 0.0;  // NaN without validation volumes
};

using ProgressSink = std::function<void(const EpochRecord&)>;

struct TrainResult {
    Checkpoint best;                  // highest validation Dice (last epoch without validation)
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;  // one per optimizer step
};

/// Each epoch shuffles the training triplets, runs forward, soft Dice loss,
/// backward and an SGD step per batch, then scores the validation volumes in
/// eval mode. Throws std::runtime_error on a non-finite loss.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const RunConfig& cfg,
                  const ProgressSink& sink = {});

/// Argmax segmentation of a preprocessed volume; ties go to background.
MaskVolume predict(const ModelParams& params, const Volume& v, std::size_t batch_size = 4);

/// Per-volume metrics and their mean/SD.
MetricsReport evaluate(const ModelParams& params, const Dataset& data, std::size_t batch_size = 4);

/// Mean Dice of argmax predictions over the volumes.
double mean_dice(const ModelParams& params, const Dataset& data, std::size_t batch_size = 4);

struct AblationTable {
    std::vector<std::string> variants;
    std::vector<int> folds;
    std::vector<std::vector<double>> dice;  // [variant][fold]
    std::vector<double> mean;               // per variant

    std::string to_text() const;
    std::string to_csv() const;
};

/// Trains every ablation variant on every fold and scores its test volume.
AblationTable run_ablation(const std::vector<ManifestEntry>& manifest, const std::vector<int>& fold_ids,
                           const RunConfig& base, const ProgressSink& sink = {});

/// Worker threads used for inference over several volumes (at least 1).
void set_worker_threads(std::size_t n);
std::size_t worker_threads();

}  // namespace msseg
