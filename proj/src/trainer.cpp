#include "msseg/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace msseg {

namespace {

std::atomic<std::size_t> g_threads{std::max(1u, std::thread::hardware_concurrency())};

// Runs fn(i) for i in [0, n) on up to worker_threads() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t t = std::min(worker_threads(), n);
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct Sample {
    std::size_t volume;
    Triplet triplet;
};

std::vector<SampleRef> refs(const Dataset& data, std::span<const Sample> samples) {
    std::vector<SampleRef> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({&data.volumes[s.volume], &data.masks[s.volume], s.triplet});
    return out;
}

}  // namespace

void set_worker_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }
std::size_t worker_threads() { return g_threads; }

Tensor soft_dice_loss(const Tensor& prob, const Tensor& gt, double eps) {
    if (prob.rank() != 4 || prob.dim(1) != 2 || gt.rank() != 4 || gt.dim(1) != 1 || gt.dim(0) != prob.dim(0) ||
        gt.dim(2) != prob.dim(2) || gt.dim(3) != prob.dim(3)) {
        throw ShapeError("soft_dice_loss: probabilities " + to_string(prob.shape()) + " vs targets " +
                         to_string(gt.shape()));
    }
    if (!(eps > 0.0)) throw std::invalid_argument("soft_dice_loss: eps must be positive");
    const std::size_t b = prob.dim(0), plane = prob.dim(2) * prob.dim(3);
    const auto p = prob.data();
    const auto g = gt.data();
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t n = 0; n < b; ++n) {
        const double* p1 = p.data() + (2 * n + 1) * plane;
        const double* gn = g.data() + n * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            inter += p1[i] * gn[i];
            sp += p1[i];
            sg += gn[i];
        }
    }
    const double num = 2.0 * inter + eps;
    const double den = sp + sg + eps;
    Tensor out = Tensor::scalar(1.0 - num / den);
    if (needs_grad({&prob})) {
        out.set_requires_grad(true);
        Graph::current()->record(out, [=]() mutable {
            const double go = out.grad()[0];
            auto gp = prob.ensure_grad();
            const auto gv = gt.data();
            // d/dp1 of -(num/den) = -(2 g den - num) / den^2
            const double inv = 1.0 / (den * den);
            for (std::size_t n = 0; n < b; ++n) {
                double* g1 = gp.data() + (2 * n + 1) * plane;
                const double* gn = gv.data() + n * plane;
                for (std::size_t i = 0; i < plane; ++i) g1[i] += go * -(2.0 * gn[i] * den - num) * inv;
            }
        });
    }
    return out;
}

void Dataset::add(std::string id, Volume v, MaskVolume m) {
    if (!(v.dims == m.dims)) {
        throw std::invalid_argument("dataset entry '" + id + "': volume dims " + to_string(v.dims) +
                                    " differ from mask dims " + to_string(m.dims));
    }
    ids.push_back(std::move(id));
    volumes.push_back(std::move(v));
    masks.push_back(std::move(m));
}

Dataset load_dataset(const std::vector<ManifestEntry>& manifest, const std::vector<std::string>& ids) {
    Dataset d;
    for (const auto& id : ids) {
        auto it = std::find_if(manifest.begin(), manifest.end(), [&](const auto& e) { return e.id == id; });
        if (it == manifest.end()) throw std::invalid_argument("manifest has no entry '" + id + "'");
        d.add(id, load_volume(it->image), load_mask(it->mask));
    }
    return d;
}

MaskVolume predict(const ModelParams& params, const Volume& v, std::size_t batch_size) {
    const std::size_t size = params.config.input_size;
    if (v.dims.height != size || v.dims.width != size) {
        throw ShapeError("predict: volume " + to_string(v.dims) + " does not match model input " +
                         std::to_string(size) + "x" + std::to_string(size));
    }
    if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
    const MaskVolume placeholder = make_mask(v.dims);
    const auto triplets = make_triplets(v, placeholder);
    MaskVolume out = make_mask(v.dims);
    const std::size_t plane = v.dims.slice_size();
    const nn::Context ctx{Mode::Eval, nullptr};
    for (std::size_t start = 0; start < triplets.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, triplets.size());
        std::vector<SampleRef> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back({&v, &placeholder, triplets[i]});
        const Tensor prob = forward(params, pack_inputs(batch), ctx);
        const auto p = prob.data();
        const std::size_t k = prob.dim(1);
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t n = i - start;
            auto* dst = out.labels.data() + triplets[i].centre() * plane;
            for (std::size_t px = 0; px < plane; ++px) {
                // Strict comparison: ties stay background.
                std::size_t best = 0;
                for (std::size_t c = 1; c < k; ++c) {
                    if (p[(n * k + c) * plane + px] > p[(n * k + best) * plane + px]) best = c;
                }
                dst[px] = best == 0 ? 0 : 1;
            }
        }
    }
    return out;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: no volumes");
    std::vector<ConfusionCounts> counts(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        counts[i] = confusion(predict(params, data.volumes[i], batch_size), data.masks[i]);
    });
    MetricsReport report;
    for (std::size_t i = 0; i < data.size(); ++i) report.add(data.ids[i], counts[i]);
    report.finalize();
    return report;
}

double mean_dice(const ModelParams& params, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw std::invalid_argument("mean_dice: no volumes");
    std::vector<double> scores(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        scores[i] = dice(confusion(predict(params, data.volumes[i], batch_size), data.masks[i]));
    });
    double s = 0.0;
    for (double d : scores) s += d;
    return s / static_cast<double>(scores.size());
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const RunConfig& cfg, const ProgressSink& sink) {
    cfg.model.validate();
    cfg.train.validate();
    const TrainConfig& tc = cfg.train;

    std::vector<Sample> samples;
    for (std::size_t v = 0; v < train_set.size(); ++v) {
        const auto& vol = train_set.volumes[v];
        if (vol.dims.height != cfg.model.input_size || vol.dims.width != cfg.model.input_size) {
            throw ShapeError("train: volume '" + train_set.ids[v] + "' is " + to_string(vol.dims) +
                             ", model expects slices of " + std::to_string(cfg.model.input_size));
        }
        for (const auto& t : make_triplets(vol, train_set.masks[v])) samples.push_back({v, t});
    }
    if (tc.epochs > 0 && samples.empty()) throw std::invalid_argument("train: no training samples");

    TrainResult result;
    ModelParams params = build_model(cfg.model);
    std::vector<Tensor> trainable = params.trainable();
    Rng shuffle_rng(tc.seed, 1);
    Rng dropout_rng(tc.seed, 2);

    const bool validate = val_set.size() > 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    TrainCursor cursor;
    cursor.rng = shuffle_rng.state();
    cursor.best_val_dice = nan;
    ParamSnapshot best = snapshot(params);
    TrainCursor best_cursor = cursor;
    double best_dice = -1.0;

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        if (tc.max_steps && step >= tc.max_steps) break;
        shuffle(samples, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < samples.size(); start += tc.batch_size) {
            if (tc.max_steps && step >= tc.max_steps) break;
            const std::size_t end = std::min(start + tc.batch_size, samples.size());
            const auto batch = refs(train_set, std::span(samples).subspan(start, end - start));
            Graph graph;
            const nn::Context ctx{Mode::Train, &dropout_rng};
            const Tensor prob = forward(params, pack_inputs(batch), ctx);
            const Tensor loss = soft_dice_loss(prob, pack_targets(batch), tc.eps_dice);
            const double l = loss.item();
            if (!std::isfinite(l)) {
                throw std::runtime_error("non-finite loss " + std::to_string(l) + " at epoch " +
                                         std::to_string(epoch) + ", step " + std::to_string(step + 1));
            }
            graph.backward(loss);
            ops::sgd_step(trainable, tc.lr, tc.weight_decay);
            ++step;
            loss_sum += l;
            ++batches;
            result.step_losses.push_back(l);
        }
        EpochRecord rec{epoch, batches ? loss_sum / static_cast<double>(batches) : nan, nan};
        cursor.epoch = epoch;
        cursor.step = step;
        cursor.rng = shuffle_rng.state();
        if (validate) {
            rec.val_dice = mean_dice(params, val_set);
            if (rec.val_dice > best_dice) {
                best_dice = rec.val_dice;
                best = snapshot(params);
                cursor.best_val_dice = rec.val_dice;
                best_cursor = cursor;
            }
        } else {
            best = snapshot(params);
            best_cursor = cursor;
        }
        result.history.push_back(rec);
        if (sink) sink(rec);
    }

    restore(params, best);
    result.best.config = cfg;
    result.best.cursor = best_cursor;
    result.best.params = std::move(params);
    return result;
}

std::string AblationTable::to_text() const {
    std::string out = "variant";
    for (int f : folds) out += "\tFold" + std::to_string(f);
    out += "\tmean\n";
    char buf[32];
    for (std::size_t v = 0; v < variants.size(); ++v) {
        out += variants[v];
        for (double d : dice[v]) {
            std::snprintf(buf, sizeof buf, "\t%.4f", d);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "\t%.4f\n", mean[v]);
        out += buf;
    }
    return out;
}

std::string AblationTable::to_csv() const {
    std::string out = "variant";
    for (int f : folds) out += ",fold" + std::to_string(f);
    out += ",mean\n";
    for (std::size_t v = 0; v < variants.size(); ++v) {
        out += "\"" + variants[v] + "\"";
        for (double d : dice[v]) out += "," + format_double(d);
        out += "," + format_double(mean[v]) + "\n";
    }
    return out;
}

AblationTable run_ablation(const std::vector<ManifestEntry>& manifest, const std::vector<int>& fold_ids,
                           const RunConfig& base, const ProgressSink& sink) {
    if (fold_ids.empty()) throw std::invalid_argument("run_ablation: no folds");
    const auto folds = make_folds(manifest);
    AblationTable table;
    table.folds = fold_ids;
    for (int id : fold_ids) {
        if (id < 1 || static_cast<std::size_t>(id) > folds.size()) {
            throw std::invalid_argument("run_ablation: fold " + std::to_string(id) + " out of range 1.." +
                                        std::to_string(folds.size()));
        }
    }
    const auto variants = ablation_variants(base.model);
    table.dice.assign(variants.size(), {});
    for (const auto& v : variants) table.variants.push_back(v.name);
    for (int id : fold_ids) {
        const auto& fold = folds[static_cast<std::size_t>(id - 1)];
        const Dataset tr = load_dataset(manifest, fold.train);
        const Dataset va = load_dataset(manifest, fold.val);
        const Dataset te = load_dataset(manifest, fold.test);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            RunConfig cfg = base;
            cfg.model = variants[v].config;
            const TrainResult r = train(tr, va, cfg, sink);
            table.dice[v].push_back(mean_dice(r.best.params, te));
        }
    }
    for (const auto& row : table.dice) table.mean.push_back(aggregate(row).mean);
    return table;
}

}  // namespace msseg
