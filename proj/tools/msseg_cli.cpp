#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "msseg/checkpoint.hpp"
#include "msseg/config.hpp"
#include "msseg/overlay.hpp"
#include "msseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace msseg;

namespace {

constexpr int kOk = 0;
constexpr int kItemFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

VolumeDims parse_dims(const std::string& text) {
    VolumeDims d;
    char x1 = 0, x2 = 0;
    std::istringstream in(text);
    if (!(in >> d.slices >> x1 >> d.height >> x2 >> d.width) || x1 != 'x' || x2 != 'x' || !in.eof()) {
        throw UsageError("--dims expects SLICESxHEIGHTxWIDTH, got '" + text + "'");
    }
    return d;
}

std::vector<std::size_t> parse_layout(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw UsageError("--layout expects comma-separated counts, got '" + text + "'");
        }
    }
    return out;
}

// Time points per patient: four each, a short remainder joins the last patient.
std::vector<std::size_t> default_layout(std::size_t count) {
    std::vector<std::size_t> out(count / 4, 4);
    const std::size_t rest = count % 4;
    if (rest == 0) return out;
    if (rest >= 2 || out.empty()) {
        out.push_back(rest);
    } else {
        out.back() += rest;
    }
    return out;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return {};
    require_exists(path, "config");
    return load_config(path);
}

int cmd_phantom(std::uint64_t seed, std::size_t count, const std::string& dims, const std::string& layout_text,
                const fs::path& out) {
    PhantomSpec base;
    if (!dims.empty()) base.dims = parse_dims(dims);
    std::vector<std::size_t> layout = layout_text.empty() ? default_layout(count) : parse_layout(layout_text);
    std::size_t total = 0;
    for (auto n : layout) total += n;
    if (!layout_text.empty() && count != 0 && count != total) {
        throw UsageError("--count " + std::to_string(count) + " disagrees with --layout total " +
                         std::to_string(total));
    }
    if (total == 0) throw UsageError("nothing to generate");
    fs::create_directories(out);
    const Rng root(seed);
    std::vector<ManifestEntry> manifest;
    std::size_t index = 0;
    for (std::size_t p = 0; p < layout.size(); ++p) {
        for (std::size_t t = 1; t <= layout[p]; ++t, ++index) {
            PhantomSpec spec = base;
            spec.seed = root.split(index).next_u64();
            auto [vol, mask] = generate_phantom(spec);
            char id[32];
            std::snprintf(id, sizeof id, "p%02zu_t%zu", p + 1, t);
            ManifestEntry e{id, "p" + std::to_string(p + 1), static_cast<int>(t), out / (std::string(id) + ".vol"),
                            out / (std::string(id) + ".msk")};
            save_volume(vol, e.image);
            save_mask(mask, e.mask);
            manifest.push_back(std::move(e));
        }
    }
    save_manifest(manifest, out / "manifest.tsv");
    std::cout << "wrote " << manifest.size() << " phantoms to " << out.string() << "\n";
    return kOk;
}

int cmd_preprocess(const fs::path& manifest_path, const fs::path& out, std::size_t size) {
    require_exists(manifest_path, "manifest");
    const auto manifest = load_manifest(manifest_path);
    fs::create_directories(out);
    std::vector<ManifestEntry> processed;
    std::string summary = "id\tslices_in\tslices_kept\tslices_dropped\tstatus\n";
    int status = kOk;
    for (const auto& e : manifest) {
        try {
            const auto r = preprocess(load_volume(e.image), load_mask(e.mask), size);
            ManifestEntry pe{e.id, e.patient, e.timepoint, out / (e.id + ".vol"), out / (e.id + ".msk")};
            save_volume(r.volume, pe.image);
            save_mask(r.mask, pe.mask);
            processed.push_back(pe);
            summary += e.id + "\t" + std::to_string(r.slices_in) + "\t" + std::to_string(r.volume.dims.slices) +
                       "\t" + std::to_string(r.slices_dropped) + "\tok\n";
        } catch (const std::exception& ex) {
            std::cerr << e.id << ": " << ex.what() << "\n";
            summary += e.id + "\t-\t-\t-\terror: " + ex.what() + "\n";
            status = kItemFailure;
        }
    }
    save_manifest(processed, out / "manifest.tsv");
    write_text(out / "summary.tsv", summary);
    std::cout << summary;
    return status;
}

const FoldSpec& select_fold(const std::vector<FoldSpec>& folds, int id) {
    if (id < 1 || static_cast<std::size_t>(id) > folds.size()) {
        throw UsageError("--fold " + std::to_string(id) + " out of range 1.." + std::to_string(folds.size()));
    }
    return folds[static_cast<std::size_t>(id - 1)];
}

int cmd_train(const fs::path& manifest_path, int fold_id, const std::string& config_path, const fs::path& out,
              std::optional<std::size_t> epochs) {
    require_exists(manifest_path, "manifest");
    RunConfig cfg = load_run_config(config_path);
    if (epochs) cfg.train.epochs = *epochs;
    const auto manifest = load_manifest(manifest_path);
    const auto folds = make_folds(manifest);
    const FoldSpec& fold = select_fold(folds, fold_id);
    const Dataset tr = load_dataset(manifest, fold.train);
    const Dataset va = load_dataset(manifest, fold.val);
    fs::create_directories(out);

    std::string csv = "epoch,train_loss,val_dice\n";
    const auto result = train(tr, va, cfg, [&](const EpochRecord& r) {
        csv += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_dice) + "\n";
        std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val_dice " << r.val_dice << "\n";
    });
    save_checkpoint(result.best, out / "best.ckpt");
    write_text(out / "history.csv", csv);
    std::cout << "fold " << fold_id << " epochs " << result.history.size() << " best_epoch "
              << result.best.cursor.epoch << " best_val_dice " << format_double(result.best.cursor.best_val_dice)
              << "\n";
    return kOk;
}

Checkpoint load_checked(const fs::path& ckpt_path, const std::string& config_path) {
    require_exists(ckpt_path, "checkpoint");
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!config_path.empty()) {
        const RunConfig cfg = load_run_config(config_path);
        const std::string field = first_difference(cfg.model, ckpt.config.model);
        if (!field.empty()) {
            throw std::runtime_error("checkpoint and config disagree on " + field);
        }
    }
    return ckpt;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& manifest_path, const std::string& config_path, int fold_id,
             const fs::path& out) {
    const Checkpoint ckpt = load_checked(ckpt_path, config_path);
    require_exists(manifest_path, "manifest");
    const auto manifest = load_manifest(manifest_path);
    std::vector<std::string> ids;
    if (fold_id > 0) {
        const auto folds = make_folds(manifest);
        ids = select_fold(folds, fold_id).test;
    } else {
        for (const auto& e : manifest) ids.push_back(e.id);
    }
    const Dataset data = load_dataset(manifest, ids);
    fs::create_directories(out / "pred");
    MetricsReport report;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const MaskVolume pred = predict(ckpt.params, data.volumes[i]);
        save_mask(pred, out / "pred" / (data.ids[i] + ".msk"));
        report.add(data.ids[i], confusion(pred, data.masks[i]));
    }
    report.finalize();
    write_text(out / "report.txt", report.to_text());
    write_text(out / "report.json", report.to_json());
    std::cout << report.to_text();
    return kOk;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& volume_path, const std::string& mask_path,
                const std::string& config_path, const fs::path& out) {
    const Checkpoint ckpt = load_checked(ckpt_path, config_path);
    require_exists(volume_path, "volume");
    const Volume v = load_volume(volume_path);
    std::optional<MaskVolume> gt;
    if (!mask_path.empty()) {
        require_exists(mask_path, "mask");
        gt = load_mask(mask_path);
    }
    const MaskVolume pred = predict(ckpt.params, v);
    fs::create_directories(out);
    const std::string stem = volume_path.stem().string();
    save_mask(pred, out / (stem + "_pred.msk"));
    for (std::size_t s = 0; s < v.dims.slices; ++s) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_slice%03zu.ppm", stem.c_str(), s);
        write_ppm(overlay_slice(v, pred, gt ? &*gt : nullptr, s), out / name);
    }
    if (gt) {
        const ConfusionCounts c = confusion(pred, *gt);
        std::cout << "dice " << format_double(dice(c)) << "\n";
    }
    std::cout << "wrote " << (stem + "_pred.msk") << " and " << v.dims.slices << " overlays\n";
    return kOk;
}

std::vector<int> parse_folds(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("--folds expects comma-separated fold numbers, got '" + text + "'");
        }
    }
    if (out.empty()) throw UsageError("--folds is empty");
    return out;
}

int cmd_ablate(const fs::path& manifest_path, const std::string& folds, const std::string& config_path,
               const fs::path& out) {
    require_exists(manifest_path, "manifest");
    const RunConfig cfg = load_run_config(config_path);
    const auto table = run_ablation(load_manifest(manifest_path), parse_folds(folds), cfg);
    fs::create_directories(out);
    write_text(out / "ablation.tsv", table.to_text());
    write_text(out / "ablation.csv", table.to_csv());
    std::cout << table.to_text();
    return kOk;
}

int cmd_param_count(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const ModelParams params = build_model(cfg.model);
    std::printf("%-14s %-24s %12s\n", "position", "layer", "parameters");
    for (const auto& g : param_breakdown(params)) {
        std::printf("%-14s %-24s %12zu\n", g.position.c_str(), g.layer.c_str(), g.count);
    }
    std::printf("total %zu\n", param_count(params));
    return kOk;
}

int cmd_calibrate(const std::string& config_path, std::size_t target, std::size_t keep) {
    const RunConfig cfg = load_run_config(config_path);
    const auto best = calibrate_param_count(cfg.model, target, CalibrationRanges{}, keep);
    std::printf("%8s %8s %8s %12s %10s\n", "growth", "first", "hidden", "count", "residual");
    for (const auto& c : best) {
        std::printf("%8zu %8zu %8zu %12zu %+10lld\n", c.growth_rate, c.first_conv_filters, c.convlstm_hidden, c.count,
                    c.residual);
    }
    return kOk;
}

void apply_thread_env() {
    const char* env = std::getenv("MSSEG_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw UsageError("MSSEG_THREADS must be a positive integer, got '" + std::string(env) + "'");
    set_worker_threads(static_cast<std::size_t>(n));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MS lesion segmentation: phantoms, preprocessing, training, evaluation"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::size_t count = 0, size = 160, target = kPublishedParamCount, keep = 10;
    std::string dims, layout, config, folds = "2,4", mask;
    fs::path out, manifest, ckpt, volume;
    int fold = 0;
    std::optional<std::size_t> epochs;

    auto* phantom = app.add_subcommand("phantom", "generate synthetic volume/mask pairs and a manifest");
    phantom->add_option("--seed", seed, "base seed");
    phantom->add_option("--count", count, "number of volumes");
    phantom->add_option("--dims", dims, "SLICESxHEIGHTxWIDTH (default 8x32x32)");
    phantom->add_option("--layout", layout, "time points per patient, e.g. 4,4,4,4,5");
    phantom->add_option("--out", out, "output directory")->required();

    auto* prep = app.add_subcommand("preprocess", "drop black slices, crop and normalise");
    prep->add_option("--manifest", manifest, "input manifest")->required();
    prep->add_option("--out", out, "output directory")->required();
    prep->add_option("--size", size, "square crop size")->check(CLI::PositiveNumber);

    auto* tr = app.add_subcommand("train", "train one fold");
    tr->add_option("--manifest", manifest, "preprocessed manifest")->required();
    tr->add_option("--fold", fold, "fold number (1-based)")->required();
    tr->add_option("--config", config, "key = value config file");
    tr->add_option("--epochs", epochs, "override train.epochs");
    tr->add_option("--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--ckpt", ckpt, "checkpoint")->required();
    ev->add_option("--manifest", manifest, "preprocessed manifest")->required();
    ev->add_option("--config", config, "expected model config");
    ev->add_option("--fold", fold, "evaluate only this fold's test volume");
    ev->add_option("--out", out, "output directory")->required();

    auto* pr = app.add_subcommand("predict", "segment one volume and write overlays");
    pr->add_option("--ckpt", ckpt, "checkpoint")->required();
    pr->add_option("--volume", volume, "preprocessed volume")->required();
    pr->add_option("--mask", mask, "reference mask for FP/FN colouring");
    pr->add_option("--config", config, "expected model config");
    pr->add_option("--out", out, "output directory")->required();

    auto* ab = app.add_subcommand("ablate", "train the four ablation variants");
    ab->add_option("--manifest", manifest, "preprocessed manifest")->required();
    ab->add_option("--folds", folds, "comma-separated fold numbers")->capture_default_str();
    ab->add_option("--config", config, "key = value config file");
    ab->add_option("--out", out, "output directory")->required();

    auto* pc = app.add_subcommand("param-count", "print trainable parameter totals");
    pc->add_option("--config", config, "key = value config file");

    auto* cal = app.add_subcommand("calibrate", "search growth/first/hidden for a parameter total");
    cal->add_option("--config", config, "base config");
    cal->add_option("--target", target, "target count")->capture_default_str();
    cal->add_option("--keep", keep, "candidates to print")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        apply_thread_env();
        if (*phantom) return cmd_phantom(seed, count, dims, layout, out);
        if (*prep) return cmd_preprocess(manifest, out, size);
        if (*tr) return cmd_train(manifest, fold, config, out, epochs);
        if (*ev) return cmd_eval(ckpt, manifest, config, fold, out);
        if (*pr) return cmd_predict(ckpt, volume, mask, config, out);
        if (*ab) return cmd_ablate(manifest, folds, config, out);
        if (*pc) return cmd_param_count(config);
        if (*cal) return cmd_calibrate(config, target, keep);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kItemFailure;
    }
    return kUsage;
}
