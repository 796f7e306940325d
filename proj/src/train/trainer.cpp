#include "cer/train/trainer.hpp"

#include "cer/metrics.hpp"
#include "cer/nn/checkpoint.hpp"
#include "cer/util/io.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <numeric>
#include <random>

namespace cer::train {

using nlohmann::json;

json TrainHistory::to_json(bool timing) const {
    json epochs_json = json::array();
    for (const auto& e : epochs) {
        json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_macro_f1", e.val_macro_f1}};
        if (timing) j["seconds"] = e.seconds;
        epochs_json.push_back(j);
    }
    return {{"epochs", epochs_json}, {"best_epoch", best_epoch}, {"best_val_macro_f1", best_macro_f1}};
}

bool TrainHistory::same_results(const TrainHistory& other) const { return to_json() == other.to_json(); }

Mat<float> predict_probs(nn::Network<float>& net, const LabeledDataset& data, ImageLoader& loader, int batch_size) {
    Mat<float> probs(Eigen::Index(data.size()), net.spec().num_classes);
    for (std::size_t start = 0; start < data.size(); start += std::size_t(batch_size)) {
        const std::size_t end = std::min(data.size(), start + std::size_t(batch_size));
        std::vector<fs::path> paths;
        for (std::size_t i = start; i < end; ++i) paths.push_back(data.records[i].image);
        probs.middleRows(Eigen::Index(start), Eigen::Index(end - start)) = softmax(net.forward(loader.batch(paths), false));
    }
    return probs;
}

namespace {

std::vector<int> argmax_rows(const Mat<float>& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) probs.row(i).maxCoeff(&out[std::size_t(i)]);
    return out;
}

void check_counts(const LabeledDataset& data, const ClassCountTable& counts) {
    const auto hist = data.histogram(int(counts.values().size()));
    for (std::size_t c = 0; c < hist.size(); ++c)
        if (counts.values()[c] != std::max(hist[c], 1L))
            throw std::logic_error("class count table does not match the training labels");
}

}  // namespace

TrainHistory train(nn::Network<float>& net, const LabeledDataset& train_set, const LabeledDataset& val_set,
                   const TrainConfig& cfg, const StageRun& run) {
    if (train_set.empty()) throw std::invalid_argument("training set is empty");
    if (run.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    const ClassCountTable counts = train_set.counts(net.spec().num_classes);
    check_counts(train_set, counts);
    const LossFn<float> loss = combined_loss<float>(counts, cfg.loss);
    const LabeledDataset& val = val_set.empty() ? train_set : val_set;
    if (val_set.empty()) spdlog::warn("{}: no validation records; validating on the training set", run.model);

    auto params = net.parameters();
    if (run.freeze_backbone) {
        const auto n_backbone = net.backbone_parameters().size();
        params.erase(params.begin(), params.begin() + std::ptrdiff_t(n_backbone));
    }
    nn::Adam<float> opt(params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps});
    ImageLoader loader(net.spec().input_size, cfg.mean, cfg.std);
    std::mt19937_64 rng(run.seed);
    std::bernoulli_distribution coin(0.5);
    const auto labels = LabelSpace(cfg.labels);

    if (!run.checkpoint_dir.empty()) fs::create_directories(run.checkpoint_dir);
    std::vector<std::size_t> order(train_set.size());
    TrainHistory history;
    for (int epoch = 1; epoch <= run.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            std::vector<fs::path> paths;
            std::vector<int> y;
            std::vector<bool> flip;
            for (std::size_t i = start; i < end; ++i) {
                const auto& r = train_set.records[order[i]];
                paths.push_back(r.image);
                y.push_back(r.label);
                flip.push_back(cfg.hflip && coin(rng));
            }
            float value = 0;
            try {
                value = train_step(net, opt, loader.batch(paths, flip), y, loss);
            } catch (const NonFiniteLoss& e) {
                std::string refs;
                for (std::size_t i = start; i < end; ++i) refs += " " + std::to_string(order[i]);
                throw NonFiniteLoss(run.model + " epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(start / std::size_t(cfg.batch_size)) + ": " + e.what() +
                                    "; record indices" + refs);
            }
            loss_sum += double(value) * double(end - start);
            seen += end - start;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / double(seen);
        const auto pred = argmax_rows(predict_probs(net, val, loader, cfg.batch_size));
        const auto truth = val.labels();
        rec.val_macro_f1 = macro_f1(pred, truth, labels.size());
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(rec);
        spdlog::info("{} {} epoch {}/{}: loss {:.5f}, val macro-F1 {:.4f} ({:.1f}s)", run.model, run.stage, epoch,
                     run.epochs, rec.train_loss, rec.val_macro_f1, rec.seconds);

        const bool improved = rec.val_macro_f1 > history.best_macro_f1;
        if (improved) {
            history.best_macro_f1 = rec.val_macro_f1;
            history.best_epoch = epoch;
        }
        if (!run.checkpoint_dir.empty()) {
            const json meta = {{"model", run.model},
                               {"stage", run.stage},
                               {"epoch", epoch},
                               {"seed", run.seed},
                               {"train_loss", rec.train_loss},
                               {"val_macro_f1", rec.val_macro_f1},
                               {"config_hash", cfg.hash()},
                               {"normalization", {{"mean", cfg.mean}, {"std", cfg.std}}}};
            const auto path = run.checkpoint_dir / (std::to_string(epoch) + ".ckpt");
            nn::save_checkpoint(net, path, labels, meta);
            if (improved) fs::copy_file(path, run.checkpoint_dir / "best.ckpt", fs::copy_options::overwrite_existing);
            util::write_file_atomic(run.checkpoint_dir / "history.json", history.to_json(true).dump(2));
        }
        if (run.on_epoch) run.on_epoch(rec);
    }
    return history;
}

json RunManifest::to_json() const {
    json models_json = json::array();
    for (const auto& m : models)
        models_json.push_back({{"model", m.model},
                               {"seed", m.seed},
                               {"status", m.ok ? "ok" : "failed"},
                               {"error", m.error},
                               {"init", m.init},
                               {"best_checkpoint", m.best_checkpoint.generic_string()},
                               {"history", m.history.to_json()}});
    return {{"stage", stage}, {"config_hash", config_hash}, {"seed", seed}, {"datasets", dataset_hashes}, {"models", models_json}};
}

bool RunManifest::all_ok() const {
    return std::all_of(models.begin(), models.end(), [](const ModelResult& m) { return m.ok; });
}

std::uint64_t model_seed(std::uint64_t base, const std::string& model) { return util::derive_seed(base, model); }

fs::path stage1_checkpoint(const fs::path& stage1_out, const std::string& model) {
    return stage1_out / "checkpoints" / model / "stage1" / "best.ckpt";
}

namespace {

using Prepare = std::function<nn::Network<float>(const std::string& model, std::uint64_t seed, std::string& init)>;

RunManifest run_models(const std::string& stage, int epochs, bool freeze, const LabeledDataset& train_set,
                       const LabeledDataset& val_set, const TrainConfig& cfg, const fs::path& out,
                       const TrainAllOptions& opts, const Prepare& prepare) {
    RunManifest manifest;
    manifest.stage = stage;
    manifest.config_hash = cfg.hash();
    manifest.seed = cfg.seed;
    manifest.dataset_hashes = {{"train", train_set.hash()}, {"val", val_set.hash()}};
    for (const auto& model : cfg.models) {
        ModelResult result;
        result.model = model;
        result.seed = model_seed(cfg.seed, model);
        try {
            auto net = prepare(model, result.seed, result.init);
            StageRun run;
            run.model = model;
            run.stage = stage;
            run.epochs = epochs;
            run.seed = util::derive_seed(result.seed, stage);
            run.checkpoint_dir = out / "checkpoints" / model / stage;
            run.freeze_backbone = freeze;
            if (opts.on_epoch) run.on_epoch = [&](const EpochRecord& r) { opts.on_epoch(model, r); };
            result.history = train(net, train_set, val_set, cfg, run);
            result.best_checkpoint = fs::relative(run.checkpoint_dir / "best.ckpt", out);
            result.ok = true;
        } catch (const std::exception& e) {
            result.error = e.what();
            fs::remove(out / "checkpoints" / model / stage / "best.ckpt");
            spdlog::error("{} {} failed: {}", model, stage, e.what());
        }
        manifest.models.push_back(std::move(result));
    }
    util::write_file_atomic(out / ("run_manifest_" + stage + ".json"), manifest.to_json().dump(2));
    return manifest;
}

}  // namespace

RunManifest train_all(const LabeledDataset& train_set, const LabeledDataset& val_set, const TrainConfig& cfg,
                      const fs::path& out, const TrainAllOptions& opts) {
    cfg.validate();
    fs::create_directories(out);
    util::write_file_atomic(out / "config.json", cfg.to_json().dump(2));
    json models_json = json::array();
    auto prepare = [&](const std::string& model, std::uint64_t seed, std::string& init) {
        nn::Network<float> net(cfg.spec(model));
        net.initialize(seed);
        init = "random(seed=" + std::to_string(seed) + ")";
        if (!cfg.pretrained_dir.empty()) {
            const auto weights = fs::path(cfg.pretrained_dir) / (model + ".ckpt");
            nn::load_backbone_weights(net, weights);
            init = "pretrained(" + weights.string() + ")";
        }
        models_json.push_back({{"name", model},
                               {"spec", nn::spec_to_json(net.spec())},
                               {"seed", seed},
                               {"init", init},
                               {"labels", cfg.labels}});
        return net;
    };
    auto manifest = run_models("stage1", cfg.epochs_stage1, false, train_set, val_set, cfg, out, opts, prepare);
    util::write_file_atomic(out / "models.json", models_json.dump(2));
    return manifest;
}

RunManifest finetune(const LabeledDataset& pseudo, const LabeledDataset& val_set, const fs::path& stage1_out,
                     const TrainConfig& cfg, const fs::path& out, const TrainAllOptions& opts) {
    cfg.validate();
    if (pseudo.source != DataSource::Pseudo) throw std::invalid_argument("fine-tuning expects a pseudo-labeled dataset");
    std::string missing;
    for (const auto& model : cfg.models)
        if (!fs::exists(stage1_checkpoint(stage1_out, model))) missing += " " + stage1_checkpoint(stage1_out, model).string();
    if (!missing.empty()) throw std::runtime_error("fine-tuning requires stage-1 checkpoints; missing:" + missing);
    fs::create_directories(out);
    const auto labels = cfg.label_space();
    auto prepare = [&](const std::string& model, std::uint64_t, std::string& init) {
        const auto path = stage1_checkpoint(stage1_out, model);
        nn::LoadedMeta meta{labels, {}};
        auto net = nn::load_checkpoint<float>(path, &labels, &meta);
        if (meta.meta.value("stage", "") != "stage1") throw std::runtime_error(path.string() + " is not a stage-1 checkpoint");
        init = "stage1(" + path.string() + ")";
        return net;
    };
    return run_models("stage2", cfg.epochs_stage2, cfg.freeze_backbone, pseudo, val_set, cfg, out, opts, prepare);
}

}  // namespace cer::train
