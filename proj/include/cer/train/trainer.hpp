#pragma once

#include "cer/loss.hpp"
#include "cer/nn/adam.hpp"
#include "cer/nn/zoo.hpp"
#include "cer/train/config.hpp"
#include "cer/train/data.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cer::train {

namespace fs = std::filesystem;

/// Loss value and its gradient with respect to the logits.
template <typename Scalar>
using LossFn = std::function<std::pair<Scalar, Mat<Scalar>>(const Mat<Scalar>&, std::span<const int>)>;

template <typename Scalar>
LossFn<Scalar> combined_loss(ClassCountTable counts, LossConfig cfg) {
    return [counts = std::move(counts), cfg](const Mat<Scalar>& z, std::span<const int> y) {
        return std::make_pair(total_loss(z, y, counts, cfg), total_loss_grad(z, y, counts, cfg));
    };
}

template <typename Scalar>
LossFn<Scalar> plain_cross_entropy() {
    return [](const Mat<Scalar>& z, std::span<const int> y) {
        return std::make_pair(cross_entropy(z, y), cross_entropy_grad(z, y));
    };
}

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One optimizer step on one batch. Returns the loss before the step.
template <typename Scalar>
Scalar train_step(nn::Network<Scalar>& net, nn::Adam<Scalar>& opt, const nn::Tensor<Scalar>& x,
                  std::span<const int> y, const LossFn<Scalar>& loss) {
    net.zero_grad();
    const Mat<Scalar> z = net.forward(x, true);
    auto [value, grad] = loss(z, y);
    if (!std::isfinite(double(value)))
        throw NonFiniteLoss("non-finite loss; logits min " + std::to_string(double(z.minCoeff())) + " max " +
                            std::to_string(double(z.maxCoeff())) + " mean " + std::to_string(double(z.mean())));
    net.backward(grad);
    opt.step();
    return value;
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_macro_f1 = 0;
    double seconds = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_macro_f1 = -1;

    /// With wall-clock fields only when `timing` is set.
    nlohmann::json to_json(bool timing = false) const;
    /// Equal in everything except wall-clock time.
    bool same_results(const TrainHistory& other) const;
};

struct StageRun {
    std::string model;
    std::string stage = "stage1";
    int epochs = 1;
    std::uint64_t seed = 0;
    /// Per-epoch and best checkpoints go here; nothing is written when empty.
    fs::path checkpoint_dir;
    bool freeze_backbone = false;
    /// Called after each epoch; may throw to abort the run.
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Class probabilities for every record, in order (rows = records).
Mat<float> predict_probs(nn::Network<float>& net, const LabeledDataset& data, ImageLoader& loader, int batch_size);

/// Trains `net` for `run.epochs` epochs with Adam on the combined loss, validating macro-F1 after
/// each epoch. Empty validation data falls back to the training set.
TrainHistory train(nn::Network<float>& net, const LabeledDataset& train_set, const LabeledDataset& val_set,
                   const TrainConfig& cfg, const StageRun& run);

struct ModelResult {
    std::string model;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::string init;
    fs::path best_checkpoint;
    TrainHistory history;
};

struct RunManifest {
    std::string stage;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> dataset_hashes;
    std::vector<ModelResult> models;

    nlohmann::json to_json() const;
    bool all_ok() const;
};

struct TrainAllOptions {
    /// Called per model and epoch; may throw to fail that model.
    std::function<void(const std::string& model, const EpochRecord&)> on_epoch;
};

std::uint64_t model_seed(std::uint64_t base, const std::string& model);

/// Stage 1: trains every configured model independently on ground truth. A failing model is
/// recorded, its best.ckpt removed, and the rest continue. Writes `{out}/checkpoints/{model}/stage1/`, `{out}/models.json`
/// and `{out}/run_manifest_stage1.json`.
RunManifest train_all(const LabeledDataset& train_set, const LabeledDataset& val_set, const TrainConfig& cfg,
                      const fs::path& out, const TrainAllOptions& opts = {});

/// Path of a model's best stage-1 checkpoint under a stage-1 output directory.
fs::path stage1_checkpoint(const fs::path& stage1_out, const std::string& model);

/// Stage 2: continues every model from its stage-1 best checkpoint on pseudo-labels. Refuses to
/// start when any stage-1 checkpoint is missing. Writes `{out}/checkpoints/{model}/stage2/` and
/// `{out}/run_manifest_stage2.json`.
RunManifest finetune(const LabeledDataset& pseudo, const LabeledDataset& val_set, const fs::path& stage1_out,
                     const TrainConfig& cfg, const fs::path& out, const TrainAllOptions& opts = {});

}  // namespace cer::train
