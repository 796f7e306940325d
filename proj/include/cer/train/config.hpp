#pragma once

#include "cer/face/pipeline.hpp"
#include "cer/labels.hpp"
#include "cer/loss.hpp"
#include "cer/nn/zoo.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace cer::train {

/// Everything a training run depends on. Loaded from a YAML document; see README for the schema.
struct TrainConfig {
    std::uint64_t seed = 0;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs_stage1 = 20;
    int epochs_stage2 = 5;
    double val_fraction = 0.1;
    bool hflip = false;
    bool freeze_backbone = false;
    LossConfig loss;

    std::vector<std::string> models{nn::kBackboneNames.begin(), nn::kBackboneNames.end()};
    double width = 1.0;
    int input_size = 224;
    int hidden_dim = 512;
    /// Directory with `{model}.ckpt` backbone weights; empty for random initialization.
    std::string pretrained_dir;

    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};
    face::AlignConfig align;
    std::vector<std::string> labels = LabelSpace::standard().names();

    void validate() const;
    nn::BackboneSpec spec(const std::string& model) const;
    LabelSpace label_space() const { return LabelSpace(labels); }

    nlohmann::json to_json() const;
    /// SHA-256 of the canonical JSON form.
    std::string hash() const;

    static TrainConfig from_yaml_text(const std::string& text);
    static TrainConfig from_file(const std::filesystem::path& path);
};

}  // namespace cer::train
