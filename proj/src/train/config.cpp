#include "cer/train/config.hpp"

#include "cer/util/io.hpp"

#include <yaml-cpp/yaml.h>

#include <set>
#include <stdexcept>

namespace cer::train {

using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs_stage1 < 1 || epochs_stage2 < 1) throw std::invalid_argument("epochs must be at least 1");
    if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("val_fraction must be in [0, 1)");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("adam betas must be in [0, 1)");
    loss.validate();
    if (models.empty()) throw std::invalid_argument("at least one model is required");
    for (const auto& m : models)
        if (!nn::is_known_backbone(m))
            throw std::invalid_argument("unknown backbone '" + m + "'; valid names: " + nn::known_backbones());
    if (!(width > 0)) throw std::invalid_argument("model width must be positive");
    if (input_size < 32) throw std::invalid_argument("input_size must be at least 32");
    if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be positive");
    for (float s : std)
        if (!(s > 0)) throw std::invalid_argument("normalization std must be positive");
    if (int(labels.size()) != kNumClasses)
        throw std::invalid_argument("label order must list exactly " + std::to_string(kNumClasses) + " classes");
    label_space();
    if (align.crop_size < 1) throw std::invalid_argument("crop_size must be positive");
}

nn::BackboneSpec TrainConfig::spec(const std::string& model) const {
    nn::BackboneSpec s;
    s.name = model;
    s.width = width;
    s.input_size = input_size;
    s.hidden_dim = hidden_dim;
    s.num_classes = kNumClasses;
    return s;
}

json TrainConfig::to_json() const {
    return {{"seed", seed},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"adam", {{"beta1", beta1}, {"beta2", beta2}, {"eps", adam_eps}}},
            {"epochs_stage1", epochs_stage1},
            {"epochs_stage2", epochs_stage2},
            {"val_fraction", val_fraction},
            {"hflip", hflip},
            {"freeze_backbone", freeze_backbone},
            {"loss", {{"lambda", loss.lambda}, {"dice_epsilon", loss.dice_epsilon}, {"per_sample_dice", loss.per_sample_dice}}},
            {"model",
             {{"names", models},
              {"width", width},
              {"input_size", input_size},
              {"hidden_dim", hidden_dim},
              {"pretrained_dir", pretrained_dir}}},
            {"normalization", {{"mean", mean}, {"std", std}}},
            {"align", align.to_json()},
            {"labels", labels}};
}

std::string TrainConfig::hash() const { return util::sha256_hex(to_json().dump()); }

namespace {

void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
    if (!node.IsMap()) throw std::invalid_argument("config section '" + where + "' must be a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw std::invalid_argument("unknown config key '" + where + key + "'");
    }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
    if (node[key]) out = node[key].as<T>();
}

}  // namespace

TrainConfig TrainConfig::from_yaml_text(const std::string& text) {
    TrainConfig cfg;
    try {
        const YAML::Node root = YAML::Load(text);
        if (!root || root.IsNull()) return cfg;
        check_keys(root, "",
                   {"seed", "batch_size", "learning_rate", "adam", "epochs_stage1", "epochs_stage2", "val_fraction",
                    "hflip", "freeze_backbone", "loss", "model", "normalization", "align", "labels"});
        read(root, "seed", cfg.seed);
        read(root, "batch_size", cfg.batch_size);
        read(root, "learning_rate", cfg.learning_rate);
        read(root, "epochs_stage1", cfg.epochs_stage1);
        read(root, "epochs_stage2", cfg.epochs_stage2);
        read(root, "val_fraction", cfg.val_fraction);
        read(root, "hflip", cfg.hflip);
        read(root, "freeze_backbone", cfg.freeze_backbone);
        read(root, "labels", cfg.labels);
        if (const auto a = root["adam"]) {
            check_keys(a, "adam.", {"beta1", "beta2", "eps"});
            read(a, "beta1", cfg.beta1);
            read(a, "beta2", cfg.beta2);
            read(a, "eps", cfg.adam_eps);
        }
        if (const auto l = root["loss"]) {
            check_keys(l, "loss.", {"lambda", "dice_epsilon", "per_sample_dice"});
            read(l, "lambda", cfg.loss.lambda);
            read(l, "dice_epsilon", cfg.loss.dice_epsilon);
            read(l, "per_sample_dice", cfg.loss.per_sample_dice);
        }
        if (const auto m = root["model"]) {
            check_keys(m, "model.", {"names", "width", "input_size", "hidden_dim", "pretrained_dir"});
            read(m, "names", cfg.models);
            read(m, "width", cfg.width);
            read(m, "input_size", cfg.input_size);
            read(m, "hidden_dim", cfg.hidden_dim);
            read(m, "pretrained_dir", cfg.pretrained_dir);
        }
        if (const auto n = root["normalization"]) {
            check_keys(n, "normalization.", {"mean", "std"});
            std::vector<float> mean(cfg.mean.begin(), cfg.mean.end()), sd(cfg.std.begin(), cfg.std.end());
            read(n, "mean", mean);
            read(n, "std", sd);
            if (mean.size() != 3 || sd.size() != 3) throw std::invalid_argument("normalization needs three values each");
            std::copy(mean.begin(), mean.end(), cfg.mean.begin());
            std::copy(sd.begin(), sd.end(), cfg.std.begin());
        }
        if (const auto a = root["align"]) {
            check_keys(a, "align.", {"crop_size", "margin", "template"});
            read(a, "crop_size", cfg.align.crop_size);
            read(a, "margin", cfg.align.margin);
            if (const auto t = a["template"]) {
                if (!t.IsSequence() || t.size() != 5) throw std::invalid_argument("align.template needs five points");
                for (int k = 0; k < 5; ++k) {
                    const auto p = t[std::size_t(k)].as<std::vector<double>>();
                    if (p.size() != 2) throw std::invalid_argument("align.template points are [x, y] fractions");
                    cfg.align.template_fractions(0, k) = p[0];
                    cfg.align.template_fractions(1, k) = p[1];
                }
            }
        }
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(std::string("invalid config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    try {
        return from_yaml_text(util::read_file(path));
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

}  // namespace cer::train
