#pragma once

// Binary checkpoint format (little-endian):
//
//   "CERCKPT1"                       8-byte magic
//   u64 header length, header JSON   backbone spec, label order, free-form metadata
//   u32 tensor count
//   per tensor: u32 name length, name, u8 trainable, u32 rank, i32 dims[rank],
//               u8 scalar width (4 or 8), raw values
//   u64 FNV-1a hash of every preceding byte
//
// The header is serialized with sorted keys so that save -> load -> save is byte-identical.

#include "cer/labels.hpp"
#include "cer/nn/zoo.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cer::nn {

struct RawTensor {
    std::string name;
    bool trainable = true;
    std::vector<int> shape;
    std::vector<double> values;
};

struct CheckpointFile {
    nlohmann::json header;
    int scalar_bytes = 4;
    std::vector<RawTensor> tensors;

    const RawTensor* find(const std::string& name) const;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

nlohmann::json spec_to_json(const BackboneSpec& spec);
BackboneSpec spec_from_json(const nlohmann::json& j);

template <typename Scalar>
void save_checkpoint(Network<Scalar>& net, const std::filesystem::path& path, const LabelSpace& labels,
                     const nlohmann::json& meta = nlohmann::json::object()) {
    CheckpointFile file;
    file.header = {{"spec", spec_to_json(net.spec())}, {"labels", labels.names()}, {"meta", meta}};
    file.scalar_bytes = sizeof(Scalar);
    for (const auto& p : net.parameters()) {
        if (!p.param->allocated()) throw std::logic_error("cannot save an uninitialized network");
        RawTensor t{p.name, p.trainable, p.param->shape, {}};
        t.values.assign(p.param->value.data(), p.param->value.data() + p.param->value.size());
        file.tensors.push_back(std::move(t));
    }
    write_checkpoint_file(path, file);
}

/// Copies tensors from `file` into `params`; every parameter must be present with its exact shape.
template <typename Scalar>
void assign_tensors(const ParameterList<Scalar>& params, const CheckpointFile& file) {
    for (const auto& p : params) {
        const RawTensor* t = file.find(p.name);
        if (!t) throw std::runtime_error("checkpoint is missing tensor '" + p.name + "'");
        if (t->shape != p.param->shape) throw std::runtime_error("shape mismatch for tensor '" + p.name + "'");
        p.param->allocate();
        for (size_t i = 0; i < t->values.size(); ++i) p.param->value(Eigen::Index(i)) = static_cast<Scalar>(t->values[i]);
    }
}

struct LoadedMeta {
    LabelSpace labels;
    nlohmann::json meta;
};

/// Rebuilds a network from the spec embedded in the checkpoint. When `expected_labels` is given,
/// the stored label order must match it.
template <typename Scalar>
Network<Scalar> load_checkpoint(const std::filesystem::path& path, const LabelSpace* expected_labels = nullptr,
                                LoadedMeta* out_meta = nullptr) {
    const CheckpointFile file = read_checkpoint_file(path);
    LabelSpace labels(file.header.at("labels").get<std::vector<std::string>>());
    if (expected_labels && !(labels == *expected_labels)) throw std::runtime_error("label order mismatch");
    Network<Scalar> net(spec_from_json(file.header.at("spec")));
    assign_tensors(net.parameters(), file);
    if (out_meta) *out_meta = {std::move(labels), file.header.value("meta", nlohmann::json::object())};
    return net;
}

/// Loads into an existing network; the stored spec must equal the network's.
template <typename Scalar>
void load_checkpoint_into(Network<Scalar>& net, const std::filesystem::path& path) {
    const CheckpointFile file = read_checkpoint_file(path);
    if (!(spec_from_json(file.header.at("spec")) == net.spec()))
        throw std::runtime_error("checkpoint spec does not match network: " + path.string());
    assign_tensors(net.parameters(), file);
}

/// Loads backbone tensors from a weight file (same container format); the head is left untouched.
template <typename Scalar>
void load_backbone_weights(Network<Scalar>& net, const std::filesystem::path& path) {
    const CheckpointFile file = read_checkpoint_file(path);
    assign_tensors(net.backbone_parameters(), file);
}

}  // namespace cer::nn
