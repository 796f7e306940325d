#include "cer/nn/zoo.hpp"

#include <algorithm>

namespace cer::nn {

BackboneSpec BackboneSpec::reference(std::string_view name) {
    BackboneSpec s;
    s.name = std::string(name);
    s.num_classes = 1000;
    s.reference_head = true;
    return s;
}

bool is_known_backbone(std::string_view name) {
    return std::find(kBackboneNames.begin(), kBackboneNames.end(), name) != kBackboneNames.end();
}

std::string known_backbones() {
    std::string out;
    for (auto n : kBackboneNames) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

long reference_param_count(std::string_view name) {
    if (name == "mobilenet_v2") return 3'504'872;
    if (name == "resnet152") return 60'192'808;
    if (name == "densenet121") return 7'978'856;
    if (name == "resnet18") return 11'689'512;
    if (name == "densenet201") return 20'013'928;
    throw std::invalid_argument("unknown backbone '" + std::string(name) + "'; valid names: " + known_backbones());
}

}  // namespace cer::nn
