#pragma once

#include "cer/labels.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace cer::vlm {

/// The annotation question for prompt variant 1 or 2.
const std::string& build_prompt(int variant);

struct Extraction {
    std::optional<int> label;
    bool confident = false;
};

/// Finds canonical class names in a free-text reply. Matching ignores case and repeated
/// whitespace and requires the whole compound name between word boundaries. Exactly one distinct
/// class found is a confident label; none or several is no label.
Extraction extract_label(std::string_view reply, const LabelSpace& labels = LabelSpace::standard());

}  // namespace cer::vlm
