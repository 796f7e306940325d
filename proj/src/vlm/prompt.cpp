#include "cer/vlm/prompt.hpp"

#include <cctype>
#include <set>
#include <stdexcept>

namespace cer::vlm {

namespace {

const std::string kPrompt1 =
    "Which of the following expressions is the expression in the image: 'Happily Surprised', 'Sadly Fearful', "
    "'Sadly Angry', 'Sadly Surprised', 'Fearfully Surprised', 'Angrily Surprised', 'Disgustedly Surprised'? "
    "No explanation needed, just give me the name of a category";

const std::string kPrompt2 =
    "Which of these expressions in the picture is like 'Happily Surprised', 'Sadly Fearful', 'Sadly Angry', "
    "'Sadly Surprised', 'Fearfully Surprised', 'Angrily Surprised' or 'Disgustedly Surprised'? "
    "No need for an explanation, just give me the name of a category.";

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

const std::string& build_prompt(int variant) {
    if (variant == 1) return kPrompt1;
    if (variant == 2) return kPrompt2;
    throw std::invalid_argument("unknown prompt variant " + std::to_string(variant));
}

Extraction extract_label(std::string_view reply, const LabelSpace& labels) {
    const std::string text = normalize_text(reply);
    std::set<int> found;
    for (int c = 0; c < labels.size(); ++c) {
        const std::string needle = normalize_text(labels.name(c));
        for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
            const auto end = pos + needle.size();
            const bool left = pos == 0 || !is_word_char(text[pos - 1]);
            const bool right = end == text.size() || !is_word_char(text[end]);
            if (left && right) {
                found.insert(c);
                break;
            }
        }
    }
    if (found.size() == 1) return {*found.begin(), true};
    return {};
}

}  // namespace cer::vlm
