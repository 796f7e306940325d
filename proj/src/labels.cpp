#include "cer/labels.hpp"

#include <cctype>
#include <set>
#include <stdexcept>

namespace cer {

const LabelSpace& LabelSpace::standard() {
    static const LabelSpace space({"Fearfully Surprised", "Happily Surprised", "Sadly Surprised",
                                   "Disgustedly Surprised", "Angrily Surprised", "Sadly Fearful",
                                   "Sadly Angry"});
    return space;
}

LabelSpace::LabelSpace(std::vector<std::string> classes) : classes_(std::move(classes)) {
    if (classes_.empty()) throw std::invalid_argument("label space must not be empty");
    std::set<std::string> seen;
    for (const auto& c : classes_) {
        if (!seen.insert(normalize_text(c)).second)
            throw std::invalid_argument("duplicate class name in label space: " + c);
    }
}

const std::string& LabelSpace::name(int index) const {
    if (index < 0 || index >= size())
        throw std::out_of_range("class index out of range: " + std::to_string(index));
    return classes_[static_cast<size_t>(index)];
}

std::optional<int> LabelSpace::index(std::string_view name) const {
    for (int i = 0; i < size(); ++i)
        if (classes_[static_cast<size_t>(i)] == name) return i;
    return std::nullopt;
}

std::optional<int> LabelSpace::lookup(std::string_view name) const {
    std::string relaxed(name);
    for (auto& c : relaxed)
        if (c == '_' || c == '-') c = ' ';
    const auto key = normalize_text(relaxed);
    for (int i = 0; i < size(); ++i)
        if (normalize_text(classes_[static_cast<size_t>(i)]) == key) return i;
    return std::nullopt;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace cer
