#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cer {

inline constexpr int kNumClasses = 7;

/// The seven compound expressions, in their fixed index order.
class LabelSpace {
public:
    static const LabelSpace& standard();

    explicit LabelSpace(std::vector<std::string> classes);

    int size() const { return static_cast<int>(classes_.size()); }
    const std::string& name(int index) const;
    const std::vector<std::string>& names() const { return classes_; }

    /// Exact (case-sensitive) lookup of a canonical name.
    std::optional<int> index(std::string_view name) const;

    /// Lookup that tolerates case, '_' or '-' separators and repeated whitespace.
    std::optional<int> lookup(std::string_view name) const;

    bool operator==(const LabelSpace& other) const { return classes_ == other.classes_; }

private:
    std::vector<std::string> classes_;
};

/// Lower-cases and collapses runs of whitespace into one space, trimming both ends.
std::string normalize_text(std::string_view text);

}  // namespace cer
