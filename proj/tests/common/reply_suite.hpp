#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fixtures {

struct ScriptedReply {
    std::string suite;
    std::string reply;
    std::optional<int> label;
};

// Indices: 0 Fearfully Surprised, 1 Happily Surprised, 2 Sadly Surprised, 3 Disgustedly Surprised,
// 4 Angrily Surprised, 5 Sadly Fearful, 6 Sadly Angry.
inline std::vector<ScriptedReply> reply_suite() {
    const std::vector<std::string> names = {"Fearfully Surprised", "Happily Surprised", "Sadly Surprised",
                                            "Disgustedly Surprised", "Angrily Surprised", "Sadly Fearful",
                                            "Sadly Angry"};
    std::vector<ScriptedReply> s;
    for (int i = 0; i < 7; ++i) {
        const auto& n = names[size_t(i)];
        std::string upper;
        for (char c : n) upper += c == ' ' ? std::string("   ") : std::string(1, char(std::toupper(c)));
        s.push_back({"canonical", n, i});
        s.push_back({"canonical", "  " + upper + "\n", i});
        s.push_back({"canonical", "The expression in the image is '" + n + "'.", i});
        s.push_back({"canonical", "Category: " + n + ". The eyebrows are raised and the mouth is open,\nso " + n +
                                      " fits best.", i});
    }
    s.push_back({"canonical", "sadly\tangry", 6});
    s.push_back({"canonical", "**Happily Surprised**", 1});
    s.push_back({"canonical", "Answer:Disgustedly Surprised!", 3});
    s.push_back({"canonical", "Sadly Fearfully Surprised", 0});

    s.push_back({"ambiguity", "It could be Happily Surprised or Sadly Surprised", std::nullopt});
    s.push_back({"ambiguity", "Sadly Angry, or maybe Sadly Fearful.", std::nullopt});
    s.push_back({"ambiguity", "Not Fearfully Surprised but Angrily Surprised.", std::nullopt});
    s.push_back({"ambiguity", "'Happily Surprised', 'Sadly Fearful', 'Sadly Angry', 'Sadly Surprised', 'Fearfully Surprised', "
                              "'Angrily Surprised', 'Disgustedly Surprised'",
                 std::nullopt});
    s.push_back({"ambiguity", "Disgustedly Surprised / Sadly Surprised", std::nullopt});
    s.push_back({"ambiguity", "sadly angry and sadly fearful", std::nullopt});
    s.push_back({"ambiguity", "Happily Surprised? Happily Surprised! Or Angrily Surprised.", std::nullopt});

    s.push_back({"partial", "angry", std::nullopt});
    s.push_back({"partial", "Surprised", std::nullopt});
    s.push_back({"partial", "sadly", std::nullopt});
    s.push_back({"partial", "The person looks fearful.", std::nullopt});
    s.push_back({"partial", "Happily Surprise", std::nullopt});
    s.push_back({"partial", "Sadly Angrily", std::nullopt});
    s.push_back({"partial", "unhappily surprised", std::nullopt});
    s.push_back({"partial", "Sadly_Angry", std::nullopt});
    s.push_back({"partial", "Sadly-Fearful", std::nullopt});
    s.push_back({"partial", "Surprised, happily", std::nullopt});
    s.push_back({"partial", "", std::nullopt});
    s.push_back({"partial", "I cannot determine the expression.", std::nullopt});
    s.push_back({"partial", "angrily surprisedly", std::nullopt});
    s.push_back({"partial", "Happily Surprised happens twice: Happily Surprised", 1});
    return s;
}

}  // namespace fixtures
