#pragma once

#include <string>

namespace fixtures {

inline const std::string kPromptRow1 =
    "Which of the following expressions is the expression in the image: 'Happily Surprised', 'Sadly Fearful', "
    "'Sadly Angry', 'Sadly Surprised', 'Fearfully Surprised', 'Angrily Surprised', 'Disgustedly Surprised'? No "
    "explanation needed, just give me the name of a category";
inline const std::string kPromptRow2 =
    "Which of these expressions in the picture is like 'Happily Surprised', 'Sadly Fearful', 'Sadly Angry', "
    "'Sadly Surprised', 'Fearfully Surprised', 'Angrily Surprised' or 'Disgustedly Surprised'? No need for an "
    "explanation, just give me the name of a category.";

}  // namespace fixtures
