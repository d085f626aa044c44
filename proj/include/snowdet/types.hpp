#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace snowdet {

/// Error raised for violated contracts (bad input, missing artifacts, ...).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Class labels. The numeric value is the column index in every probability
/// vector, so index 1 is always "snow".
enum class Label : int { snow_free = 0, snow = 1 };

enum class Split { train, val, test, unassigned };

enum class Arch { vgg19, resnet50 };

inline constexpr std::array<Label, 2> kClassOrder{Label::snow_free, Label::snow};
inline constexpr int kNumClasses = 2;
inline constexpr int kSnowIndex = static_cast<int>(Label::snow);

std::string_view to_string(Label label);
std::string_view to_string(Split split);
std::string_view to_string(Arch arch);

Label parse_label(std::string_view text);
Split parse_split(std::string_view text);
Arch parse_arch(std::string_view text);

/// Class order as the list of label names, e.g. ["snow_free", "snow"].
std::array<std::string, 2> class_order_names();

/// Version string embedded in every emitted artifact.
std::string_view code_version();

}  // namespace snowdet
