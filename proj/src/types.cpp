#include "snowdet/types.hpp"

namespace snowdet {

std::string_view to_string(Label label) {
    return label == Label::snow ? "snow" : "snow_free";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "unassigned";
}

std::string_view to_string(Arch arch) {
    return arch == Arch::vgg19 ? "vgg19" : "resnet50";
}

Label parse_label(std::string_view text) {
    if (text == "snow") return Label::snow;
    if (text == "snow_free") return Label::snow_free;
    throw Error("unknown label '" + std::string(text) + "' (expected snow or snow_free)");
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    if (text == "unassigned") return Split::unassigned;
    throw Error("unknown split '" + std::string(text) + "'");
}

Arch parse_arch(std::string_view text) {
    if (text == "vgg19") return Arch::vgg19;
    if (text == "resnet50") return Arch::resnet50;
    throw Error("unsupported architecture '" + std::string(text) +
                "' (supported: vgg19, resnet50)");
}

std::array<std::string, 2> class_order_names() {
    return {std::string(to_string(kClassOrder[0])), std::string(to_string(kClassOrder[1]))};
}

std::string_view code_version() { return "snowdet " SNOWDET_VERSION; }

}  // namespace snowdet
