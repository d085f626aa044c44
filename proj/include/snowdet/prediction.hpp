#pragma once

#include <array>
#include <optional>
#include <string>

#include "snowdet/types.hpp"

namespace snowdet {

/// Per-image outcome of the two-model ensemble. Probability pairs are in
/// class order [snow_free, snow].
struct PredictionResult {
    std::string record_id;
    std::array<double, 2> probs_a{};
    std::array<double, 2> probs_b{};
    std::array<double, 2> ensemble{};
    Label label = Label::snow_free;
    std::optional<Label> truth;

    double snow_probability() const { return ensemble[kSnowIndex]; }
};

/// Snow iff the snow probability reaches the threshold; an exact tie counts
/// as snow.
inline Label decide(double snow_probability, double threshold) {
    return snow_probability >= threshold ? Label::snow : Label::snow_free;
}

}  // namespace snowdet
