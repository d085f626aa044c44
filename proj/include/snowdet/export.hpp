#pragma once

#include <filesystem>
#include <vector>

#include "snowdet/bundle.hpp"

namespace snowdet {

struct ExportResult {
    std::filesystem::path descriptor;
    std::vector<std::filesystem::path> weight_files;
};

/// Writes both members as full torchvision-layout state dicts
/// (model_a.safetensors, model_b.safetensors) with the 2-way head in place of
/// the original classifier, plus export.json describing how to rebuild and
/// run them: architecture, replaced layer, input shape, preprocessing,
/// class order and the ensemble weight.
ExportResult export_bundle(const EnsembleBundle& bundle, const std::filesystem::path& out_dir);

}  // namespace snowdet
