#include "snowdet/export.hpp"

#include "snowdet/digest.hpp"
#include "snowdet/io.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

ExportResult export_bundle(const EnsembleBundle& bundle, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ExportResult result;
    json members = json::object();
    for (const auto& [name, model, meta] :
         {std::tuple{std::string("model_a"), &bundle.model_a(), &bundle.meta_a()},
          std::tuple{std::string("model_b"), &bundle.model_b(), &bundle.meta_b()}}) {
        const auto path = out_dir / (name + ".safetensors");
        save_safetensors(path, model->full_state(),
                         {{"format", "pt"}, {"arch", std::string(to_string(meta->arch))}, {"num_classes", "2"}});
        result.weight_files.push_back(path);
        members[name] = {{"file", path.filename().string()},
                         {"sha256", sha256_file(path)},
                         {"architecture", "torchvision.models." + std::string(to_string(meta->arch))},
                         {"replaced_layer", model->head_prefix()},
                         {"replaced_layer_shape", {kNumClasses, model->feature_width()}},
                         {"backbone", meta->backbone.to_json()},
                         {"epoch", meta->epoch},
                         {"learning_rate", meta->learning_rate}};
    }
    const auto& pp = bundle.preprocess();
    json doc;
    doc["format"] = "safetensors state dicts (torchvision key layout)";
    doc["members"] = members;
    doc["input"] = {{"shape", {1, 3, pp.height, pp.width}}, {"layout", "NCHW"}, {"dtype", "float32"}};
    doc["output"] = {{"shape", {1, kNumClasses}}, {"meaning", "softmax over head scores"}};
    doc["class_order"] = class_order_names();
    doc["preprocess"] = pp.to_json();
    doc["ensemble"] = bundle.config().to_json();
    doc["bundle_digest"] = bundle.digest();
    doc["code_version"] = code_version();
    result.descriptor = out_dir / "export.json";
    write_json_atomic(result.descriptor, doc);
    return result;
}

}  // namespace snowdet
