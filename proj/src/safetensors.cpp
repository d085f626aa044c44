#include "snowdet/safetensors.hpp"

#include <cstring>

#include "json.hpp"
#include "snowdet/io.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

namespace {

std::string dtype_tag(torch::ScalarType type) {
    switch (type) {
        case torch::kFloat32: return "F32";
        case torch::kFloat64: return "F64";
        case torch::kInt64: return "I64";
        default: throw Error(std::string("safetensors: unsupported dtype ") + c10::toString(type));
    }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
    if (tag == "F32") return torch::kFloat32;
    if (tag == "F64") return torch::kFloat64;
    if (tag == "I64") return torch::kInt64;
    throw Error("safetensors: unsupported dtype " + tag);
}

}  // namespace

std::string encode_safetensors(const TensorMap& tensors, const TensorMetadata& metadata) {
    nlohmann::json header = nlohmann::json::object();
    std::vector<torch::Tensor> ordered;
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        auto t = tensor.detach().to(torch::kCPU).contiguous();
        const auto nbytes = static_cast<std::uint64_t>(t.nbytes());
        header[name] = {{"dtype", dtype_tag(t.scalar_type())},
                        {"shape", t.sizes().vec()},
                        {"data_offsets", {offset, offset + nbytes}}};
        offset += nbytes;
        ordered.push_back(std::move(t));
    }
    if (!metadata.empty()) header["__metadata__"] = metadata;

    std::string head = header.dump();
    while ((head.size() + 8) % 8 != 0) head.push_back(' ');

    std::string out;
    out.reserve(8 + head.size() + offset);
    std::uint64_t len = head.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
    out += head;
    for (const auto& t : ordered) {
        out.append(static_cast<const char*>(t.data_ptr()), t.nbytes());
    }
    return out;
}

TensorMap decode_safetensors(const std::string& bytes, TensorMetadata* metadata) {
    if (bytes.size() < 8) throw Error("safetensors: truncated file");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    }
    if (len > bytes.size() - 8) throw Error("safetensors: header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, len));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("safetensors: malformed header: ") + e.what());
    }
    const std::size_t base = 8 + len;
    TensorMap out;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            if (metadata) *metadata = entry.get<TensorMetadata>();
            continue;
        }
        const auto type = dtype_from_tag(entry.at("dtype").get<std::string>());
        const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const auto begin = entry.at("data_offsets").at(0).get<std::uint64_t>();
        const auto end = entry.at("data_offsets").at(1).get<std::uint64_t>();
        auto t = torch::empty(shape, torch::TensorOptions().dtype(type));
        if (end < begin || base + end > bytes.size() || end - begin != t.nbytes()) {
            throw Error("safetensors: bad data offsets for " + name);
        }
        std::memcpy(t.data_ptr(), bytes.data() + base + begin, end - begin);
        out.emplace(name, std::move(t));
    }
    return out;
}

void save_safetensors(const std::filesystem::path& path, const TensorMap& tensors,
                      const TensorMetadata& metadata) {
    write_file_atomic(path, encode_safetensors(tensors, metadata));
}

TensorMap load_safetensors(const std::filesystem::path& path, TensorMetadata* metadata) {
    return decode_safetensors(read_file(path), metadata);
}

}  // namespace snowdet
