#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace snowdet {

using TensorMap = std::map<std::string, torch::Tensor>;
using TensorMetadata = std::map<std::string, std::string>;

/// Reads and writes the safetensors layout: an 8-byte little-endian header
/// length, a JSON header describing each tensor, then the raw tensor bytes.
/// Supported dtypes are F32, F64 and I64, which covers every state-dict entry
/// the backbones carry. Keys are written in sorted order so equal maps give
/// byte-identical files.
std::string encode_safetensors(const TensorMap& tensors, const TensorMetadata& metadata = {});
TensorMap decode_safetensors(const std::string& bytes, TensorMetadata* metadata = nullptr);

void save_safetensors(const std::filesystem::path& path, const TensorMap& tensors,
                      const TensorMetadata& metadata = {});
TensorMap load_safetensors(const std::filesystem::path& path, TensorMetadata* metadata = nullptr);

}  // namespace snowdet
