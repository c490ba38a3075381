#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "robustq/model.hpp"
#include "robustq/tensor.hpp"

namespace robustq {

struct NamedTensor {
    std::string name;
    Tensor value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Serialized model state. Tensors are held at float32 precision so the
// in-memory object and its file image describe exactly the same network.
//
// File layout (little-endian):
//   "RQCK" | u16 version
//   repeated { u16 name_len | name | u8 dtype (0 = f32) | u8 rank | u32 dims[rank] | f32 payload }
//   u16 0  (end of records)
//   metadata: UTF-8 "key=value\n" lines, sorted by key
struct Checkpoint {
    static constexpr std::uint16_t kVersion = 1;

    std::vector<NamedTensor> tensors;
    std::map<std::string, std::string> metadata;

    bool has_tensor(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
    // Adds or replaces; values are rounded to float32.
    void set_tensor(const std::string& name, const Tensor& value);

    std::string meta(const std::string& key, const std::string& fallback = {}) const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Tensor round_to_f32(const Tensor& t);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model description and parameters <-> checkpoint entries.
void store_model(Checkpoint& ckpt, const ModelSpec& spec, const ModelParams& params);
ModelSpec load_model_spec(const Checkpoint& ckpt);
ModelParams load_model_params(const Checkpoint& ckpt, const ModelSpec& spec);

}  // namespace robustq
