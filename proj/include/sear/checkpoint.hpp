#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sear/tensor.hpp"

namespace sear::ckpt {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

// On-disk layout: one line of JSON (meta, dtype marker, ordered tensor
// name/shape table), a '\n', then the raw little-endian float64 buffers
// concatenated in table order.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& meta);

// Reads only the JSON header.
nlohmann::json read_meta(const std::string& path);

// Restores values into `tensors` in place. Throws std::runtime_error if the
// file's name/shape table does not exactly match `tensors` (same names, same
// shapes, same order) or the payload is truncated. Returns the meta object.
nlohmann::json load_checkpoint(const std::string& path,
                               std::vector<NamedTensor>& tensors);

}  // namespace sear::ckpt
