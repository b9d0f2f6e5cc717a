#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bvlab/model/mlp.hpp"

namespace bvlab::model {

// Flat little-endian container:
//   "BVML" | version u32 | input_dim u32 | hidden count u32 | hidden sizes u32...
//   | output_dim u32 | activation u32 (0 relu, 1 sigmoid) | head u32 (0 linear, 1 softmax)
//   | per layer: weight f64 (row-major fan_in x fan_out), bias f64
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model& model);
// The seed is not part of the format; the loaded model reports `seed`.
Model deserialize_model(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path, std::uint64_t seed = 0);

}  // namespace bvlab::model
