#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bvlab/data/dataset.hpp"

namespace bvlab::data {

namespace cifar10 {
inline constexpr std::size_t kSide = 32;
inline constexpr std::size_t kChannelSize = kSide * kSide;
inline constexpr std::size_t kPixels = 3 * kChannelSize;
inline constexpr std::size_t kRecordSize = 1 + kPixels;
inline constexpr std::size_t kClasses = 10;
inline constexpr std::array<double, 3> kMean{0.4914, 0.4822, 0.4465};
inline constexpr std::array<double, 3> kStd{0.2023, 0.1994, 0.2010};
}  // namespace cifar10

// One raw record: label byte then 1024 R, 1024 G, 1024 B bytes, each
// plane row-major 32x32.
struct CifarRecord {
  std::uint8_t label = 0;
  std::array<std::uint8_t, cifar10::kPixels> pixels{};

  friend bool operator==(const CifarRecord&, const CifarRecord&) = default;
};

std::vector<CifarRecord> read_cifar10_records(const std::string& path);
void write_cifar10_records(const std::string& path, const std::vector<CifarRecord>& records);

// (byte / 255 - mean[channel]) / std[channel].
double normalize_pixel(std::uint8_t byte, std::size_t channel);

// Normalized [n, 3072] inputs with 10-class labels. `limit` > 0 keeps only
// the first `limit` records.
LabeledDataset load_cifar10(const std::string& path, std::size_t limit = 0);

// Per-coordinate valid range of normalized pixels ([0,1] mapped through
// the channel normalization).
std::pair<std::vector<double>, std::vector<double>> cifar10_pixel_bounds();

}  // namespace bvlab::data
