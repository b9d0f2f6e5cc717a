#include "bvlab/data/cifar10.hpp"

#include <filesystem>
#include <fstream>

#include "bvlab/common/error.hpp"

namespace bvlab::data {

std::vector<CifarRecord> read_cifar10_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open CIFAR-10 file " + path);
  const auto bytes = std::filesystem::file_size(path);
  if (bytes % cifar10::kRecordSize != 0) {
    throw FormatError(path + ": size " + std::to_string(bytes) + " is not a multiple of " +
                      std::to_string(cifar10::kRecordSize));
  }
  const std::size_t count = bytes / cifar10::kRecordSize;
  std::vector<CifarRecord> records(count);
  for (std::size_t i = 0; i < count; ++i) {
    char label = 0;
    in.read(&label, 1);
    in.read(reinterpret_cast<char*>(records[i].pixels.data()), cifar10::kPixels);
    if (!in) throw FormatError(path + ": short read in record " + std::to_string(i));
    records[i].label = static_cast<std::uint8_t>(label);
    if (records[i].label >= cifar10::kClasses) {
      throw FormatError(path + ": record " + std::to_string(i) + " has label byte " +
                        std::to_string(records[i].label));
    }
  }
  return records;
}

void write_cifar10_records(const std::string& path, const std::vector<CifarRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const CifarRecord& record : records) {
    out.put(static_cast<char>(record.label));
    out.write(reinterpret_cast<const char*>(record.pixels.data()), cifar10::kPixels);
  }
  if (!out) throw Error("failed writing " + path);
}

double normalize_pixel(std::uint8_t byte, std::size_t channel) {
  return (static_cast<double>(byte) / 255.0 - cifar10::kMean[channel]) / cifar10::kStd[channel];
}

LabeledDataset load_cifar10(const std::string& path, std::size_t limit) {
  std::vector<CifarRecord> records = read_cifar10_records(path);
  if (limit > 0 && records.size() > limit) records.resize(limit);
  if (records.empty()) throw FormatError(path + ": no records");

  std::vector<double> xs;
  xs.reserve(records.size() * cifar10::kPixels);
  LabeledDataset out;
  out.targets.num_classes = cifar10::kClasses;
  for (const CifarRecord& record : records) {
    for (std::size_t p = 0; p < cifar10::kPixels; ++p) {
      xs.push_back(normalize_pixel(record.pixels[p], p / cifar10::kChannelSize));
    }
    out.targets.labels.push_back(record.label);
  }
  out.inputs = grad::Tensor::matrix(records.size(), cifar10::kPixels, std::move(xs));
  out.provenance = "cifar10(" + path + ",records=" + std::to_string(records.size()) + ")";
  return out;
}

std::pair<std::vector<double>, std::vector<double>> cifar10_pixel_bounds() {
  std::vector<double> lower(cifar10::kPixels);
  std::vector<double> upper(cifar10::kPixels);
  for (std::size_t p = 0; p < cifar10::kPixels; ++p) {
    lower[p] = normalize_pixel(0, p / cifar10::kChannelSize);
    upper[p] = normalize_pixel(255, p / cifar10::kChannelSize);
  }
  return {std::move(lower), std::move(upper)};
}

}  // namespace bvlab::data
