#include "bvlab/model/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bvlab/common/error.hpp"

namespace bvlab::model {

namespace {

constexpr char kMagic[4] = {'B', 'V', 'M', 'L'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int shift = 0; shift < 64; shift += 8) {
    out.push_back(static_cast<std::uint8_t>(bits >> shift));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  double f64() {
    need(8, "parameter");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(bits);
  }

  void magic() {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) throw FormatError("model file: bad magic");
    pos_ += 4;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("model file truncated while reading ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  const MlpSpec& spec = model.spec();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(spec.input_dim));
  put_u32(out, static_cast<std::uint32_t>(spec.hidden.size()));
  for (std::size_t h : spec.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(spec.output_dim));
  put_u32(out, spec.activation == Activation::relu ? 0u : 1u);
  put_u32(out, spec.head == Head::linear ? 0u : 1u);
  for (const Layer& layer : model.layers()) {
    for (double v : layer.weight.values()) put_f64(out, v);
    for (double v : layer.bias.values()) put_f64(out, v);
  }
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  Reader in(bytes);
  in.magic();
  const std::uint32_t version = in.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("model file version " + std::to_string(version) + " is not supported");
  }
  MlpSpec spec;
  spec.input_dim = in.u32("input dim");
  const std::uint32_t depth = in.u32("hidden count");
  // Every hidden size takes four bytes, so an absurd count fails fast.
  if (depth > bytes.size() / 4) throw FormatError("model file: hidden count out of range");
  for (std::uint32_t i = 0; i < depth; ++i) spec.hidden.push_back(in.u32("hidden size"));
  spec.output_dim = in.u32("output dim");
  const std::uint32_t activation = in.u32("activation");
  const std::uint32_t head = in.u32("head");
  if (activation > 1 || head > 1) throw FormatError("model file: bad activation/head code");
  spec.activation = activation == 0 ? Activation::relu : Activation::sigmoid;
  spec.head = head == 0 ? Head::linear : Head::softmax;
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }

  std::vector<Layer> layers;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const std::size_t fan_out = l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim;
    grad::Tensor weight = grad::Tensor::zeros({fan_in, fan_out});
    for (double& v : weight.values()) v = in.f64();
    grad::Tensor bias = grad::Tensor::zeros({fan_out});
    for (double& v : bias.values()) v = in.f64();
    layers.push_back({std::move(weight), std::move(bias)});
    fan_in = fan_out;
  }
  if (!in.done()) throw FormatError("model file: trailing bytes after parameters");
  return Model(std::move(spec), std::move(layers), seed);
}

void save_model(const Model& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Model load_model(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_model(bytes, seed);
}

}  // namespace bvlab::model
