#include "flipbound/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace flipbound {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * b);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }

  void expect_magic() {
    need(kCheckpointMagic.size());
    for (char c : kCheckpointMagic) {
      if (bytes_[pos_++] != static_cast<std::uint8_t>(c)) {
        throw FormatError("checkpoint magic mismatch");
      }
    }
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  net.validate();
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
  for (Index w : net.widths()) put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(net.class_count()));
  for (const Layer& layer : net.layers()) {
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      for (Index c = 0; c < layer.weights.cols(); ++c) put_f64(out, layer.weights(r, c));
    }
    for (Index r = 0; r < layer.bias.size(); ++r) put_f64(out, layer.bias[r]);
    put_f64(out, layer.sigma);
  }
  return out;
}

Network decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  in.expect_magic();
  const std::uint32_t layer_count = in.u32();
  if (layer_count == 0 || layer_count > 4096) {
    throw FormatError("implausible checkpoint layer count " + std::to_string(layer_count));
  }
  std::vector<Index> widths(layer_count + 1);
  for (auto& w : widths) {
    w = in.u32();
    if (w == 0) throw FormatError("checkpoint declares a zero-width layer");
  }
  const std::uint32_t classes = in.u32();
  if (classes != widths.back()) throw FormatError("checkpoint class count disagrees with widths");

  std::vector<Layer> layers(layer_count);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    Layer& layer = layers[l];
    layer.weights.resize(widths[l + 1], widths[l]);
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      for (Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = in.f64();
    }
    layer.bias.resize(widths[l + 1]);
    for (Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = in.f64();
    layer.sigma = in.f64();
  }
  if (!in.at_end()) throw FormatError("trailing bytes after checkpoint payload");
  try {
    return Network(std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint describes an invalid network: ") + e.what());
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace flipbound
