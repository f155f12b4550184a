#include "expertroute/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "expertroute/error.hpp"
#include "expertroute/hash.hpp"

namespace expertroute {

namespace {

// All integers and doubles are little-endian.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw CheckpointError("checkpoint payload is malformed");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kHeaderSize = 4 + 4 + 8;
constexpr std::size_t kTrailerSize = 8;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const RouterModel& model) {
  model.validate();
  Writer payload;
  payload.u32(static_cast<std::uint32_t>(model.num_models()));
  for (const auto& m : model.registry.models()) {
    payload.str(m.model_id);
    payload.str(m.display_name);
    payload.u8(m.endpoint ? 1 : 0);
    payload.str(m.endpoint.value_or(""));
  }
  const auto& fc = model.featurizer;
  payload.u32(fc.dimension);
  payload.u32(fc.word_ngrams.lo);
  payload.u32(fc.word_ngrams.hi);
  payload.u32(fc.char_ngrams.lo);
  payload.u32(fc.char_ngrams.hi);
  payload.u8(fc.lowercase ? 1 : 0);
  for (double w : model.weights) payload.f64(w);
  for (double b : model.bias) payload.f64(b);

  const auto& body = payload.bytes();
  Writer out;
  for (std::uint8_t c : kCheckpointMagic) out.u8(c);
  out.u32(model.version);
  out.u64(body.size());
  out.bytes().insert(out.bytes().end(), body.begin(), body.end());
  out.u64(fnv1a64(std::span<const std::uint8_t>(body)));
  return std::move(out.bytes());
}

RouterModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("not a router checkpoint (bad magic bytes)");
  }
  if (bytes.size() < kHeaderSize) throw CheckpointError("checkpoint truncated: checksum cannot be verified");
  Reader header(bytes.subspan(4, kHeaderSize - 4));
  const std::uint32_t version = header.u32();
  if (version != kRouterFormatVersion) {
    std::ostringstream msg;
    msg << "checkpoint format version " << version << " is not supported (expected "
        << kRouterFormatVersion << ")";
    throw CheckpointError(msg.str());
  }
  const std::uint64_t payload_size = header.u64();
  if (bytes.size() != kHeaderSize + payload_size + kTrailerSize) {
    throw CheckpointError("checkpoint checksum mismatch: file is truncated or has trailing bytes");
  }
  const auto payload = bytes.subspan(kHeaderSize, payload_size);
  Reader trailer(bytes.subspan(kHeaderSize + payload_size));
  if (trailer.u64() != fnv1a64(payload)) throw CheckpointError("checkpoint checksum mismatch");

  Reader in(payload);
  RouterModel model;
  model.version = version;
  const std::uint32_t k = in.u32();
  std::vector<ModelInfo> models;
  for (std::uint32_t i = 0; i < k; ++i) {
    ModelInfo info;
    info.model_id = in.str();
    info.display_name = in.str();
    const bool has_endpoint = in.u8() != 0;
    std::string endpoint = in.str();
    if (has_endpoint) info.endpoint = std::move(endpoint);
    models.push_back(std::move(info));
  }
  try {
    model.registry = ModelRegistry(std::move(models));
  } catch (const DataError& e) {
    throw CheckpointError(std::string("checkpoint registry invalid: ") + e.what());
  }
  auto& fc = model.featurizer;
  fc.dimension = in.u32();
  fc.word_ngrams.lo = in.u32();
  fc.word_ngrams.hi = in.u32();
  fc.char_ngrams.lo = in.u32();
  fc.char_ngrams.hi = in.u32();
  fc.lowercase = in.u8() != 0;

  const std::size_t count = static_cast<std::size_t>(k) * fc.dimension;
  if (in.remaining() != (count + k) * 8) throw CheckpointError("checkpoint parameter block has wrong size");
  model.weights.resize(count);
  for (double& w : model.weights) w = in.f64();
  model.bias.resize(k);
  for (double& b : model.bias) b = in.f64();
  try {
    model.validate();
  } catch (const UsageError& e) {
    throw CheckpointError(std::string("checkpoint invalid: ") + e.what());
  }
  return model;
}

void save_checkpoint(const RouterModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

RouterModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace expertroute
