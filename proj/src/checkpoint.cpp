#include "nestfuse/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>
#include <string>
#include <string_view>

#include "nestfuse/error.hpp"
#include "nestfuse/image_io.hpp"
#include "nestfuse/topology.hpp"

namespace nestfuse {
namespace {

constexpr std::string_view kMagic = "NESTFUSE1";
constexpr std::uint8_t kDtypeF32 = 1;

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t len = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = crc32(c, bytes.data() + off, static_cast<uInt>(len));
    off += len;
  }
  return static_cast<std::uint32_t>(c);
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      bits = std::bit_cast<U>(v);
    } else {
      bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::size_t size() const { return out_.size(); }
  std::span<const std::uint8_t> from(std::size_t start) const {
    return std::span<const std::uint8_t>(out_).subspan(start);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > in_.size() - pos_) fail(ErrorCode::kChecksum, "checkpoint truncated");
    const auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le() {
    const auto s = bytes(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      return std::bit_cast<T>(static_cast<U>(bits));
    } else {
      return static_cast<T>(bits);
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::span<const std::uint8_t> range(std::size_t start, std::size_t end) const {
    return in_.subspan(start, end - start);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_entry(Writer& w, const std::string& name, std::span<const std::uint32_t> dims,
                 std::span<const float> data) {
  const std::size_t start = w.size();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) w.le<std::uint32_t>(d);
  w.le<std::uint8_t>(kDtypeF32);
  w.le<std::uint64_t>(static_cast<std::uint64_t>(data.size()) * 4u);
  for (float v : data) w.le<float>(v);
  w.le<std::uint32_t>(crc(w.from(start)));
}

struct Slot {
  std::vector<std::uint32_t> dims;
  std::vector<float>* data;
  bool seen = false;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const NetworkState& state, double lambda) {
  state.validate();
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint8_t>(state.deep_supervision() ? 1 : 0);
  w.le<double>(lambda);
  w.le<std::uint32_t>(topology::kStemChannels);
  w.le<std::uint32_t>(topology::kBlockWidth);
  for (int c : topology::kScaleChannels) w.le<std::uint32_t>(static_cast<std::uint32_t>(c));
  const auto layers = state.layers();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(layers.size() * 2));
  w.le<std::uint32_t>(crc(w.from(0)));
  for (const ConvParams& p : layers) {
    const std::uint32_t wd[4] = {static_cast<std::uint32_t>(p.out_channels),
                                 static_cast<std::uint32_t>(p.in_channels),
                                 static_cast<std::uint32_t>(p.kernel),
                                 static_cast<std::uint32_t>(p.kernel)};
    const std::uint32_t bd[1] = {static_cast<std::uint32_t>(p.out_channels)};
    write_entry(w, p.name + ".weight", wd, p.weight);
    write_entry(w, p.name + ".bias", bd, p.bias);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_len = std::min(bytes.size(), kMagic.size());
  if (magic_len > 0 && std::memcmp(bytes.data(), kMagic.data(), magic_len) != 0) {
    fail(ErrorCode::kBadMagic, "not a nestfuse checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.bytes(kMagic.size());
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto ds = r.le<std::uint8_t>();
  const auto lambda = r.le<double>();
  const auto stem = r.le<std::uint32_t>();
  const auto width = r.le<std::uint32_t>();
  std::uint32_t scales[4];
  for (auto& s : scales) s = r.le<std::uint32_t>();
  const auto count = r.le<std::uint32_t>();
  const std::uint32_t header_crc = crc(r.range(0, r.pos()));
  if (r.le<std::uint32_t>() != header_crc) fail(ErrorCode::kChecksum, "checkpoint header checksum mismatch");

  if (ds > 1) fail(ErrorCode::kCheckpointTopology, "invalid deep-supervision flag");
  bool topo_ok = stem == topology::kStemChannels && width == topology::kBlockWidth;
  for (int m = 0; m < 4; ++m) {
    topo_ok = topo_ok && scales[m] == static_cast<std::uint32_t>(topology::kScaleChannels[static_cast<std::size_t>(m)]);
  }
  if (!topo_ok) fail(ErrorCode::kCheckpointTopology, "checkpoint was written for a different channel plan");

  Checkpoint ck;
  ck.lambda = lambda;
  ck.state = NetworkState::zeros(ds == 1);
  std::map<std::string, Slot, std::less<>> slots;
  for (ConvParams& p : ck.state.layers()) {
    slots[p.name + ".weight"] = Slot{{static_cast<std::uint32_t>(p.out_channels),
                                      static_cast<std::uint32_t>(p.in_channels),
                                      static_cast<std::uint32_t>(p.kernel),
                                      static_cast<std::uint32_t>(p.kernel)},
                                     &p.weight};
    slots[p.name + ".bias"] = Slot{{static_cast<std::uint32_t>(p.out_channels)}, &p.bias};
  }

  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t start = r.pos();
    const auto name_len = r.le<std::uint32_t>();
    const auto name_bytes = r.bytes(name_len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    const auto ndim = r.le<std::uint32_t>();
    if (ndim > 8) fail(ErrorCode::kChecksum, "entry " + name + ": implausible rank");
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = r.le<std::uint32_t>();
    const auto dtype = r.le<std::uint8_t>();
    const auto byte_len = r.le<std::uint64_t>();
    const auto data = r.bytes(static_cast<std::size_t>(std::min<std::uint64_t>(byte_len, r.remaining() + 1)));
    const std::uint32_t want = crc(r.range(start, r.pos()));
    if (r.le<std::uint32_t>() != want) fail(ErrorCode::kChecksum, "entry " + name + ": checksum mismatch");

    const auto it = slots.find(name);
    if (it == slots.end()) fail(ErrorCode::kCheckpointTopology, "unexpected entry " + name);
    Slot& slot = it->second;
    if (slot.seen) fail(ErrorCode::kCheckpointTopology, "duplicate entry " + name);
    if (dtype != kDtypeF32) fail(ErrorCode::kCheckpointTopology, "entry " + name + ": unsupported dtype");
    if (dims != slot.dims || byte_len != slot.data->size() * 4u) {
      fail(ErrorCode::kCheckpointTopology, "entry " + name + ": shape does not match the topology");
    }
    for (std::size_t i = 0; i < slot.data->size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(data[4 * i + b]) << (8 * b);
      (*slot.data)[i] = std::bit_cast<float>(bits);
    }
    slot.seen = true;
  }
  if (r.remaining() != 0) fail(ErrorCode::kChecksum, "trailing bytes after the last entry");
  for (const auto& [name, slot] : slots) {
    if (!slot.seen) fail(ErrorCode::kCheckpointTopology, "missing entry " + name);
  }
  return ck;
}

void save_checkpoint(const NetworkState& state, double lambda, const std::filesystem::path& path) {
  atomic_write(path, serialize_checkpoint(state, lambda));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  try {
    return parse_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace nestfuse
