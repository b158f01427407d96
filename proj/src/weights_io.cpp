#include "sim2xray/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sim2xray/errors.hpp"
#include "sim2xray/png_io.hpp"

namespace sim2xray {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', '2', 'X', 'W'};

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (n > end_ - pos_) throw IoError("weight file is truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::int64_t NamedTensor::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const NamedTensor* WeightFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::uint8_t> serialize_weights(const WeightFile& file) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kWeightFormatVersion);
  w.put(static_cast<std::uint32_t>(file.kind));
  w.put(file.depth);
  w.put(file.dim);
  w.put(file.patch_size);
  w.put(file.step);
  w.put(static_cast<std::uint64_t>(file.metadata_json.size()));
  w.put_bytes(file.metadata_json.data(), file.metadata_json.size());
  w.put(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != t.numel()) {
      throw ShapeError("tensor " + t.name + " holds " + std::to_string(t.values.size()) +
                       " values for its declared shape");
    }
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(d);
    w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
  }
  const std::uint64_t checksum = fnv1a(w.bytes().data(), w.bytes().size());
  w.put(checksum);
  return std::move(w.bytes());
}

WeightFile deserialize_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + sizeof(std::uint64_t)) throw IoError("weight file is truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a weight file (bad magic)");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.data(), body)) throw IoError("weight file checksum mismatch (corrupt file)");

  Reader r(bytes, body);
  char magic[4];
  r.get_bytes(magic, 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightFormatVersion) {
    throw IoError("unsupported weight format version " + std::to_string(version));
  }
  WeightFile file;
  const auto kind = r.get<std::uint32_t>();
  if (kind > 1) throw IoError("unknown weight file kind " + std::to_string(kind));
  file.kind = static_cast<WeightKind>(kind);
  file.depth = r.get<std::uint32_t>();
  file.dim = r.get<std::uint32_t>();
  file.patch_size = r.get<std::uint32_t>();
  file.step = r.get<std::uint64_t>();
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > r.remaining()) throw IoError("weight file is truncated");
  file.metadata_json.resize(meta_len);
  r.get_bytes(file.metadata_json.data(), meta_len);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > r.remaining()) throw IoError("weight file is truncated");
    t.name.resize(name_len);
    r.get_bytes(t.name.data(), name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError("tensor " + t.name + " has implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::int64_t>();
      if (d < 0) throw IoError("tensor " + t.name + " has a negative dimension");
      t.shape.push_back(d);
    }
    const auto n = static_cast<std::uint64_t>(t.numel());
    if (n * sizeof(float) > r.remaining()) throw IoError("weight file is truncated");
    t.values.resize(n);
    r.get_bytes(t.values.data(), n * sizeof(float));
    file.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes in weight file");
  return file;
}

void write_weights(const std::filesystem::path& path, const WeightFile& file) {
  const auto bytes = serialize_weights(file);
  write_text_atomic(path, std::string(bytes.begin(), bytes.end()));
}

WeightFile read_weights(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("weight file not found: " + path.string());
  try {
    return deserialize_weights(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace sim2xray
