#pragma once

// Binary model container.
//
// Layout (all integers little-endian):
//
//   [0, 8)    magic "MFRG0001"
//   [8, 12)   header length H (uint32)
//   [12, 12+H) header: canonical JSON {"manifest": {...}, "payload_size": N,
//              "tensors": [{name, dtype, shape, offset, nbytes}, ...]}
//   zero padding up to the next multiple of 64
//   payload:  N bytes, each tensor starting at a 64-byte aligned offset
//             (relative to the payload start) and zero-padded after
//
// The manifest checksum is the SHA-256 of the payload bytes only.

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metricforge/error.hpp"
#include "metricforge/half.hpp"
#include "metricforge/metric_kind.hpp"
#include "metricforge/sha256.hpp"

namespace metricforge {

inline constexpr std::string_view kContainerMagic = "MFRG0001";
inline constexpr int kFormatVersion = 1;
inline constexpr std::uint64_t kAlignment = 64;

constexpr std::uint64_t align_up(std::uint64_t n, std::uint64_t a = kAlignment) {
  return (n + a - 1) / a * a;
}

enum class DType { kF32, kF16 };

constexpr std::size_t dtype_size(DType d) { return d == DType::kF32 ? 4 : 2; }

inline std::string_view dtype_name(DType d) { return d == DType::kF32 ? "F32" : "F16"; }

inline std::optional<DType> parse_dtype(std::string_view s) {
  if (s == "F32" || s == "f32" || s == "float32") return DType::kF32;
  if (s == "F16" || s == "f16" || s == "float16") return DType::kF16;
  return std::nullopt;
}

using Shape = std::vector<std::uint64_t>;

inline std::uint64_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

struct TensorSpec {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::uint64_t offset = 0;  // relative to payload start
  std::uint64_t nbytes = 0;

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

enum class NormStyle { kPre, kPost };

struct ModelManifest {
  int format_version = kFormatVersion;
  MetricKind like = MetricKind::kCometQe;
  std::uint32_t vocab_size = 0;
  std::uint32_t d_model = 0;
  std::uint32_t n_heads = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t d_ffn = 0;
  std::uint32_t max_position = 0;
  NormStyle norm_style = NormStyle::kPost;
  std::vector<std::uint32_t> head_hidden;
  Digest checksum{};

  std::vector<Field> fields_required() const { return required_fields(like); }

  friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

/// Throws kInvalidConfig when hyperparameters are inconsistent.
inline void check_manifest(const ModelManifest& m) {
  auto positive = [](std::uint32_t v, const char* what) {
    if (v == 0) raise(ErrorCode::kInvalidConfig, std::string("manifest: ") + what + " must be positive");
  };
  positive(m.vocab_size, "vocab_size");
  positive(m.d_model, "d_model");
  positive(m.n_heads, "n_heads");
  positive(m.n_layers, "n_layers");
  positive(m.d_ffn, "d_ffn");
  positive(m.max_position, "max_position");
  for (auto w : m.head_hidden) positive(w, "head_hidden width");
  if (m.d_model % m.n_heads != 0) {
    raise(ErrorCode::kInvalidConfig, "manifest: d_model " + std::to_string(m.d_model) +
                                         " is not divisible by n_heads " + std::to_string(m.n_heads));
  }
}

namespace detail {

inline nlohmann::json manifest_to_json(const ModelManifest& m, bool with_checksum) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["like"] = std::string(manifest_name(m.like));
  auto fields = nlohmann::json::array();
  for (Field f : m.fields_required()) fields.push_back(std::string(1, field_letter(f)));
  j["fields_required"] = fields;
  j["vocab_size"] = m.vocab_size;
  j["d_model"] = m.d_model;
  j["n_heads"] = m.n_heads;
  j["n_layers"] = m.n_layers;
  j["d_ffn"] = m.d_ffn;
  j["max_position"] = m.max_position;
  j["norm_style"] = m.norm_style == NormStyle::kPre ? "PRE" : "POST";
  j["head_hidden"] = m.head_hidden;
  if (with_checksum) j["checksum"] = to_hex(m.checksum);
  return j;
}

inline Digest parse_digest(const std::string& hex) {
  Digest d{};
  if (hex.size() != 64) raise(ErrorCode::kMalformedHeader, "checksum must be 64 hex digits");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    raise(ErrorCode::kMalformedHeader, "checksum contains a non-hex digit");
  };
  for (std::size_t i = 0; i < 32; ++i) {
    d[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return d;
}

inline ModelManifest manifest_from_json(const nlohmann::json& j, bool require_checksum) {
  ModelManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kFormatVersion) {
    raise(ErrorCode::kUnsupportedVersion,
          "unsupported format_version " + std::to_string(m.format_version) + " (this build reads " +
              std::to_string(kFormatVersion) + ")");
  }
  const auto like = j.at("like").get<std::string>();
  auto kind = parse_metric_kind(like);
  if (!kind) raise(ErrorCode::kMalformedHeader, "manifest: unknown metric kind '" + like + "'");
  m.like = *kind;
  m.vocab_size = j.at("vocab_size").get<std::uint32_t>();
  m.d_model = j.at("d_model").get<std::uint32_t>();
  m.n_heads = j.at("n_heads").get<std::uint32_t>();
  m.n_layers = j.at("n_layers").get<std::uint32_t>();
  m.d_ffn = j.at("d_ffn").get<std::uint32_t>();
  m.max_position = j.at("max_position").get<std::uint32_t>();
  const auto norm = j.at("norm_style").get<std::string>();
  if (norm == "PRE") {
    m.norm_style = NormStyle::kPre;
  } else if (norm == "POST") {
    m.norm_style = NormStyle::kPost;
  } else {
    raise(ErrorCode::kMalformedHeader, "manifest: norm_style must be PRE or POST, got '" + norm + "'");
  }
  m.head_hidden = j.at("head_hidden").get<std::vector<std::uint32_t>>();
  if (j.contains("fields_required")) {
    std::string declared;
    for (const auto& f : j.at("fields_required")) declared += f.get<std::string>();
    std::string expected;
    for (Field f : m.fields_required()) expected += field_letter(f);
    if (declared != expected) {
      raise(ErrorCode::kMalformedHeader, "manifest: fields_required " + declared + " does not match kind " +
                                             std::string(manifest_name(m.like)) + " (" + expected + ")");
    }
  }
  if (require_checksum || j.contains("checksum")) m.checksum = parse_digest(j.at("checksum").get<std::string>());
  try {
    check_manifest(m);
  } catch (const Error& e) {
    raise(ErrorCode::kMalformedHeader, e.what());
  }
  return m;
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace detail

inline std::string manifest_json(const ModelManifest& m) { return detail::manifest_to_json(m, true).dump(); }

/// One tensor handed to write_container. Bytes are little-endian element data.
struct TensorInput {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

inline TensorInput make_tensor(std::string name, const Shape& shape, std::span<const float> values,
                               DType dtype = DType::kF32) {
  TensorInput t{std::move(name), dtype, shape, {}};
  if (dtype == DType::kF32) {
    t.bytes.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) t.bytes[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  } else {
    t.bytes.resize(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = to_half(values[i]).bits;
      t.bytes[2 * i] = static_cast<std::uint8_t>(bits & 0xff);
      t.bytes[2 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
    }
  }
  return t;
}

/// Writes a container and returns the manifest as stored (with checksum).
inline ModelManifest write_container(ModelManifest manifest, std::span<const TensorInput> tensors,
                                     const std::filesystem::path& path) {
  {
    std::map<std::string_view, std::size_t> seen;
    for (const auto& t : tensors) {
      if (t.name.empty()) raise(ErrorCode::kDuplicateName, "tensor name must be non-empty");
      if (!seen.emplace(t.name, 0).second) raise(ErrorCode::kDuplicateName, "duplicate tensor name '" + t.name + "'");
      for (auto d : t.shape) {
        if (d == 0) raise(ErrorCode::kLengthMismatch, "tensor '" + t.name + "' has a zero dimension");
      }
      const auto expected = dtype_size(t.dtype) * element_count(t.shape);
      if (t.bytes.size() != expected) {
        raise(ErrorCode::kLengthMismatch, "tensor '" + t.name + "': " + std::to_string(t.bytes.size()) +
                                              " bytes given, dtype x shape needs " + std::to_string(expected));
      }
    }
  }

  static constexpr std::uint8_t kZeros[kAlignment] = {};
  Sha256 hasher;
  std::vector<TensorSpec> index;
  std::uint64_t cursor = 0;
  for (const auto& t : tensors) {
    TensorSpec spec{t.name, t.dtype, t.shape, cursor, t.bytes.size()};
    hasher.update(t.bytes);
    const auto padded = align_up(t.bytes.size());
    hasher.update({kZeros, static_cast<std::size_t>(padded - t.bytes.size())});
    cursor += padded;
    index.push_back(std::move(spec));
  }
  manifest.checksum = hasher.finish();

  nlohmann::json header;
  header["manifest"] = detail::manifest_to_json(manifest, true);
  header["payload_size"] = cursor;
  auto jt = nlohmann::json::array();
  for (const auto& s : index) {
    jt.push_back({{"name", s.name},
                  {"dtype", std::string(dtype_name(s.dtype))},
                  {"shape", s.shape},
                  {"offset", s.offset},
                  {"nbytes", s.nbytes}});
  }
  header["tensors"] = jt;
  const std::string header_text = header.dump();

  std::string prefix(kContainerMagic);
  detail::put_u32le(prefix, static_cast<std::uint32_t>(header_text.size()));
  prefix += header_text;
  prefix.resize(align_up(prefix.size()), '\0');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
    const auto pad = align_up(t.bytes.size()) - t.bytes.size();
    out.write(reinterpret_cast<const char*>(kZeros), static_cast<std::streamsize>(pad));
  }
  out.flush();
  if (!out) raise(ErrorCode::kIo, "write to '" + path.string() + "' failed");
  return manifest;
}

enum class Backing { kMmap, kEager };

/// Read-only typed view of one tensor inside an open container.
class TensorView {
 public:
  TensorView(const TensorSpec* spec, const std::uint8_t* data) : spec_(spec), data_(data) {}

  const std::string& name() const { return spec_->name; }
  DType dtype() const { return spec_->dtype; }
  const Shape& shape() const { return spec_->shape; }
  std::size_t size() const { return static_cast<std::size_t>(element_count(spec_->shape)); }
  std::span<const std::uint8_t> bytes() const { return {data_, static_cast<std::size_t>(spec_->nbytes)}; }

  float at(std::size_t i) const {
    if (spec_->dtype == DType::kF32) {
      std::uint32_t bits;
      std::memcpy(&bits, data_ + 4 * i, 4);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      return std::bit_cast<float>(bits);
    }
    std::uint16_t bits;
    std::memcpy(&bits, data_ + 2 * i, 2);
    if constexpr (std::endian::native == std::endian::big) bits = static_cast<std::uint16_t>(bits << 8 | bits >> 8);
    return to_float(Half{bits});
  }

  std::vector<float> to_floats() const {
    std::vector<float> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
    return out;
  }

  /// Zero-copy float view; only available for F32 tensors on little-endian hosts.
  std::optional<std::span<const float>> as_f32() const {
    if constexpr (std::endian::native == std::endian::little) {
      if (spec_->dtype == DType::kF32 && reinterpret_cast<std::uintptr_t>(data_) % alignof(float) == 0) {
        return std::span<const float>(reinterpret_cast<const float*>(data_), size());
      }
    }
    return std::nullopt;
  }

 private:
  static std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  }

  const TensorSpec* spec_;
  const std::uint8_t* data_;
};

namespace detail {

class MappedFile {
 public:
  MappedFile(void* addr, std::size_t size) : addr_(addr), size_(size) {}
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  ~MappedFile() {
    if (addr_ && size_) ::munmap(addr_, size_);
  }
  const std::uint8_t* data() const { return static_cast<const std::uint8_t*>(addr_); }
  std::size_t size() const { return size_; }

 private:
  void* addr_;
  std::size_t size_;
};

struct AlignedDelete {
  void operator()(std::uint8_t* p) const { ::operator delete[](p, std::align_val_t{kAlignment}); }
};

using AlignedBuffer = std::unique_ptr<std::uint8_t[], AlignedDelete>;

inline AlignedBuffer make_aligned(std::size_t n) {
  return AlignedBuffer(static_cast<std::uint8_t*>(::operator new[](std::max<std::size_t>(n, 1), std::align_val_t{kAlignment})));
}

class FileDescriptor {
 public:
  explicit FileDescriptor(const std::filesystem::path& path) : fd_(::open(path.c_str(), O_RDONLY | O_CLOEXEC)) {
    if (fd_ < 0) raise(ErrorCode::kNotFound, "cannot open model '" + path.string() + "': " + std::strerror(errno));
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() { ::close(fd_); }
  int get() const { return fd_; }

 private:
  int fd_;
};

inline void read_exact(int fd, std::uint8_t* dst, std::size_t n, std::uint64_t offset, const std::string& what) {
  std::size_t done = 0;
  while (done < n) {
    const auto got = ::pread(fd, dst + done, n - done, static_cast<off_t>(offset + done));
    if (got < 0) {
      if (errno == EINTR) continue;
      raise(ErrorCode::kIo, "read of " + what + " failed: " + std::strerror(errno));
    }
    if (got == 0) raise(ErrorCode::kTruncated, what + " is truncated");
    done += static_cast<std::size_t>(got);
  }
}

struct ParsedHeader {
  ModelManifest manifest;
  std::vector<TensorSpec> tensors;
  std::uint64_t payload_offset = 0;
  std::uint64_t payload_size = 0;
};

inline ParsedHeader parse_header(std::span<const std::uint8_t> prefix, std::uint64_t file_size,
                                 const std::string& where) {
  if (file_size < 12 || prefix.size() < 12) raise(ErrorCode::kTruncated, where + ": file too short for a container header");
  if (std::memcmp(prefix.data(), kContainerMagic.data(), kContainerMagic.size()) != 0) {
    raise(ErrorCode::kBadMagic, where + ": bad magic (not a metricforge container)");
  }
  const std::uint32_t header_len = get_u32le(prefix.data() + 8);
  if (12 + static_cast<std::uint64_t>(header_len) > file_size || prefix.size() < 12 + header_len) {
    raise(ErrorCode::kTruncated, where + ": header extends past end of file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(prefix.begin() + 12, prefix.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kMalformedHeader, where + ": header is not valid JSON: " + e.what());
  }
  ParsedHeader out;
  try {
    out.manifest = manifest_from_json(header.at("manifest"), true);
    out.payload_size = header.at("payload_size").get<std::uint64_t>();
    for (const auto& jt : header.at("tensors")) {
      TensorSpec s;
      s.name = jt.at("name").get<std::string>();
      auto dt = parse_dtype(jt.at("dtype").get<std::string>());
      if (!dt) raise(ErrorCode::kMalformedHeader, where + ": tensor '" + s.name + "' has unknown dtype");
      s.dtype = *dt;
      s.shape = jt.at("shape").get<Shape>();
      s.offset = jt.at("offset").get<std::uint64_t>();
      s.nbytes = jt.at("nbytes").get<std::uint64_t>();
      out.tensors.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kMalformedHeader, where + ": malformed header: " + e.what());
  }
  out.payload_offset = align_up(12 + static_cast<std::uint64_t>(header_len));
  if (out.payload_offset + out.payload_size > file_size) {
    raise(ErrorCode::kTruncated, where + ": payload extends past end of file (" + std::to_string(file_size) +
                                     " bytes, need " + std::to_string(out.payload_offset + out.payload_size) + ")");
  }
  return out;
}

}  // namespace detail

/// Checks the tensor index: unique non-empty names, aligned offsets,
/// consistent byte lengths, regions inside the payload and non-overlapping.
inline void validate_index(std::span<const TensorSpec> tensors, std::uint64_t payload_size) {
  std::vector<const TensorSpec*> by_offset;
  std::map<std::string_view, int> names;
  for (const auto& t : tensors) {
    if (t.name.empty()) raise(ErrorCode::kMalformedHeader, "tensor with empty name");
    if (!names.emplace(t.name, 0).second) raise(ErrorCode::kMalformedHeader, "duplicate tensor name '" + t.name + "'");
    for (auto d : t.shape) {
      if (d == 0) raise(ErrorCode::kMalformedHeader, "tensor '" + t.name + "' has a zero dimension");
    }
    if (t.offset % kAlignment != 0) {
      raise(ErrorCode::kMalformedHeader, "tensor '" + t.name + "' offset " + std::to_string(t.offset) + " is not 64-byte aligned");
    }
    if (t.nbytes != dtype_size(t.dtype) * element_count(t.shape)) {
      raise(ErrorCode::kMalformedHeader, "tensor '" + t.name + "' nbytes disagrees with dtype x shape");
    }
    if (t.offset > payload_size || t.nbytes > payload_size - t.offset) {
      raise(ErrorCode::kMalformedHeader, "tensor '" + t.name + "' lies outside the payload");
    }
    by_offset.push_back(&t);
  }
  std::sort(by_offset.begin(), by_offset.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i - 1]->offset + by_offset[i - 1]->nbytes > by_offset[i]->offset) {
      raise(ErrorCode::kMalformedHeader,
            "tensors '" + by_offset[i - 1]->name + "' and '" + by_offset[i]->name + "' overlap");
    }
  }
}

/// An opened container. Immutable; copies share the same backing storage.
class ModelContainer {
 public:
  const ModelManifest& manifest() const { return state_->manifest; }
  Backing backing() const { return state_->backing; }
  const std::filesystem::path& path() const { return state_->path; }

  /// Tensor index in file order.
  const std::vector<TensorSpec>& tensors() const { return state_->tensors; }

  bool contains(std::string_view name) const { return state_->by_name.count(std::string(name)) != 0; }

  TensorView tensor(std::string_view name) const {
    auto it = state_->by_name.find(std::string(name));
    if (it == state_->by_name.end()) raise(ErrorCode::kUnknownTensor, "unknown tensor '" + std::string(name) + "'");
    const TensorSpec& spec = state_->tensors[it->second];
    return TensorView(&spec, state_->payload + spec.offset);
  }

  std::span<const std::uint8_t> payload() const { return {state_->payload, static_cast<std::size_t>(state_->payload_size)}; }

  /// Recomputes the payload digest and compares it against the manifest.
  void verify_checksum() const {
    Sha256 hasher;
    constexpr std::size_t kChunk = 1 << 20;
    for (std::uint64_t pos = 0; pos < state_->payload_size; pos += kChunk) {
      const auto n = std::min<std::uint64_t>(kChunk, state_->payload_size - pos);
      hasher.update({state_->payload + pos, static_cast<std::size_t>(n)});
    }
    if (hasher.finish() != state_->manifest.checksum) {
      raise(ErrorCode::kChecksumMismatch, "payload checksum mismatch in '" + state_->path.string() + "'");
    }
  }

 private:
  struct State {
    ModelManifest manifest;
    std::vector<TensorSpec> tensors;
    std::map<std::string, std::size_t> by_name;
    Backing backing = Backing::kMmap;
    std::filesystem::path path;
    std::unique_ptr<detail::MappedFile> mapping;
    detail::AlignedBuffer buffer;
    const std::uint8_t* payload = nullptr;
    std::uint64_t payload_size = 0;
  };

  explicit ModelContainer(std::shared_ptr<const State> s) : state_(std::move(s)) {}

  friend ModelContainer open_container(const std::filesystem::path&, Backing, bool);

  std::shared_ptr<const State> state_;
};

inline ModelContainer open_container(const std::filesystem::path& path, Backing backing = Backing::kMmap,
                                     bool validate = true) {
  detail::FileDescriptor fd(path);
  struct stat st {};
  if (::fstat(fd.get(), &st) != 0) raise(ErrorCode::kIo, "stat of '" + path.string() + "' failed");
  const auto file_size = static_cast<std::uint64_t>(st.st_size);
  const std::string where = path.string();

  auto state = std::make_shared<ModelContainer::State>();
  state->backing = backing;
  state->path = path;

  detail::ParsedHeader parsed;
  if (backing == Backing::kMmap) {
    if (file_size == 0) raise(ErrorCode::kTruncated, where + ": empty file");
    void* addr = ::mmap(nullptr, file_size, PROT_READ, MAP_SHARED, fd.get(), 0);
    if (addr == MAP_FAILED) raise(ErrorCode::kIo, "mmap of '" + where + "' failed: " + std::strerror(errno));
    state->mapping = std::make_unique<detail::MappedFile>(addr, file_size);
    const std::uint8_t* base = state->mapping->data();
    std::uint32_t header_len = file_size >= 12 ? detail::get_u32le(base + 8) : 0;
    const auto prefix_len = std::min<std::uint64_t>(file_size, 12 + static_cast<std::uint64_t>(header_len));
    parsed = detail::parse_header({base, static_cast<std::size_t>(prefix_len)}, file_size, where);
    state->payload = base + parsed.payload_offset;
  } else {
    std::uint8_t fixed[12] = {};
    detail::read_exact(fd.get(), fixed, std::min<std::uint64_t>(12, file_size), 0, where);
    if (file_size < 12) detail::parse_header({fixed, static_cast<std::size_t>(file_size)}, file_size, where);
    const std::uint32_t header_len = detail::get_u32le(fixed + 8);
    if (std::memcmp(fixed, kContainerMagic.data(), kContainerMagic.size()) != 0) {
      raise(ErrorCode::kBadMagic, where + ": bad magic (not a metricforge container)");
    }
    if (12 + static_cast<std::uint64_t>(header_len) > file_size) {
      raise(ErrorCode::kTruncated, where + ": header extends past end of file");
    }
    std::vector<std::uint8_t> prefix(12 + header_len);
    std::memcpy(prefix.data(), fixed, 12);
    detail::read_exact(fd.get(), prefix.data() + 12, header_len, 12, where);
    parsed = detail::parse_header(prefix, file_size, where);
    state->buffer = detail::make_aligned(static_cast<std::size_t>(parsed.payload_size));
    detail::read_exact(fd.get(), state->buffer.get(), static_cast<std::size_t>(parsed.payload_size),
                       parsed.payload_offset, where);
    state->payload = state->buffer.get();
  }

  try {
    validate_index(parsed.tensors, parsed.payload_size);
  } catch (const Error& e) {
    raise(e.code(), where + ": " + e.what());
  }
  state->manifest = std::move(parsed.manifest);
  state->tensors = std::move(parsed.tensors);
  state->payload_size = parsed.payload_size;
  for (std::size_t i = 0; i < state->tensors.size(); ++i) state->by_name.emplace(state->tensors[i].name, i);

  ModelContainer container(std::move(state));
  if (validate) container.verify_checksum();
  return container;
}

/// Reads an interchange directory (manifest.json, tensors.json and one
/// <name>.bin per tensor) and writes a container. Returns the stored manifest.
inline ModelManifest convert_interchange(const std::filesystem::path& dir, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  auto load_json = [&](const fs::path& p) {
    std::ifstream in(p);
    if (!in) raise(ErrorCode::kNotFound, "missing interchange file '" + p.string() + "'");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::kMalformedHeader, "malformed interchange file '" + p.string() + "': " + e.what());
    }
  };
  const auto manifest_path = dir / "manifest.json";
  const auto index_path = dir / "tensors.json";
  const auto jm = load_json(manifest_path);
  ModelManifest manifest;
  try {
    manifest = detail::manifest_from_json(jm, false);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kMalformedHeader, "malformed interchange file '" + manifest_path.string() + "': " + e.what());
  } catch (const Error& e) {
    raise(e.code(), "malformed interchange file '" + manifest_path.string() + "': " + e.what());
  }
  const auto ji = load_json(index_path);
  std::vector<TensorInput> tensors;
  try {
    for (const auto& entry : ji) {
      TensorInput t;
      t.name = entry.at("name").get<std::string>();
      auto dt = parse_dtype(entry.at("dtype").get<std::string>());
      if (!dt) raise(ErrorCode::kMalformedHeader, "tensor '" + t.name + "' has unknown dtype");
      t.dtype = *dt;
      t.shape = entry.at("shape").get<Shape>();
      const auto bin = dir / (t.name + ".bin");
      std::ifstream in(bin, std::ios::binary);
      if (!in) raise(ErrorCode::kNotFound, "missing tensor file '" + bin.string() + "'");
      t.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      const auto expected = dtype_size(t.dtype) * element_count(t.shape);
      if (t.bytes.size() != expected) {
        raise(ErrorCode::kLengthMismatch, "tensor file '" + bin.string() + "' has " + std::to_string(t.bytes.size()) +
                                              " bytes, expected " + std::to_string(expected));
      }
      tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kMalformedHeader, "malformed interchange file '" + index_path.string() + "': " + e.what());
  }
  return write_container(manifest, tensors, out);
}

/// Writes the interchange layout for a set of tensors (test fixtures and
/// round-trips through the converter).
inline void write_interchange(const ModelManifest& manifest, std::span<const TensorInput> tensors,
                              const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    out << detail::manifest_to_json(manifest, false).dump(2) << '\n';
  }
  auto index = nlohmann::json::array();
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"dtype", std::string(dtype_name(t.dtype))}, {"shape", t.shape}});
    std::ofstream out(dir / (t.name + ".bin"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
    if (!out) raise(ErrorCode::kIo, "cannot write tensor file for '" + t.name + "'");
  }
  std::ofstream out(dir / "tensors.json");
  out << index.dump(2) << '\n';
}

}  // namespace metricforge
