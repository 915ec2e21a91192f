#include "weldcam/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "weldcam/errors.hpp"

namespace weldcam::io {

namespace {

constexpr std::uint8_t kDtypeFloat64 = 1;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void little_endian(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw TruncatedFileError(std::string("truncated container: ") + what + " needs " +
                               std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                               ", only " + std::to_string(bytes_.size() - pos_) + " remain");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename T>
  T little_endian(const char* what) {
    auto raw = take(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    return static_cast<T>(v);
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string encode_metadata(const std::map<std::string, std::string>& metadata) {
  std::string out;
  for (const auto& [k, v] : metadata) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw SpecError("metadata entry '" + k + "' cannot be encoded");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

std::map<std::string, std::string> decode_metadata(std::string_view text) {
  std::map<std::string, std::string> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw FormatError("metadata block is not newline-terminated");
    const auto line = text.substr(0, nl);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) throw FormatError("malformed metadata line");
    out.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    text.remove_prefix(nl + 1);
  }
  return out;
}

}  // namespace

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw FormatError("container has no tensor named '" + name + "'");
}

const std::string& Container::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw FormatError("container metadata lacks '" + key + "'");
  return it->second;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_container(const Magic& magic, std::uint32_t version,
                                           const Container& container) {
  Writer w;
  w.bytes(magic.data(), magic.size());
  w.little_endian<std::uint32_t>(version);
  const std::string meta = encode_metadata(container.metadata);
  w.little_endian<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());
  w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& nt : container.tensors) {
    w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(nt.name.size()));
    w.bytes(nt.name.data(), nt.name.size());
    w.little_endian<std::uint8_t>(kDtypeFloat64);
    w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) w.little_endian<std::uint64_t>(d);
    w.little_endian<std::uint64_t>(nt.tensor.size() * 8);
    for (double v : nt.tensor.values()) w.little_endian<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.little_endian<std::uint32_t>(crc);
  return std::move(w.buffer());
}

Container decode_container(std::span<const std::uint8_t> bytes, const Magic& magic,
                           std::uint32_t version) {
  Reader r(bytes);
  auto got_magic = r.take(magic.size(), "magic");
  if (std::memcmp(got_magic.data(), magic.data(), magic.size()) != 0) {
    throw BadMagicError("not a '" + std::string(magic.data(), magic.size()) + "' container");
  }
  const auto got_version = r.little_endian<std::uint32_t>("version");
  if (got_version != version) {
    throw VersionMismatchError("container version " + std::to_string(got_version) +
                               ", this build reads version " + std::to_string(version));
  }

  Container out;
  const auto meta_len = r.little_endian<std::uint64_t>("metadata length");
  auto meta = r.take(static_cast<std::size_t>(std::min<std::uint64_t>(meta_len, SIZE_MAX)), "metadata");
  std::map<std::string, std::string> metadata =
      decode_metadata(std::string_view(reinterpret_cast<const char*>(meta.data()), meta.size()));

  const auto count = r.little_endian<std::uint32_t>("tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.little_endian<std::uint32_t>("tensor name length");
    auto name = r.take(name_len, "tensor name");
    const auto dtype = r.little_endian<std::uint8_t>("dtype");
    if (dtype != kDtypeFloat64) throw FormatError("unsupported dtype tag " + std::to_string(dtype));
    const auto rank = r.little_endian<std::uint32_t>("rank");
    if (static_cast<std::uint64_t>(rank) * 8 > r.remaining()) {
      throw TruncatedFileError("truncated container: rank " + std::to_string(rank) +
                               " exceeds remaining bytes");
    }
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& d : shape) {
      const auto extent = r.little_endian<std::uint64_t>("extent");
      if (extent == 0) throw FormatError("zero tensor extent");
      if (extent > r.remaining()) {
        throw TruncatedFileError("truncated container: extent " + std::to_string(extent) +
                                 " exceeds remaining bytes");
      }
      d = static_cast<std::size_t>(extent);
      elements *= extent;
    }
    const auto byte_len = r.little_endian<std::uint64_t>("payload length");
    if (byte_len > r.remaining()) {
      throw TruncatedFileError("truncated container: payload of " + std::to_string(byte_len) +
                               " bytes, only " + std::to_string(r.remaining()) + " remain");
    }
    if (byte_len != elements * 8) {
      throw FormatError("payload length " + std::to_string(byte_len) + " does not match shape " +
                        to_string(shape));
    }
    auto payload = r.take(static_cast<std::size_t>(byte_len), "payload");
    std::vector<double> values(static_cast<std::size_t>(elements));
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits = 0;
      for (std::size_t b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(payload[i * 8 + b]) << (8 * b);
      values[i] = std::bit_cast<double>(bits);
    }
    tensors.push_back({std::string(reinterpret_cast<const char*>(name.data()), name.size()),
                       Tensor(std::move(shape), std::move(values))});
  }

  const std::size_t body_end = r.position();
  const auto stored_crc = r.little_endian<std::uint32_t>("checksum");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checksum");
  const std::uint32_t crc = crc32_of(bytes.first(body_end));
  if (crc != stored_crc) throw ChecksumError("container checksum mismatch");

  out.metadata = std::move(metadata);
  out.tensors = std::move(tensors);
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_container(const std::filesystem::path& path, const Magic& magic, std::uint32_t version,
                     const Container& container) {
  write_bytes(path, encode_container(magic, version, container));
}

Container read_container(const std::filesystem::path& path, const Magic& magic,
                         std::uint32_t version) {
  return decode_container(read_bytes(path), magic, version);
}

}  // namespace weldcam::io
