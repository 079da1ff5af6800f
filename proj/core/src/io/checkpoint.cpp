#include "pft/io/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "pft/error.hpp"

namespace pft {
namespace {

static_assert(std::endian::native == std::endian::little, "container encoding assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'F', 'T', '1'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 8;

class Writer {
 public:
  template <typename T>
  void put(T v) {
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
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw FormatError("container entry runs past the end of the payload");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

void Container::put(std::string name, std::vector<std::size_t> shape, std::vector<double> values) {
  if (element_count(shape) != values.size()) {
    throw ShapeError("container entry '" + name + "': shape does not match value count");
  }
  if (has(name)) throw ContractError("container entry '" + name + "' written twice");
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
}

void Container::put(std::string name, const Tensor& t) {
  const auto v = t.values();
  put(std::move(name), t.shape(), std::vector<double>(v.begin(), v.end()));
}

void Container::put_scalar(std::string name, double v) { put(std::move(name), {}, {v}); }

void Container::put_text(std::string name, const std::string& text) {
  std::vector<double> v;
  v.reserve(text.size());
  for (const char c : text) v.push_back(static_cast<double>(static_cast<unsigned char>(c)));
  put(std::move(name), {text.size()}, std::move(v));
}

bool Container::has(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Entry& Container::get(const std::string& name) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  if (it == entries_.end()) throw FormatError("container has no entry '" + name + "'");
  return *it;
}

Tensor Container::tensor(const std::string& name) const {
  const Entry& e = get(name);
  return Tensor::from(e.shape, e.values);
}

double Container::scalar(const std::string& name) const {
  const Entry& e = get(name);
  if (e.values.size() != 1) throw FormatError("container entry '" + name + "' is not a scalar");
  return e.values.front();
}

std::string Container::text(const std::string& name) const {
  const Entry& e = get(name);
  std::string out;
  out.reserve(e.values.size());
  for (const double c : e.values) {
    if (!(c >= 0.0 && c <= 255.0) || c != static_cast<double>(static_cast<int>(c))) {
      throw FormatError("container entry '" + name + "' is not text");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> Container::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.name.starts_with(prefix)) out.push_back(e.name);
  return out;
}

std::vector<std::uint8_t> encode(const Container& c) {
  Writer payload;
  payload.put(static_cast<std::uint32_t>(c.entries().size()));
  for (const auto& e : c.entries()) {
    payload.put(static_cast<std::uint32_t>(e.name.size()));
    payload.put_bytes(e.name.data(), e.name.size());
    payload.put(static_cast<std::uint32_t>(e.shape.size()));
    for (const std::size_t d : e.shape) payload.put(static_cast<std::uint32_t>(d));
    payload.put_bytes(e.values.data(), e.values.size() * sizeof(double));
  }
  const auto& body = payload.bytes();

  Writer out;
  out.put_bytes(kMagic, sizeof kMagic);
  out.put(kContainerVersion);
  out.put(static_cast<std::uint64_t>(body.size()));
  out.put_bytes(body.data(), body.size());
  out.put(crc32_of(body));
  return std::move(out.bytes());
}

Container decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() < 4 && std::equal(bytes.begin(), bytes.end(), kMagic)) {
      throw TruncatedError("container ends inside the header", "bytes=" + std::to_string(bytes.size()));
    }
    throw FormatError("not a PFT1 container (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) throw TruncatedError("container ends inside the header", "bytes=" + std::to_string(bytes.size()));
  Reader header(bytes.subspan(4, kHeaderBytes - 4));
  const auto version = header.get<std::uint16_t>();
  if (version != kContainerVersion) {
    throw VersionError("unsupported container version", "found=" + std::to_string(version) +
                                                            " supported=" + std::to_string(kContainerVersion));
  }
  const auto payload_bytes = header.get<std::uint64_t>();
  const std::size_t available = bytes.size() - kHeaderBytes;
  if (payload_bytes > available || available - payload_bytes < 4) {
    throw TruncatedError("container is shorter than its declared length",
                         "declared=" + std::to_string(payload_bytes + kHeaderBytes + 4) + " actual=" + std::to_string(bytes.size()));
  }
  if (available - payload_bytes > 4) throw FormatError("trailing bytes after container checksum");
  const auto payload = bytes.subspan(kHeaderBytes, payload_bytes);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + kHeaderBytes + payload_bytes, 4);
  const std::uint32_t actual = crc32_of(payload);
  if (stored != actual) throw ChecksumError("container checksum mismatch", "stored=" + std::to_string(stored) + " computed=" + std::to_string(actual));

  Reader r(payload);
  Container c;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_bytes = r.get<std::uint32_t>();
    if (name_bytes > r.remaining()) throw FormatError("container entry name runs past the end of the payload");
    std::string name(name_bytes, '\0');
    r.get_bytes(name.data(), name.size());
    if (c.has(name)) throw FormatError("container entry '" + name + "' appears twice");
    const auto rank = r.get<std::uint32_t>();
    if (rank > r.remaining() / 4) throw FormatError("container entry '" + name + "' has an impossible rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t n = element_count(shape);
    if (n > r.remaining() / sizeof(double)) throw FormatError("container entry '" + name + "' runs past the end of the payload");
    std::vector<double> values(n);
    r.get_bytes(values.data(), n * sizeof(double));
    c.put(std::move(name), std::move(shape), std::move(values));
  }
  if (r.remaining() != 0) throw FormatError("unparsed bytes at the end of the container payload");
  return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing", tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed", tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_container(const Container& c, const std::filesystem::path& path) { write_file(path, encode(c)); }

Container load_container(const std::filesystem::path& path) {
  try {
    return decode(read_file(path));
  } catch (const Error& e) {
    if (dynamic_cast<const IoError*>(&e) != nullptr) throw;
    // Re-raise the same error type with the file name attached.
    const std::string ctx = path.string() + (e.context().empty() ? "" : ": " + e.context());
    if (dynamic_cast<const ChecksumError*>(&e)) throw ChecksumError(e.what(), ctx);
    if (dynamic_cast<const VersionError*>(&e)) throw VersionError(e.what(), ctx);
    if (dynamic_cast<const TruncatedError*>(&e)) throw TruncatedError(e.what(), ctx);
    if (dynamic_cast<const FormatError*>(&e)) throw FormatError(e.what(), ctx);
    throw;
  }
}

}  // namespace pft
