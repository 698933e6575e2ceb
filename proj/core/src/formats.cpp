#include "shiftdet/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "shiftdet/config.hpp"

namespace shiftdet {

namespace {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

constexpr char kFrameMagic[4] = {'S', 'R', 'V', 'F'};
constexpr char kCheckpointMagic[4] = {'S', 'R', 'C', 'K'};
constexpr std::uint8_t kFlagFrozen = 1;

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
  Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  const char* what_;
};

void check_magic(Reader& r, const char (&magic)[4], const char* what) {
  if (std::memcmp(r.take(4), magic, 4) != 0) throw FormatError(std::string(what) + ": bad magic");
}

}  // namespace

std::vector<std::uint8_t> encode_frame_container(const FrameContainer& video) {
  const std::size_t expected =
      static_cast<std::size_t>(video.frames) * video.channels * video.height * video.width;
  if (video.samples.size() != expected) {
    throw ContractError("frame container: sample count " + std::to_string(video.samples.size()) +
                        " does not match header " + std::to_string(expected));
  }
  Writer w;
  w.put_bytes(kFrameMagic, 4);
  w.put(FrameContainer::kVersion);
  w.put(video.frames);
  w.put(video.height);
  w.put(video.width);
  w.put(video.channels);
  w.put_bytes(video.samples.data(), video.samples.size());
  return std::move(w.bytes());
}

FrameContainer decode_frame_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "frame container");
  check_magic(r, kFrameMagic, "frame container");
  const auto version = r.get<std::uint32_t>();
  if (version != FrameContainer::kVersion) {
    throw FormatError("frame container: unsupported version " + std::to_string(version));
  }
  FrameContainer v;
  v.frames = r.get<std::uint32_t>();
  v.height = r.get<std::uint32_t>();
  v.width = r.get<std::uint32_t>();
  v.channels = r.get<std::uint32_t>();
  if (v.frames == 0 || v.height == 0 || v.width == 0 || v.channels == 0) {
    throw FormatError("frame container: zero extent in header");
  }
  const std::uint64_t n = static_cast<std::uint64_t>(v.frames) * v.channels * v.height * v.width;
  if (n != r.remaining()) {
    throw FormatError("frame container: payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(n));
  }
  const auto* p = r.take(n);
  v.samples.assign(p, p + n);
  return v;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config, const ParamStore& params) {
  const std::string text = config.canonical();
  Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(Checkpoint::kVersion);
  w.put(fnv1a64(text.data(), text.size()));
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  w.put(static_cast<std::uint64_t>(params.step_count()));
  w.put(static_cast<std::uint32_t>(params.params().size()));
  std::uint64_t offset = 0;
  for (const auto& p : params.params()) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("checkpoint: parameter name too long");
    }
    w.put(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    w.put(static_cast<std::uint8_t>(p.frozen ? kFlagFrozen : 0));
    w.put(static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put(offset);
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  w.put(offset);
  for (const auto& p : params.params()) {
    w.put_bytes(p.value.ptr(), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  check_magic(r, kCheckpointMagic, "checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto digest = r.get<std::uint64_t>();
  const auto text_len = r.get<std::uint32_t>();
  const auto* text_ptr = reinterpret_cast<const char*>(r.take(text_len));
  const std::string text(text_ptr, text_len);
  if (fnv1a64(text.data(), text.size()) != digest) throw FormatError("checkpoint: config digest mismatch");

  Checkpoint ck;
  try {
    ck.config = parse_model_config_text(text);
    ck.config.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: embedded config invalid: ") + e.what());
  }
  if (ck.config.canonical() != text) throw FormatError("checkpoint: embedded config is not canonical");

  ck.params.set_step_count(static_cast<std::int64_t>(r.get<std::uint64_t>()));
  const auto count = r.get<std::uint32_t>();
  struct Entry {
    std::string name;
    bool frozen;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = r.get<std::uint16_t>();
    const auto* np = reinterpret_cast<const char*>(r.take(name_len));
    e.name.assign(np, name_len);
    const auto flags = r.get<std::uint8_t>();
    if (flags & ~kFlagFrozen) throw FormatError("checkpoint: unknown flags on '" + e.name + "'");
    e.frozen = (flags & kFlagFrozen) != 0;
    const auto rank = r.get<std::uint8_t>();
    if (rank == 0) throw FormatError("checkpoint: zero-rank entry '" + e.name + "'");
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint32_t>();
      if (extent == 0) throw FormatError("checkpoint: zero extent in '" + e.name + "'");
      e.shape.push_back(extent);
      elements *= extent;
    }
    e.offset = r.get<std::uint64_t>();
    if (e.offset != expected_offset) throw FormatError("checkpoint: non-contiguous offset for '" + e.name + "'");
    expected_offset += elements;
    entries.push_back(std::move(e));
  }
  const auto total = r.get<std::uint64_t>();
  if (total != expected_offset) throw FormatError("checkpoint: element count does not match manifest");
  if (r.remaining() != total * sizeof(float)) {
    throw FormatError("checkpoint: payload holds " + std::to_string(r.remaining()) + " bytes, manifest implies " +
                      std::to_string(total * sizeof(float)));
  }
  for (auto& e : entries) {
    if (ck.params.contains(e.name)) throw FormatError("checkpoint: duplicate entry '" + e.name + "'");
    auto& p = ck.params.add(e.name, e.shape, e.frozen);
    std::memcpy(p.value.ptr(), r.take(static_cast<std::size_t>(p.value.size()) * sizeof(float)),
                static_cast<std::size_t>(p.value.size()) * sizeof(float));
    if (!p.value.all_finite()) throw FormatError("checkpoint: non-finite values in '" + e.name + "'");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamStore& params) {
  write_file_atomic(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError("read error on '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw FormatError("write error on '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace shiftdet
