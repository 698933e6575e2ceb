#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "shiftdet/model_config.hpp"
#include "shiftdet/param_store.hpp"

namespace shiftdet {

/// Malformed or inconsistent on-disk data (bad magic, digest, truncation,
/// missing files).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw video frames: "SRVF", u32 version, u32 frames, u32 height, u32 width,
/// u32 channels, then frames*channels*height*width u8 samples indexed
/// ((t * C + c) * H + y) * W + x. All integers little-endian.
struct FrameContainer {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 3;
  std::vector<std::uint8_t> samples;

  std::size_t index(std::uint32_t t, std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return ((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x;
  }
  bool operator==(const FrameContainer&) const = default;
};

std::vector<std::uint8_t> encode_frame_container(const FrameContainer& video);
FrameContainer decode_frame_container(std::span<const std::uint8_t> bytes);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  ParamStore params;
};

/// "SRCK" checkpoint: header (magic, version, config digest, canonical config
/// text, step count), a manifest of (name, flags, shape, offset) entries in
/// parameter order, then contiguous little-endian f32 payload.
std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config, const ParamStore& params);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamStore& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial data.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace shiftdet
