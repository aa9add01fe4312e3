#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spate {

/// Shape of a (B, T, C, H, W) raster batch.
struct Dims {
  std::size_t batch = 1;
  std::size_t time = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t frame_size() const noexcept { return channels * height * width; }
  std::size_t sequence_size() const noexcept { return time * frame_size(); }
  std::size_t size() const noexcept { return batch * sequence_size(); }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& dims);

/// Dense batch of raster sequences, laid out b-major, then t, then c, then
/// row-major (h, w). Values are always finite.
class SpatioTemporalBatch {
 public:
  SpatioTemporalBatch(Dims dims, std::vector<double> values);

  static SpatioTemporalBatch zeros(Dims dims);

  const Dims& dims() const noexcept { return dims_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> mutable_values() noexcept { return values_; }

  std::size_t offset(std::size_t b, std::size_t t, std::size_t c, std::size_t h,
                     std::size_t w) const noexcept {
    return (((b * dims_.time + t) * dims_.channels + c) * dims_.height + h) * dims_.width + w;
  }
  double at(std::size_t b, std::size_t t, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[offset(b, t, c, h, w)];
  }
  double& at(std::size_t b, std::size_t t, std::size_t c, std::size_t h, std::size_t w) {
    return values_[offset(b, t, c, h, w)];
  }

  /// All T*C*H*W values of item b.
  std::span<const double> sequence(std::size_t b) const;
  std::span<double> mutable_sequence(std::size_t b);
  /// The H*W values of frame (b, t, c).
  std::span<const double> frame(std::size_t b, std::size_t t, std::size_t c) const;

  /// Items `indices` (in that order) as a new batch.
  SpatioTemporalBatch select_items(std::span<const std::size_t> indices) const;
  /// A single channel as a C=1 batch.
  SpatioTemporalBatch channel(std::size_t c) const;

  friend bool operator==(const SpatioTemporalBatch&, const SpatioTemporalBatch&) = default;

 private:
  Dims dims_;
  std::vector<double> values_;
};

/// Throws ValidationError unless every dimension is at least one.
void validate_dims(const Dims& dims);

// STGK container: "STGK", version 1, dtype 0 (f64 LE), two reserved zero
// bytes, five u32 LE dims (B,T,C,H,W), then 8*B*T*C*H*W payload bytes.
inline constexpr std::size_t kStgkHeaderSize = 28;

std::vector<std::uint8_t> encode_stgk(const SpatioTemporalBatch& batch);
SpatioTemporalBatch decode_stgk(std::span<const std::uint8_t> bytes);
void write_stgk(const SpatioTemporalBatch& batch, const std::filesystem::path& path);
SpatioTemporalBatch read_stgk(const std::filesystem::path& path);

// CSV frames: one frame row (W values) per line, B*T*C*H lines in layout order.
std::string encode_csv_frames(const SpatioTemporalBatch& batch);
SpatioTemporalBatch decode_csv_frames(const std::string& text, const Dims& dims);
void write_csv_frames(const SpatioTemporalBatch& batch, const std::filesystem::path& path);
SpatioTemporalBatch read_csv_frames(const std::filesystem::path& path, const Dims& dims);

/// Binary 8-bit PGM (P5) of one frame, min -> 0 and max -> 255; a constant
/// frame renders as 128 everywhere.
std::vector<std::uint8_t> encode_pgm(const SpatioTemporalBatch& batch, std::size_t b,
                                     std::size_t t, std::size_t c);
void render_pgm(const SpatioTemporalBatch& batch, std::size_t b, std::size_t t, std::size_t c,
                const std::filesystem::path& path);

/// Scales a row-major gray image into 8-bit levels with the PGM convention above.
std::vector<std::uint8_t> scale_to_gray(std::span<const double> pixels);
std::vector<std::uint8_t> encode_pgm_image(std::size_t height, std::size_t width,
                                           std::span<const std::uint8_t> gray);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace spate
