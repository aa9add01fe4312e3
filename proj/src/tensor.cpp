#include "spate/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "spate/error.hpp"

namespace spate {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'S', 'T', 'G', 'K'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[pos + k]) << (8 * k);
  return v;
}

void put_f64(std::vector<std::uint8_t>& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

double get_f64(std::span<const std::uint8_t> in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(in[pos + k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

void check_all_finite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("dimension exceeds 32-bit range");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << d.batch << ',' << d.time << ',' << d.channels << ',' << d.height << ',' << d.width;
  return os.str();
}

void validate_dims(const Dims& d) {
  if (d.batch == 0 || d.time == 0 || d.channels == 0 || d.height == 0 || d.width == 0) {
    throw ValidationError("all dims must be >= 1, got (" + to_string(d) + ")");
  }
}

SpatioTemporalBatch::SpatioTemporalBatch(Dims dims, std::vector<double> values)
    : dims_(dims), values_(std::move(values)) {
  validate_dims(dims_);
  if (values_.size() != dims_.size()) {
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match dims (" +
                     to_string(dims_) + ")");
  }
  check_all_finite(values_);
}

SpatioTemporalBatch SpatioTemporalBatch::zeros(Dims dims) {
  validate_dims(dims);
  return SpatioTemporalBatch(dims, std::vector<double>(dims.size(), 0.0));
}

std::span<const double> SpatioTemporalBatch::sequence(std::size_t b) const {
  if (b >= dims_.batch) throw ValidationError("batch index out of range");
  return std::span<const double>(values_).subspan(b * dims_.sequence_size(), dims_.sequence_size());
}

std::span<double> SpatioTemporalBatch::mutable_sequence(std::size_t b) {
  if (b >= dims_.batch) throw ValidationError("batch index out of range");
  return std::span<double>(values_).subspan(b * dims_.sequence_size(), dims_.sequence_size());
}

std::span<const double> SpatioTemporalBatch::frame(std::size_t b, std::size_t t,
                                                   std::size_t c) const {
  if (b >= dims_.batch || t >= dims_.time || c >= dims_.channels) {
    throw ValidationError("frame index out of range");
  }
  return std::span<const double>(values_).subspan(offset(b, t, c, 0, 0), dims_.pixels());
}

SpatioTemporalBatch SpatioTemporalBatch::select_items(std::span<const std::size_t> indices) const {
  Dims out_dims = dims_;
  out_dims.batch = indices.size();
  std::vector<double> out;
  out.reserve(out_dims.size());
  for (const std::size_t b : indices) {
    const auto seq = sequence(b);
    out.insert(out.end(), seq.begin(), seq.end());
  }
  return SpatioTemporalBatch(out_dims, std::move(out));
}

SpatioTemporalBatch SpatioTemporalBatch::channel(std::size_t c) const {
  if (c >= dims_.channels) throw ValidationError("channel index out of range");
  Dims out_dims = dims_;
  out_dims.channels = 1;
  std::vector<double> out;
  out.reserve(out_dims.size());
  for (std::size_t b = 0; b < dims_.batch; ++b) {
    for (std::size_t t = 0; t < dims_.time; ++t) {
      const auto f = frame(b, t, c);
      out.insert(out.end(), f.begin(), f.end());
    }
  }
  return SpatioTemporalBatch(out_dims, std::move(out));
}

std::vector<std::uint8_t> encode_stgk(const SpatioTemporalBatch& batch) {
  const Dims& d = batch.dims();
  std::vector<std::uint8_t> out;
  out.reserve(kStgkHeaderSize + 8 * d.size());
  for (const std::uint8_t byte : kMagic) out.push_back(byte);
  out.push_back(kVersion);
  out.push_back(kDtypeF64);
  out.push_back(0);
  out.push_back(0);
  for (const std::size_t v : {d.batch, d.time, d.channels, d.height, d.width}) {
    put_u32(out, checked_u32(v));
  }
  for (const double x : batch.values()) put_f64(out, x);
  return out;
}

SpatioTemporalBatch decode_stgk(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kStgkHeaderSize) throw LengthError("STGK header truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("bad STGK magic");
  }
  if (bytes[4] != kVersion) throw FormatError("unsupported STGK version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeF64) throw FormatError("unsupported STGK dtype " + std::to_string(bytes[5]));
  if (bytes[6] != 0 || bytes[7] != 0) throw FormatError("STGK reserved bytes must be zero");

  Dims d{get_u32(bytes, 8), get_u32(bytes, 12), get_u32(bytes, 16), get_u32(bytes, 20),
         get_u32(bytes, 24)};
  validate_dims(d);
  const std::size_t payload = bytes.size() - kStgkHeaderSize;
  if (payload != 8 * d.size()) {
    throw LengthError("STGK payload is " + std::to_string(payload) + " bytes, header declares " +
                      std::to_string(8 * d.size()));
  }
  std::vector<double> values(d.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = get_f64(bytes, kStgkHeaderSize + 8 * i);
  }
  return SpatioTemporalBatch(d, std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_stgk(const SpatioTemporalBatch& batch, const std::filesystem::path& path) {
  write_file_bytes(path, encode_stgk(batch));
}

SpatioTemporalBatch read_stgk(const std::filesystem::path& path) {
  return decode_stgk(read_file_bytes(path));
}

std::string encode_csv_frames(const SpatioTemporalBatch& batch) {
  const Dims& d = batch.dims();
  const auto values = batch.values();
  std::string out;
  char buf[32];
  for (std::size_t row = 0; row < d.batch * d.time * d.channels * d.height; ++row) {
    for (std::size_t w = 0; w < d.width; ++w) {
      if (w > 0) out.push_back(',');
      const int n = std::snprintf(buf, sizeof buf, "%.17g", values[row * d.width + w]);
      out.append(buf, static_cast<std::size_t>(n));
    }
    out.push_back('\n');
  }
  return out;
}

SpatioTemporalBatch decode_csv_frames(const std::string& text, const Dims& dims) {
  validate_dims(dims);
  const std::size_t expected_rows = dims.batch * dims.time * dims.channels * dims.height;
  std::vector<double> values;
  values.reserve(dims.size());
  std::istringstream in(text);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    if (rows > expected_rows) {
      throw ShapeError("CSV has more than the declared " + std::to_string(expected_rows) + " rows");
    }
    std::size_t cols = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string field = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                            : comma - pos);
      // strtod accepts the full decimal grammar, including the exponent forms %.17g emits.
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size()) {
        throw FormatError("CSV row " + std::to_string(rows) + ": bad number '" + field + "'");
      }
      values.push_back(v);
      ++cols;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cols != dims.width) {
      throw ShapeError("CSV row " + std::to_string(rows) + " has " + std::to_string(cols) +
                       " columns, declared W=" + std::to_string(dims.width));
    }
  }
  if (rows != expected_rows) {
    throw ShapeError("CSV has " + std::to_string(rows) + " rows, declared dims need " +
                     std::to_string(expected_rows));
  }
  return SpatioTemporalBatch(dims, std::move(values));
}

void write_csv_frames(const SpatioTemporalBatch& batch, const std::filesystem::path& path) {
  const std::string text = encode_csv_frames(batch);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

SpatioTemporalBatch read_csv_frames(const std::filesystem::path& path, const Dims& dims) {
  const auto bytes = read_file_bytes(path);
  return decode_csv_frames(std::string(bytes.begin(), bytes.end()), dims);
}

std::vector<std::uint8_t> scale_to_gray(std::span<const double> pixels) {
  std::vector<std::uint8_t> gray(pixels.size(), 128);
  if (pixels.empty()) return gray;
  const auto [lo_it, hi_it] = std::minmax_element(pixels.begin(), pixels.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return gray;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * (pixels[i] - lo) / (hi - lo)));
  }
  return gray;
}

std::vector<std::uint8_t> encode_pgm_image(std::size_t height, std::size_t width,
                                           std::span<const std::uint8_t> gray) {
  if (gray.size() != height * width) throw ShapeError("PGM pixel count mismatch");
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), gray.begin(), gray.end());
  return out;
}

std::vector<std::uint8_t> encode_pgm(const SpatioTemporalBatch& batch, std::size_t b,
                                     std::size_t t, std::size_t c) {
  const auto f = batch.frame(b, t, c);
  return encode_pgm_image(batch.dims().height, batch.dims().width, scale_to_gray(f));
}

void render_pgm(const SpatioTemporalBatch& batch, std::size_t b, std::size_t t, std::size_t c,
                const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(batch, b, t, c));
}

}  // namespace spate
