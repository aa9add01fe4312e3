#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace spate {

enum class Scheme { rook, queen };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

/// Binary contiguity on a regular H x W grid without wraparound. Pixels are
/// indexed row-major; neighbor lists are sorted ascending.
class WeightMatrix {
 public:
  WeightMatrix(std::size_t height, std::size_t width, Scheme scheme,
               std::vector<std::vector<std::uint32_t>> neighbors);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return height_ * width_; }
  Scheme scheme() const noexcept { return scheme_; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const { return neighbors_[i]; }
  /// n_i, the number of neighbors of pixel i.
  std::size_t neighbor_count(std::size_t i) const { return neighbors_[i].size(); }
  /// w_{ij} as a boolean.
  bool adjacent(std::size_t i, std::size_t j) const;
  std::size_t directed_edge_count() const noexcept;

 private:
  std::size_t height_;
  std::size_t width_;
  Scheme scheme_;
  std::vector<std::vector<std::uint32_t>> neighbors_;
};

WeightMatrix build_grid_weights(std::size_t height, std::size_t width, Scheme scheme = Scheme::queen);

}  // namespace spate
