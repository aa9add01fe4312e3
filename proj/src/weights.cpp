#include "spate/weights.hpp"

#include <algorithm>
#include <string>

#include "spate/error.hpp"

namespace spate {

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::rook ? "rook" : "queen";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "rook") return Scheme::rook;
  if (text == "queen") return Scheme::queen;
  throw ValidationError("unknown weight scheme '" + std::string(text) + "'");
}

WeightMatrix::WeightMatrix(std::size_t height, std::size_t width, Scheme scheme,
                           std::vector<std::vector<std::uint32_t>> neighbors)
    : height_(height), width_(width), scheme_(scheme), neighbors_(std::move(neighbors)) {
  if (neighbors_.size() != height_ * width_) {
    throw ShapeError("neighbor list count does not match grid size");
  }
}

bool WeightMatrix::adjacent(std::size_t i, std::size_t j) const {
  const auto& n = neighbors_[i];
  return std::binary_search(n.begin(), n.end(), static_cast<std::uint32_t>(j));
}

std::size_t WeightMatrix::directed_edge_count() const noexcept {
  std::size_t total = 0;
  for (const auto& n : neighbors_) total += n.size();
  return total;
}

WeightMatrix build_grid_weights(std::size_t height, std::size_t width, Scheme scheme) {
  if (height == 0 || width == 0 || height * width < 2) {
    throw ValidationError("degenerate grid " + std::to_string(height) + "x" +
                          std::to_string(width) + ": need at least two pixels");
  }
  std::vector<std::vector<std::uint32_t>> neighbors(height * width);
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      auto& list = neighbors[static_cast<std::size_t>(r * w + c)];
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (scheme == Scheme::rook && dr != 0 && dc != 0) continue;
          const long rr = r + dr;
          const long cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          list.push_back(static_cast<std::uint32_t>(rr * w + cc));
        }
      }
      // offsets are visited in row-major order, so the list is already sorted
    }
  }
  return WeightMatrix(height, width, scheme, std::move(neighbors));
}

}  // namespace spate
