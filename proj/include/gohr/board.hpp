#pragma once

// Board geometry and pieces: the 6x6 grid, the four corner buckets and the
// value types shared by the rule engine, the encoders and the wire format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gohr/errors.hpp"

namespace gohr {

inline constexpr int kBoardSize = 6;
inline constexpr int kNumCells = kBoardSize * kBoardSize;
inline constexpr int kNumBuckets = 4;

// Canonical order: red, black, blue, yellow.
enum class Color : std::uint8_t { Red = 0, Black = 1, Blue = 2, Yellow = 3 };
// Canonical order: square, star, circle, triangle.
enum class Shape : std::uint8_t { Square = 0, Star = 1, Circle = 2, Triangle = 3 };

inline constexpr std::array<Color, 4> kAllColors = {Color::Red, Color::Black, Color::Blue,
                                                    Color::Yellow};
inline constexpr std::array<Shape, 4> kAllShapes = {Shape::Square, Shape::Star, Shape::Circle,
                                                    Shape::Triangle};

inline std::string_view to_string(Color c) {
  constexpr std::array<std::string_view, 4> names = {"red", "black", "blue", "yellow"};
  return names[static_cast<int>(c)];
}

inline std::string_view to_string(Shape s) {
  constexpr std::array<std::string_view, 4> names = {"square", "star", "circle", "triangle"};
  return names[static_cast<int>(s)];
}

inline std::optional<Color> parse_color(std::string_view s) {
  for (Color c : kAllColors)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline std::optional<Shape> parse_shape(std::string_view s) {
  for (Shape sh : kAllShapes)
    if (to_string(sh) == s) return sh;
  return std::nullopt;
}

/// Bucket index 0..3, clockwise from the top-left corner:
/// 0 = top-left, 1 = top-right, 2 = bottom-right, 3 = bottom-left.
struct Bucket {
  int index = 0;

  constexpr Bucket() = default;
  constexpr explicit Bucket(int i) : index(i) {
    if (i < 0 || i >= kNumBuckets) throw DomainError("bucket index out of range");
  }
  friend constexpr bool operator==(Bucket, Bucket) = default;
};

inline constexpr bool valid_cell(int col, int row) {
  return col >= 1 && col <= kBoardSize && row >= 1 && row <= kBoardSize;
}

/// Linear position index, 1 at (col 1, row 1) up to 36 at (col 6, row 6).
inline constexpr int position_index(int col, int row) {
  if (!valid_cell(col, row)) throw DomainError("cell out of range");
  return (row - 1) * kBoardSize + col;
}

struct Cell {
  int col = 1;
  int row = 1;
  friend constexpr bool operator==(Cell, Cell) = default;
};

inline constexpr Cell cell_of_position(int position) {
  if (position < 1 || position > kNumCells) throw DomainError("position out of range");
  return Cell{(position - 1) % kBoardSize + 1, (position - 1) / kBoardSize + 1};
}

/// Quadrant numbered like the buckets: 0 top-left block (rows 4-6, cols 1-3),
/// 1 top-right, 2 bottom-right, 3 bottom-left.
inline constexpr int quadrant_of(int col, int row) {
  if (!valid_cell(col, row)) throw DomainError("cell out of range");
  const bool top = row >= 4;
  const bool left = col <= 3;
  if (top) return left ? 0 : 1;
  return left ? 3 : 2;
}

struct Point {
  double x = 0;
  double y = 0;
};

// Corner anchors in (x = col, y = row) space.
inline constexpr std::array<Point, 4> kBucketAnchors = {
    Point{0, 7}, Point{7, 7}, Point{7, 0}, Point{0, 0}};

inline double bucket_distance(double col, double row, int bucket) {
  if (bucket < 0 || bucket >= kNumBuckets) throw DomainError("bucket index out of range");
  const Point a = kBucketAnchors[bucket];
  return std::hypot(col - a.x, row - a.y);
}

struct Piece {
  int id = 0;
  Color color = Color::Red;
  Shape shape = Shape::Square;
  int col = 1;
  int row = 1;

  int position() const { return position_index(col, row); }
  friend bool operator==(const Piece&, const Piece&) = default;
};

/// Reading order: top row (row 6) first, left to right within a row.
/// Returns true when `a` is read before `b`.
inline bool reads_before(const Piece& a, const Piece& b) {
  if (a.row != b.row) return a.row > b.row;
  return a.col < b.col;
}

struct Removal {
  Piece piece;
  int bucket = 0;
  int move = 0;  // move_count at which the piece was accepted
  friend bool operator==(const Removal&, const Removal&) = default;
};

struct BoardState {
  std::vector<Piece> pieces;  // on-board, kept sorted by id
  std::vector<Removal> removed;

  int initial_count() const { return static_cast<int>(pieces.size() + removed.size()); }
  bool empty() const { return pieces.empty(); }

  const Piece* find(int piece_id) const {
    auto it = std::find_if(pieces.begin(), pieces.end(),
                           [&](const Piece& p) { return p.id == piece_id; });
    return it == pieces.end() ? nullptr : &*it;
  }

  const Piece* at(int col, int row) const {
    auto it = std::find_if(pieces.begin(), pieces.end(),
                           [&](const Piece& p) { return p.col == col && p.row == row; });
    return it == pieces.end() ? nullptr : &*it;
  }

  friend bool operator==(const BoardState&, const BoardState&) = default;
};

}  // namespace gohr
