#pragma once

// Feature-centric (FC) and object-centric (OC) encodings of boards, actions
// and the short history of accepted moves fed to the networks.
//
// FC board: 8 maps x 36 cells; maps are square, star, circle, triangle, red,
// black, blue, yellow. FC action a: position a/4 + 1, bucket a % 4.
// OC row: color(4) ++ shape(4) ++ x(6) ++ y(6) ++ action(4). OC action a:
// object a/4 + 1, bucket a % 4.

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "gohr/board.hpp"
#include "gohr/errors.hpp"
#include "gohr/rules.hpp"

namespace gohr {

enum class Representation { FC, OC };

inline std::string_view to_string(Representation r) { return r == Representation::FC ? "FC" : "OC"; }

inline Representation parse_representation(std::string_view s) {
  if (s == "FC" || s == "fc") return Representation::FC;
  if (s == "OC" || s == "oc") return Representation::OC;
  throw ParseError("unknown representation '" + std::string(s) + "'");
}

inline constexpr int kFcMaps = 8;
inline constexpr int kFcBoardSize = kFcMaps * kNumCells;            // 288
inline constexpr int kFcActions = kNumCells * kNumBuckets;         // 144
inline constexpr int kFcPastStepSize = kFcBoardSize + kFcActions;  // 432
inline constexpr int kOcRowSize = 24;

inline int fc_action_index(int position, int bucket) {
  if (position < 1 || position > kNumCells || bucket < 0 || bucket >= kNumBuckets)
    throw DomainError("FC action out of range");
  return (position - 1) * kNumBuckets + bucket;
}

struct PositionBucket {
  int position = 1;
  int bucket = 0;
  friend bool operator==(PositionBucket, PositionBucket) = default;
};

inline PositionBucket fc_action_decode(int action) {
  if (action < 0 || action >= kFcActions) throw DomainError("FC action out of range");
  return {action / kNumBuckets + 1, action % kNumBuckets};
}

inline int oc_action_index(int object_id, int bucket, int objects) {
  if (object_id < 1 || object_id > objects || bucket < 0 || bucket >= kNumBuckets)
    throw DomainError("OC action out of range");
  return (object_id - 1) * kNumBuckets + bucket;
}

inline Move oc_action_decode(int action, int objects) {
  if (action < 0 || action >= objects * kNumBuckets) throw DomainError("OC action out of range");
  return {action / kNumBuckets + 1, action % kNumBuckets};
}

/// Group orderings of the OC one-hots. The default reproduces the worked
/// example row "1000 0100 100000 000001 0010" for a red square at column 1,
/// row 6 moved to bucket 2.
struct OcOrdering {
  std::array<Color, 4> colors = {Color::Red, Color::Blue, Color::Black, Color::Yellow};
  std::array<Shape, 4> shapes = {Shape::Circle, Shape::Square, Shape::Triangle, Shape::Star};
};

// ---- FC --------------------------------------------------------------------

/// Map order of the FC stack: four shape maps, then four color maps.
struct FcOrdering {
  std::array<Shape, 4> shapes = {Shape::Square, Shape::Star, Shape::Circle, Shape::Triangle};
  std::array<Color, 4> colors = {Color::Red, Color::Black, Color::Blue, Color::Yellow};
};

namespace detail {
template <class T>
int slot_of(const std::array<T, 4>& order, T v) {
  for (int i = 0; i < 4; ++i)
    if (order[i] == v) return i;
  throw ConfigError("feature ordering is not a permutation");
}
}  // namespace detail

inline std::vector<double> encode_fc_board(const BoardState& board, const FcOrdering& ord = {}) {
  std::vector<double> v(kFcBoardSize, 0.0);
  for (const Piece& p : board.pieces) {
    const int cell = p.position() - 1;
    v[detail::slot_of(ord.shapes, p.shape) * kNumCells + cell] = 1.0;
    v[(4 + detail::slot_of(ord.colors, p.color)) * kNumCells + cell] = 1.0;
  }
  return v;
}

struct DecodedCell {
  int position = 1;
  Color color = Color::Red;
  Shape shape = Shape::Square;
  friend bool operator==(const DecodedCell&, const DecodedCell&) = default;
};

/// Inverse of encode_fc_board up to piece ids. Ordered by position.
inline std::vector<DecodedCell> decode_fc_board(const std::vector<double>& v, const FcOrdering& ord = {}) {
  std::vector<DecodedCell> out;
  for (int cell = 0; cell < kNumCells; ++cell) {
    std::optional<int> shape, color;
    for (int m = 0; m < 4; ++m) {
      if (v[m * kNumCells + cell] > 0.5) shape = m;
      if (v[(4 + m) * kNumCells + cell] > 0.5) color = m;
    }
    if (shape && color)
      out.push_back({cell + 1, ord.colors[*color], ord.shapes[*shape]});
  }
  return out;
}

// ---- OC --------------------------------------------------------------------

using OcRow = std::array<double, kOcRowSize>;

inline OcRow encode_oc_row(const Piece& p, std::optional<int> bucket = std::nullopt,
                           const OcOrdering& ord = {}) {
  OcRow row{};
  for (int i = 0; i < 4; ++i) {
    if (ord.colors[i] == p.color) row[i] = 1.0;
    if (ord.shapes[i] == p.shape) row[4 + i] = 1.0;
  }
  row[8 + (p.col - 1)] = 1.0;
  row[14 + (p.row - 1)] = 1.0;
  if (bucket) {
    if (*bucket < 0 || *bucket >= kNumBuckets) throw DomainError("bucket out of range");
    row[20 + *bucket] = 1.0;
  }
  return row;
}

inline std::string oc_row_bits(const OcRow& row) {
  std::string s;
  for (int i = 0; i < kOcRowSize; ++i) {
    if (i == 4 || i == 8 || i == 14 || i == 20) s += ' ';
    s += row[i] > 0.5 ? '1' : '0';
  }
  return s;
}

/// Recovers the piece (with `id`) from a live OC row; nullopt for padding rows.
inline std::optional<Piece> decode_oc_row(const OcRow& row, int id, const OcOrdering& ord = {}) {
  auto hot = [&](int from, int n) -> std::optional<int> {
    for (int i = 0; i < n; ++i)
      if (row[from + i] > 0.5) return i;
    return std::nullopt;
  };
  const auto c = hot(0, 4), s = hot(4, 4), x = hot(8, 6), y = hot(14, 6);
  if (!c || !s || !x || !y) return std::nullopt;
  return Piece{id, ord.colors[*c], ord.shapes[*s], *x + 1, *y + 1};
}

// ---- history and input assembly -------------------------------------------

/// One accepted move: the board as it was when the move was made, and the move.
struct PastStep {
  BoardState board;
  Move move;
};

/// Most recent accepted steps, newest first, bounded by `capacity`.
class History {
 public:
  explicit History(int capacity = 6) : capacity_(capacity) {}

  void push(PastStep step) {
    steps_.push_front(std::move(step));
    while (static_cast<int>(steps_.size()) > capacity_) steps_.pop_back();
  }
  void clear() { steps_.clear(); }

  int capacity() const { return capacity_; }
  std::size_t size() const { return steps_.size(); }
  const PastStep& operator[](std::size_t i) const { return steps_[i]; }

 private:
  int capacity_;
  std::deque<PastStep> steps_;
};

struct EncoderConfig {
  Representation representation = Representation::FC;
  int history = 6;   // past steps in the input
  int objects = 9;   // OC rows per slab; fixed at the initial piece count
  OcOrdering ordering;
  FcOrdering fc_ordering;
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.history < 0) throw ConfigError("history length must be non-negative");
    if (cfg_.objects < 1) throw ConfigError("object count must be positive");
  }
  Encoder(Representation repr, int history, int objects = 9)
      : Encoder([&] {
          EncoderConfig c;
          c.representation = repr;
          c.history = history;
          c.objects = objects;
          return c;
        }()) {}

  const EncoderConfig& config() const { return cfg_; }

  std::size_t input_size() const {
    if (cfg_.representation == Representation::FC)
      return kFcBoardSize + static_cast<std::size_t>(cfg_.history) * kFcPastStepSize;
    return static_cast<std::size_t>(cfg_.history + 1) * cfg_.objects * kOcRowSize;
  }

  /// (slabs, rows, columns) of the OC tensor; FC reports (1, 1, input_size).
  std::array<std::size_t, 3> input_shape() const {
    if (cfg_.representation == Representation::FC) return {1, 1, input_size()};
    return {static_cast<std::size_t>(cfg_.history + 1), static_cast<std::size_t>(cfg_.objects),
            static_cast<std::size_t>(kOcRowSize)};
  }

  int action_count() const {
    return cfg_.representation == Representation::FC ? kFcActions : cfg_.objects * kNumBuckets;
  }

  std::vector<double> encode(const BoardState& current, const History& history) const {
    return cfg_.representation == Representation::FC ? assemble_fc(current, history)
                                                     : assemble_oc(current, history);
  }

  /// Actions that address an on-board piece. Rule-violating moves stay unmasked.
  std::vector<bool> mask(const BoardState& board) const {
    std::vector<bool> m(action_count(), false);
    for (const Piece& p : board.pieces) {
      const int base = cfg_.representation == Representation::FC ? fc_action_index(p.position(), 0)
                                                                 : oc_index_checked(p.id, 0);
      for (int b = 0; b < kNumBuckets; ++b) m[base + b] = true;
    }
    return m;
  }

  int action_of(const BoardState& board, const Move& move) const {
    const Piece* p = board.find(move.piece_id);
    if (!p) throw AddressingError("piece is not on the board");
    return cfg_.representation == Representation::FC ? fc_action_index(p->position(), move.bucket)
                                                     : oc_index_checked(p->id, move.bucket);
  }

  /// The move an action denotes on this board. Throws AddressingError when the
  /// action refers to an empty cell or a removed object.
  Move move_of(const BoardState& board, int action) const {
    if (cfg_.representation == Representation::FC) {
      const auto pb = fc_action_decode(action);
      const Cell c = cell_of_position(pb.position);
      const Piece* p = board.at(c.col, c.row);
      if (!p) throw AddressingError("no piece at position " + std::to_string(pb.position));
      return {p->id, pb.bucket};
    }
    const Move m = oc_action_decode(action, cfg_.objects);
    if (!board.find(m.piece_id)) throw AddressingError("object " + std::to_string(m.piece_id) + " was removed");
    return m;
  }

 private:
  int oc_index_checked(int id, int bucket) const {
    if (id > cfg_.objects) throw ConfigError("piece id exceeds the configured object count");
    return oc_action_index(id, bucket, cfg_.objects);
  }

  std::vector<double> assemble_fc(const BoardState& current, const History& history) const {
    std::vector<double> v = encode_fc_board(current, cfg_.fc_ordering);
    v.reserve(input_size());
    for (int k = 0; k < cfg_.history; ++k) {
      if (k < static_cast<int>(history.size())) {
        const auto& step = history[k];
        const auto past = encode_fc_board(step.board, cfg_.fc_ordering);
        v.insert(v.end(), past.begin(), past.end());
        std::vector<double> action(kFcActions, 0.0);
        action[action_of(step.board, step.move)] = 1.0;
        v.insert(v.end(), action.begin(), action.end());
      } else {
        v.insert(v.end(), kFcPastStepSize, 0.0);
      }
    }
    return v;
  }

  void write_slab(std::vector<double>& v, std::size_t slab, const BoardState& board,
                  const Move* move) const {
    for (const Piece& p : board.pieces) {
      if (p.id < 1 || p.id > cfg_.objects) throw ConfigError("piece id exceeds the configured object count");
      std::optional<int> bucket;
      if (move && move->piece_id == p.id) bucket = move->bucket;
      const OcRow row = encode_oc_row(p, bucket, cfg_.ordering);
      const std::size_t base = (slab * cfg_.objects + (p.id - 1)) * kOcRowSize;
      std::copy(row.begin(), row.end(), v.begin() + static_cast<std::ptrdiff_t>(base));
    }
  }

  std::vector<double> assemble_oc(const BoardState& current, const History& history) const {
    std::vector<double> v(input_size(), 0.0);
    write_slab(v, 0, current, nullptr);
    for (int k = 0; k < cfg_.history && k < static_cast<int>(history.size()); ++k)
      write_slab(v, k + 1, history[k].board, &history[k].move);
    return v;
  }

  EncoderConfig cfg_;
};

}  // namespace gohr
