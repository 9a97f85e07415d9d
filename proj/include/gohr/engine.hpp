#pragma once

// Episode lifecycle: board generation, move adjudication, status codes and
// rewards, plus the JSON board snapshot shared by the server, logs and UI.

#include <bitset>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohr/board.hpp"
#include "gohr/random.hpp"
#include "gohr/rules.hpp"

namespace gohr {

enum class PositionMode { Train, Test, All };

inline std::string_view to_string(PositionMode m) {
  switch (m) {
    case PositionMode::Train: return "train";
    case PositionMode::Test: return "test";
    case PositionMode::All: return "all";
  }
  return "all";
}

inline PositionMode parse_position_mode(std::string_view s) {
  if (s == "train") return PositionMode::Train;
  if (s == "test") return PositionMode::Test;
  if (s == "all") return PositionMode::All;
  throw ParseError("unknown position mode '" + std::string(s) + "'");
}

/// White checkerboard cell: (col + row) even. Position 1 is white.
inline constexpr bool is_white_cell(int position) {
  const Cell c = cell_of_position(position);
  return (c.col + c.row) % 2 == 0;
}

struct PositionSet {
  PositionMode mode = PositionMode::All;
  std::bitset<kNumCells + 1> allowed;  // bit p set for position p in 1..36

  static PositionSet all() {
    PositionSet s;
    for (int p = 1; p <= kNumCells; ++p) s.allowed.set(p);
    return s;
  }
  /// Pieces restricted to the white checkerboard cells.
  static PositionSet train() {
    PositionSet s;
    s.mode = PositionMode::Train;
    for (int p = 1; p <= kNumCells; ++p)
      if (is_white_cell(p)) s.allowed.set(p);
    return s;
  }
  /// Whole board, with at least one piece off the training cells.
  static PositionSet test() {
    PositionSet s = all();
    s.mode = PositionMode::Test;
    return s;
  }
  static PositionSet for_mode(PositionMode m) {
    switch (m) {
      case PositionMode::Train: return train();
      case PositionMode::Test: return test();
      case PositionMode::All: return all();
    }
    return all();
  }

  std::vector<int> cells() const {
    std::vector<int> out;
    for (int p = 1; p <= kNumCells; ++p)
      if (allowed.test(p)) out.push_back(p);
    return out;
  }
  bool contains(int position) const { return allowed.test(position); }
};

enum FinishCode : int { kOngoing = 0, kCompleted = 1, kFailed = 2 };
enum ResponseCode : int { kAccept = 0, kDeny = 4, kImmovable = 7 };

inline char code_letter(int response_code) {
  switch (response_code) {
    case kAccept: return 'A';
    case kDeny: return 'D';
    case kImmovable: return 'I';
  }
  throw DomainError("unknown response code");
}

struct MoveOutcome {
  int response_code = kAccept;
  int reward = 0;
  int finish_code = kOngoing;
  int move_count = 0;
  friend bool operator==(const MoveOutcome&, const MoveOutcome&) = default;
};

inline constexpr int kDefaultMoveCap = 300;

struct Episode {
  RuleSpec rule;
  RuleState rule_state;
  BoardState board;
  int move_count = 0;
  int move_cap = kDefaultMoveCap;
  std::uint64_t seed = 0;
  PositionSet positions;
  int finish_code = kOngoing;

  bool finished() const { return finish_code != kOngoing; }
};

/// Deals `n` pieces with i.i.d. uniform color and shape onto distinct allowed
/// cells. Deterministic in `seed`.
inline Episode new_episode(const RuleSpec& rule, int n, std::uint64_t seed,
                           const PositionSet& positions = PositionSet::all(),
                           int move_cap = kDefaultMoveCap) {
  const auto cells = positions.cells();
  if (n < 1 || n > static_cast<int>(cells.size()))
    throw ConfigError("piece count " + std::to_string(n) + " does not fit " +
                      std::to_string(cells.size()) + " allowed cells");
  if (move_cap < 1) throw ConfigError("move cap must be positive");
  const auto train = PositionSet::train();
  if (positions.mode == PositionMode::Test && n > 0) {
    bool has_outside = false;
    for (int p : cells) has_outside = has_outside || !train.contains(p);
    if (!has_outside) throw ConfigError("test positions contain no untrained cell");
  }

  Episode ep;
  ep.rule = rule;
  ep.seed = seed;
  ep.positions = positions;
  ep.move_cap = move_cap;

  Rng rng(seed);
  std::vector<int> chosen;
  while (true) {
    auto pool = cells;
    shuffle(pool, rng);
    chosen.assign(pool.begin(), pool.begin() + n);
    if (positions.mode != PositionMode::Test) break;
    bool outside = false;
    for (int p : chosen) outside = outside || !train.contains(p);
    if (outside) break;
  }
  for (int i = 0; i < n; ++i) {
    const Cell c = cell_of_position(chosen[i]);
    Piece p;
    p.id = i + 1;
    p.color = static_cast<Color>(uniform_index(rng, 4));
    p.shape = static_cast<Shape>(uniform_index(rng, 4));
    p.col = c.col;
    p.row = c.row;
    ep.board.pieces.push_back(p);
  }
  return ep;
}

/// Adjudicates one attempt. Codes: 0 accept (piece removed), 4 deny (piece
/// movable elsewhere), 7 immovable (no bucket accepts it now).
inline MoveOutcome attempt_move(Episode& ep, int piece_id, int bucket) {
  if (ep.finished()) throw EpisodeFinishedError("episode already finished");
  if (bucket < 0 || bucket >= kNumBuckets) throw DomainError("bucket index out of range");
  const Piece* piece = ep.board.find(piece_id);
  if (!piece) throw AddressingError("piece " + std::to_string(piece_id) + " is not on the board");

  MoveOutcome out;
  ++ep.move_count;
  const auto verdict = accepts(ep.rule, ep.rule_state, ep.board, *piece, bucket);
  if (verdict.accepted) {
    ep.rule_state = verdict.state;
    ep.board.removed.push_back({*piece, bucket, ep.move_count});
    std::erase_if(ep.board.pieces, [&](const Piece& p) { return p.id == piece_id; });
    out.response_code = kAccept;
    out.reward = 0;
  } else {
    out.response_code = movable(ep.rule, ep.rule_state, ep.board, *piece) ? kDeny : kImmovable;
    out.reward = -1;
  }
  if (ep.board.empty())
    ep.finish_code = kCompleted;
  else if (ep.move_count >= ep.move_cap)
    ep.finish_code = kFailed;
  out.finish_code = ep.finish_code;
  out.move_count = ep.move_count;
  return out;
}

/// Moves that attempt_move would accept, via the filtering evaluator.
inline std::vector<Move> legal_moves(const Episode& ep) {
  if (ep.finished()) return {};
  return enumerate_legal(ep.rule, ep.rule_state, ep.board);
}

// ---- wire format -----------------------------------------------------------

inline nlohmann::json to_json(const Piece& p) {
  return {{"id", p.id},
          {"color", std::string(to_string(p.color))},
          {"shape", std::string(to_string(p.shape))},
          {"col", p.col},
          {"row", p.row}};
}

inline Piece piece_from_json(const nlohmann::json& j) {
  Piece p;
  p.id = j.at("id").get<int>();
  const auto color = parse_color(j.at("color").get<std::string>());
  const auto shape = parse_shape(j.at("shape").get<std::string>());
  if (!color || !shape) throw ParseError("bad piece color or shape");
  p.color = *color;
  p.shape = *shape;
  p.col = j.at("col").get<int>();
  p.row = j.at("row").get<int>();
  if (!valid_cell(p.col, p.row)) throw ParseError("piece cell out of range");
  return p;
}

/// Canonical board snapshot: {pieces:[{id,color,shape,col,row}], move_count, finish_code}.
inline nlohmann::json board_to_json(const Episode& ep) {
  nlohmann::json pieces = nlohmann::json::array();
  for (const auto& p : ep.board.pieces) pieces.push_back(to_json(p));
  return {{"pieces", std::move(pieces)}, {"move_count", ep.move_count}, {"finish_code", ep.finish_code}};
}

inline std::vector<Piece> pieces_from_json(const nlohmann::json& board) {
  std::vector<Piece> out;
  for (const auto& p : board.at("pieces")) out.push_back(piece_from_json(p));
  return out;
}

inline nlohmann::json to_json(const MoveOutcome& m) {
  return {{"response_code", m.response_code},
          {"reward", m.reward},
          {"finish_code", m.finish_code},
          {"move_count", m.move_count}};
}

}  // namespace gohr
