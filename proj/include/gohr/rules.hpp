#pragma once

// Hidden-rule semantics. A rule is a conjunction of clauses. Static clauses
// only look at the board; cursor clauses (feature cycle, bucket sequence)
// also read the per-episode RuleState and skip forward past cursor values
// that admit no move under the remaining clauses.
//
// Two evaluation paths live here and share no code beyond the clause types:
// `accepts` scans predicates for a single (piece, bucket) pair, while
// `enumerate_legal` filters the full move set clause by clause.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gohr/board.hpp"

namespace gohr {

enum class FeatureKind : std::uint8_t { Color = 0, Shape = 1 };

inline int feature_value(const Piece& p, FeatureKind kind) {
  return kind == FeatureKind::Color ? static_cast<int>(p.color) : static_cast<int>(p.shape);
}

namespace clause {

// Each feature value (canonical index) goes to a fixed bucket.
struct FeatureMap {
  FeatureKind feature = FeatureKind::Color;
  std::array<int, 4> bucket_of{};
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// Pieces in quadrant q go to bucket_of[q].
struct QuadrantMap {
  std::array<int, 4> bucket_of{};
  friend bool operator==(const QuadrantMap&, const QuadrantMap&) = default;
};

// Only the first (or last, when reversed) piece in reading order may move.
struct ReadingOrder {
  bool reverse = false;
  friend bool operator==(const ReadingOrder&, const ReadingOrder&) = default;
};

// Piece must go to a nearest (or farthest) bucket; ties admit every extremal bucket.
struct Proximity {
  bool farthest = false;
  friend bool operator==(const Proximity&, const Proximity&) = default;
};

// Every piece of the highest-priority feature still on the board goes first.
struct AllOfFeature {
  FeatureKind feature = FeatureKind::Color;
  std::array<int, 4> order{};  // canonical feature values, highest priority first
  friend bool operator==(const AllOfFeature&, const AllOfFeature&) = default;
};

// One piece per feature value, cycling through `order`. Absent values are skipped.
struct FeatureCycle {
  FeatureKind feature = FeatureKind::Color;
  std::array<int, 4> order{};
  bool first_in_reading_order = false;           // restrict to the first such piece
  std::optional<std::array<int, 4>> buckets;     // buckets[i] receives order[i]
  friend bool operator==(const FeatureCycle&, const FeatureCycle&) = default;
};

// Buckets filled clockwise (or counterclockwise), optionally from a fixed start.
struct BucketSequence {
  bool counterclockwise = false;
  std::optional<int> start;
  friend bool operator==(const BucketSequence&, const BucketSequence&) = default;
};

}  // namespace clause

using Clause = std::variant<clause::FeatureMap, clause::QuadrantMap, clause::ReadingOrder,
                            clause::Proximity, clause::AllOfFeature, clause::FeatureCycle,
                            clause::BucketSequence>;

struct RuleSpec {
  std::string name;
  std::vector<Clause> clauses;  // canonical: sorted by kind, no duplicates

  template <typename C>
  const C* find() const {
    for (const auto& c : clauses)
      if (const auto* p = std::get_if<C>(&c)) return p;
    return nullptr;
  }
};

/// Structural equality of clause sets, ignoring the rule name.
inline bool same_clauses(const RuleSpec& a, const RuleSpec& b) { return a.clauses == b.clauses; }

struct RuleState {
  std::optional<int> last_bucket;
  int feature_cursor = 0;
  std::optional<int> block_feature;
  friend bool operator==(const RuleState&, const RuleState&) = default;
};

struct Move {
  int piece_id = 0;
  int bucket = 0;
  friend auto operator<=>(const Move&, const Move&) = default;
};

namespace detail {

inline int next_bucket(int b, bool ccw, int steps = 1) {
  const int d = ccw ? -steps : steps;
  return ((b + d) % kNumBuckets + kNumBuckets) % kNumBuckets;
}

inline int order_position(const std::array<int, 4>& order, int value) {
  for (int i = 0; i < 4; ++i)
    if (order[i] == value) return i;
  return -1;
}

// ---- predicate path --------------------------------------------------------

inline bool admits_static(const clause::FeatureMap& c, const BoardState&, const Piece& p, int b) {
  return c.bucket_of[feature_value(p, c.feature)] == b;
}

inline bool admits_static(const clause::QuadrantMap& c, const BoardState&, const Piece& p, int b) {
  return c.bucket_of[quadrant_of(p.col, p.row)] == b;
}

inline bool admits_static(const clause::ReadingOrder& c, const BoardState& board, const Piece& p,
                          int) {
  for (const Piece& q : board.pieces) {
    if (q.id == p.id) continue;
    if (c.reverse ? reads_before(p, q) : reads_before(q, p)) return false;
  }
  return true;
}

inline bool admits_static(const clause::Proximity& c, const BoardState&, const Piece& p, int b) {
  const double mine = bucket_distance(p.col, p.row, b);
  for (int other = 0; other < kNumBuckets; ++other) {
    const double d = bucket_distance(p.col, p.row, other);
    if (c.farthest ? d > mine + 1e-12 : d < mine - 1e-12) return false;
  }
  return true;
}

inline bool admits_static(const clause::AllOfFeature& c, const BoardState& board, const Piece& p,
                          int) {
  const int mine = order_position(c.order, feature_value(p, c.feature));
  for (const Piece& q : board.pieces)
    if (order_position(c.order, feature_value(q, c.feature)) < mine) return false;
  return true;
}

inline bool admits_static(const clause::FeatureCycle&, const BoardState&, const Piece&, int) {
  return true;
}
inline bool admits_static(const clause::BucketSequence&, const BoardState&, const Piece&, int) {
  return true;
}

inline bool all_static_admit(const RuleSpec& spec, const BoardState& board, const Piece& p,
                             int b) {
  for (const auto& c : spec.clauses) {
    const bool ok = std::visit([&](const auto& cl) { return admits_static(cl, board, p, b); }, c);
    if (!ok) return false;
  }
  return true;
}

inline bool cycle_admits(const clause::FeatureCycle& fc, int value, const BoardState& board,
                         const Piece& p, int b) {
  if (feature_value(p, fc.feature) != value) return false;
  if (fc.first_in_reading_order) {
    for (const Piece& q : board.pieces)
      if (q.id != p.id && feature_value(q, fc.feature) == value && reads_before(q, p)) return false;
  }
  if (fc.buckets && (*fc.buckets)[order_position(fc.order, value)] != b) return false;
  return true;
}

// Cursor values after skipping. `blocked` means no value admits any move.
struct Resolution {
  bool blocked = false;
  std::optional<int> cycle_value;      // resolved feature value of the cycle clause
  std::optional<int> expected_bucket;  // resolved bucket of the sequence clause
};

inline Resolution resolve_by_predicates(const RuleSpec& spec, const RuleState& state,
                                        const BoardState& board) {
  Resolution r;
  const auto* fc = spec.find<clause::FeatureCycle>();
  const auto* seq = spec.find<clause::BucketSequence>();

  auto any_move = [&](auto&& extra) {
    for (const Piece& q : board.pieces)
      for (int c = 0; c < kNumBuckets; ++c)
        if (all_static_admit(spec, board, q, c) && extra(q, c)) return true;
    return false;
  };

  if (fc) {
    for (int k = 0; k < 4 && !r.cycle_value; ++k) {
      const int value = fc->order[(state.feature_cursor + k) % 4];
      if (any_move([&](const Piece& q, int c) { return cycle_admits(*fc, value, board, q, c); }))
        r.cycle_value = value;
    }
    if (!r.cycle_value) {
      r.blocked = true;
      return r;
    }
  }
  if (seq && (state.last_bucket || seq->start)) {
    const int nominal = state.last_bucket ? next_bucket(*state.last_bucket, seq->counterclockwise)
                                          : *seq->start;
    for (int k = 0; k < 4 && !r.expected_bucket; ++k) {
      const int e = next_bucket(nominal, seq->counterclockwise, k);
      if (any_move([&](const Piece& q, int c) {
            return c == e && (!fc || cycle_admits(*fc, *r.cycle_value, board, q, c));
          }))
        r.expected_bucket = e;
    }
    if (!r.expected_bucket) r.blocked = true;
  }
  return r;
}

inline RuleState advance(const RuleSpec& spec, const RuleState& state, const Piece& p, int b) {
  RuleState next = state;
  if (const auto* fc = spec.find<clause::FeatureCycle>())
    next.feature_cursor = (order_position(fc->order, feature_value(p, fc->feature)) + 1) % 4;
  if (spec.find<clause::BucketSequence>()) next.last_bucket = b;
  if (const auto* all = spec.find<clause::AllOfFeature>())
    next.block_feature = feature_value(p, all->feature);
  return next;
}

}  // namespace detail

struct AcceptResult {
  bool accepted = false;
  RuleState state;
};

/// Does the rule admit moving `piece` into `bucket`? On acceptance the returned
/// state has its cursors advanced; otherwise it equals the input state.
inline AcceptResult accepts(const RuleSpec& spec, const RuleState& state, const BoardState& board,
                            const Piece& piece, int bucket) {
  if (bucket < 0 || bucket >= kNumBuckets) throw DomainError("bucket index out of range");
  if (!board.find(piece.id)) throw AddressingError("piece is not on the board");
  const auto r = detail::resolve_by_predicates(spec, state, board);
  if (r.blocked) return {false, state};
  if (!detail::all_static_admit(spec, board, piece, bucket)) return {false, state};
  if (const auto* fc = spec.find<clause::FeatureCycle>();
      fc && !detail::cycle_admits(*fc, *r.cycle_value, board, piece, bucket))
    return {false, state};
  if (r.expected_bucket && *r.expected_bucket != bucket) return {false, state};
  return {true, detail::advance(spec, state, piece, bucket)};
}

/// True iff some bucket accepts the piece right now.
inline bool movable(const RuleSpec& spec, const RuleState& state, const BoardState& board,
                    const Piece& piece) {
  for (int b = 0; b < kNumBuckets; ++b)
    if (accepts(spec, state, board, piece, b).accepted) return true;
  return false;
}

/// Every accepted (piece, bucket) pair, computed by filtering the full move
/// set clause by clause. Sorted by (piece_id, bucket).
inline std::vector<Move> enumerate_legal(const RuleSpec& spec, const RuleState& state,
                                         const BoardState& board) {
  std::vector<Move> cand;
  for (const Piece& p : board.pieces)
    for (int b = 0; b < kNumBuckets; ++b) cand.push_back({p.id, b});

  auto piece = [&](int id) -> const Piece& { return *board.find(id); };
  auto keep = [&](std::vector<Move> v, auto&& pred) {
    std::erase_if(v, [&](const Move& m) { return !pred(m); });
    return v;
  };
  auto reading_first = [&](const std::vector<const Piece*>& ps, bool reverse) {
    const Piece* best = nullptr;
    for (const Piece* p : ps)
      if (!best || (reverse ? reads_before(*best, *p) : reads_before(*p, *best))) best = p;
    return best;
  };

  for (const auto& c : spec.clauses) {
    if (const auto* fm = std::get_if<clause::FeatureMap>(&c)) {
      cand = keep(cand, [&](const Move& m) {
        return fm->bucket_of[feature_value(piece(m.piece_id), fm->feature)] == m.bucket;
      });
    } else if (const auto* qm = std::get_if<clause::QuadrantMap>(&c)) {
      cand = keep(cand, [&](const Move& m) {
        const Piece& p = piece(m.piece_id);
        return qm->bucket_of[quadrant_of(p.col, p.row)] == m.bucket;
      });
    } else if (const auto* ro = std::get_if<clause::ReadingOrder>(&c)) {
      std::vector<const Piece*> all;
      for (const Piece& p : board.pieces) all.push_back(&p);
      const Piece* target = reading_first(all, ro->reverse);
      cand = keep(cand, [&](const Move& m) { return target && m.piece_id == target->id; });
    } else if (const auto* px = std::get_if<clause::Proximity>(&c)) {
      cand = keep(cand, [&](const Move& m) {
        const Piece& p = piece(m.piece_id);
        std::array<double, 4> d{};
        for (int b = 0; b < 4; ++b) d[b] = bucket_distance(p.col, p.row, b);
        const double best = px->farthest ? *std::max_element(d.begin(), d.end())
                                         : *std::min_element(d.begin(), d.end());
        return std::abs(d[m.bucket] - best) <= 1e-12;
      });
    } else if (const auto* af = std::get_if<clause::AllOfFeature>(&c)) {
      int best_rank = 4;
      for (const Piece& p : board.pieces)
        best_rank = std::min(best_rank, detail::order_position(af->order, feature_value(p, af->feature)));
      cand = keep(cand, [&](const Move& m) {
        return best_rank < 4 &&
               feature_value(piece(m.piece_id), af->feature) == af->order[best_rank];
      });
    }
  }

  const auto* fc = spec.find<clause::FeatureCycle>();
  if (fc) {
    std::vector<Move> chosen;
    for (int k = 0; k < 4 && chosen.empty(); ++k) {
      const int pos = (state.feature_cursor + k) % 4;
      const int value = fc->order[pos];
      std::vector<const Piece*> of_value;
      for (const Piece& p : board.pieces)
        if (feature_value(p, fc->feature) == value) of_value.push_back(&p);
      const Piece* first = reading_first(of_value, false);
      chosen = keep(cand, [&](const Move& m) {
        if (feature_value(piece(m.piece_id), fc->feature) != value) return false;
        if (fc->first_in_reading_order && m.piece_id != first->id) return false;
        return !fc->buckets || (*fc->buckets)[pos] == m.bucket;
      });
    }
    cand = std::move(chosen);
  }

  const auto* seq = spec.find<clause::BucketSequence>();
  if (seq && (state.last_bucket || seq->start)) {
    const int nominal = state.last_bucket
                            ? detail::next_bucket(*state.last_bucket, seq->counterclockwise)
                            : *seq->start;
    std::vector<Move> chosen;
    for (int k = 0; k < 4 && chosen.empty(); ++k) {
      const int e = detail::next_bucket(nominal, seq->counterclockwise, k);
      chosen = keep(cand, [&](const Move& m) { return m.bucket == e; });
    }
    cand = std::move(chosen);
  }
  std::sort(cand.begin(), cand.end());
  return cand;
}

namespace detail {

inline void canonicalize(std::vector<Clause>& clauses) {
  std::vector<Clause> out;
  for (const auto& c : clauses)
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  std::stable_sort(out.begin(), out.end(),
                   [](const Clause& x, const Clause& y) { return x.index() < y.index(); });
  clauses = std::move(out);
}

}  // namespace detail

/// Conjunction of two rules. Identical clauses collapse, so compose(A, A) == A.
/// Two distinct clauses of the same cursor kind are not supported.
inline RuleSpec compose(const RuleSpec& a, const RuleSpec& b, std::string name = {}) {
  RuleSpec out;
  out.name = name.empty() ? a.name + "+" + b.name : std::move(name);
  out.clauses = a.clauses;
  out.clauses.insert(out.clauses.end(), b.clauses.begin(), b.clauses.end());
  detail::canonicalize(out.clauses);
  int cycles = 0, sequences = 0;
  for (const auto& c : out.clauses) {
    cycles += std::holds_alternative<clause::FeatureCycle>(c);
    sequences += std::holds_alternative<clause::BucketSequence>(c);
  }
  if (cycles > 1 || sequences > 1)
    throw ConfigError("cannot compose two different cursor clauses of the same kind");
  return out;
}


}  // namespace gohr
