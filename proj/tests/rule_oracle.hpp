#pragma once

// Hand-written semantics for every catalog rule, keyed by name and driven by
// the list of accepted moves so far rather than by RuleState. Used only as a
// test oracle; it shares nothing with the clause evaluators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gohr/board.hpp"
#include "gohr/rules.hpp"

namespace gohr::testing {

namespace oracle_detail {

inline const Piece* first_in_reading(const std::vector<Piece>& ps, bool reverse = false) {
  const Piece* best = nullptr;
  for (const auto& p : ps) {
    if (!best) {
      best = &p;
      continue;
    }
    // Higher row first, then lower column.
    const bool earlier = p.row > best->row || (p.row == best->row && p.col < best->col);
    if (earlier != reverse) best = &p;
  }
  return best;
}

inline double dist(const Piece& p, int b) {
  static const double ax[4] = {0, 7, 7, 0};
  static const double ay[4] = {7, 7, 0, 0};
  const double dx = p.col - ax[b], dy = p.row - ay[b];
  return std::sqrt(dx * dx + dy * dy);
}

inline std::vector<int> extremal_buckets(const Piece& p, bool farthest) {
  double best = farthest ? -1 : 1e9;
  for (int b = 0; b < 4; ++b) best = farthest ? std::max(best, dist(p, b)) : std::min(best, dist(p, b));
  std::vector<int> out;
  for (int b = 0; b < 4; ++b)
    if (std::abs(dist(p, b) - best) < 1e-9) out.push_back(b);
  return out;
}

inline int quad(const Piece& p) {
  if (p.row >= 4) return p.col <= 3 ? 0 : 1;
  return p.col <= 3 ? 3 : 2;
}

using Feature = std::function<int(const Piece&)>;
inline int color_of(const Piece& p) { return static_cast<int>(p.color); }
inline int shape_of(const Piece& p) { return static_cast<int>(p.shape); }

constexpr int R = 0, K = 1, B = 2, Y = 3;          // colors
constexpr int SQ = 0, ST = 1, CI = 2, TR = 3;      // shapes

// Feature cycle driven by history: after accepting a piece with value v, the
// next wanted value is the one after v in `order`; absent values are skipped.
inline std::set<Move> cycle(const std::vector<Piece>& board, const std::vector<Removal>& removed,
                            const Feature& f, const int (&order)[4], bool reading,
                            const int* buckets) {
  int start = 0;
  if (!removed.empty()) {
    const int last = f(removed.back().piece);
    for (int i = 0; i < 4; ++i)
      if (order[i] == last) start = (i + 1) % 4;
  }
  for (int k = 0; k < 4; ++k) {
    const int idx = (start + k) % 4;
    std::vector<Piece> of;
    for (const auto& p : board)
      if (f(p) == order[idx]) of.push_back(p);
    if (of.empty()) continue;
    std::set<Move> out;
    const Piece* first = first_in_reading(of);
    for (const auto& p : of) {
      if (reading && p.id != first->id) continue;
      for (int b = 0; b < 4; ++b)
        if (!buckets || buckets[idx] == b) out.insert({p.id, b});
    }
    return out;
  }
  return {};
}

// Bucket sequence over a fixed per-piece bucket assignment, skipping buckets
// that no remaining piece maps to.
inline std::set<Move> sequence_over_map(const std::vector<Piece>& board,
                                        const std::vector<Removal>& removed,
                                        const std::function<int(const Piece&)>& target) {
  int want = removed.empty() ? 0 : (removed.back().bucket + 1) % 4;
  for (int k = 0; k < 4; ++k) {
    std::set<Move> out;
    for (const auto& p : board)
      if (target(p) == want) out.insert({p.id, want});
    if (!out.empty()) return out;
    want = (want + 1) % 4;
  }
  return {};
}

}  // namespace oracle_detail

inline std::set<Move> oracle_legal(const std::string& rule, const std::vector<Piece>& board,
                                   const std::vector<Removal>& removed) {
  using namespace oracle_detail;
  std::set<Move> out;
  auto any_bucket = [&](const Piece* p) {
    if (p)
      for (int b = 0; b < 4; ++b) out.insert({p->id, b});
  };
  auto color_bucket_rbky = [](const Piece& p) {
    switch (color_of(p)) {
      case R: return 0;
      case B: return 1;
      case K: return 2;
      default: return 3;
    }
  };

  if (rule == "cm_RBKY") {
    for (const auto& p : board) out.insert({p.id, color_bucket_rbky(p)});
  } else if (rule == "sm_csqt") {
    for (const auto& p : board) {
      const int s = shape_of(p);
      out.insert({p.id, s == CI ? 0 : s == ST ? 1 : s == SQ ? 2 : 3});
    }
  } else if (rule == "allOfColOrd_BRKY" || rule == "allOfShaOrd_qcts") {
    const bool col = rule == "allOfColOrd_BRKY";
    const int co[4] = {B, R, K, Y}, so[4] = {SQ, CI, TR, ST};
    const int* order = col ? co : so;
    for (int i = 0; i < 4 && out.empty(); ++i)
      for (const auto& p : board)
        if ((col ? color_of(p) : shape_of(p)) == order[i]) any_bucket(&p);
  } else if (rule == "cw" || rule == "ccw" || rule == "cw_0123") {
    int want = -1;
    if (!removed.empty()) want = (removed.back().bucket + (rule == "ccw" ? 3 : 1)) % 4;
    else if (rule == "cw_0123") want = 0;
    for (const auto& p : board)
      for (int b = 0; b < 4; ++b)
        if (want < 0 || b == want) out.insert({p.id, b});
  } else if (rule == "col1Ord_BRKY" || rule == "colOrdL1_BRKY" || rule == "col1OrdBuck_BRKY0213") {
    const int order[4] = {B, R, K, Y};
    const int buckets[4] = {0, 2, 1, 3};
    return cycle(board, removed, color_of, order, rule == "colOrdL1_BRKY",
                 rule == "col1OrdBuck_BRKY0213" ? buckets : nullptr);
  } else if (rule == "sha1Ord_qcts" || rule == "shaOrdL1_qcts" || rule == "sha1OrdBuck_qcts0213") {
    const int order[4] = {SQ, CI, TR, ST};
    const int buckets[4] = {0, 2, 1, 3};
    return cycle(board, removed, shape_of, order, rule == "shaOrdL1_qcts",
                 rule == "sha1OrdBuck_qcts0213" ? buckets : nullptr);
  } else if (rule == "ordL1") {
    any_bucket(first_in_reading(board));
  } else if (rule == "ordRevOfL1") {
    any_bucket(first_in_reading(board, true));
  } else if (rule == "ordL1_Nearby" || rule == "ordRevOfL1_Remotest") {
    const bool rev = rule == "ordRevOfL1_Remotest";
    if (const Piece* p = first_in_reading(board, rev))
      for (int b : extremal_buckets(*p, rev)) out.insert({p->id, b});
  } else if (rule == "quadNearby") {
    for (const auto& p : board) out.insert({p.id, quad(p)});
  } else if (rule == "quadMixed1") {
    // bucket 0 <- quadrant 3, 1 <- 0, 2 <- 2, 3 <- 1
    const int to[4] = {1, 3, 2, 0};
    for (const auto& p : board) out.insert({p.id, to[quad(p)]});
  } else if (rule == "cm_ordL1") {
    if (const Piece* p = first_in_reading(board)) out.insert({p->id, color_bucket_rbky(*p)});
  } else if (rule == "cm_RBKY_cw_0123") {
    return sequence_over_map(board, removed, color_bucket_rbky);
  } else if (rule == "cw_qn2") {
    return sequence_over_map(board, removed, quad);
  } else {
    throw std::invalid_argument("oracle has no semantics for " + rule);
  }
  return out;
}

}  // namespace gohr::testing
