#include <gtest/gtest.h>

#include <set>

#include "fuzz_util.hpp"
#include "gohr/catalog.hpp"
#include "gohr/engine.hpp"

using namespace gohr;

namespace {

Episode episode_with(const std::string& rule, std::vector<Piece> pieces) {
  Episode ep;
  ep.rule = resolve_rule(rule);
  ep.board.pieces = std::move(pieces);
  return ep;
}

}  // namespace

TEST(NewEpisode, DealsNineDistinctCells) {
  const auto ep = new_episode(resolve_rule("quadNearby"), 9, 7);
  ASSERT_EQ(ep.board.pieces.size(), 9u);
  std::set<int> cells, ids;
  for (const auto& p : ep.board.pieces) {
    cells.insert(p.position());
    ids.insert(p.id);
  }
  EXPECT_EQ(cells.size(), 9u);
  EXPECT_EQ(ids, (std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(ep.move_count, 0);
  EXPECT_EQ(ep.finish_code, kOngoing);
}

TEST(NewEpisode, TrainModeUsesWhiteCells) {
  const std::set<int> white = {1, 3, 5, 8, 10, 12, 13, 15, 17, 20, 22, 24, 25, 27, 29, 32, 34, 36};
  const auto cells = PositionSet::train().cells();
  EXPECT_EQ(std::set<int>(cells.begin(), cells.end()), white);
  // Complement of the black cells drawn in the checkerboard figure.
  const std::set<int> black = {2, 4, 6, 11, 9, 7, 14, 16, 18, 23, 21, 19, 26, 28, 30, 35, 33, 31};
  for (int p = 1; p <= 36; ++p) EXPECT_NE(white.count(p), black.count(p)) << p;

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ep = new_episode(resolve_rule("ordL1"), 9, seed, PositionSet::train());
    for (const auto& p : ep.board.pieces) EXPECT_TRUE(white.count(p.position())) << p.position();
  }
}

TEST(NewEpisode, TestModePlacesAPieceOffTheTrainingCells) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto ep = new_episode(resolve_rule("ordL1"), 9, seed, PositionSet::test());
    bool outside = false;
    for (const auto& p : ep.board.pieces) outside = outside || !is_white_cell(p.position());
    EXPECT_TRUE(outside);
  }
}

TEST(NewEpisode, DeterministicInSeed) {
  const auto a = new_episode(resolve_rule("cw"), 9, 42);
  const auto b = new_episode(resolve_rule("cw"), 9, 42);
  const auto c = new_episode(resolve_rule("cw"), 9, 43);
  EXPECT_EQ(a.board, b.board);
  EXPECT_NE(a.board, c.board);
}

TEST(NewEpisode, RejectsTooManyPieces) {
  EXPECT_THROW(new_episode(resolve_rule("cw"), 19, 1, PositionSet::train()), ConfigError);
  EXPECT_THROW(new_episode(resolve_rule("cw"), 37, 1), ConfigError);
  EXPECT_THROW(new_episode(resolve_rule("cw"), 0, 1), ConfigError);
  EXPECT_NO_THROW(new_episode(resolve_rule("cw"), 18, 1, PositionSet::train()));
}

TEST(AttemptMove, QuadNearbyAcceptsCornerBucket) {
  auto ep = episode_with("quadNearby", {{1, Color::Red, Shape::Square, 1, 6}, {2, Color::Blue, Shape::Star, 6, 1}});
  auto denied = attempt_move(ep, 1, 2);
  EXPECT_EQ(denied.response_code, kDeny);
  EXPECT_EQ(denied.reward, -1);
  EXPECT_EQ(denied.move_count, 1);
  auto ok = attempt_move(ep, 1, 0);
  EXPECT_EQ(ok.response_code, kAccept);
  EXPECT_EQ(ok.reward, 0);
  EXPECT_EQ(ok.move_count, 2);
  EXPECT_EQ(ok.finish_code, kOngoing);
  ASSERT_EQ(ep.board.removed.size(), 1u);
  EXPECT_EQ(ep.board.removed[0].bucket, 0);
  EXPECT_EQ(ep.board.removed[0].move, 2);
  EXPECT_EQ(attempt_move(ep, 2, 2).finish_code, kCompleted);
  EXPECT_TRUE(ep.board.empty());
}

TEST(AttemptMove, ColorMap) {
  auto ep = episode_with("cm_RBKY", {{1, Color::Red, Shape::Square, 3, 3}, {2, Color::Blue, Shape::Star, 6, 1}});
  EXPECT_EQ(attempt_move(ep, 1, 1).response_code, kDeny);
  EXPECT_EQ(attempt_move(ep, 1, 0).response_code, kAccept);
}

TEST(AttemptMove, ImmovablePiece) {
  auto ep = episode_with("ordL1", {{1, Color::Red, Shape::Square, 2, 6}, {2, Color::Blue, Shape::Star, 5, 6}});
  const auto out = attempt_move(ep, 2, 0);
  EXPECT_EQ(out.response_code, kImmovable);
  EXPECT_EQ(out.reward, -1);
  EXPECT_EQ(ep.board.pieces.size(), 2u);
}

TEST(AttemptMove, AddressingAndFinishedErrors) {
  auto ep = episode_with("cm_RBKY", {{1, Color::Red, Shape::Square, 3, 3}});
  EXPECT_THROW(attempt_move(ep, 5, 0), AddressingError);
  EXPECT_THROW(attempt_move(ep, 1, 4), DomainError);
  EXPECT_EQ(ep.move_count, 0);
  attempt_move(ep, 1, 0);
  EXPECT_THROW(attempt_move(ep, 1, 0), EpisodeFinishedError);
}

TEST(AttemptMove, MoveCapFailsEpisode) {
  auto ep = episode_with("cm_RBKY", {{1, Color::Red, Shape::Square, 3, 3}});
  ep.move_cap = 3;
  EXPECT_EQ(attempt_move(ep, 1, 1).finish_code, kOngoing);
  EXPECT_EQ(attempt_move(ep, 1, 1).finish_code, kOngoing);
  EXPECT_EQ(attempt_move(ep, 1, 1).finish_code, kFailed);
  EXPECT_TRUE(ep.finished());
  EXPECT_TRUE(legal_moves(ep).empty());
}

TEST(AttemptMove, RewardsSumToMinusErrorCount) {
  Rng rng(1);
  for (const auto& name : RuleCatalog::builtin().names()) {
    auto ep = new_episode(resolve_rule(name), 9, 77);
    int reward = 0, errors = 0;
    while (!ep.finished()) {
      const auto& ps = ep.board.pieces;
      const auto& p = ps[uniform_index(rng, ps.size())];
      const auto out = attempt_move(ep, p.id, static_cast<int>(uniform_index(rng, 4)));
      EXPECT_EQ(out.response_code == kAccept, out.reward == 0);
      reward += out.reward;
      errors += out.response_code != kAccept;
    }
    EXPECT_EQ(reward, -errors) << name;
  }
}

TEST(LegalMoves, Examples) {
  auto ord = new_episode(resolve_rule("ordL1"), 9, 3);
  const auto m = legal_moves(ord);
  ASSERT_EQ(m.size(), 4u);
  for (const auto& x : m) EXPECT_EQ(x.piece_id, m[0].piece_id);

  auto cm = new_episode(resolve_rule("cm_RBKY"), 9, 3);
  const auto c = legal_moves(cm);
  EXPECT_EQ(c.size(), 9u);
  std::set<int> ids;
  for (const auto& x : c) ids.insert(x.piece_id);
  EXPECT_EQ(ids.size(), 9u);
}

TEST(LegalMoves, AgreeWithAttemptMoveUnderRandomPlay) {
  Rng rng(2024);
  int states = 0;
  for (const auto& name : RuleCatalog::builtin().names()) {
    for (int e = 0; e < 40; ++e) {
      auto ep = new_episode(resolve_rule(name), 9, 300 + e);
      while (!ep.finished()) {
        const auto legal = legal_moves(ep);
        const std::set<Move> legal_set(legal.begin(), legal.end());
        for (const auto& p : ep.board.pieces)
          for (int b = 0; b < 4; ++b) {
            Episode probe = ep;
            const bool ok = attempt_move(probe, p.id, b).response_code == kAccept;
            EXPECT_EQ(ok, legal_set.count({p.id, b}) > 0) << name;
          }
        ++states;
        // Mostly random attempts so that deny/immovable states are visited too.
        const auto& ps = ep.board.pieces;
        if (uniform01(rng) < 0.5 && !legal.empty()) {
          const auto mv = legal[uniform_index(rng, legal.size())];
          attempt_move(ep, mv.piece_id, mv.bucket);
        } else {
          attempt_move(ep, ps[uniform_index(rng, ps.size())].id, static_cast<int>(uniform_index(rng, 4)));
        }
      }
    }
  }
  EXPECT_GE(states, 10000);
}

TEST(WireFormat, BoardSnapshotRoundTrip) {
  const auto ep = new_episode(resolve_rule("cw"), 9, 8);
  const auto j = board_to_json(ep);
  EXPECT_EQ(j.at("move_count"), 0);
  EXPECT_EQ(j.at("finish_code"), 0);
  ASSERT_EQ(j.at("pieces").size(), 9u);
  const auto& p0 = j.at("pieces")[0];
  for (const char* key : {"id", "color", "shape", "col", "row"}) EXPECT_TRUE(p0.contains(key)) << key;
  EXPECT_EQ(pieces_from_json(j), ep.board.pieces);
  EXPECT_THROW(piece_from_json({{"id", 1}, {"color", "green"}, {"shape", "star"}, {"col", 1}, {"row", 1}}),
               ParseError);
}
