#pragma once

// The narrow step interface agents play through. LocalEnvironment drives the
// engine in-process; an HTTP-backed implementation lives with the server.

#include <cstdint>
#include <string>

#include "gohr/catalog.hpp"
#include "gohr/engine.hpp"

namespace gohr {

struct EpisodeSpec {
  std::string rule;
  int pieces = 9;
  std::uint64_t seed = 0;
  PositionMode mode = PositionMode::All;
  int move_cap = kDefaultMoveCap;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const BoardState& start(const EpisodeSpec& spec) = 0;
  virtual MoveOutcome move(int piece_id, int bucket) = 0;
  virtual const BoardState& board() const = 0;
};

class LocalEnvironment : public Environment {
 public:
  explicit LocalEnvironment(const RuleCatalog& catalog = RuleCatalog::builtin()) : catalog_(&catalog) {}

  const BoardState& start(const EpisodeSpec& spec) override {
    episode_ = new_episode(catalog_->resolve(spec.rule), spec.pieces, spec.seed,
                           PositionSet::for_mode(spec.mode), spec.move_cap);
    return episode_.board;
  }

  MoveOutcome move(int piece_id, int bucket) override { return attempt_move(episode_, piece_id, bucket); }
  const BoardState& board() const override { return episode_.board; }
  const Episode& episode() const { return episode_; }

 private:
  const RuleCatalog* catalog_;
  Episode episode_;
};

}  // namespace gohr
