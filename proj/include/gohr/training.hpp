#pragma once

// The episode loop: plays an actor through an environment phase by phase,
// updates it once per episode, tracks metrics for early stopping and writes
// the run log. Also the frozen-policy evaluation used for generalization.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohr/analysis.hpp"
#include "gohr/catalog.hpp"
#include "gohr/environment.hpp"
#include "gohr/learner.hpp"
#include "gohr/metrics.hpp"
#include "gohr/runlog.hpp"

namespace gohr {

inline constexpr std::uint64_t kEpisodeStream = 1;
inline constexpr std::uint64_t kActorStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kEvalStream = 4;

inline std::string chain_text(const TrialPhase& p) {
  std::string s;
  for (const auto& r : p.chain) s += (s.empty() ? "" : ":") + r;
  return s;
}

struct TrainConfig {
  std::string kind = "independent";
  std::vector<TrialPhase> phases;
  AgentConfig agent;
  MetricParams metrics;
  std::uint64_t seed = 0;
  PositionMode mode = PositionMode::All;
  int move_cap = kDefaultMoveCap;
  bool early_stop = true;

  static TrainConfig for_rule(const std::string& rule) {
    TrainConfig c;
    c.phases.push_back(TrialPhase{{rule}});
    return c;
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : c.phases) phases.push_back(chain_text(p));
  return {{"type", "config"},
          {"kind", c.kind},
          {"phases", phases},
          {"agent", to_json(c.agent)},
          {"metrics", to_json(c.metrics)},
          {"seed", c.seed},
          {"mode", std::string(to_string(c.mode))},
          {"move_cap", c.move_cap},
          {"early_stop", c.early_stop}};
}

/// Reads the same shape to_json writes; every field is optional over `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {},
                                          const RuleCatalog& catalog = RuleCatalog::builtin()) {
  try {
    c.kind = j.value("kind", c.kind);
    if (j.contains("phases")) {
      std::string text;
      for (const auto& p : j.at("phases")) text += p.get<std::string>() + "\n";
      c.phases = parse_trial_list(text, catalog).phases;
    }
    if (j.contains("agent")) {
      const auto& a = j.at("agent");
      if (a.contains("representation"))
        c.agent.encoder.representation = parse_representation(a.at("representation").get<std::string>());
      c.agent.encoder.history = a.value("n_hist", c.agent.encoder.history);
      c.agent.encoder.objects = a.value("objects", c.agent.encoder.objects);
      if (a.contains("network")) c.agent.network = transformer_config_from_json(a.at("network"), c.agent.network);
      if (a.contains("hyperparams")) c.agent.hyper = hyperparams_from_json(a.at("hyperparams"), c.agent.hyper);
    }
    if (j.contains("metrics")) c.metrics = metric_params_from_json(j.at("metrics"), c.metrics);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = parse_position_mode(j.at("mode").get<std::string>());
    c.move_cap = j.value("move_cap", c.move_cap);
    c.early_stop = j.value("early_stop", c.early_stop);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration: ") + e.what());
  }
  if (c.agent.encoder.objects != c.agent.hyper.pieces) c.agent.encoder.objects = c.agent.hyper.pieces;
  return c;
}

inline std::unique_ptr<A2CAgent> make_agent(const TrainConfig& c) {
  return std::make_unique<A2CAgent>(c.agent, derive_seed(c.seed, kInitStream));
}

/// Uniform over (piece, bucket) pairs; learns nothing.
class RandomActor : public Actor {
 public:
  Decision decide(const BoardState& board, const History&, double, Rng& rng) override {
    Decision d;
    const auto& p = board.pieces[uniform_index(rng, board.pieces.size())];
    d.move = {p.id, static_cast<int>(uniform_index(rng, kNumBuckets))};
    return d;
  }
};

struct PhaseOutcome {
  std::string rule;
  RunMetrics metrics;
  int episodes = 0;
  std::string reason;  // early_stop | max_episodes | nonfinite_loss
};

struct RunOutcome {
  std::vector<PhaseOutcome> phases;
  bool aborted = false;
};

inline nlohmann::json to_json(const PhaseOutcome& p) {
  return {{"rule", p.rule}, {"metrics", to_json(p.metrics)}, {"episodes", p.episodes}, {"reason", p.reason}};
}

struct EpisodeResult {
  std::vector<int> codes;
  int finish_code = kOngoing;
};

namespace detail {

/// Plays one episode. Moves are logged through `on_move`; the trajectory is
/// filled only when `traj` is given.
template <class OnMove>
EpisodeResult play_episode(Environment& env, Actor& actor, const EpisodeSpec& spec, double eps, Rng& rng,
                           Trajectory* traj, OnMove&& on_move) {
  EpisodeResult r;
  env.start(spec);
  actor.begin_episode(env.board());
  History history(actor.history_length());
  while (true) {
    const BoardState before = env.board();
    Decision d = actor.decide(before, history, eps, rng);
    const MoveOutcome out = env.move(d.move.piece_id, d.move.bucket);
    actor.observe(d.move, out);
    r.codes.push_back(out.response_code);
    on_move(d, out);
    if (traj) traj->steps.push_back({std::move(d.input), std::move(d.mask), d.action, static_cast<double>(out.reward)});
    if (out.response_code == kAccept) history.push({before, d.move});
    if (out.finish_code != kOngoing) {
      r.finish_code = out.finish_code;
      break;
    }
  }
  return r;
}

}  // namespace detail

/// Trains `actor` through every phase of `cfg`. Epsilon restarts at eps_start
/// at each phase; a phase ends early once all three metrics are attained.
inline RunOutcome train_run(const TrainConfig& cfg, Environment& env, Actor& actor, RunLogWriter& log) {
  if (cfg.phases.empty()) throw ConfigError("no rule or trial list given");
  log.write(to_json(cfg));
  Rng rng(derive_seed(cfg.seed, kActorStream));
  RunOutcome run;
  std::int64_t episode = 0, move = 0;
  const auto& h = cfg.agent.hyper;

  for (std::size_t k = 0; k < cfg.phases.size(); ++k) {
    const int phase = static_cast<int>(k) + 1;
    const std::string rule = cfg.phases[k].active();
    log.write({{"type", "phase"}, {"phase", phase}, {"rule", rule}, {"chain", chain_text(cfg.phases[k])},
               {"first_episode", episode + 1}});
    MetricTracker tracker(cfg.metrics);
    PhaseOutcome po;
    po.rule = rule;
    po.reason = "max_episodes";

    for (int pe = 1; pe <= h.max_episodes; ++pe) {
      ++episode;
      const EpisodeSpec spec{rule, h.pieces, derive_seed(cfg.seed, kEpisodeStream, episode), cfg.mode, cfg.move_cap};
      const double eps = epsilon(pe - 1, h);
      Trajectory traj;
      const auto res = detail::play_episode(env, actor, spec, eps, rng, &traj, [&](const Decision& d, const MoveOutcome& o) {
        ++move;
        log.write({{"type", "move"}, {"phase", phase}, {"episode", episode}, {"move", move},
                   {"piece_id", d.move.piece_id}, {"bucket", d.move.bucket}, {"action", d.action},
                   {"code", o.response_code}});
      });
      const UpdateStats st = actor.learn(traj);
      const int errors = static_cast<int>(std::count_if(res.codes.begin(), res.codes.end(), [](int c) { return c != 0; }));
      log.write({{"type", "episode"}, {"phase", phase}, {"episode", episode}, {"phase_episode", pe},
                 {"rule", rule}, {"seed", spec.seed}, {"mode", std::string(to_string(cfg.mode))},
                 {"moves", static_cast<int>(res.codes.size())}, {"errors", errors}, {"E", error_rate(res.codes)},
                 {"finish_code", res.finish_code}, {"epsilon", eps}, {"policy_loss", st.policy_loss},
                 {"critic_loss", st.critic_loss}, {"entropy", st.mean_entropy}});
      tracker.add_episode(res.codes);
      po.episodes = pe;
      if (!st.finite) {
        po.reason = "nonfinite_loss";
        log.write({{"type", "abort"}, {"phase", phase}, {"episode", episode}, {"policy_loss", st.policy_loss},
                   {"critic_loss", st.critic_loss}, {"reason", "non-finite loss"}});
        run.aborted = true;
        break;
      }
      if (cfg.early_stop && tracker.metrics().all_present()) {
        po.reason = "early_stop";
        break;
      }
    }
    po.metrics = tracker.metrics();
    log.write({{"type", "phase_end"}, {"phase", phase}, {"episodes", po.episodes}, {"reason", po.reason},
               {"metrics", to_json(po.metrics)}});
    run.phases.push_back(po);
    if (run.aborted) break;
  }
  return run;
}

struct EvalOutcome {
  std::vector<EvalEpisode> episodes;
  std::optional<double> test_error_ratio;
};

/// Frozen-policy evaluation alternating train-position and test-position
/// episodes 1:1, sampling from the policy without exploration.
inline EvalOutcome evaluate_generalization(const TrainConfig& cfg, Environment& env, Actor& actor, int pairs,
                                           RunLogWriter& log, int phase) {
  EvalOutcome out;
  Rng rng(derive_seed(cfg.seed, kEvalStream, 0));
  const std::string rule = cfg.phases.at(static_cast<std::size_t>(phase - 1)).active();
  for (int i = 0; i < 2 * pairs; ++i) {
    const PositionMode mode = i % 2 == 0 ? PositionMode::Train : PositionMode::Test;
    const EpisodeSpec spec{rule, cfg.agent.hyper.pieces, derive_seed(cfg.seed, kEvalStream, i + 1), mode, cfg.move_cap};
    const auto res = detail::play_episode(env, actor, spec, 0.0, rng, nullptr, [](const Decision&, const MoveOutcome&) {});
    const int errors = static_cast<int>(std::count_if(res.codes.begin(), res.codes.end(), [](int c) { return c != 0; }));
    out.episodes.push_back({mode == PositionMode::Test, errors});
    log.write({{"type", "eval"}, {"phase", phase}, {"index", i + 1}, {"rule", rule}, {"seed", spec.seed},
               {"mode", std::string(to_string(mode))}, {"moves", static_cast<int>(res.codes.size())},
               {"errors", errors}, {"finish_code", res.finish_code}});
  }
  out.test_error_ratio = test_error_ratio(out.episodes);
  return out;
}

/// Conditional M* of one logged phase. Each episode is rebuilt from its logged
/// rule and seed and the logged moves are replayed; a move counts only when
/// some move on the board at that moment would have been rejected.
inline std::optional<std::int64_t> replay_conditional_m_star(const RunLog& log, int phase, int w,
                                                            const RuleCatalog& catalog = RuleCatalog::builtin()) {
  int pieces = 9;
  int move_cap = kDefaultMoveCap;
  if (log.config.contains("agent")) pieces = log.config["agent"]["hyperparams"].value("n", pieces);
  move_cap = log.config.value("move_cap", move_cap);

  std::vector<int> codes;
  std::vector<bool> applies;
  std::size_t mi = 0;
  for (const auto& el : log.episodes) {
    if (el.phase != phase) continue;
    Episode ep = new_episode(catalog.resolve(el.rule), pieces, el.seed,
                             PositionSet::for_mode(parse_position_mode(el.mode)), move_cap);
    while (mi < log.moves.size() && log.moves[mi].episode < el.episode) ++mi;
    for (; mi < log.moves.size() && log.moves[mi].episode == el.episode; ++mi) {
      const auto& m = log.moves[mi];
      const auto legal = legal_moves(ep);
      applies.push_back(legal.size() < ep.board.pieces.size() * kNumBuckets);
      const auto out = attempt_move(ep, m.piece_id, m.bucket);
      if (out.response_code != m.code)
        throw ParseError("replay diverges from the log at move " + std::to_string(m.move));
      codes.push_back(m.code);
    }
  }
  return m_star_conditional(codes, applies, w);
}

}  // namespace gohr
