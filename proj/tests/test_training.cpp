#include <sstream>

#include <gtest/gtest.h>

#include "gohr/training.hpp"

using namespace gohr;

namespace {

/// Always plays the first move the engine would accept.
class OracleActor : public Actor {
 public:
  explicit OracleActor(const LocalEnvironment& env) : env_(env) {}
  Decision decide(const BoardState&, const History&, double, Rng&) override {
    Decision d;
    d.move = legal_moves(env_.episode()).front();
    return d;
  }

 private:
  const LocalEnvironment& env_;
};

class NanActor : public RandomActor {
 public:
  UpdateStats learn(const Trajectory&) override {
    UpdateStats s;
    s.finite = false;
    s.policy_loss = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
};

TrainConfig tiny_config(const std::string& rule, std::uint64_t seed, int episodes) {
  auto c = TrainConfig::for_rule(rule);
  c.seed = seed;
  c.agent.network = {8, 2, 1, 16, false};
  c.agent.encoder.history = 2;
  c.agent.hyper.max_episodes = episodes;
  c.agent.hyper.lr = 1e-3;
  return c;
}

std::string run_to_string(const TrainConfig& c) {
  std::ostringstream os;
  RunLogWriter w(&os);
  LocalEnvironment env;
  auto agent = make_agent(c);
  train_run(c, env, *agent, w);
  return os.str();
}

}  // namespace

TEST(Tracker, MatchesBatchComputation) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    MetricParams p{1 + static_cast<int>(uniform_index(rng, 6)), 0.3 * uniform01(rng),
                   1 + static_cast<int>(uniform_index(rng, 6)), 0.5 * uniform01(rng),
                   1 + static_cast<int>(uniform_index(rng, 12))};
    MetricTracker tr(p);
    std::vector<double> e;
    std::vector<int> codes;
    const double err = uniform01(rng);
    for (int ep = 0; ep < 40; ++ep) {
      std::vector<int> c;
      for (int k = 0; k < 1 + static_cast<int>(uniform_index(rng, 8)); ++k) c.push_back(uniform01(rng) < err ? 4 : 0);
      tr.add_episode(c);
      e.push_back(error_rate(c));
      codes.insert(codes.end(), c.begin(), c.end());
      const auto batch = compute_run_metrics(e, codes, p);
      ASSERT_EQ(tr.metrics().e_star_mean, batch.e_star_mean);
      ASSERT_EQ(tr.metrics().e_star_max, batch.e_star_max);
      ASSERT_EQ(tr.metrics().m_star, batch.m_star);
    }
  }
}

TEST(TrainRun, OracleLearnsImmediately) {
  auto c = TrainConfig::for_rule("ordL1");
  c.seed = 3;
  LocalEnvironment env;
  OracleActor oracle(env);
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto run = train_run(c, env, oracle, w);
  ASSERT_EQ(run.phases.size(), 1u);
  const auto& ph = run.phases[0];
  EXPECT_EQ(ph.reason, "early_stop");
  EXPECT_EQ(ph.episodes, 20);
  EXPECT_EQ(ph.metrics.e_star_mean, 1);
  EXPECT_EQ(ph.metrics.e_star_max, 1);
  EXPECT_EQ(ph.metrics.m_star, 1);

  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  ASSERT_EQ(log.episodes.size(), 20u);
  for (const auto& e : log.episodes) {
    EXPECT_EQ(e.moves, 9);
    EXPECT_EQ(e.errors, 0);
    EXPECT_EQ(e.finish_code, kCompleted);
  }
  EXPECT_EQ(log.moves.size(), 180u);
}

TEST(TrainRun, LogReproducesReportedMetrics) {
  auto c = TrainConfig::for_rule("cm_RBKY");
  c.seed = 11;
  c.agent.hyper.max_episodes = 60;
  c.metrics = {5, 0.6, 3, 0.7, 4};
  LocalEnvironment env;
  RandomActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto run = train_run(c, env, actor, w);
  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  const auto re = phase_metrics(log, 1, log_metric_params(log));
  EXPECT_EQ(re.e_star_mean, run.phases[0].metrics.e_star_mean);
  EXPECT_EQ(re.e_star_max, run.phases[0].metrics.e_star_max);
  EXPECT_EQ(re.m_star, run.phases[0].metrics.m_star);
  ASSERT_EQ(log.phase_ends.size(), 1u);
  EXPECT_EQ(log.phase_ends[0]["metrics"], to_json(run.phases[0].metrics));
}

TEST(TrainRun, SameSeedSameLogBytes) {
  const auto a = run_to_string(tiny_config("quadNearby", 42, 4));
  const auto b = run_to_string(tiny_config("quadNearby", 42, 4));
  const auto d = run_to_string(tiny_config("quadNearby", 43, 4));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, d);
}

TEST(TrainRun, LearnerEpisodesAreUpdated) {
  auto c = tiny_config("cw", 1, 3);
  std::ostringstream os;
  RunLogWriter w(&os);
  LocalEnvironment env;
  auto agent = make_agent(c);
  const auto before = agent->checkpoint();
  train_run(c, env, *agent, w);
  EXPECT_NE(agent->checkpoint()["policy"], before["policy"]);
}

TEST(TrainRun, PhasesAreIndependentlyScored) {
  auto c = TrainConfig::for_rule("ordL1");
  c.phases = parse_trial_list("cw\nordL1\n").phases;
  c.agent.hyper.max_episodes = 15;
  c.early_stop = false;
  LocalEnvironment env;
  RandomActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto run = train_run(c, env, actor, w);
  ASSERT_EQ(run.phases.size(), 2u);
  EXPECT_EQ(run.phases[0].rule, "cw");
  EXPECT_EQ(run.phases[1].rule, "ordL1");

  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  ASSERT_EQ(log.episodes.size(), 30u);
  EXPECT_EQ(log.episodes[15].phase, 2);
  EXPECT_EQ(log.episodes[15].phase_episode, 1);
  EXPECT_EQ(log.episodes[15].episode, 16);
  EXPECT_EQ(log.phases[1]["first_episode"], 16);
  for (int ph = 1; ph <= 2; ++ph) {
    const auto re = phase_metrics(log, ph, c.metrics);
    EXPECT_EQ(re.m_star, run.phases[ph - 1].metrics.m_star);
  }
}

TEST(TrainRun, EpsilonRestartsEachPhase) {
  auto c = tiny_config("cw", 2, 3);
  c.phases = parse_trial_list("cw\nccw\n").phases;
  c.early_stop = false;
  std::ostringstream os;
  RunLogWriter w(&os);
  LocalEnvironment env;
  auto agent = make_agent(c);
  train_run(c, env, *agent, w);
  std::istringstream is(os.str());
  std::vector<double> eps;
  std::string line;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "episode") eps.push_back(j["epsilon"]);
  }
  ASSERT_EQ(eps.size(), 6u);
  EXPECT_DOUBLE_EQ(eps[0], c.agent.hyper.eps_start);
  EXPECT_DOUBLE_EQ(eps[3], c.agent.hyper.eps_start);
  EXPECT_DOUBLE_EQ(eps[1], eps[4]);
  EXPECT_LT(eps[1], eps[0]);
}

TEST(TrainRun, NonFiniteLossAborts) {
  auto c = TrainConfig::for_rule("cw");
  c.phases = parse_trial_list("cw\nccw\n").phases;
  LocalEnvironment env;
  NanActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto run = train_run(c, env, actor, w);
  EXPECT_TRUE(run.aborted);
  ASSERT_EQ(run.phases.size(), 1u);
  EXPECT_EQ(run.phases[0].reason, "nonfinite_loss");
  EXPECT_EQ(run.phases[0].episodes, 1);
  std::istringstream is(os.str());
  EXPECT_TRUE(parse_runlog(is).abort.has_value());
}

TEST(TrainRun, EmptyConfigurationRejected) {
  TrainConfig c;
  LocalEnvironment env;
  RandomActor actor;
  RunLogWriter w;
  EXPECT_THROW(train_run(c, env, actor, w), ConfigError);
}

TEST(ConditionalMStar, OracleOnOrderingRuleStartsAtFirstConstrainedMove) {
  auto c = TrainConfig::for_rule("cw");
  c.agent.hyper.max_episodes = 5;
  c.early_stop = false;
  LocalEnvironment env;
  OracleActor oracle(env);
  std::ostringstream os;
  RunLogWriter w(&os);
  train_run(c, env, oracle, w);
  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  // The opening move of each episode is unconstrained and does not count.
  EXPECT_EQ(replay_conditional_m_star(log, 1, 15), 2);
}

TEST(ConditionalMStar, CountsOnlyConstrainedMoves) {
  // Under cm_RBKY every piece has exactly one legal bucket, so every move
  // applies and the conditional metric equals the plain one.
  auto c = TrainConfig::for_rule("cm_RBKY");
  c.seed = 8;
  c.agent.hyper.max_episodes = 80;
  c.early_stop = false;
  LocalEnvironment env;
  RandomActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto run = train_run(c, env, actor, w);
  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  const auto cond = replay_conditional_m_star(log, 1, 3);
  const auto plain = m_star(std::vector<int>([&] {
    std::vector<int> v;
    for (const auto& m : log.moves) v.push_back(m.code);
    return v;
  }()), 3);
  EXPECT_EQ(cond, plain);
  (void)run;
}

TEST(ConditionalMStar, TamperedLogIsDetected) {
  auto c = TrainConfig::for_rule("cw");
  c.agent.hyper.max_episodes = 2;
  LocalEnvironment env;
  RandomActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  train_run(c, env, actor, w);
  std::istringstream is(os.str());
  auto log = parse_runlog(is);
  log.moves[0].code = log.moves[0].code == 0 ? 4 : 0;
  EXPECT_THROW(replay_conditional_m_star(log, 1, 3), ParseError);
}

TEST(Evaluation, AlternatesTrainAndTestPositions) {
  auto c = TrainConfig::for_rule("quadNearby");
  LocalEnvironment env;
  RandomActor actor;
  std::ostringstream os;
  RunLogWriter w(&os);
  const auto out = evaluate_generalization(c, env, actor, 10, w, 1);
  ASSERT_EQ(out.episodes.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(out.episodes[i].test_mode, i % 2 == 1);
  ASSERT_TRUE(out.test_error_ratio.has_value());
  std::istringstream is(os.str());
  const auto log = parse_runlog(is);
  ASSERT_EQ(log.evals.size(), 20u);
  EXPECT_EQ(log.evals[0].mode, "train");
  EXPECT_EQ(log.evals[1].mode, "test");
}

TEST(TrainConfigJson, RoundTrip) {
  auto c = tiny_config("cw", 9, 7);
  c.phases = parse_trial_list("cw\nccw:cw_0123\n").phases;
  c.mode = PositionMode::Train;
  c.agent.encoder.representation = Representation::OC;
  c.agent.hyper.optimizer = "adam";
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(TrainConfigJson, BadValuesRejected) {
  EXPECT_THROW(train_config_from_json({{"phases", {"noSuchRule"}}}), std::exception);
  EXPECT_THROW(train_config_from_json({{"seed", "x"}}), ConfigError);
}
