#include <gtest/gtest.h>

#include <numeric>

#include "gohr/catalog.hpp"
#include "gohr/learner.hpp"

using namespace gohr;

namespace {

ad::Mat random_mat(int r, int c, Rng& rng, double sd = 1.0) { return nn::random_normal(r, c, sd, rng); }

// Plays a few moves of an episode with the agent and returns the trajectory.
Trajectory short_trajectory(A2CAgent& agent, const std::string& rule, int steps, std::uint64_t seed) {
  Episode ep = new_episode(resolve_rule(rule), 9, seed);
  History h(agent.history_length());
  Rng rng(seed + 1);
  Trajectory traj;
  for (int t = 0; t < steps && !ep.finished(); ++t) {
    const auto d = agent.decide(ep.board, h, 0.5, rng);
    const BoardState before = ep.board;
    const auto out = attempt_move(ep, d.move.piece_id, d.move.bucket);
    traj.steps.push_back({d.input, d.mask, d.action, static_cast<double>(out.reward)});
    if (out.response_code == kAccept) h.push({before, d.move});
  }
  return traj;
}

AgentConfig small_config(Representation repr, bool zero_head = true) {
  AgentConfig c;
  c.encoder.representation = repr;
  c.network.zero_head = zero_head;
  return c;
}

}  // namespace

TEST(Returns, Examples) {
  const auto g = discounted_returns({-1, -1, 0}, 0.001);
  EXPECT_DOUBLE_EQ(g[0], -1.001);
  EXPECT_DOUBLE_EQ(g[1], -1.0);
  EXPECT_DOUBLE_EQ(g[2], 0.0);
  EXPECT_EQ(discounted_returns({-1, -1, -1}, 1.0), (std::vector<double>{-3, -2, -1}));
  EXPECT_EQ(discounted_returns({0, 0, 0, 0}, 0.5), std::vector<double>(4, 0.0));
  EXPECT_THROW(discounted_returns({}, 0.5), DomainError);
}

TEST(Returns, RecursionHoldsExactly) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(1 + trial % 40);
    for (auto& x : r) x = uniform_index(rng, 2) ? -1.0 : 0.0;
    const double gamma = uniform01(rng);
    const auto g = discounted_returns(r, gamma);
    for (std::size_t t = 0; t + 1 < r.size(); ++t) EXPECT_EQ(g[t], r[t] + gamma * g[t + 1]);
    EXPECT_EQ(g.back(), r.back());
  }
}

TEST(Advantages, Examples) {
  const auto a = advantages({1, 3}, {0, 0});
  EXPECT_NEAR(a[0], -1.0, 1e-7);
  EXPECT_NEAR(a[1], 1.0, 1e-7);
  for (double x : advantages({2, 2, 2}, {0, 0, 0})) EXPECT_NEAR(x, 0.0, 1e-12);
  for (double x : advantages({0.5, -1}, {0.5, -1})) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(advantages({-1}, {0.25}), (std::vector<double>{-1.25}));
}

TEST(Losses, Examples) {
  EXPECT_DOUBLE_EQ(critic_loss({1, 2}, {1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(critic_loss({1, 0}, {0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(critic_loss({3, 0}, {0, 0}), 9 * critic_loss({1, 0}, {0, 0}));
  EXPECT_DOUBLE_EQ(policy_loss({-0.3}, {0}, {0.7}, 0.0), 0.0);
  EXPECT_NEAR(policy_loss({-1}, {2}, {1}, 0.01), 1.99, 1e-15);
  EXPECT_LT(policy_loss({-1}, {2}, {1}, 0.02), policy_loss({-1}, {2}, {1}, 0.01));
}

TEST(Epsilon, Schedule) {
  Hyperparams h;
  EXPECT_DOUBLE_EQ(epsilon(0, h), 0.99);
  EXPECT_NEAR(epsilon(1e6, h), 0.0001, 1e-15);
  EXPECT_NEAR(epsilon(200, h), 0.0001 + 0.9899 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(epsilon(200, h), 0.3642, 1e-4);
}

TEST(Hyper, Validation) {
  Hyperparams h;
  EXPECT_NO_THROW(h.validate());
  h.eps_end = 0.995;
  EXPECT_THROW(h.validate(), ConfigError);
  h = {};
  h.optimizer = "rmsprop";
  EXPECT_THROW(h.validate(), ConfigError);
  h = {};
  h.lr = 0;
  EXPECT_THROW(h.validate(), ConfigError);
  const auto back = hyperparams_from_json(to_json(Hyperparams{}));
  EXPECT_EQ(back.lr, 1e-5);
  EXPECT_EQ(back.max_episodes, 10000);
}

TEST(Policy, OutputSizesAndUniformInit) {
  for (auto repr : {Representation::FC, Representation::OC}) {
    A2CAgent agent(small_config(repr), 1);
    const auto ep = new_episode(resolve_rule("cw"), 9, 2);
    const auto x = agent.encoder().encode(ep.board, History{});
    const auto logits = agent.policy().forward(x);
    EXPECT_EQ(logits.cols(), repr == Representation::FC ? 144 : 36);
    const auto mask = agent.encoder().mask(ep.board);
    const auto lp = agent.log_probs(x, mask);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (mask[a])
        EXPECT_NEAR(std::exp(lp[a]), 1.0 / 36.0, 1e-12);
      else
        EXPECT_EQ(std::exp(lp[a]), 0.0);
    }
    EXPECT_DOUBLE_EQ(agent.value(x), 0.0);
  }
}

TEST(Policy, SingleAdmissibleActionIsCertain) {
  Rng rng(3);
  const auto logits = ad::constant(random_mat(1, 10, rng));
  std::vector<bool> mask(10, false);
  mask[6] = true;
  const auto lp = ad::masked_log_softmax(logits, mask);
  EXPECT_DOUBLE_EQ(lp.value()(0, 6), 0.0);
  EXPECT_DOUBLE_EQ(ad::entropy_from_log_probs(lp).item(), 0.0);
}

TEST(Policy, MaskedActionsAreNeverSampled) {
  Rng rng(99);
  const auto logits = ad::constant(random_mat(1, 144, rng, 2.0));
  std::vector<bool> mask(144, false);
  for (int a = 0; a < 144; a += 7) mask[a] = true;
  const auto lp = ad::masked_log_softmax(logits, mask);
  const std::vector<double> logp(lp.value().data(), lp.value().data() + 144);
  std::vector<int> counts(144, 0);
  for (int i = 0; i < 1000000; ++i) ++counts[sample_action(logp, mask, i % 2 ? 0.5 : 0.0, rng)];
  int violations = 0;
  for (int a = 0; a < 144; ++a)
    if (!mask[a]) violations += counts[a];
  EXPECT_EQ(violations, 0);
  // Empirical frequencies track 0.75 p + 0.25 / k.
  const double k = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  for (int a = 0; a < 144; ++a) {
    if (!mask[a]) continue;
    EXPECT_NEAR(counts[a] / 1e6, 0.75 * std::exp(logp[a]) + 0.25 / k, 0.003);
  }
}

TEST(Policy, EntropyBound) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> mask(20, false);
    int k = 0;
    for (auto&& m : mask) {
      m = uniform_index(rng, 2) == 1;
      k += m;
    }
    if (k == 0) continue;
    const auto lp = ad::masked_log_softmax(ad::constant(random_mat(1, 20, rng)), mask);
    EXPECT_LE(ad::entropy_from_log_probs(lp).item(), std::log(k) + 1e-12);
    const auto flat = ad::masked_log_softmax(ad::constant(ad::Mat::Zero(1, 20)), mask);
    EXPECT_NEAR(ad::entropy_from_log_probs(flat).item(), std::log(k), 1e-12);
  }
}

TEST(Policy, OcIsEquivariantUnderObjectPermutation) {
  A2CAgent agent(small_config(Representation::OC, false), 8);
  History h(6);
  Episode ep = new_episode(resolve_rule("ordL1"), 9, 12);
  for (int k = 0; k < 3; ++k) {
    const Move m = legal_moves(ep).front();
    const BoardState before = ep.board;
    attempt_move(ep, m.piece_id, m.bucket);
    h.push({before, m});
  }
  // relabel object ids by a fixed permutation everywhere
  const std::vector<int> perm = {0, 4, 7, 1, 9, 2, 5, 8, 3, 6};  // perm[id] -> new id
  auto relabel = [&](BoardState b) {
    for (auto& p : b.pieces) p.id = perm[p.id];
    return b;
  };
  History hp(6);
  for (int k = static_cast<int>(h.size()) - 1; k >= 0; --k)
    hp.push({relabel(h[k].board), Move{perm[h[k].move.piece_id], h[k].move.bucket}});
  const auto x = agent.encoder().encode(ep.board, h);
  const auto xp = agent.encoder().encode(relabel(ep.board), hp);
  const auto y = agent.policy().forward(x).value();
  const auto yp = agent.policy().forward(xp).value();
  for (int id = 1; id <= 9; ++id)
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(y(0, (id - 1) * 4 + b), yp(0, (perm[id] - 1) * 4 + b), 1e-10);
  EXPECT_NEAR(agent.value(x), agent.value(xp), 1e-10);
}

TEST(GradCheck, LinearLayer) {
  Rng rng(1);
  nn::Linear lin(7, 5, rng);
  const auto x = ad::constant(random_mat(3, 7, rng));
  const auto target = random_mat(3, 5, rng);
  auto loss = [&] { return ad::sum(ad::square(ad::sub(lin(x), ad::constant(target)))); };
  ParamList ps;
  lin.collect(ps, "lin");
  ad::backward(loss());
  Rng pick(2);
  const auto r = gradient_check(ps, [&] { return loss().item(); }, 40, pick);
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(GradCheck, PrimitiveOps) {
  Rng rng(6);
  auto a = ad::parameter(random_mat(4, 6, rng));
  auto g = ad::parameter(random_mat(1, 6, rng));
  auto b = ad::parameter(random_mat(1, 6, rng));
  const auto w = ad::constant(random_mat(4, 6, rng));
  std::vector<bool> mask = {true, false, true, true, false, true};
  auto loss = [&] {
    auto y = ad::layer_norm(a, g, b);
    y = ad::gelu(y);
    auto s = ad::softmax_rows(ad::matmul(y, ad::transpose(a)));
    auto z = ad::concat_cols({ad::slice_cols(y, 0, 2), ad::matmul(s, ad::slice_cols(a, 2, 4))});
    auto lp = ad::masked_log_softmax(ad::mean_rows(ad::mul(z, w)), mask);
    auto flat = ad::flatten_row(ad::slice_rows(z, 1, 2));
    return ad::add(ad::add(ad::pick(lp, 0, 3), ad::scale(ad::entropy_from_log_probs(lp), 0.7)),
                   ad::scale(ad::sum(ad::square(flat)), 0.01));
  };
  ad::backward(loss());
  Rng pick(7);
  const auto r = gradient_check({{"a", a}, {"g", g}, {"b", b}}, [&] { return loss().item(); }, 36, pick);
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  Rng rng(8);
  auto a = ad::parameter(random_mat(3, 3, rng));
  auto loss = ad::sum(ad::sub(a, a));
  ad::backward(loss);
  EXPECT_EQ(a.grad().cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, InteriorGradientsDoNotLeakBetweenCalls) {
  Rng rng(9);
  auto a = ad::parameter(random_mat(2, 2, rng));
  const auto y = ad::sum(ad::square(a));
  ad::backward(y);
  ad::backward(y);
  EXPECT_TRUE(a.grad().isApprox(4 * a.value()));
}

class FullTransformerGradCheck : public ::testing::TestWithParam<Representation> {};

TEST_P(FullTransformerGradCheck, PolicyAndCriticLosses) {
  A2CAgent agent(small_config(GetParam(), false), 21);
  const auto traj = short_trajectory(agent, "quadNearby", 4, 5);
  ASSERT_GE(traj.steps.size(), 2u);
  agent.policy().zero_grad();
  agent.critic().zero_grad();
  std::vector<double> adv;
  agent.accumulate_gradients(traj, &adv);
  Rng pick(33);
  const auto pr = gradient_check(agent.policy().parameters(), [&] { return agent.losses(traj, adv).first; }, 120, pick);
  const auto cr = gradient_check(agent.critic().parameters(), [&] { return agent.losses(traj, adv).second; }, 120, pick);
  EXPECT_GE(pr.checked, 100);
  EXPECT_LE(pr.max_rel_error, 1e-3);
  EXPECT_LE(cr.max_rel_error, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Representations, FullTransformerGradCheck,
                         ::testing::Values(Representation::FC, Representation::OC),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Update, StepChangesParametersIffTrajectoryNonEmpty) {
  A2CAgent agent(small_config(Representation::FC), 2);
  const auto before = agent.checkpoint();
  agent.learn(Trajectory{});
  EXPECT_EQ(agent.checkpoint(), before);
  const auto traj = short_trajectory(agent, "cm_RBKY", 5, 3);
  const auto st = agent.learn(traj);
  EXPECT_TRUE(st.updated);
  EXPECT_NE(agent.checkpoint().at("policy"), before.at("policy"));
  EXPECT_NE(agent.checkpoint().at("critic"), before.at("critic"));
}

TEST(Checkpoint, RoundTripRestoresBehaviour) {
  for (const char* opt : {"sgd", "adam"}) {
    AgentConfig cfg = small_config(Representation::OC);
    cfg.hyper.optimizer = opt;
    cfg.hyper.lr = 1e-3;
    A2CAgent a(cfg, 4);
    a.learn(short_trajectory(a, "cw", 6, 1));
    const auto saved = nlohmann::json::parse(a.checkpoint().dump());
    A2CAgent b(cfg, 999);
    b.restore(saved);
    EXPECT_EQ(b.checkpoint(), a.checkpoint());
    const auto traj = short_trajectory(a, "cw", 6, 2);
    a.learn(traj);
    b.learn(traj);
    EXPECT_EQ(b.checkpoint(), a.checkpoint());
  }
  Rng r(5);
  r.discard(17);
  Rng s;
  set_rng_state(s, rng_state(r));
  EXPECT_EQ(r(), s());
}

TEST(Update, UniformRandomPolicyAcceptsAQuarterOnColorMapping) {
  // piece choice is irrelevant under cm_RBKY; exactly one bucket of four is right
  Rng rng(17);
  int accepts = 0, moves = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Episode ep = new_episode(resolve_rule("cm_RBKY"), 9, seed);
    while (!ep.finished()) {
      const auto& p = ep.board.pieces[uniform_index(rng, ep.board.pieces.size())];
      accepts += attempt_move(ep, p.id, static_cast<int>(uniform_index(rng, 4))).response_code == kAccept;
      ++moves;
    }
  }
  EXPECT_NEAR(static_cast<double>(accepts) / moves, 0.25, 0.01);
}
