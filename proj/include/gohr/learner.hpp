#pragma once

// Entropy-regularized advantage actor-critic: return/advantage/loss math,
// epsilon-greedy masked sampling, optimizers, the A2C agent and its
// checkpoint format, and a finite-difference gradient checker.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohr/autodiff.hpp"
#include "gohr/encoders.hpp"
#include "gohr/engine.hpp"
#include "gohr/random.hpp"
#include "gohr/transformer.hpp"

namespace gohr {

struct Hyperparams {
  double lr = 1e-5;
  double gamma = 0.001;
  double eps_start = 0.99;
  double eps_end = 0.0001;
  double eps_decay = 200;
  int batch_size = 1;
  int pieces = 9;
  double beta = 0.01;
  int max_episodes = 10000;
  double delta = 1e-8;
  std::string optimizer = "sgd";  // "sgd" | "adam"
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr > 0 && gamma > 0 && eps_start > 0 && eps_end > 0 && eps_decay > 0 && beta >= 0 && delta > 0))
      throw ConfigError("hyperparameters must be positive");
    if (!(eps_end < eps_start) || eps_start > 1) throw ConfigError("need 0 < eps_end < eps_start <= 1");
    if (batch_size != 1) throw ConfigError("only batch size 1 (one episode per update) is supported");
    if (pieces < 1 || pieces > kNumCells) throw ConfigError("piece count out of range");
    if (max_episodes < 1) throw ConfigError("max_episodes must be positive");
    if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("optimizer must be sgd or adam");
  }
};

inline nlohmann::json to_json(const Hyperparams& h) {
  return {{"lr", h.lr},
          {"gamma", h.gamma},
          {"eps_start", h.eps_start},
          {"eps_end", h.eps_end},
          {"eps_decay", h.eps_decay},
          {"batch_size", h.batch_size},
          {"n", h.pieces},
          {"beta", h.beta},
          {"max_episodes", h.max_episodes},
          {"delta", h.delta},
          {"optimizer", h.optimizer},
          {"adam_beta1", h.adam_beta1},
          {"adam_beta2", h.adam_beta2},
          {"adam_eps", h.adam_eps}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams h = {}) {
  h.lr = j.value("lr", h.lr);
  h.gamma = j.value("gamma", h.gamma);
  h.eps_start = j.value("eps_start", h.eps_start);
  h.eps_end = j.value("eps_end", h.eps_end);
  h.eps_decay = j.value("eps_decay", h.eps_decay);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.pieces = j.value("n", h.pieces);
  h.beta = j.value("beta", h.beta);
  h.max_episodes = j.value("max_episodes", h.max_episodes);
  h.delta = j.value("delta", h.delta);
  h.optimizer = j.value("optimizer", h.optimizer);
  h.adam_beta1 = j.value("adam_beta1", h.adam_beta1);
  h.adam_beta2 = j.value("adam_beta2", h.adam_beta2);
  h.adam_eps = j.value("adam_eps", h.adam_eps);
  h.validate();
  return h;
}

// ---- A2C arithmetic ----------------------------------------------------------

inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  if (rewards.empty()) throw DomainError("no rewards");
  std::vector<double> g(rewards.size());
  double acc = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

/// G - V, normalized to zero mean and unit (population) deviation when there
/// are at least two steps.
inline std::vector<double> advantages(const std::vector<double>& g, const std::vector<double>& v,
                                      double delta = 1e-8) {
  if (g.size() != v.size() || g.empty()) throw DomainError("returns and values differ in length");
  std::vector<double> a(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) a[i] = g[i] - v[i];
  if (a.size() < 2) return a;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x = (x - mean) / (sd + delta);
  return a;
}

inline double critic_loss(const std::vector<double>& g, const std::vector<double>& v) {
  if (g.size() != v.size() || g.empty()) throw DomainError("returns and values differ in length");
  double s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) s += (g[i] - v[i]) * (g[i] - v[i]);
  return s / static_cast<double>(g.size());
}

inline double policy_loss(const std::vector<double>& logp, const std::vector<double>& adv,
                          const std::vector<double>& entropy, double beta) {
  if (logp.size() != adv.size() || logp.size() != entropy.size() || logp.empty())
    throw DomainError("policy loss inputs differ in length");
  double s = 0;
  for (std::size_t i = 0; i < logp.size(); ++i) s += logp[i] * adv[i] + beta * entropy[i];
  return -s / static_cast<double>(logp.size());
}

inline double epsilon(double t, const Hyperparams& h) {
  return h.eps_end + (h.eps_start - h.eps_end) * std::exp(-t / h.eps_decay);
}

/// Entropy of the distribution over admissible actions given log-probabilities.
inline double masked_entropy(const std::vector<double>& logp) {
  double h = 0;
  for (double l : logp)
    if (std::isfinite(l)) h -= std::exp(l) * l;
  return h;
}

/// With probability eps a uniform admissible action, else a draw from exp(logp).
inline int sample_action(const std::vector<double>& logp, const std::vector<bool>& mask, double eps, Rng& rng) {
  std::vector<int> admissible;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) admissible.push_back(static_cast<int>(i));
  if (admissible.empty()) throw DomainError("no admissible action");
  if (uniform01(rng) < eps) return admissible[uniform_index(rng, admissible.size())];
  const double u = uniform01(rng);
  double c = 0;
  for (int a : admissible) {
    c += std::exp(logp[a]);
    if (u < c) return a;
  }
  return admissible.back();  // rounding left a sliver of mass past the end
}

// ---- optimizers --------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(ParamList params, const Hyperparams& h) : params_(std::move(params)), h_(h) {
    if (h_.optimizer == "adam")
      for (const auto& [name, v] : params_) {
        m_.push_back(ad::Mat::Zero(v.rows(), v.cols()));
        s_.push_back(ad::Mat::Zero(v.rows(), v.cols()));
      }
  }

  /// Applies accumulated gradients; parameters without a gradient are left alone.
  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      if (p.grad().size() == 0) continue;
      if (h_.optimizer == "sgd") {
        p.mutable_value() -= h_.lr * p.grad();
      } else {
        m_[i] = h_.adam_beta1 * m_[i] + (1 - h_.adam_beta1) * p.grad();
        s_[i] = h_.adam_beta2 * s_[i] + (1 - h_.adam_beta2) * p.grad().cwiseProduct(p.grad());
        const double c1 = 1 - std::pow(h_.adam_beta1, static_cast<double>(t_));
        const double c2 = 1 - std::pow(h_.adam_beta2, static_cast<double>(t_));
        p.mutable_value().array() -=
            h_.lr * (m_[i].array() / c1) / ((s_[i].array() / c2).sqrt() + h_.adam_eps);
      }
    }
  }

  std::int64_t steps() const { return t_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  ParamList params_;
  Hyperparams h_;
  std::vector<ad::Mat> m_, s_;
  std::int64_t t_ = 0;
};

// ---- parameter serialization -------------------------------------------------

inline nlohmann::json matrix_to_json(const ad::Mat& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline ad::Mat matrix_from_json(const nlohmann::json& j) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != r * c) throw ParseError("matrix size mismatch");
  return Eigen::Map<const ad::Mat>(data.data(), r, c);
}

inline nlohmann::json Optimizer::state() const {
  nlohmann::json j = {{"kind", h_.optimizer}, {"t", t_}};
  if (h_.optimizer == "adam") {
    nlohmann::json m = nlohmann::json::array(), s = nlohmann::json::array();
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m.push_back(matrix_to_json(m_[i]));
      s.push_back(matrix_to_json(s_[i]));
    }
    j["m"] = m;
    j["v"] = s;
  }
  return j;
}

inline void Optimizer::load_state(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != h_.optimizer) throw ParseError("checkpoint optimizer kind differs");
  t_ = j.at("t").get<std::int64_t>();
  if (h_.optimizer == "adam") {
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = matrix_from_json(j.at("m").at(i));
      s_[i] = matrix_from_json(j.at("v").at(i));
    }
  }
}

inline nlohmann::json params_to_json(const ParamList& ps) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, v] : ps) j[name] = matrix_to_json(v.value());
  return j;
}

inline void params_from_json(const ParamList& ps, const nlohmann::json& j) {
  for (const auto& [name, v] : ps) {
    ad::Mat m = matrix_from_json(j.at(name));
    if (m.rows() != v.rows() || m.cols() != v.cols()) throw ParseError("checkpoint shape mismatch for " + name);
    ad::Var handle = v;
    handle.mutable_value() = std::move(m);
  }
}

// ---- actors ------------------------------------------------------------------

/// One attempted move as the learner saw it.
struct StepRecord {
  std::vector<double> input;
  std::vector<bool> mask;
  int action = 0;
  double reward = 0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
};

struct Decision {
  Move move;
  int action = 0;
  std::vector<double> input;
  std::vector<bool> mask;
};

struct UpdateStats {
  bool updated = false;
  bool finite = true;
  double policy_loss = 0;
  double critic_loss = 0;
  double mean_entropy = 0;
};

/// Anything that can play an episode. Scripted players ignore learn().
class Actor {
 public:
  virtual ~Actor() = default;
  virtual Decision decide(const BoardState& board, const History& history, double eps, Rng& rng) = 0;
  virtual void observe(const Move&, const MoveOutcome&) {}
  virtual void begin_episode(const BoardState&) {}
  virtual UpdateStats learn(const Trajectory&) { return {}; }
  virtual int history_length() const { return 0; }
};

struct AgentConfig {
  EncoderConfig encoder;
  TransformerConfig network;
  Hyperparams hyper;
};

inline nlohmann::json to_json(const AgentConfig& c) {
  return {{"representation", std::string(to_string(c.encoder.representation))},
          {"n_hist", c.encoder.history},
          {"objects", c.encoder.objects},
          {"network", to_json(c.network)},
          {"hyperparams", to_json(c.hyper)}};
}

class A2CAgent : public Actor {
 public:
  A2CAgent(const AgentConfig& cfg, std::uint64_t init_seed) : cfg_(cfg), encoder_(cfg.encoder) {
    cfg_.hyper.validate();
    cfg_.network.validate();
    Rng rng(init_seed);
    const auto scheme = TokenScheme::for_encoder(encoder_);
    policy_ = std::make_unique<TransformerNet>(scheme, cfg_.network, HeadKind::Policy, rng);
    critic_ = std::make_unique<TransformerNet>(scheme, cfg_.network, HeadKind::Value, rng);
    policy_opt_ = std::make_unique<Optimizer>(policy_->parameters(), cfg_.hyper);
    critic_opt_ = std::make_unique<Optimizer>(critic_->parameters(), cfg_.hyper);
  }

  const AgentConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }
  TransformerNet& policy() { return *policy_; }
  TransformerNet& critic() { return *critic_; }
  int history_length() const override { return cfg_.encoder.history; }

  std::vector<double> log_probs(const std::vector<double>& input, const std::vector<bool>& mask) const {
    const auto lp = ad::masked_log_softmax(policy_->forward(input), mask);
    return {lp.value().data(), lp.value().data() + lp.value().size()};
  }

  double value(const std::vector<double>& input) const { return critic_->forward(input).item(); }

  Decision decide(const BoardState& board, const History& history, double eps, Rng& rng) override {
    Decision d;
    d.input = encoder_.encode(board, history);
    d.mask = encoder_.mask(board);
    d.action = sample_action(log_probs(d.input, d.mask), d.mask, eps, rng);
    d.move = encoder_.move_of(board, d.action);
    return d;
  }

  /// Per-step forward/backward over the episode, accumulating gradients of the
  /// critic loss and the policy loss into the parameters (not applied).
  UpdateStats accumulate_gradients(const Trajectory& traj, std::vector<double>* adv_out = nullptr) {
    UpdateStats st;
    const std::size_t n = traj.steps.size();
    if (n == 0) return st;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> rewards;
    for (const auto& s : traj.steps) rewards.push_back(s.reward);
    const auto g = discounted_returns(rewards, cfg_.hyper.gamma);

    std::vector<double> v(n);
    for (std::size_t t = 0; t < n; ++t) {
      const ad::Var value = critic_->forward(traj.steps[t].input);
      v[t] = value.item();
      const ad::Var loss = ad::scale(ad::square(ad::sub(ad::constant(ad::Mat::Constant(1, 1, g[t])), value)), inv_n);
      st.critic_loss += loss.item();
      ad::backward(loss);
    }
    const auto a = advantages(g, v, cfg_.hyper.delta);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& s = traj.steps[t];
      const ad::Var lp = ad::masked_log_softmax(policy_->forward(s.input), s.mask);
      const ad::Var ell = ad::pick(lp, 0, s.action);
      const ad::Var h = ad::entropy_from_log_probs(lp);
      const ad::Var loss = ad::scale(ad::add(ad::scale(ell, a[t]), ad::scale(h, cfg_.hyper.beta)), -inv_n);
      st.policy_loss += loss.item();
      st.mean_entropy += h.item() * inv_n;
      ad::backward(loss);
    }
    st.finite = std::isfinite(st.policy_loss) && std::isfinite(st.critic_loss);
    if (adv_out) *adv_out = a;
    return st;
  }

  /// One optimizer step per episode; a no-op for an empty trajectory.
  UpdateStats learn(const Trajectory& traj) override {
    policy_->zero_grad();
    critic_->zero_grad();
    UpdateStats st = accumulate_gradients(traj);
    if (traj.steps.empty() || !st.finite) return st;
    policy_opt_->step();
    critic_opt_->step();
    st.updated = true;
    return st;
  }

  /// Total losses recomputed from scratch with fixed advantages, for
  /// finite-difference checks against accumulate_gradients.
  std::pair<double, double> losses(const Trajectory& traj, const std::vector<double>& adv) const {
    std::vector<double> rewards, v, logp, ent;
    for (const auto& s : traj.steps) rewards.push_back(s.reward);
    const auto g = discounted_returns(rewards, cfg_.hyper.gamma);
    for (const auto& s : traj.steps) {
      v.push_back(value(s.input));
      const auto lp = log_probs(s.input, s.mask);
      logp.push_back(lp[s.action]);
      ent.push_back(masked_entropy(lp));
    }
    return {policy_loss(logp, adv, ent, cfg_.hyper.beta), critic_loss(g, v)};
  }

  nlohmann::json checkpoint() const {
    return {{"format", "gohr-a2c-checkpoint"},
            {"version", 1},
            {"config", to_json(cfg_)},
            {"policy", params_to_json(policy_->parameters())},
            {"critic", params_to_json(critic_->parameters())},
            {"policy_optimizer", policy_opt_->state()},
            {"critic_optimizer", critic_opt_->state()}};
  }

  void restore(const nlohmann::json& j) {
    if (j.value("format", "") != "gohr-a2c-checkpoint") throw ParseError("not a checkpoint");
    params_from_json(policy_->parameters(), j.at("policy"));
    params_from_json(critic_->parameters(), j.at("critic"));
    policy_opt_->load_state(j.at("policy_optimizer"));
    critic_opt_->load_state(j.at("critic_optimizer"));
  }

 private:
  AgentConfig cfg_;
  Encoder encoder_;
  std::unique_ptr<TransformerNet> policy_, critic_;
  std::unique_ptr<Optimizer> policy_opt_, critic_opt_;
};

inline std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void set_rng_state(Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ParseError("bad RNG state");
}

// ---- gradient checking -------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0;
  int checked = 0;
};

/// Compares accumulated analytic gradients in `params` with central
/// differences of `loss` (h = 1e-4) at `samples` random coordinates. The
/// relative error floor of 1e-7 keeps vanishing gradients from dividing by zero.
template <class LossFn>
GradCheckResult gradient_check(const ParamList& params, LossFn&& loss, int samples, Rng& rng, double h = 1e-4) {
  GradCheckResult r;
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  std::size_t total = 0;
  for (const auto& [name, v] : params) total += static_cast<std::size_t>(v.value().size());
  for (int k = 0; k < samples; ++k) {
    std::uint64_t flat = uniform_index(rng, total);
    std::size_t pi = 0;
    while (flat >= static_cast<std::uint64_t>(params[pi].second.value().size())) {
      flat -= params[pi].second.value().size();
      ++pi;
    }
    coords.emplace_back(pi, static_cast<Eigen::Index>(flat));
  }
  for (const auto& [pi, idx] : coords) {
    ad::Var p = params[pi].second;
    const double analytic = p.grad().size() ? p.grad().data()[idx] : 0.0;
    double& x = p.mutable_value().data()[idx];
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace gohr
