#pragma once

// JSONL run logs. One record per line, tagged by "type":
//   config     the full configuration echo (first line)
//   phase      a trial-list phase begins
//   move       one attempted move
//   episode    one finished episode
//   phase_end  why a phase stopped, with the metrics it reached
//   eval       an evaluation episode of a frozen policy
//   abort      a run stopped on a non-finite loss
// Every metric the harness reports can be recomputed from move/episode lines.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohr/errors.hpp"
#include "gohr/metrics.hpp"

namespace gohr {

class RunLogWriter {
 public:
  explicit RunLogWriter(std::ostream* os = nullptr) : os_(os) {}
  void write(const nlohmann::json& record) {
    if (os_) *os_ << record.dump() << '\n';
  }
  bool enabled() const { return os_ != nullptr; }

 private:
  std::ostream* os_;
};

struct MoveLine {
  int phase = 0;
  std::int64_t episode = 0;
  std::int64_t move = 0;
  int piece_id = 0;
  int bucket = 0;
  int code = 0;
};

struct EpisodeLine {
  int phase = 0;
  std::int64_t episode = 0;
  int phase_episode = 0;
  std::string mode;
  int moves = 0;
  int errors = 0;
  double error_rate = 0;
  int finish_code = 0;
  std::uint64_t seed = 0;
  std::string rule;
};

struct EvalLine {
  int phase = 0;
  std::string mode;
  int moves = 0;
  int errors = 0;
};

struct RunLog {
  nlohmann::json config;
  std::vector<nlohmann::json> phases;
  std::vector<nlohmann::json> phase_ends;
  std::vector<MoveLine> moves;
  std::vector<EpisodeLine> episodes;
  std::vector<EvalLine> evals;
  std::optional<nlohmann::json> abort;

  int phase_count() const { return static_cast<int>(phases.size()); }
};

inline RunLog parse_runlog(std::istream& is) {
  RunLog log;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("run log line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "config") {
      log.config = j;
    } else if (type == "phase") {
      log.phases.push_back(j);
    } else if (type == "phase_end") {
      log.phase_ends.push_back(j);
    } else if (type == "move") {
      log.moves.push_back({j.at("phase"), j.at("episode"), j.at("move"), j.at("piece_id"), j.at("bucket"),
                           j.at("code")});
    } else if (type == "episode") {
      log.episodes.push_back({j.at("phase"), j.at("episode"), j.at("phase_episode"), j.at("mode"), j.at("moves"),
                              j.at("errors"), j.at("E"), j.at("finish_code"), j.at("seed"), j.at("rule")});
    } else if (type == "eval") {
      log.evals.push_back({j.at("phase"), j.at("mode"), j.at("moves"), j.at("errors")});
    } else if (type == "abort") {
      log.abort = j;
    } else {
      throw ParseError("run log line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
    }
  }
  return log;
}

/// Metrics of one phase from its own episodes and moves only; episode and
/// move indices restart at 1 within the phase.
inline RunMetrics phase_metrics(const RunLog& log, int phase, const MetricParams& p) {
  std::vector<double> e;
  std::vector<int> codes;
  for (const auto& ep : log.episodes)
    if (ep.phase == phase) e.push_back(ep.error_rate);
  for (const auto& m : log.moves)
    if (m.phase == phase) codes.push_back(m.code);
  return compute_run_metrics(e, codes, p);
}

inline MetricParams log_metric_params(const RunLog& log) {
  if (log.config.contains("metrics")) return metric_params_from_json(log.config.at("metrics"));
  return {};
}

/// Incremental form of compute_run_metrics, fed one episode at a time.
class MetricTracker {
 public:
  explicit MetricTracker(MetricParams p = {}) : p_(p) { r_.params = p; }

  void add_episode(const std::vector<int>& codes) {
    const double e = error_rate(codes);
    errors_.push_back(e);
    const int t = static_cast<int>(errors_.size());
    if (!r_.e_star_mean && t >= p_.w_mean) {
      double s = 0;
      for (int i = t - p_.w_mean; i < t; ++i) s += errors_[i];
      if (s <= p_.t_mean * p_.w_mean + 1e-12) r_.e_star_mean = t - p_.w_mean + 1;
    }
    max_run_ = e <= p_.t_max ? max_run_ + 1 : 0;
    if (!r_.e_star_max && max_run_ >= p_.w_max) r_.e_star_max = t - p_.w_max + 1;
    for (int c : codes) {
      ++moves_;
      move_run_ = c == 0 ? move_run_ + 1 : 0;
      if (!r_.m_star && move_run_ >= p_.w_move) r_.m_star = moves_ - p_.w_move + 1;
    }
  }

  const RunMetrics& metrics() const { return r_; }
  int episodes() const { return static_cast<int>(errors_.size()); }

 private:
  MetricParams p_;
  RunMetrics r_;
  std::vector<double> errors_;
  int max_run_ = 0;
  std::int64_t moves_ = 0;
  int move_run_ = 0;
};

}  // namespace gohr
