#pragma once

// Convergence metrics over a run: E*_mean and E*_max on per-episode error
// rates, M* on the global stream of move codes, and their cross-run medians.
// All indices are 1-based. Absent results are std::nullopt and serialize as null.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gohr/errors.hpp"

namespace gohr {

struct MetricParams {
  int w_mean = 20;
  double t_mean = 0.1;
  int w_max = 10;
  double t_max = 0.2;
  int w_move = 15;
};

inline nlohmann::json to_json(const MetricParams& p) {
  return {{"W_mean", p.w_mean}, {"T_mean", p.t_mean}, {"W_max", p.w_max}, {"T_max", p.t_max}, {"W_mstar", p.w_move}};
}

inline MetricParams metric_params_from_json(const nlohmann::json& j, MetricParams p = {}) {
  p.w_mean = j.value("W_mean", p.w_mean);
  p.t_mean = j.value("T_mean", p.t_mean);
  p.w_max = j.value("W_max", p.w_max);
  p.t_max = j.value("T_max", p.t_max);
  p.w_move = j.value("W_mstar", p.w_move);
  if (p.w_mean < 1 || p.w_max < 1 || p.w_move < 1) throw ConfigError("metric windows must be >= 1");
  return p;
}

/// (#D + #I) / #moves for one episode's response codes. Empty episodes count as 0.
inline double error_rate(const std::vector<int>& codes) {
  if (codes.empty()) return 0.0;
  const auto errors = std::count_if(codes.begin(), codes.end(), [](int c) { return c != 0; });
  return static_cast<double>(errors) / static_cast<double>(codes.size());
}

inline std::optional<int> e_star_mean(const std::vector<double>& e, int w, double t) {
  if (w < 1) throw ConfigError("window must be >= 1");
  const int n = static_cast<int>(e.size());
  if (n < w) return std::nullopt;
  // Sum recomputed per window: the series are short and this keeps the
  // comparison free of running-sum drift.
  for (int s = 0; s + w <= n; ++s) {
    double sum = 0.0;
    for (int i = s; i < s + w; ++i) sum += e[i];
    if (sum <= t * w + 1e-12) return s + 1;
  }
  return std::nullopt;
}

inline std::optional<int> e_star_max(const std::vector<double>& e, int w, double t) {
  if (w < 1) throw ConfigError("window must be >= 1");
  const int n = static_cast<int>(e.size());
  int run = 0;  // consecutive episodes ending at i with E <= t
  for (int i = 0; i < n; ++i) {
    run = e[i] <= t ? run + 1 : 0;
    if (run >= w) return i - w + 2;
  }
  return std::nullopt;
}

/// Smallest global move index starting W consecutive accepted moves.
inline std::optional<std::int64_t> m_star(const std::vector<int>& codes, int w) {
  if (w < 1) throw ConfigError("window must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    run = codes[i] == 0 ? run + 1 : 0;
    if (run >= w) return static_cast<std::int64_t>(i) - w + 2;
  }
  return std::nullopt;
}

/// M* restricted to moves where the rule's property is in force; other moves
/// are skipped rather than counted. Returns the global index of the window's
/// first counted move.
inline std::optional<std::int64_t> m_star_conditional(const std::vector<int>& codes,
                                                      const std::vector<bool>& applies, int w) {
  if (w < 1) throw ConfigError("window must be >= 1");
  if (applies.size() != codes.size()) throw ConfigError("applicability flags do not match codes");
  int run = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!applies[i]) continue;
    if (codes[i] != 0) {
      run = 0;
      continue;
    }
    if (run == 0) start = i;
    if (++run >= w) return static_cast<std::int64_t>(start) + 1;
  }
  return std::nullopt;
}

struct RunMetrics {
  std::optional<int> e_star_mean;
  std::optional<int> e_star_max;
  std::optional<std::int64_t> m_star;
  MetricParams params;

  bool all_present() const { return e_star_mean && e_star_max && m_star; }
};

inline RunMetrics compute_run_metrics(const std::vector<double>& episode_errors,
                                      const std::vector<int>& move_codes, const MetricParams& p = {}) {
  RunMetrics r;
  r.params = p;
  r.e_star_mean = e_star_mean(episode_errors, p.w_mean, p.t_mean);
  r.e_star_max = e_star_max(episode_errors, p.w_max, p.t_max);
  r.m_star = m_star(move_codes, p.w_move);
  return r;
}

namespace detail {
template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
template <class T>
std::optional<T> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}
}  // namespace detail

inline nlohmann::json to_json(const RunMetrics& r) {
  return {{"e_star_mean", detail::opt_json(r.e_star_mean)},
          {"e_star_max", detail::opt_json(r.e_star_max)},
          {"m_star", detail::opt_json(r.m_star)},
          {"params", to_json(r.params)}};
}

inline RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics r;
  r.e_star_mean = detail::opt_from<int>(j, "e_star_mean");
  r.e_star_max = detail::opt_from<int>(j, "e_star_max");
  r.m_star = detail::opt_from<std::int64_t>(j, "m_star");
  if (j.contains("params")) r.params = metric_params_from_json(j.at("params"));
  return r;
}

struct MetricSummary {
  std::optional<std::int64_t> median;  // lower median over present runs
  std::optional<std::int64_t> min;
  std::optional<std::int64_t> max;
  int present = 0;
  int absent = 0;
};

inline MetricSummary summarize(const std::vector<std::optional<std::int64_t>>& values) {
  MetricSummary s;
  std::vector<std::int64_t> v;
  for (const auto& x : values) {
    if (x)
      v.push_back(*x);
    else
      ++s.absent;
  }
  s.present = static_cast<int>(v.size());
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.median = v[(v.size() - 1) / 2];
  s.min = v.front();
  s.max = v.back();
  return s;
}

struct AggregateMetrics {
  MetricSummary e_star_mean, e_star_max, m_star;
};

inline AggregateMetrics aggregate(const std::vector<RunMetrics>& runs) {
  std::vector<std::optional<std::int64_t>> a, b, c;
  for (const auto& r : runs) {
    a.push_back(r.e_star_mean ? std::optional<std::int64_t>(*r.e_star_mean) : std::nullopt);
    b.push_back(r.e_star_max ? std::optional<std::int64_t>(*r.e_star_max) : std::nullopt);
    c.push_back(r.m_star);
  }
  return {summarize(a), summarize(b), summarize(c)};
}

/// Probability that the [min, max] of n runs covers the population median.
inline double range_coverage(int n) { return 1.0 - 2.0 * std::pow(0.5, n); }

inline nlohmann::json to_json(const MetricSummary& s) {
  return {{"median", detail::opt_json(s.median)},
          {"min", detail::opt_json(s.min)},
          {"max", detail::opt_json(s.max)},
          {"present", s.present},
          {"absent", s.absent}};
}

inline nlohmann::json to_json(const AggregateMetrics& a) {
  return {{"E_star_mean", to_json(a.e_star_mean)},
          {"E_star_max", to_json(a.e_star_max)},
          {"M_star", to_json(a.m_star)}};
}

}  // namespace gohr
