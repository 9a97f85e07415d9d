#pragma once

// Experiment families over many (rule or trial list) x seed runs, fanned out
// over worker threads and merged in job order, plus the offline analysis of
// a directory of run logs.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gohr/analysis.hpp"
#include "gohr/catalog.hpp"
#include "gohr/environment.hpp"
#include "gohr/metrics.hpp"
#include "gohr/runlog.hpp"
#include "gohr/training.hpp"

namespace gohr {

namespace fs = std::filesystem;

enum class ExperimentKind { Independent, TransferSequential, TransferPartial, Generalization };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Independent: return "independent";
    case ExperimentKind::TransferSequential: return "transfer_sequential";
    case ExperimentKind::TransferPartial: return "transfer_partial";
    case ExperimentKind::Generalization: return "generalization";
  }
  return "independent";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::Independent, ExperimentKind::TransferSequential, ExperimentKind::TransferPartial,
                 ExperimentKind::Generalization})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + std::string(s) + "'");
}

inline std::vector<std::uint64_t> default_seeds(int n = 5) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Independent;
  std::vector<std::string> rules;        // independent, generalization
  std::vector<std::string> trial_lists;  // transfer: one text per list
  TrainConfig base;                      // agent, metrics, mode, move cap, early stop
  std::vector<std::uint64_t> seeds = default_seeds();
  std::string out_dir;  // empty: logs are not kept
  int threads = 1;
  int eval_pairs = 50;
  std::function<void(const std::string&)> progress;

  void validate(const RuleCatalog& catalog = RuleCatalog::builtin()) const {
    if (seeds.empty()) throw ConfigError("no seeds");
    if (threads < 1) throw ConfigError("threads must be positive");
    if (kind == ExperimentKind::TransferSequential || kind == ExperimentKind::TransferPartial) {
      if (trial_lists.empty()) throw ConfigError("transfer needs at least one trial list");
      for (const auto& t : trial_lists)
        if (parse_trial_list(t, catalog).phases.empty()) throw ConfigError("empty trial list");
    } else {
      if (rules.empty()) throw ConfigError("no rules given");
      for (const auto& r : rules) catalog.resolve(r);
    }
    if (kind == ExperimentKind::Generalization && eval_pairs < 1) throw ConfigError("eval_pairs must be positive");
  }
};

/// Builds the actor for one run; the environment is the one the run plays in.
using ActorFactory = std::function<std::unique_ptr<Actor>(const TrainConfig&, Environment&)>;

inline ActorFactory a2c_factory() {
  return [](const TrainConfig& c, Environment&) -> std::unique_ptr<Actor> { return make_agent(c); };
}

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  RunOutcome outcome;
  std::optional<double> test_error_ratio;
  std::string log_path;
};

struct GroupSummary {
  std::string label;
  std::vector<std::string> phase_rules;
  std::vector<std::vector<RunMetrics>> runs;  // [phase][seed]
  std::vector<AggregateMetrics> phases;
  std::vector<std::optional<double>> ratios;  // generalization only, per seed
  std::optional<double> median_ratio;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::Independent;
  std::vector<RunRecord> runs;       // job order: group-major, then seed
  std::vector<GroupSummary> groups;  // config order
};

inline std::string variant_tag(const TrainConfig& c) {
  return std::string(to_string(c.agent.encoder.representation)) + "_h" + std::to_string(c.agent.encoder.history);
}

namespace detail {

struct Job {
  std::size_t group = 0;
  std::string label;
  std::vector<TrialPhase> phases;
  std::uint64_t seed = 0;
};

/// Runs f(i) for i in [0, n) on `threads` workers; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  const int k = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace detail

/// Shared driver for all experiment kinds.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const ActorFactory& factory = a2c_factory(),
                                       const RuleCatalog& catalog = RuleCatalog::builtin()) {
  cfg.validate(catalog);
  const bool transfer =
      cfg.kind == ExperimentKind::TransferSequential || cfg.kind == ExperimentKind::TransferPartial;
  const bool generalization = cfg.kind == ExperimentKind::Generalization;

  std::vector<std::pair<std::string, std::vector<TrialPhase>>> groups;
  if (transfer) {
    for (std::size_t i = 0; i < cfg.trial_lists.size(); ++i)
      groups.emplace_back("list" + std::to_string(i + 1), parse_trial_list(cfg.trial_lists[i], catalog).phases);
  } else {
    for (const auto& r : cfg.rules) groups.emplace_back(r, std::vector<TrialPhase>{TrialPhase{{r}}});
  }

  std::vector<detail::Job> jobs;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto s : cfg.seeds) jobs.push_back({g, groups[g].first, groups[g].second, s});

  ExperimentReport rep;
  rep.kind = cfg.kind;
  rep.runs.resize(jobs.size());
  const fs::path root = cfg.out_dir.empty() ? fs::path() : fs::path(cfg.out_dir) / to_string(cfg.kind) / variant_tag(cfg.base);
  std::mutex progress_mu;

  detail::parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    TrainConfig tc = cfg.base;
    tc.kind = std::string(to_string(cfg.kind));
    tc.phases = job.phases;
    tc.seed = job.seed;
    if (generalization) tc.mode = PositionMode::Train;

    std::ofstream file;
    RunRecord& rec = rep.runs[i];
    rec.label = job.label;
    rec.seed = job.seed;
    std::ostream* os = nullptr;
    if (!root.empty()) {
      const fs::path dir = root / job.label;
      fs::create_directories(dir);
      rec.log_path = (dir / ("seed-" + std::to_string(job.seed) + ".jsonl")).string();
      file.open(rec.log_path, std::ios::trunc);
      if (!file) throw std::runtime_error("cannot write " + rec.log_path);
      os = &file;
    }
    RunLogWriter log(os);
    LocalEnvironment env(catalog);
    auto actor = factory(tc, env);
    rec.outcome = train_run(tc, env, *actor, log);
    if (generalization && !rec.outcome.aborted)
      rec.test_error_ratio = evaluate_generalization(tc, env, *actor, cfg.eval_pairs, log, 1).test_error_ratio;
    if (cfg.progress) {
      std::lock_guard lk(progress_mu);
      std::ostringstream msg;
      msg << job.label << " seed " << job.seed << ":";
      for (const auto& p : rec.outcome.phases) msg << ' ' << to_json(p.metrics).dump();
      if (generalization)
        msg << " ratio " << (rec.test_error_ratio ? std::to_string(*rec.test_error_ratio) : "null");
      cfg.progress(msg.str());
    }
  });

  for (std::size_t g = 0; g < groups.size(); ++g) {
    GroupSummary gs;
    gs.label = groups[g].first;
    for (const auto& ph : groups[g].second) gs.phase_rules.push_back(ph.active());
    gs.runs.resize(gs.phase_rules.size());
    std::vector<double> ratios;
    for (const auto& r : rep.runs) {
      if (r.label != gs.label) continue;
      for (std::size_t k = 0; k < gs.runs.size(); ++k) {
        // An aborted run reports nothing for the phases it never reached.
        gs.runs[k].push_back(k < r.outcome.phases.size() ? r.outcome.phases[k].metrics : RunMetrics{});
      }
      if (generalization) {
        gs.ratios.push_back(r.test_error_ratio);
        if (r.test_error_ratio) ratios.push_back(*r.test_error_ratio);
      }
    }
    for (const auto& runs : gs.runs) gs.phases.push_back(aggregate(runs));
    gs.median_ratio = detail::median_of(ratios);
    rep.groups.push_back(std::move(gs));
  }
  return rep;
}

inline ExperimentReport run_independent(ExperimentConfig cfg, const ActorFactory& f = a2c_factory()) {
  cfg.kind = ExperimentKind::Independent;
  return run_experiment(cfg, f);
}

inline ExperimentReport run_transfer(ExperimentConfig cfg, const ActorFactory& f = a2c_factory()) {
  if (cfg.kind != ExperimentKind::TransferPartial) cfg.kind = ExperimentKind::TransferSequential;
  return run_experiment(cfg, f);
}

inline ExperimentReport run_generalization(ExperimentConfig cfg, const ActorFactory& f = a2c_factory()) {
  cfg.kind = ExperimentKind::Generalization;
  return run_experiment(cfg, f);
}

/// Ascending by median M*, then median E*_mean; runs that never reached a
/// metric sort after those that did.
inline std::vector<GroupSummary> difficulty_order(std::vector<GroupSummary> groups) {
  const auto key = [](const GroupSummary& g) {
    constexpr auto inf = std::numeric_limits<std::int64_t>::max();
    const auto& a = g.phases.back();
    return std::make_pair(a.m_star.median.value_or(inf), a.e_star_mean.median.value_or(inf));
  };
  std::stable_sort(groups.begin(), groups.end(),
                   [&](const GroupSummary& x, const GroupSummary& y) { return key(x) < key(y); });
  return groups;
}

namespace detail {
inline std::string opt_text(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }
inline std::string opt_text(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << *v;
  return os.str();
}
}  // namespace detail

/// One row per (group, phase): median, min and max of each metric plus
/// counts of runs where it was never reached.
inline void write_summary_csv(std::ostream& os, const std::vector<GroupSummary>& groups) {
  os << "label,phase,rule";
  for (const char* m : {"E_star_mean", "E_star_max", "M_star"})
    os << ',' << m << ',' << m << "_min," << m << "_max," << m << "_absent";
  os << ",test_error_ratio\n";
  for (const auto& g : groups) {
    for (std::size_t k = 0; k < g.phases.size(); ++k) {
      os << csv_field(g.label) << ',' << k + 1 << ',' << csv_field(g.phase_rules[k]);
      for (const auto* s : {&g.phases[k].e_star_mean, &g.phases[k].e_star_max, &g.phases[k].m_star})
        os << ',' << detail::opt_text(s->median) << ',' << detail::opt_text(s->min) << ','
           << detail::opt_text(s->max) << ',' << s->absent;
      os << ',' << detail::opt_text(g.median_ratio) << '\n';
    }
  }
}

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json phases = nlohmann::json::array();
    for (std::size_t k = 0; k < g.phases.size(); ++k) {
      nlohmann::json runs = nlohmann::json::array();
      for (const auto& m : g.runs[k]) runs.push_back(to_json(m));
      phases.push_back({{"rule", g.phase_rules[k]}, {"aggregate", to_json(g.phases[k])}, {"runs", runs}});
    }
    nlohmann::json j{{"label", g.label}, {"phases", phases}};
    if (r.kind == ExperimentKind::Generalization) {
      nlohmann::json ratios = nlohmann::json::array();
      for (const auto& x : g.ratios) ratios.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
      j["test_error_ratios"] = ratios;
      j["median_test_error_ratio"] = g.median_ratio ? nlohmann::json(*g.median_ratio) : nlohmann::json(nullptr);
    }
    groups.push_back(j);
  }
  return {{"kind", std::string(to_string(r.kind))}, {"groups", groups}};
}

/// Writes summary.csv and summary.json next to the run logs.
inline void write_report(const ExperimentConfig& cfg, const ExperimentReport& rep) {
  if (cfg.out_dir.empty()) return;
  const fs::path root = fs::path(cfg.out_dir) / to_string(cfg.kind) / variant_tag(cfg.base);
  fs::create_directories(root);
  std::ofstream csv(root / "summary.csv");
  write_summary_csv(csv, cfg.kind == ExperimentKind::Independent ? difficulty_order(rep.groups) : rep.groups);
  std::ofstream js(root / "summary.json");
  js << to_json(rep).dump(2) << '\n';
}

// ---- offline analysis --------------------------------------------------------

/// One independent run recovered from its log.
struct LoggedRun {
  std::string rule;
  std::string variant;  // e.g. FC_h6
  std::uint64_t seed = 0;
  RunMetrics metrics;
  std::vector<double> episode_errors;
  std::string path;
};

inline std::vector<LoggedRun> load_independent_runs(const std::string& dir) {
  std::vector<LoggedRun> out;
  if (!fs::exists(dir)) throw ConfigError("no such directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    const RunLog log = parse_runlog(in);
    if (log.config.value("kind", "") != "independent" || log.phase_count() != 1) continue;
    LoggedRun r;
    r.rule = log.phases[0].at("rule").get<std::string>();
    const auto& agent = log.config.at("agent");
    r.variant = agent.at("representation").get<std::string>() + "_h" + std::to_string(agent.at("n_hist").get<int>());
    r.seed = log.config.at("seed").get<std::uint64_t>();
    r.metrics = phase_metrics(log, 1, log_metric_params(log));
    for (const auto& ep : log.episodes) r.episode_errors.push_back(ep.error_rate);
    r.path = f.string();
    out.push_back(std::move(r));
  }
  return out;
}

enum class MetricId { EStarMean, EStarMax, MStar };
inline constexpr std::array<MetricId, 3> kAllMetrics = {MetricId::EStarMean, MetricId::EStarMax, MetricId::MStar};

inline std::string_view to_string(MetricId m) {
  switch (m) {
    case MetricId::EStarMean: return "e_star_mean";
    case MetricId::EStarMax: return "e_star_max";
    case MetricId::MStar: return "m_star";
  }
  return "m_star";
}

inline MetricId parse_metric_id(std::string_view s) {
  for (auto m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

/// A run's metric for rank statistics; a metric never reached ranks as
/// harder than any reached value.
inline double rank_value(const RunMetrics& r, MetricId m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (m) {
    case MetricId::EStarMean: return r.e_star_mean ? *r.e_star_mean : inf;
    case MetricId::EStarMax: return r.e_star_max ? *r.e_star_max : inf;
    case MetricId::MStar: return r.m_star ? static_cast<double>(*r.m_star) : inf;
  }
  return inf;
}

inline const std::vector<std::pair<std::string, std::string>>& color_shape_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"allOfColOrd_BRKY", "allOfShaOrd_qcts"},
      {"col1Ord_BRKY", "sha1Ord_qcts"},
      {"col1OrdBuck_BRKY0213", "sha1OrdBuck_qcts0213"},
      {"colOrdL1_BRKY", "shaOrdL1_qcts"},
      {"cm_RBKY", "sm_csqt"},
  };
  return pairs;
}

struct WithinRuleTest {
  std::string rule;
  KruskalWallisResult kw;
};

struct PairTest {
  std::string a, b;
  MetricId metric = MetricId::MStar;
  KruskalWallisResult kw;
};

struct VariantAnalysis {
  std::string variant;
  std::vector<std::string> rules;  // catalog order
  std::vector<WithinRuleTest> within;
  std::vector<PairTest> pairs;
  Eigen::MatrixXd p;  // pairwise MW p-values over rules
  Eigen::MatrixXd d;  // 1 - p
  Embedding mds;
};

struct AnalysisBundle {
  std::vector<VariantAnalysis> variants;
  std::vector<std::string> spearman_labels;  // metric@variant
  Eigen::MatrixXd spearman;
};

/// Statistics over independent-run logs, per representation/history variant:
/// within-rule Kruskal-Wallis across seeds on per-episode error rates,
/// color/shape pair Kruskal-Wallis on each metric, pairwise Mann-Whitney
/// p-values on `metric`, D = 1 - p and its 3-D classical MDS; plus the
/// Spearman matrix of per-rule medians across every metric x variant.
inline AnalysisBundle analyze_runs(const std::vector<LoggedRun>& runs, MetricId metric = MetricId::MStar,
                                   const RuleCatalog& catalog = RuleCatalog::builtin()) {
  AnalysisBundle out;
  std::map<std::string, std::map<std::string, std::vector<const LoggedRun*>>> by;  // variant -> rule -> runs
  for (const auto& r : runs) by[r.variant][r.rule].push_back(&r);

  std::vector<std::string> common;  // rules present in every variant, catalog order
  for (const auto& name : catalog.names()) {
    bool all = !by.empty();
    for (const auto& [v, rules] : by) all = all && rules.count(name);
    if (all) common.push_back(name);
  }

  for (const auto& [variant, rules] : by) {
    VariantAnalysis va;
    va.variant = variant;
    for (const auto& name : catalog.names())
      if (rules.count(name)) va.rules.push_back(name);

    for (const auto& name : va.rules) {
      std::vector<std::vector<double>> groups;
      for (const auto* r : rules.at(name))
        if (!r->episode_errors.empty()) groups.push_back(r->episode_errors);
      if (groups.size() >= 2) va.within.push_back({name, kruskal_wallis(groups)});
    }

    for (const auto& [a, b] : color_shape_pairs()) {
      if (!rules.count(a) || !rules.count(b)) continue;
      for (auto m : kAllMetrics) {
        std::vector<double> ga, gb;
        for (const auto* r : rules.at(a)) ga.push_back(rank_value(r->metrics, m));
        for (const auto* r : rules.at(b)) gb.push_back(rank_value(r->metrics, m));
        va.pairs.push_back({a, b, m, kruskal_wallis({ga, gb})});
      }
    }

    std::vector<SampleSet> sets;
    for (const auto& name : va.rules) {
      SampleSet s{name, {}};
      for (const auto* r : rules.at(name)) s.values.push_back(rank_value(r->metrics, metric));
      sets.push_back(std::move(s));
    }
    va.p = pairwise_p_values(sets);
    va.d = dissimilarity(va.p);
    va.mds = classical_mds(va.d, 3);
    out.variants.push_back(std::move(va));
  }

  // Per-rule medians (lower median, unreached ranking last) over the common rules.
  std::vector<std::vector<double>> columns;
  for (auto m : kAllMetrics) {
    for (const auto& [variant, rules] : by) {
      std::vector<double> col;
      for (const auto& name : common) {
        std::vector<double> v;
        for (const auto* r : rules.at(name)) v.push_back(rank_value(r->metrics, m));
        std::sort(v.begin(), v.end());
        col.push_back(v[(v.size() - 1) / 2]);
      }
      out.spearman_labels.push_back(std::string(to_string(m)) + "@" + variant);
      columns.push_back(std::move(col));
    }
  }
  const auto k = static_cast<Eigen::Index>(columns.size());
  out.spearman = Eigen::MatrixXd::Identity(k, k);
  if (common.size() >= 2)
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = i + 1; j < k; ++j)
        out.spearman(i, j) = out.spearman(j, i) = [&] {
          try {
            return spearman(columns[i], columns[j]);
          } catch (const DomainError&) {
            return std::numeric_limits<double>::quiet_NaN();  // a constant column has no ranking
          }
        }();
  return out;
}

inline nlohmann::json to_json(const KruskalWallisResult& r) {
  return {{"H", r.h}, {"p", r.p}, {"df", r.df}};
}

/// Writes per-variant CSVs (p-values, dissimilarity, MDS coordinates,
/// Kruskal-Wallis tables), the Spearman matrix and a JSON digest.
inline void write_analysis(const AnalysisBundle& a, const std::string& out_dir) {
  const fs::path root(out_dir);
  fs::create_directories(root);
  nlohmann::json digest{{"variants", nlohmann::json::array()}};
  for (const auto& v : a.variants) {
    {
      std::ofstream f(root / (v.variant + "_mw_p.csv"));
      write_matrix_csv(f, v.rules, v.p);
    }
    {
      std::ofstream f(root / (v.variant + "_dissimilarity.csv"));
      write_matrix_csv(f, v.rules, v.d);
    }
    {
      std::ofstream f(root / (v.variant + "_mds.csv"));
      write_coords_csv(f, v.rules, v.mds.coords);
    }
    std::ofstream kw(root / (v.variant + "_kruskal.csv"));
    kw << "test,a,b,metric,H,p,df\n";
    nlohmann::json within = nlohmann::json::array(), pairs = nlohmann::json::array();
    for (const auto& w : v.within) {
      kw << "within," << csv_field(w.rule) << ",,episode_error," << w.kw.h << ',' << w.kw.p << ',' << w.kw.df << '\n';
      within.push_back({{"rule", w.rule}, {"kw", to_json(w.kw)}});
    }
    for (const auto& p : v.pairs) {
      kw << "pair," << csv_field(p.a) << ',' << csv_field(p.b) << ',' << to_string(p.metric) << ',' << p.kw.h << ','
         << p.kw.p << ',' << p.kw.df << '\n';
      pairs.push_back({{"a", p.a}, {"b", p.b}, {"metric", std::string(to_string(p.metric))}, {"kw", to_json(p.kw)}});
    }
    nlohmann::json eig = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.mds.eigenvalues.size(); ++i) eig.push_back(v.mds.eigenvalues(i));
    digest["variants"].push_back({{"variant", v.variant},
                                  {"rules", v.rules},
                                  {"within_rule", within},
                                  {"color_shape_pairs", pairs},
                                  {"mds_eigenvalues", eig},
                                  {"mds_negative_eigenvalues", v.mds.negative}});
  }
  std::ofstream sp(root / "spearman.csv");
  write_matrix_csv(sp, a.spearman_labels, a.spearman);
  digest["spearman_labels"] = a.spearman_labels;
  std::ofstream(root / "analysis.json") << digest.dump(2) << '\n';
}

}  // namespace gohr
