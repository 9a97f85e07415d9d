#pragma once

// Rule registry backed by a declarative JSON catalog, the property taxonomy,
// and the trial-list text format.

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gohr/catalog_data.hpp"
#include "gohr/rules.hpp"

namespace gohr {

enum class PropertyTag {
  Quadrant_to_bucket_mapping,
  Proximity,
  Reading_order,
  Feature_to_bucket_mapping,
  Feature_ordering,
  All_pieces_of_feature,
  Bucket_ordering,
  Conditional,
};

inline constexpr std::array<std::string_view, 8> kPropertyTagNames = {
    "Quadrant_to_bucket_mapping", "Proximity",       "Reading_order",
    "Feature_to_bucket_mapping",  "Feature_ordering", "All_pieces_of_feature",
    "Bucket_ordering",            "Conditional"};

inline std::string_view to_string(PropertyTag t) { return kPropertyTagNames[static_cast<int>(t)]; }

inline PropertyTag parse_property_tag(std::string_view s) {
  for (std::size_t i = 0; i < kPropertyTagNames.size(); ++i)
    if (kPropertyTagNames[i] == s) return static_cast<PropertyTag>(i);
  throw ParseError("unknown property tag '" + std::string(s) + "'");
}

// ---- clause JSON -----------------------------------------------------------

namespace detail {

inline FeatureKind parse_feature_kind(const nlohmann::json& j) {
  const auto s = j.get<std::string>();
  if (s == "color") return FeatureKind::Color;
  if (s == "shape") return FeatureKind::Shape;
  throw ParseError("unknown feature kind '" + s + "'");
}

inline int parse_feature_value(FeatureKind kind, const std::string& s) {
  if (kind == FeatureKind::Color) {
    if (auto c = parse_color(s)) return static_cast<int>(*c);
  } else if (auto sh = parse_shape(s)) {
    return static_cast<int>(*sh);
  }
  throw ParseError("unknown feature value '" + s + "'");
}

inline std::string feature_value_name(FeatureKind kind, int v) {
  return std::string(kind == FeatureKind::Color ? to_string(static_cast<Color>(v))
                                                : to_string(static_cast<Shape>(v)));
}

inline std::array<int, 4> parse_order(FeatureKind kind, const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("feature order needs 4 entries");
  std::array<int, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = parse_feature_value(kind, j[i].get<std::string>());
  auto sorted = out;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ParseError("feature order repeats a value");
  return out;
}

inline std::array<int, 4> parse_buckets(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("bucket list needs 4 entries");
  std::array<int, 4> out{};
  for (int i = 0; i < 4; ++i) {
    out[i] = j[i].get<int>();
    if (out[i] < 0 || out[i] >= kNumBuckets) throw ParseError("bucket out of range");
  }
  return out;
}

}  // namespace detail

inline Clause clause_from_json(const nlohmann::json& j) {
  using namespace detail;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "feature_map") {
    clause::FeatureMap c;
    c.feature = parse_feature_kind(j.at("feature"));
    std::array<bool, 4> seen{};
    for (const auto& [key, val] : j.at("buckets").items()) {
      const int v = parse_feature_value(c.feature, key);
      c.bucket_of[v] = val.get<int>();
      seen[v] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) != 4)
      throw ParseError("feature_map must map all four values");
    return c;
  }
  if (kind == "quadrant_map") return clause::QuadrantMap{parse_buckets(j.at("buckets"))};
  if (kind == "reading_order") {
    const auto dir = j.value("direction", std::string("forward"));
    if (dir != "forward" && dir != "reverse") throw ParseError("bad reading_order direction");
    return clause::ReadingOrder{dir == "reverse"};
  }
  if (kind == "proximity") {
    const auto t = j.value("target", std::string("nearest"));
    if (t != "nearest" && t != "farthest") throw ParseError("bad proximity target");
    return clause::Proximity{t == "farthest"};
  }
  if (kind == "all_of_feature") {
    clause::AllOfFeature c;
    c.feature = parse_feature_kind(j.at("feature"));
    c.order = parse_order(c.feature, j.at("order"));
    return c;
  }
  if (kind == "feature_cycle") {
    clause::FeatureCycle c;
    c.feature = parse_feature_kind(j.at("feature"));
    c.order = parse_order(c.feature, j.at("order"));
    const auto within = j.value("within", std::string("any"));
    if (within != "any" && within != "reading_order") throw ParseError("bad feature_cycle.within");
    c.first_in_reading_order = within == "reading_order";
    if (j.contains("buckets")) c.buckets = parse_buckets(j.at("buckets"));
    return c;
  }
  if (kind == "bucket_sequence") {
    clause::BucketSequence c;
    const auto dir = j.value("direction", std::string("cw"));
    if (dir != "cw" && dir != "ccw") throw ParseError("bad bucket_sequence direction");
    c.counterclockwise = dir == "ccw";
    if (j.contains("start")) {
      c.start = j.at("start").get<int>();
      if (*c.start < 0 || *c.start >= kNumBuckets) throw ParseError("bad start bucket");
    }
    return c;
  }
  throw ParseError("unknown clause kind '" + kind + "'");
}

inline nlohmann::json clause_to_json(const Clause& c) {
  using detail::feature_value_name;
  nlohmann::json j;
  auto kind_name = [](FeatureKind k) { return k == FeatureKind::Color ? "color" : "shape"; };
  auto order_json = [&](FeatureKind k, const std::array<int, 4>& order) {
    nlohmann::json arr = nlohmann::json::array();
    for (int v : order) arr.push_back(feature_value_name(k, v));
    return arr;
  };
  std::visit(
      [&](const auto& cl) {
        using T = std::decay_t<decltype(cl)>;
        if constexpr (std::is_same_v<T, clause::FeatureMap>) {
          j["kind"] = "feature_map";
          j["feature"] = kind_name(cl.feature);
          for (int v = 0; v < 4; ++v) j["buckets"][feature_value_name(cl.feature, v)] = cl.bucket_of[v];
        } else if constexpr (std::is_same_v<T, clause::QuadrantMap>) {
          j["kind"] = "quadrant_map";
          j["buckets"] = cl.bucket_of;
        } else if constexpr (std::is_same_v<T, clause::ReadingOrder>) {
          j["kind"] = "reading_order";
          j["direction"] = cl.reverse ? "reverse" : "forward";
        } else if constexpr (std::is_same_v<T, clause::Proximity>) {
          j["kind"] = "proximity";
          j["target"] = cl.farthest ? "farthest" : "nearest";
        } else if constexpr (std::is_same_v<T, clause::AllOfFeature>) {
          j["kind"] = "all_of_feature";
          j["feature"] = kind_name(cl.feature);
          j["order"] = order_json(cl.feature, cl.order);
        } else if constexpr (std::is_same_v<T, clause::FeatureCycle>) {
          j["kind"] = "feature_cycle";
          j["feature"] = kind_name(cl.feature);
          j["order"] = order_json(cl.feature, cl.order);
          j["within"] = cl.first_in_reading_order ? "reading_order" : "any";
          if (cl.buckets) j["buckets"] = *cl.buckets;
        } else {
          j["kind"] = "bucket_sequence";
          j["direction"] = cl.counterclockwise ? "ccw" : "cw";
          if (cl.start) j["start"] = *cl.start;
        }
      },
      c);
  return j;
}

// ---- registry --------------------------------------------------------------

struct CatalogEntry {
  RuleSpec spec;
  std::set<PropertyTag> tags;
  std::string description;
  bool experiment = false;  // member of the default independent-experiment set
};

class RuleCatalog {
 public:
  static RuleCatalog from_json(const nlohmann::json& doc) {
    RuleCatalog cat;
    for (const auto& e : doc.at("rules")) {
      CatalogEntry entry;
      entry.spec.name = e.at("name").get<std::string>();
      if (cat.contains(entry.spec.name))
        throw ParseError("duplicate rule '" + entry.spec.name + "'");
      entry.description = e.value("description", std::string());
      entry.experiment = e.value("experiment", false);
      if (e.contains("compose")) {
        bool first = true;
        for (const auto& part : e.at("compose")) {
          const auto& sub = cat.entry(part.get<std::string>());
          if (first) {
            entry.spec.clauses = sub.spec.clauses;
            first = false;
          } else {
            entry.spec = compose(entry.spec, sub.spec, entry.spec.name);
          }
          if (!e.contains("tags")) entry.tags.insert(sub.tags.begin(), sub.tags.end());
        }
      } else {
        for (const auto& c : e.at("clauses")) entry.spec.clauses.push_back(clause_from_json(c));
        entry.spec = compose(entry.spec, RuleSpec{}, entry.spec.name);
      }
      if (e.contains("tags"))
        for (const auto& t : e.at("tags")) entry.tags.insert(parse_property_tag(t.get<std::string>()));
      cat.order_.push_back(entry.spec.name);
      cat.entries_.emplace(entry.spec.name, std::move(entry));
    }
    return cat;
  }

  static RuleCatalog from_text(std::string_view text) {
    try {
      return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("rule catalog: ") + ex.what());
    }
  }

  static const RuleCatalog& builtin() {
    static const RuleCatalog cat = from_text(detail::kBuiltinCatalogJson);
    return cat;
  }

  bool contains(std::string_view name) const { return entries_.count(std::string(name)) > 0; }

  const CatalogEntry& entry(std::string_view name) const {
    auto it = entries_.find(std::string(name));
    if (it == entries_.end()) {
      std::ostringstream msg;
      msg << "unknown rule '" << name << "'; known rules:";
      for (const auto& n : order_) msg << ' ' << n;
      throw ParseError(msg.str());
    }
    return it->second;
  }

  const RuleSpec& resolve(std::string_view name) const { return entry(name).spec; }
  const std::set<PropertyTag>& tags(std::string_view name) const { return entry(name).tags; }

  /// All names in catalog order.
  const std::vector<std::string>& names() const { return order_; }

  /// The default independent-experiment rule set.
  std::vector<std::string> experiment_rules() const {
    std::vector<std::string> out;
    for (const auto& n : order_)
      if (entries_.at(n).experiment) out.push_back(n);
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& n : order_) {
      const auto& e = entries_.at(n);
      nlohmann::json j{{"name", n}, {"description", e.description}, {"experiment", e.experiment}};
      j["tags"] = nlohmann::json::array();
      for (auto t : e.tags) j["tags"].push_back(to_string(t));
      j["clauses"] = nlohmann::json::array();
      for (const auto& c : e.spec.clauses) j["clauses"].push_back(clause_to_json(c));
      rules.push_back(std::move(j));
    }
    return {{"version", 1}, {"rules", std::move(rules)}};
  }

 private:
  std::map<std::string, CatalogEntry> entries_;
  std::vector<std::string> order_;
};

inline const RuleSpec& resolve_rule(std::string_view name) {
  return RuleCatalog::builtin().resolve(name);
}

inline const std::set<PropertyTag>& property_tags(std::string_view name) {
  return RuleCatalog::builtin().tags(name);
}

// ---- trial lists -----------------------------------------------------------

/// One line of a trial list: the ':'-joined chain of rules seen so far. The
/// rule trained during the phase is the last one in the chain.
struct TrialPhase {
  std::vector<std::string> chain;
  const std::string& active() const { return chain.back(); }
  friend bool operator==(const TrialPhase&, const TrialPhase&) = default;
};

struct TrialList {
  std::vector<TrialPhase> phases;
  friend bool operator==(const TrialList&, const TrialList&) = default;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// One phase per non-blank line; names separated by ':'.
inline TrialList parse_trial_list(std::string_view text,
                                  const RuleCatalog& catalog = RuleCatalog::builtin()) {
  TrialList out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = trim(text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty()) continue;
    TrialPhase phase;
    std::size_t start = 0;
    while (true) {
      const auto colon = line.find(':', start);
      auto name = trim(std::string_view(line).substr(start, colon == std::string::npos ? line.npos : colon - start));
      if (name.empty() || !catalog.contains(name))
        throw ParseError("trial list line " + std::to_string(line_no) + ": unknown rule '" + name + "'");
      phase.chain.push_back(std::move(name));
      if (colon == std::string::npos) break;
      start = colon + 1;
    }
    out.phases.push_back(std::move(phase));
  }
  return out;
}

inline std::string to_text(const TrialList& list) {
  std::string out;
  for (const auto& ph : list.phases) {
    for (std::size_t i = 0; i < ph.chain.size(); ++i) {
      if (i) out += ':';
      out += ph.chain[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace gohr
