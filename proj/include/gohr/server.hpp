#pragma once

// JSON-over-HTTP game service. GameServer::handle is transport-independent
// (method, path, query, body in; status and JSON out) so tests and replay
// drive it directly; bind() attaches it to a cpp-httplib server.
//
//   POST /episodes               create a session and deal its first episode
//   POST /episodes/{id}/moves    attempt one move
//   POST /episodes/{id}/advance  next trial-list phase, or a re-deal
//   GET  /episodes/{id}          session snapshot
//   GET  /rules                  the catalog with property tags

#include <climits>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <vector>

// resolv.h (pulled in by httplib) defines a `_res` macro that breaks Eigen
// headers included after it.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "gohr/catalog.hpp"
#include "gohr/engine.hpp"
#include "gohr/environment.hpp"
#include "gohr/random.hpp"

namespace gohr {

struct Response {
  int status = 200;
  nlohmann::json body;
};

using Query = std::map<std::string, std::string>;

struct ServerOptions {
  std::uint64_t seed = 0;     // base for seeds the server generates
  bool debug_reveal = false;  // allow ?reveal=1 on finished human sessions
  std::ostream* journal = nullptr;
};

enum class ClientKind { Agent, Human };

class GameServer {
 public:
  explicit GameServer(ServerOptions opt = {}, const RuleCatalog& catalog = RuleCatalog::builtin())
      : opt_(opt), catalog_(&catalog) {
    if (opt_.journal) write_journal({{"type", "server"}, {"seed", opt_.seed}});
  }

  Response handle(const std::string& method, const std::string& path, const Query& query,
                  const std::string& body) {
    Response r = route(method, path, query, body);
    if (opt_.journal) {
      nlohmann::json q = nlohmann::json::object();
      for (const auto& [k, v] : query) q[k] = v;
      write_journal({{"type", "exchange"},
                     {"request", {{"method", method}, {"path", path}, {"query", q}, {"body", body}}},
                     {"response", {{"status", r.status}, {"body", r.body}}}});
    }
    return r;
  }

  void bind(httplib::Server& svr) {
    auto fwd = [this](const httplib::Request& req, httplib::Response& res) {
      Query q;
      for (const auto& [k, v] : req.params) q[k] = v;
      const Response r = handle(req.method, req.path, q, req.body);
      res.status = r.status;
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_content(r.body.dump(), "application/json");
    };
    svr.Get(R"(/(rules|episodes/[^/]+))", fwd);
    svr.Post(R"(/episodes(/[^/]+/(moves|advance))?)", fwd);
    svr.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  std::size_t session_count() const {
    std::shared_lock lk(map_mu_);
    return sessions_.size();
  }

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    ClientKind kind = ClientKind::Agent;
    std::int64_t created = 0;  // creation ordinal; wall time would break replay
    std::vector<TrialPhase> phases;
    std::size_t phase = 0;
    int n = 9;
    PositionMode mode = PositionMode::All;
    int move_cap = kDefaultMoveCap;
    std::uint64_t seed = 0;
    int deal = 0;  // episodes dealt in this session
    Episode episode;
    std::vector<int> codes;  // response codes of the current episode
  };

  static Response error(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

  Response route(const std::string& method, const std::string& path, const Query& query,
                 const std::string& body) {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < path.size();) {
      const auto j = path.find('/', i);
      const auto end = j == std::string::npos ? path.size() : j;
      if (end > i) parts.push_back(path.substr(i, end - i));
      i = end + 1;
    }
    nlohmann::json req = nlohmann::json::object();
    if (method == "POST" && !body.empty()) {
      req = nlohmann::json::parse(body, nullptr, false);
      if (req.is_discarded() || !req.is_object()) return error(400, "request body is not a JSON object");
    }
    try {
      if (method == "GET" && parts == std::vector<std::string>{"rules"}) return rules();
      if (parts.empty() || parts[0] != "episodes") return error(404, "no such endpoint");
      if (method == "POST" && parts.size() == 1) return create(req);
      if (parts.size() < 2) return error(405, "method not allowed");
      auto s = find(parts[1]);
      if (!s) return error(404, "unknown session '" + parts[1] + "'");
      std::lock_guard lk(s->mu);
      if (method == "GET" && parts.size() == 2) return snapshot(*s, query);
      if (method == "POST" && parts.size() == 3 && parts[2] == "moves") return move(*s, req);
      if (method == "POST" && parts.size() == 3 && parts[2] == "advance") return advance(*s, req);
      return error(404, "no such endpoint");
    } catch (const nlohmann::json::exception& e) {
      return error(422, std::string("bad field: ") + e.what());
    }
  }

  Response rules() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& n : catalog_->names()) {
      const auto& e = catalog_->entry(n);
      nlohmann::json tags = nlohmann::json::array();
      for (auto t : e.tags) tags.push_back(std::string(to_string(t)));
      out.push_back({{"name", n}, {"tags", tags}, {"description", e.description}, {"experiment", e.experiment}});
    }
    return {200, {{"rules", out}}};
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lk(map_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  Response create(const nlohmann::json& req) {
    auto s = std::make_shared<Session>();
    const std::string kind = req.value("client", std::string("agent"));
    if (kind != "agent" && kind != "human") return error(422, "client must be agent or human");
    s->kind = kind == "human" ? ClientKind::Human : ClientKind::Agent;
    s->n = req.value("n", 9);
    try {
      s->mode = parse_position_mode(req.value("mode", std::string("all")));
    } catch (const std::exception& e) {
      return error(422, e.what());
    }
    s->move_cap = req.value("move_cap", s->kind == ClientKind::Human ? INT_MAX : kDefaultMoveCap);

    std::unique_lock lk(map_mu_);
    const std::int64_t ordinal = ++created_;
    s->created = ordinal;
    s->seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : derive_seed(opt_.seed, 0, ordinal);
    try {
      if (req.contains("trial_list")) {
        s->phases = parse_trial_list(req.at("trial_list").get<std::string>(), *catalog_).phases;
        if (s->phases.empty()) return error(422, "empty trial list");
      } else if (req.contains("rule")) {
        std::string rule = req.at("rule").get<std::string>();
        if (rule == "random") {
          const auto pool = catalog_->experiment_rules();
          Rng rng(derive_seed(s->seed, 1));
          rule = pool[uniform_index(rng, pool.size())];
        }
        catalog_->resolve(rule);
        s->phases.push_back(TrialPhase{{rule}});
      } else {
        return error(422, "rule or trial_list is required");
      }
    } catch (const ParseError& e) {
      return error(400, e.what());
    }
    try {
      deal(*s);
    } catch (const std::exception& e) {
      return error(422, e.what());
    }
    s->id = "ep-" + std::to_string(ordinal);
    sessions_.emplace(s->id, s);
    return {201, describe(*s, false)};
  }

  void deal(Session& s) {
    const std::uint64_t seed = s.deal == 0 ? s.seed : derive_seed(s.seed, 2, static_cast<std::uint64_t>(s.deal));
    s.episode = new_episode(catalog_->resolve(s.phases[s.phase].active()), s.n, seed,
                            PositionSet::for_mode(s.mode), s.move_cap);
    s.codes.clear();
    ++s.deal;
  }

  bool hidden(const Session& s, const Query& q) const {
    if (s.kind == ClientKind::Agent) return false;
    const auto it = q.find("reveal");
    const bool asked = it != q.end() && it->second == "1";
    return !(asked && opt_.debug_reveal && s.episode.finished());
  }

  nlohmann::json describe(const Session& s, bool with_history, const Query& q = {}) const {
    nlohmann::json j{{"session_id", s.id},
                     {"client", s.kind == ClientKind::Human ? "human" : "agent"},
                     {"created", s.created},
                     {"seed", s.episode.seed},
                     {"n", s.n},
                     {"mode", std::string(to_string(s.mode))},
                     {"phase", s.phase + 1},
                     {"phases", s.phases.size()},
                     {"board", board_to_json(s.episode)}};
    if (s.move_cap != INT_MAX) j["move_cap"] = s.move_cap;
    if (!hidden(s, q)) j["rule"] = s.phases[s.phase].active();
    if (with_history) {
      std::string seq;
      for (int c : s.codes) seq += code_letter(c);
      j["codes"] = s.codes;
      j["sequence"] = seq;
      int errors = 0;
      for (int c : s.codes) errors += c != 0;
      j["errors"] = errors;
      if (s.kind == ClientKind::Agent && q.count("legal") && q.at("legal") == "1") {
        nlohmann::json lm = nlohmann::json::array();
        for (const auto& m : legal_moves(s.episode)) lm.push_back({{"piece_id", m.piece_id}, {"bucket", m.bucket}});
        j["legal_moves"] = lm;
      }
    }
    return j;
  }

  Response snapshot(const Session& s, const Query& q) const { return {200, describe(s, true, q)}; }

  Response move(Session& s, const nlohmann::json& req) {
    if (!req.contains("piece_id") || !req.contains("bucket")) return error(422, "piece_id and bucket are required");
    const int piece = req.at("piece_id").get<int>();
    const int bucket = req.at("bucket").get<int>();
    MoveOutcome out;
    try {
      out = attempt_move(s.episode, piece, bucket);
    } catch (const EpisodeFinishedError& e) {
      return error(409, e.what());
    } catch (const AddressingError& e) {
      return error(422, e.what());
    } catch (const DomainError& e) {
      return error(422, e.what());
    }
    s.codes.push_back(out.response_code);
    nlohmann::json j = to_json(out);
    j["board"] = board_to_json(s.episode);
    return {200, j};
  }

  Response advance(Session& s, const nlohmann::json& req) {
    const bool restart = req.value("restart", false);
    if (!restart) {
      if (s.phase + 1 >= s.phases.size()) return error(409, "no further phase");
      ++s.phase;
    }
    deal(s);
    return {200, describe(s, false)};
  }

  void write_journal(const nlohmann::json& j) {
    std::lock_guard lk(journal_mu_);
    *opt_.journal << j.dump() << '\n';
    opt_.journal->flush();
  }

  ServerOptions opt_;
  const RuleCatalog* catalog_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::int64_t created_ = 0;
  std::mutex journal_mu_;
};

struct ReplayReport {
  std::size_t exchanges = 0;
  std::size_t mismatches = 0;
  std::optional<std::size_t> first_mismatch;  // 1-based exchange index
};

/// Re-issues every journaled request against a fresh server with the journaled
/// seed and compares each response with the recorded one.
inline ReplayReport replay_journal(std::istream& is, const RuleCatalog& catalog = RuleCatalog::builtin()) {
  ReplayReport rep;
  std::unique_ptr<GameServer> srv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("journal line is not JSON");
    if (j.value("type", "") == "server") {
      ServerOptions o;
      o.seed = j.at("seed").get<std::uint64_t>();
      srv = std::make_unique<GameServer>(o, catalog);
      continue;
    }
    if (!srv) throw ParseError("journal does not start with a server record");
    const auto& rq = j.at("request");
    Query q;
    for (const auto& [k, v] : rq.at("query").items()) q[k] = v.get<std::string>();
    const Response r = srv->handle(rq.at("method"), rq.at("path"), q, rq.at("body"));
    ++rep.exchanges;
    const auto& want = j.at("response");
    if (r.status != want.at("status").get<int>() || r.body != want.at("body")) {
      ++rep.mismatches;
      if (!rep.first_mismatch) rep.first_mismatch = rep.exchanges;
    }
  }
  return rep;
}

/// Environment over HTTP: one agent session per episode, created with the
/// episode's explicit seed. The board, including removal history, is tracked
/// client side from the responses.
class HttpEnvironment : public Environment {
 public:
  HttpEnvironment(const std::string& host, int port) : cli_(host, port) {}

  const BoardState& start(const EpisodeSpec& spec) override {
    const nlohmann::json body{{"rule", spec.rule}, {"n", spec.pieces}, {"seed", spec.seed},
                              {"mode", std::string(to_string(spec.mode))}, {"move_cap", spec.move_cap}};
    const auto res = post("/episodes", body, 201);
    id_ = res.at("session_id").get<std::string>();
    board_ = BoardState{};
    board_.pieces = pieces_from_json(res.at("board"));
    return board_;
  }

  MoveOutcome move(int piece_id, int bucket) override {
    const auto res = post("/episodes/" + id_ + "/moves", {{"piece_id", piece_id}, {"bucket", bucket}}, 200);
    MoveOutcome out;
    out.response_code = res.at("response_code");
    out.reward = res.at("reward");
    out.finish_code = res.at("finish_code");
    out.move_count = res.at("move_count");
    if (out.response_code == kAccept) {
      const Piece* p = board_.find(piece_id);
      if (!p) throw ParseError("server accepted a piece the client does not know");
      board_.removed.push_back({*p, bucket, out.move_count});
      std::erase_if(board_.pieces, [&](const Piece& q) { return q.id == piece_id; });
    }
    if (pieces_from_json(res.at("board")) != board_.pieces) throw ParseError("client board diverged from server");
    return out;
  }

  const BoardState& board() const override { return board_; }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body, int want) {
    auto res = cli_.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("HTTP request to " + path + " failed: " + httplib::to_string(res.error()));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status != want)
      throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
    if (j.is_discarded()) throw ParseError("non-JSON response from " + path);
    return j;
  }

  httplib::Client cli_;
  std::string id_;
  BoardState board_;
};

}  // namespace gohr
