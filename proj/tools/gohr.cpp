// Command-line front end: serve, play, train, transfer, generalize, analyze.

#include <fstream>
#include <map>
#include <random>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gohr/harness.hpp"
#include "gohr/server.hpp"

using namespace gohr;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Options shared by the training verbs. Flags override the config file.
struct TrainFlags {
  std::string config_file;
  std::string repr;
  int hist = 0;
  std::string optimizer;
  double lr = 0;
  int episodes = 0;
  int pieces = 0;
  std::string mode;
  int move_cap = 0;
  bool no_early_stop = false;
  int d_model = 0, heads = 0, layers = 0, ff = 0;
  std::vector<double> metrics;  // W_mean T_mean W_max T_max W_mstar

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON configuration file (flags override it)")->check(CLI::ExistingFile);
    app->add_option("--repr", repr, "Input representation")->check(CLI::IsMember({"FC", "OC"}));
    app->add_option("--hist", hist, "Past steps in the input")->check(CLI::Range(0, 64));
    app->add_option("--optimizer", optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--episodes", episodes, "Maximum episodes per phase");
    app->add_option("-n,--pieces", pieces, "Initial pieces per board");
    app->add_option("--mode", mode, "Position set: all, train or test")->check(CLI::IsMember({"all", "train", "test"}));
    app->add_option("--move-cap", move_cap, "Moves before an episode is failed");
    app->add_flag("--no-early-stop", no_early_stop, "Run every phase to the episode limit");
    app->add_option("--d-model", d_model, "Transformer width");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--layers", layers, "Transformer blocks");
    app->add_option("--ff", ff, "Feed-forward width");
    app->add_option("--metrics", metrics, "W_mean T_mean W_max T_max W_mstar")->expected(5);
  }

  TrainConfig build() const {
    TrainConfig c;
    if (!config_file.empty()) c = train_config_from_json(nlohmann::json::parse(read_file(config_file)));
    if (!repr.empty()) c.agent.encoder.representation = parse_representation(repr);
    if (hist) c.agent.encoder.history = hist;
    if (!optimizer.empty()) c.agent.hyper.optimizer = optimizer;
    if (lr > 0) c.agent.hyper.lr = lr;
    if (episodes) c.agent.hyper.max_episodes = episodes;
    if (pieces) c.agent.hyper.pieces = pieces;
    c.agent.encoder.objects = c.agent.hyper.pieces;
    if (!mode.empty()) c.mode = parse_position_mode(mode);
    if (move_cap) c.move_cap = move_cap;
    if (no_early_stop) c.early_stop = false;
    if (d_model) c.agent.network.d_model = d_model;
    if (heads) c.agent.network.n_heads = heads;
    if (layers) c.agent.network.n_layers = layers;
    if (ff) c.agent.network.ff_width = ff;
    if (!metrics.empty())
      c.metrics = {static_cast<int>(metrics[0]), metrics[1], static_cast<int>(metrics[2]), metrics[3],
                   static_cast<int>(metrics[4])};
    c.agent.hyper.validate();
    c.agent.network.validate();
    return c;
  }
};

/// --seeds accepts either a count (1..N) or an explicit list.
std::vector<std::uint64_t> seed_list(const std::vector<std::uint64_t>& given) {
  if (given.size() == 1) return default_seeds(static_cast<int>(given[0]));
  return given;
}

void print_board(const nlohmann::json& board) {
  std::cout << "      ";
  for (int c = 1; c <= 6; ++c) std::cout << ' ' << c << "  ";
  std::cout << '\n';
  std::map<std::pair<int, int>, std::string> cell;
  for (const auto& p : board.at("pieces")) {
    std::ostringstream os;
    os << p.at("id").get<int>() << p.at("color").get<std::string>()[0] << p.at("shape").get<std::string>()[0];
    cell[{p.at("col").get<int>(), p.at("row").get<int>()}] = os.str();
  }
  for (int r = 6; r >= 1; --r) {
    std::cout << " row " << r;
    for (int c = 1; c <= 6; ++c) {
      auto it = cell.find({c, r});
      std::string s = it == cell.end() ? "." : it->second;
      s.resize(3, ' ');
      std::cout << ' ' << s;
    }
    std::cout << '\n';
  }
  std::cout << "buckets: 0 top-left, 1 top-right, 2 bottom-right, 3 bottom-left; move_count "
            << board.at("move_count") << '\n';
}

int cmd_serve(const std::string& host, int port, std::uint64_t seed, const std::string& journal,
              bool reveal, const std::string& static_dir, const std::string& verify) {
  if (!verify.empty()) {
    std::ifstream in(verify);
    if (!in) throw ConfigError("cannot read " + verify);
    const auto rep = replay_journal(in);
    std::cout << nlohmann::json{{"exchanges", rep.exchanges},
                                {"mismatches", rep.mismatches},
                                {"first_mismatch", rep.first_mismatch ? nlohmann::json(*rep.first_mismatch)
                                                                      : nlohmann::json(nullptr)}}
                     .dump()
              << '\n';
    return rep.mismatches == 0 ? 0 : 1;
  }
  std::ofstream jf;
  ServerOptions o;
  o.seed = seed;
  o.debug_reveal = reveal;
  if (!journal.empty()) {
    jf.open(journal, std::ios::app);
    if (!jf) throw ConfigError("cannot write " + journal);
    o.journal = &jf;
  }
  GameServer game(o);
  httplib::Server svr;
  game.bind(svr);
  if (!static_dir.empty() && !svr.set_mount_point("/", static_dir))
    throw ConfigError("cannot serve " + static_dir);
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!svr.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

int cmd_play(const std::string& rule, std::uint64_t seed, bool has_seed, int pieces, bool reveal) {
  ServerOptions o;
  o.debug_reveal = reveal;
  o.seed = has_seed ? seed : std::random_device{}();
  GameServer game(o);
  nlohmann::json req{{"rule", rule}, {"client", "human"}, {"n", pieces}};
  auto r = game.handle("POST", "/episodes", {}, req.dump());
  if (r.status != 201) {
    std::cerr << r.body.at("error").get<std::string>() << '\n';
    return 2;
  }
  const std::string id = r.body.at("session_id");
  print_board(r.body.at("board"));
  std::cout << "enter: <piece id> <bucket>   (q quits)\n";
  int errors = 0, moves = 0;
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "q") break;
    std::istringstream is(line);
    int piece = 0, bucket = 0;
    if (!(is >> piece >> bucket)) {
      std::cout << "expected two integers\n";
      continue;
    }
    r = game.handle("POST", "/episodes/" + id + "/moves", {}, nlohmann::json{{"piece_id", piece}, {"bucket", bucket}}.dump());
    if (r.status != 200) {
      std::cout << r.body.at("error").get<std::string>() << '\n';
      continue;
    }
    const int code = r.body.at("response_code");
    ++moves;
    errors += code != 0;
    std::cout << (code == 0 ? "ACCEPT" : code == 4 ? "DENY" : "IMMOVABLE") << "  errors " << errors << '/' << moves
              << '\n';
    print_board(r.body.at("board"));
    if (r.body.at("finish_code") != 0) break;
  }
  const auto snap = game.handle("GET", "/episodes/" + id, {{"reveal", "1"}}, "").body;
  std::cout << "sequence " << snap.value("sequence", "") << '\n';
  if (snap.contains("rule")) std::cout << "rule was " << snap.at("rule").get<std::string>() << '\n';
  return 0;
}

int cmd_train(const TrainFlags& f, const std::vector<std::string>& rules, const std::string& list_file,
              const std::vector<std::uint64_t>& seeds, const std::string& log_file, const std::string& out,
              const std::string& checkpoint, const std::string& server, int threads) {
  TrainConfig base = f.build();
  if (!out.empty()) {
    ExperimentConfig ec;
    ec.kind = ExperimentKind::Independent;
    ec.rules = rules.empty() ? RuleCatalog::builtin().experiment_rules() : rules;
    ec.base = base;
    ec.seeds = seeds.empty() ? default_seeds() : seed_list(seeds);
    ec.out_dir = out;
    ec.threads = threads;
    ec.progress = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto rep = run_independent(ec);
    write_report(ec, rep);
    write_summary_csv(std::cout, difficulty_order(rep.groups));
    return 0;
  }

  if (!list_file.empty())
    base.phases = parse_trial_list(read_file(list_file)).phases;
  else if (rules.size() == 1)
    base.phases = {TrialPhase{{rules[0]}}};
  else if (base.phases.empty())
    throw ConfigError("give one --rule, a --list file, or --out for a multi-rule experiment");
  if (!seeds.empty()) base.seed = seeds[0];

  std::ofstream lf;
  if (!log_file.empty()) {
    lf.open(log_file, std::ios::trunc);
    if (!lf) throw ConfigError("cannot write " + log_file);
  }
  RunLogWriter log(log_file.empty() ? nullptr : &lf);
  auto agent = make_agent(base);
  std::unique_ptr<Environment> env;
  if (server.empty()) {
    env = std::make_unique<LocalEnvironment>();
  } else {
    const auto colon = server.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--server expects host:port");
    env = std::make_unique<HttpEnvironment>(server.substr(0, colon), std::stoi(server.substr(colon + 1)));
  }
  const auto run = train_run(base, *env, *agent, log);
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : run.phases) phases.push_back(to_json(p));
  std::cout << nlohmann::json{{"phases", phases}, {"aborted", run.aborted}}.dump(2) << '\n';
  if (!checkpoint.empty()) {
    std::ofstream cf(checkpoint);
    cf << agent->checkpoint().dump() << '\n';
  }
  return run.aborted ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hidden-rule board game: engine, server and learning experiments"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the JSON game server");
  std::string host = "127.0.0.1", journal, static_dir, verify;
  int port = 8080;
  std::uint64_t server_seed = 0;
  bool reveal = false;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--seed", server_seed, "Base for seeds the server generates");
  serve->add_option("--journal", journal, "Append (request, response) pairs to this JSONL file");
  serve->add_flag("--debug-reveal", reveal, "Let finished human sessions ask for their rule");
  serve->add_option("--static", static_dir, "Directory served at /")->check(CLI::ExistingDirectory);
  serve->add_option("--verify-journal", verify, "Replay a journal against a fresh server and exit")
      ->check(CLI::ExistingFile);

  // play
  auto* play = app.add_subcommand("play", "Play one hidden-rule episode in the terminal");
  std::string play_rule = "random";
  std::uint64_t play_seed = 0;
  int play_pieces = 9;
  bool play_reveal = true;
  play->add_option("--rule", play_rule, "Rule name, or random for a hidden draw");
  auto* play_seed_opt = play->add_option("--seed", play_seed, "Board seed");
  play->add_option("-n,--pieces", play_pieces, "Initial pieces");
  play->add_flag("!--no-reveal", play_reveal, "Do not show the rule after the episode");

  // train
  auto* train = app.add_subcommand("train", "Train on one rule, a trial list, or a rule x seed grid");
  TrainFlags train_flags;
  train_flags.attach(train);
  std::vector<std::string> train_rules;
  std::string train_list, train_log, train_out, train_ckpt, train_server;
  std::vector<std::uint64_t> train_seeds;
  int train_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  train->add_option("--rule", train_rules, "Rule name(s)");
  train->add_option("--list", train_list, "Trial-list file for one multi-phase run")->check(CLI::ExistingFile);
  train->add_option("--seeds", train_seeds, "Seed count N (seeds 1..N) or explicit seeds");
  train->add_option("--log", train_log, "Run log (JSONL) of a single run");
  train->add_option("--out", train_out, "Output directory: runs every rule x seed and writes summaries");
  train->add_option("--checkpoint", train_ckpt, "Write the trained agent here");
  train->add_option("--server", train_server, "Play through a running server at host:port");
  train->add_option("--threads", train_threads, "Worker threads for --out runs");

  // transfer
  auto* transfer = app.add_subcommand("transfer", "Sequential or partial transfer over trial lists");
  TrainFlags tr_flags;
  tr_flags.attach(transfer);
  std::vector<std::string> tr_lists;
  std::vector<std::uint64_t> tr_seeds;
  std::string tr_out;
  bool tr_partial = false;
  int tr_threads = train_threads;
  transfer->add_option("--list", tr_lists, "Trial-list file(s)")->required()->check(CLI::ExistingFile);
  transfer->add_option("--seeds", tr_seeds, "Seed count N (seeds 1..N) or explicit seeds");
  transfer->add_option("--out", tr_out, "Output directory");
  transfer->add_flag("--partial", tr_partial, "Label the experiment as partial transfer");
  transfer->add_option("--threads", tr_threads, "Worker threads");

  // generalize
  auto* gen = app.add_subcommand("generalize", "Train on checkerboard cells, evaluate on unseen cells");
  TrainFlags gen_flags;
  gen_flags.attach(gen);
  std::vector<std::string> gen_rules;
  std::vector<std::uint64_t> gen_seeds;
  std::string gen_out;
  int gen_pairs = 50, gen_threads = train_threads;
  gen->add_option("--rule", gen_rules, "Rule name(s)")->required();
  gen->add_option("--seeds", gen_seeds, "Seed count N (seeds 1..N) or explicit seeds");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--eval-pairs", gen_pairs, "Train/test evaluation episode pairs");
  gen->add_option("--threads", gen_threads, "Worker threads");

  // analyze
  auto* an = app.add_subcommand("analyze", "Statistics over a directory of independent-run logs");
  std::string an_logs, an_out, an_metric = "m_star";
  an->add_option("--logs", an_logs, "Directory searched recursively for *.jsonl run logs")->required();
  an->add_option("--out", an_out, "Output directory")->required();
  an->add_option("--metric", an_metric, "Metric for the pairwise Mann-Whitney matrix")
      ->check(CLI::IsMember({"e_star_mean", "e_star_max", "m_star"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(host, port, server_seed, journal, reveal, static_dir, verify);
    if (*play) return cmd_play(play_rule, play_seed, play_seed_opt->count() > 0, play_pieces, play_reveal);
    if (*train)
      return cmd_train(train_flags, train_rules, train_list, train_seeds, train_log, train_out, train_ckpt,
                       train_server, train_threads);
    if (*transfer || *gen) {
      ExperimentConfig ec;
      const bool is_transfer = transfer->parsed();
      ec.base = (is_transfer ? tr_flags : gen_flags).build();
      const auto& seeds = is_transfer ? tr_seeds : gen_seeds;
      ec.seeds = seeds.empty() ? default_seeds() : seed_list(seeds);
      ec.out_dir = is_transfer ? tr_out : gen_out;
      ec.threads = is_transfer ? tr_threads : gen_threads;
      ec.progress = [](const std::string& s) { std::cerr << s << '\n'; };
      ExperimentReport rep;
      if (is_transfer) {
        ec.kind = tr_partial ? ExperimentKind::TransferPartial : ExperimentKind::TransferSequential;
        for (const auto& f : tr_lists) ec.trial_lists.push_back(read_file(f));
        rep = run_transfer(ec);
      } else {
        ec.rules = gen_rules;
        ec.eval_pairs = gen_pairs;
        rep = run_generalization(ec);
      }
      write_report(ec, rep);
      write_summary_csv(std::cout, rep.groups);
      return 0;
    }
    if (*an) {
      const auto runs = load_independent_runs(an_logs);
      if (runs.empty()) throw ConfigError("no independent-run logs under " + an_logs);
      const auto bundle = analyze_runs(runs, parse_metric_id(an_metric));
      write_analysis(bundle, an_out);
      std::cerr << runs.size() << " runs analyzed; results in " << an_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
