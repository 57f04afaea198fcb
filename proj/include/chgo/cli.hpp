#pragma once

// The `chigo` command line: download | encode | train-sl | selfplay |
// train-rl | eval | serve.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "chgo/archive.hpp"
#include "chgo/chunkstore.hpp"
#include "chgo/errors.hpp"
#include "chgo/policynet.hpp"
#include "chgo/selfplay.hpp"
#include "chgo/service.hpp"
#include "chgo/synthetic.hpp"
#include "chgo/http_fetch.hpp"

namespace chgo {

namespace detail {

inline int board_size_of(const fs::path& chunk_dir) {
  const auto files = list_chunks(chunk_dir);
  if (files.empty()) throw ConfigError("no chunk files in " + chunk_dir.string());
  return load_chunk(files.front()).header.board_size;
}

inline RlOptimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return RlOptimizer::Sgd;
  if (name == "adadelta") return RlOptimizer::Adadelta;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adadelta)");
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"wins", r.wins}, {"games", r.games}, {"p_value", r.p_value}};
}

}  // namespace detail

// Per-game split of sampled games into train and test sets.
struct EncodeSplit {
  std::vector<GameRef> train;
  std::vector<GameRef> test;
};

inline EncodeSplit split_games(std::vector<GameRef> games, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw ConfigError("test fraction must lie in [0, 1)");
  Rng rng(derive_seed(seed, 1));
  shuffle(std::span<GameRef>(games), rng);
  auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(games.size())));
  if (games.size() >= 2 && test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, games.size() - 1);
  EncodeSplit split;
  split.test.assign(games.begin(), games.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(games.begin() + static_cast<std::ptrdiff_t>(n_test), games.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"chigo: Go policy network training and play"};
  app.require_subcommand(1);

  // download
  std::string index_url;
  int dl_games = 1000;
  std::string dl_cache = "cache";
  std::uint64_t dl_seed = 0;
  bool teacher = false;
  int teacher_board = 19;
  auto* download = app.add_subcommand("download", "fetch game archives into a local cache and sample games");
  download->add_option("--index", index_url, "index page listing .zip archives");
  download->add_option("--games", dl_games, "number of games to make available")->check(CLI::PositiveNumber);
  download->add_option("--cache", dl_cache, "cache directory");
  download->add_option("--seed", dl_seed, "sampling seed");
  download->add_flag("--teacher", teacher, "generate scripted teacher games locally instead of downloading");
  download->add_option("--board-size", teacher_board, "board size for --teacher games");

  // encode
  std::string enc_cache = "cache";
  std::string enc_out = "data";
  int enc_games = 1000;
  int enc_workers = 8;
  std::uint64_t enc_seed = 0;
  double test_fraction = 0.1;
  EncodeOptions enc_opts;
  auto* encode_cmd = app.add_subcommand("encode", "encode sampled games into train/ and test/ chunk directories");
  encode_cmd->add_option("--cache", enc_cache, "cache directory");
  encode_cmd->add_option("--out", enc_out, "output directory");
  encode_cmd->add_option("--games", enc_games, "number of games to sample")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--workers", enc_workers, "encoding threads")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--seed", enc_seed, "sampling and split seed");
  encode_cmd->add_option("--test-fraction", test_fraction, "fraction of games held out");
  encode_cmd->add_option("--board-size", enc_opts.board_size, "keep only games on this board size");
  encode_cmd->add_option("--chunk-size", enc_opts.chunk_size, "samples per chunk")->check(CLI::PositiveNumber);

  // train-sl
  std::string sl_data;
  std::string sl_test;
  int sl_epochs = 10;
  NetworkConfig net;
  std::uint64_t sl_seed = 0;
  std::string sl_out = "model.chk";
  auto* train_sl = app.add_subcommand("train-sl", "supervised training with Adadelta");
  train_sl->add_option("--data", sl_data, "training chunk directory")->required();
  train_sl->add_option("--test", sl_test, "held-out chunk directory")->required();
  train_sl->add_option("--epochs", sl_epochs, "epochs")->check(CLI::PositiveNumber);
  train_sl->add_option("--filters", net.filters, "convolution filters K")->check(CLI::PositiveNumber);
  train_sl->add_option("--dense", net.dense_units, "hidden dense units")->check(CLI::PositiveNumber);
  train_sl->add_option("--seed", sl_seed, "initialization and shuffle seed");
  train_sl->add_option("--out", sl_out, "checkpoint path, rewritten after every epoch");

  // selfplay
  std::string sp_model;
  int sp_games = 128;
  std::string sp_out = "buf.exp";
  std::uint64_t sp_seed = 0;
  int sp_workers = 1;
  auto* selfplay = app.add_subcommand("selfplay", "generate self-play experience");
  selfplay->add_option("--model", sp_model, "checkpoint")->required();
  selfplay->add_option("--games", sp_games, "games")->check(CLI::PositiveNumber);
  selfplay->add_option("--out", sp_out, "experience file");
  selfplay->add_option("--seed", sp_seed, "seed");
  selfplay->add_option("--workers", sp_workers, "game threads")->check(CLI::PositiveNumber);

  // train-rl
  std::string rl_model;
  std::string rl_out = "rl.chk";
  std::string rl_optimizer = "sgd";
  RlOptions rl;
  auto* train_rl = app.add_subcommand("train-rl", "REINFORCE self-play training");
  train_rl->add_option("--model", rl_model, "starting checkpoint")->required();
  train_rl->add_option("--iterations", rl.iterations, "iterations")->check(CLI::NonNegativeNumber);
  train_rl->add_option("--alpha", rl.alpha, "step size")->check(CLI::PositiveNumber);
  train_rl->add_option("--seed", rl.seed, "seed");
  train_rl->add_option("--out", rl_out, "final checkpoint");
  train_rl->add_option("--games-per-iter", rl.games_per_iteration, "self-play games per iteration")
      ->check(CLI::PositiveNumber);
  train_rl->add_option("--screen-games", rl.screen_games, "games against the previous version")
      ->check(CLI::PositiveNumber);
  train_rl->add_option("--confirm-games", rl.confirm_games, "games when the screen passes")
      ->check(CLI::NonNegativeNumber);
  train_rl->add_option("--final-games", rl.final_games, "final games against the starting model")
      ->check(CLI::NonNegativeNumber);
  train_rl->add_option("--optimizer", rl_optimizer, "sgd or adadelta");
  train_rl->add_option("--workers", rl.workers, "game threads")->check(CLI::PositiveNumber);

  // eval
  std::string eval_a;
  std::string eval_b;
  int eval_games = 1000;
  std::uint64_t eval_seed = 0;
  int eval_workers = 1;
  auto* eval = app.add_subcommand("eval", "play model a against model b with alternating colours");
  eval->add_option("--a", eval_a, "checkpoint a")->required();
  eval->add_option("--b", eval_b, "checkpoint b")->required();
  eval->add_option("--games", eval_games, "games")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "seed");
  eval->add_option("--workers", eval_workers, "game threads")->check(CLI::PositiveNumber);

  // serve
  std::string srv_model;
  int srv_port = 8080;
  std::string srv_host = "127.0.0.1";
  std::string srv_static;
  ServiceConfig srv_cfg;
  auto* serve = app.add_subcommand("serve", "serve the move-selection API");
  serve->add_option("--model", srv_model, "checkpoint")->required();
  serve->add_option("--port", srv_port, "port; 0 picks a free one")->check(CLI::Range(0, 65535));
  serve->add_option("--host", srv_host, "bind address");
  serve->add_option("--static", srv_static, "directory served at /");
  serve->add_option("--resign-margin", srv_cfg.resign_margin, "resign instead of passing when this far behind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  try {
    if (download->parsed()) {
      if (teacher) {
        TeacherConfig cfg;
        cfg.board_size = teacher_board;
        const int per_archive = 100;
        write_teacher_cache(dl_cache, (dl_games + per_archive - 1) / per_archive, per_archive, dl_seed, cfg);
        const auto sampled = sample_games(dl_cache, dl_games, dl_seed);
        out << nlohmann::json{{"games", sampled.size()}, {"cache", dl_cache}}.dump() << "\n";
        return 0;
      }
      if (index_url.empty()) throw ConfigError("download needs --index or --teacher");
      const auto index = fetch_archives(index_url, dl_games, dl_cache, dl_seed, default_http_get());
      out << nlohmann::json{{"archives", index.entries.size()}, {"available", index.total_games()},
                            {"sampled", index.sampled.size()}}
                 .dump()
          << "\n";
      return 0;
    }
    if (encode_cmd->parsed()) {
      const auto split = split_games(sample_games(enc_cache, enc_games, enc_seed), test_fraction, enc_seed);
      auto sources = [&](const std::vector<GameRef>& refs) {
        std::vector<GameSource> s;
        for (const auto& r : refs) s.push_back(GameSource{fs::path(enc_cache) / r.archive, r.entry});
        return s;
      };
      const auto train = process_games(sources(split.train), fs::path(enc_out) / "train", enc_workers, enc_opts);
      const auto test = process_games(sources(split.test), fs::path(enc_out) / "test", enc_workers, enc_opts);
      for (const auto& [name, s] : {std::pair{"train", train}, std::pair{"test", test}}) {
        out << nlohmann::json{{"split", name},       {"games", s.n_games},       {"samples", s.n_samples},
                              {"chunks", s.n_chunks}, {"excluded", s.n_excluded}, {"skipped", s.n_skipped}}
                   .dump()
            << "\n";
      }
      return 0;
    }
    if (train_sl->parsed()) {
      net.board_size = detail::board_size_of(sl_data);
      auto params = init_network<float>(net, sl_seed);
      AdadeltaState<float> opt;
      TrainOptions topts;
      topts.epochs = sl_epochs;
      topts.seed = sl_seed;
      topts.checkpoint = fs::path(sl_out);
      topts.on_epoch = [&](const TrainMetrics& m, const Parameters<float>&) {
        out << nlohmann::json{{"epoch", m.epoch}, {"loss", m.loss}, {"accuracy", m.top1_accuracy},
                              {"samples_seen", m.samples_seen}}
                   .dump()
            << std::endl;
        return true;
      };
      train_supervised(params, opt, sl_data, sl_test, topts);
      return 0;
    }
    if (selfplay->parsed()) {
      const auto agent = load_agent(sp_model);
      const auto buffer = collect_experience(agent, sp_games, sp_seed, sp_workers);
      save_experience(sp_out, buffer, agent.board_size());
      out << nlohmann::json{{"games", buffer.games.size()}, {"steps", buffer.total_steps}}.dump() << "\n";
      return 0;
    }
    if (train_rl->parsed()) {
      rl.optimizer = detail::parse_optimizer(rl_optimizer);
      const auto initial = load_agent(rl_model);
      const auto outcome = run_rl(initial, rl, [&](const RlIterationReport& r) {
        nlohmann::json line{{"version", r.version}, {"steps", r.steps}, {"screen", detail::to_json(r.screen)}};
        if (r.confirm) line["confirm"] = detail::to_json(*r.confirm);
        out << line.dump() << std::endl;
      });
      save_agent(rl_out, outcome.agent);
      if (outcome.versus_initial) {
        out << nlohmann::json{{"versus_initial", detail::to_json(*outcome.versus_initial)}}.dump() << "\n";
      }
      return 0;
    }
    if (eval->parsed()) {
      const auto report = play_match(load_agent(eval_a), load_agent(eval_b), eval_games, eval_seed, eval_workers);
      out << detail::to_json(report).dump() << "\n";
      return 0;
    }
    if (serve->parsed()) {
      std::optional<fs::path> static_dir;
      if (!srv_static.empty()) static_dir = fs::path(srv_static);
      MoveServer server(load_agent(srv_model), srv_cfg, static_dir);
      serve_until_signaled(server, srv_host, srv_port, out);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace chgo
