#pragma once

// Stateless move-selection service. Every request carries the whole move
// list; the server rebuilds the position, lets the agent (always White) pick
// a reply, and forgets the game.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "chgo/goboard.hpp"
#include "chgo/log.hpp"
#include "chgo/selfplay.hpp"

#include <httplib.h>
#include <json.hpp>

namespace chgo {

struct ServiceConfig {
  double komi = kDefaultKomi;
  double resign_margin = 50.0;  // resign instead of passing when this far behind
  int candidates = 5;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

namespace detail {

inline HttpReply error_reply(int status, const std::string& code, const std::string& message,
                             std::optional<std::size_t> index = {}) {
  nlohmann::json body{{"error", code}, {"message", message}};
  if (index) body["index"] = *index;
  return {status, std::move(body)};
}

// FNV-1a over the canonical move list.
inline std::uint64_t request_seed(int board_size, const std::vector<Move>& moves) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= ';';
    h *= 0x100000001b3ULL;
  };
  mix(std::to_string(board_size));
  for (const auto& m : moves) mix(to_coordinate(m));
  return h;
}

}  // namespace detail

inline std::string model_version(const Agent& agent) { return "v" + std::to_string(agent.version); }

inline HttpReply config_response(const Agent& agent, const ServiceConfig& cfg = {}) {
  return {200, nlohmann::json{{"board_size", agent.board_size()},
                              {"komi", cfg.komi},
                              {"rules", "chinese"},
                              {"human", "black"},
                              {"model_version", model_version(agent)}}};
}

inline HttpReply handle_select_move(const Agent& agent, std::string_view body, const ServiceConfig& cfg = {}) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return detail::error_reply(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("board_size") || !req["board_size"].is_number_integer() ||
      !req.contains("moves") || !req["moves"].is_array()) {
    return detail::error_reply(400, "bad_request", "expected {\"board_size\": int, \"moves\": [string]}");
  }
  const int n = req["board_size"].get<int>();
  if (n != agent.board_size()) {
    return detail::error_reply(400, "bad_request", "this server plays on " + std::to_string(agent.board_size()) +
                                                       "x" + std::to_string(agent.board_size()));
  }
  std::vector<Move> moves;
  const auto& list = req["moves"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_string()) return detail::error_reply(400, "bad_request", "moves must be strings", i);
    try {
      moves.push_back(parse_coordinate(list[i].get<std::string>(), n));
    } catch (const FormatError& e) {
      return detail::error_reply(400, "bad_request", e.what(), i);
    }
  }

  GameState state = new_game(n);
  for (std::size_t i = 0; i < moves.size(); ++i) {
    if (state.is_over()) return detail::error_reply(409, "game_over", "the game ended before this move", i);
    if (moves[i].is_resign()) return detail::error_reply(422, "illegal_move", "resign is not a replayable move", i);
    const auto legality = state.classify(moves[i]);
    if (legality != MoveLegality::Legal) {
      return detail::error_reply(422, "illegal_move", to_coordinate(moves[i]) + ": " + to_string(legality), i);
    }
    state = state.apply(moves[i]);
  }
  if (state.is_over()) return detail::error_reply(409, "game_over", "the game is already over");
  if (state.next_player() != Player::White) {
    return detail::error_reply(409, "not_agents_turn", "the agent plays White; Black is to move");
  }

  Rng rng(detail::request_seed(n, moves) ^ agent.rng_seed);
  const auto features = encode(state);
  const auto weights = move_weights(agent, state, features);
  const std::size_t pick = sample_index(weights, rng);
  Move reply = pick == weights.size() ? Move::pass() : Move::play(Point::from_index(static_cast<int>(pick), n));
  if (reply.is_pass() && score(state, cfg.komi).black_margin() > cfg.resign_margin) reply = Move::resign();

  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto top = std::min<std::size_t>(static_cast<std::size_t>(cfg.candidates), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return weights[a] > weights[b] || (weights[a] == weights[b] && a < b); });
  nlohmann::json candidates = nlohmann::json::array();
  for (std::size_t k = 0; k < top; ++k) {
    if (weights[order[k]] <= 0.0) break;
    candidates.push_back({{"move", to_coordinate(Point::from_index(static_cast<int>(order[k]), n))},
                          {"p", weights[order[k]]}});
  }
  return {200, nlohmann::json{{"bot_move", to_coordinate(reply)},
                              {"move_number", static_cast<int>(moves.size()) + 1},
                              {"model_version", model_version(agent)},
                              {"diagnostics", {{"candidates", candidates}}}}};
}

// Thin httplib wrapper around the pure handlers above. Logs method, path,
// status and latency only.
class MoveServer {
 public:
  MoveServer(Agent agent, ServiceConfig cfg = {}, std::optional<fs::path> static_dir = {})
      : agent_(std::move(agent)), cfg_(cfg) {
    server_.Post("/api/select-move", [this](const httplib::Request& req, httplib::Response& res) {
      timed(req, res, [&] { return handle_select_move(agent_, req.body, cfg_); });
    });
    server_.Get("/api/config", [this](const httplib::Request& req, httplib::Response& res) {
      timed(req, res, [&] { return config_response(agent_, cfg_); });
    });
    if (static_dir && !server_.set_mount_point("/", static_dir->string())) {
      throw ConfigError("static directory " + static_dir->string() + " does not exist");
    }
  }

  // Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  // Serves until stop() is called.
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const { return port_; }

 private:
  template <typename Fn>
  static void timed(const httplib::Request& req, httplib::Response& res, Fn handler) {
    const auto start = std::chrono::steady_clock::now();
    const HttpReply reply = handler();
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log_info(req.method, " ", req.path, " status=", reply.status, " ms=", ms);
  }

  Agent agent_;
  ServiceConfig cfg_;
  httplib::Server server_;
  int port_ = -1;
};

namespace detail {

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

extern "C" inline void handle_stop_signal(int) { stop_requested() = true; }

}  // namespace detail

// Serves until SIGINT or SIGTERM. Prints the bound port on `out`.
inline void serve_until_signaled(MoveServer& server, const std::string& host, int port, std::ostream& out) {
  const int bound = server.bind(host, port);
  out << "listening on " << host << ":" << bound << std::endl;
  detail::stop_requested() = false;
  std::signal(SIGINT, detail::handle_stop_signal);
  std::signal(SIGTERM, detail::handle_stop_signal);
  std::thread watcher([&server] {
    while (!detail::stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  server.listen();
  detail::stop_requested() = true;
  watcher.join();
}

}  // namespace chgo
