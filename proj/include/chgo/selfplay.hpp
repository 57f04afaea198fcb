#pragma once

// Self-play, the sharpened sampler, REINFORCE updates and agent-vs-agent
// evaluation.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "chgo/binomial.hpp"
#include "chgo/encoder.hpp"
#include "chgo/errors.hpp"
#include "chgo/goboard.hpp"
#include "chgo/log.hpp"
#include "chgo/policynet.hpp"
#include "chgo/rng.hpp"

namespace chgo {

struct SamplerConfig {
  double epsilon = 1e-6;
  int exponent = 3;
};

// Raises every probability to the configured power, clamps into
// [epsilon, 1 - epsilon] and renormalizes.
inline std::vector<double> clip_distribution(std::span<const double> probs, const SamplerConfig& config = {}) {
  if (!(config.epsilon > 0.0 && config.epsilon < 0.5)) throw ConfigError("sampler epsilon must lie in (0, 0.5)");
  std::vector<double> out(probs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!std::isfinite(p)) throw NumericError("non-finite probability at index " + std::to_string(i));
    const double q = std::clamp(std::pow(p, config.exponent), config.epsilon, 1.0 - config.epsilon);
    out[i] = q;
    total += q;
  }
  for (auto& q : out) q /= total;
  return out;
}

struct Agent {
  std::shared_ptr<const Parameters<float>> params;
  SamplerConfig sampler;
  std::uint64_t rng_seed = 0;
  int version = 0;

  int board_size() const { return params->config.board_size; }
};

inline Agent make_agent(Parameters<float> params, int version = 0, std::uint64_t seed = 0) {
  return Agent{std::make_shared<const Parameters<float>>(std::move(params)), SamplerConfig{}, seed, version};
}

inline Agent load_agent(const fs::path& checkpoint) {
  auto ck = load_checkpoint(checkpoint);
  return make_agent(std::move(ck.params), static_cast<int>(ck.version));
}

inline void save_agent(const fs::path& path, const Agent& agent) {
  save_checkpoint(path, Checkpoint{*agent.params, std::nullopt, static_cast<std::uint32_t>(agent.version)});
}

// Sampling weights over the n*n points after clipping and masking out
// illegal moves and the mover's own eyes. All zero when nothing survives.
inline std::vector<double> move_weights(const Agent& agent, const GameState& state, const FeatureTensor& features) {
  const int n = state.board_size();
  if (agent.board_size() != n) throw ConfigError("agent board size does not match the game");
  const auto probs = forward(*agent.params, std::span<const std::uint8_t>(features.planes), 1);
  std::vector<double> p(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n * n; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(probs(0, i));
  auto w = clip_distribution(p, agent.sampler);
  const Player mover = state.next_player();
  double total = 0.0;
  for (int i = 0; i < n * n; ++i) {
    const Point pt = Point::from_index(i, n);
    if (!state.is_legal(Move::play(pt)) || is_eye(state, pt, mover)) w[static_cast<std::size_t>(i)] = 0.0;
    total += w[static_cast<std::size_t>(i)];
  }
  if (total > 0.0) {
    for (auto& x : w) x /= total;
  }
  return w;
}

inline Move select_move(const Agent& agent, const GameState& state, const FeatureTensor& features, Rng& rng) {
  const auto w = move_weights(agent, state, features);
  const std::size_t i = sample_index(w, rng);
  if (i == w.size()) return Move::pass();
  return Move::play(Point::from_index(static_cast<int>(i), state.board_size()));
}

inline Move select_move(const Agent& agent, const GameState& state, Rng& rng) {
  return select_move(agent, state, encode(state), rng);
}

// ---- experience -------------------------------------------------------------

struct ExperienceStep {
  FeatureTensor features;
  MoveLabel action;
  int ret = 0;  // +1 if the mover went on to win, -1 otherwise
  Player mover = Player::Black;
  bool operator==(const ExperienceStep&) const = default;
};

struct ExperienceGame {
  std::vector<ExperienceStep> steps;  // one per stone placed
  std::vector<Move> moves;            // every move, passes included
  GameResult result;
  bool operator==(const ExperienceGame& o) const {
    return steps == o.steps && moves == o.moves && result.winner == o.result.winner &&
           result.black_area == o.result.black_area && result.white_area == o.result.white_area &&
           result.komi == o.result.komi && result.by_resignation == o.result.by_resignation;
  }
};

struct ExperienceBuffer {
  std::vector<ExperienceGame> games;
  std::size_t total_steps = 0;

  void add(ExperienceGame g) {
    total_steps += g.steps.size();
    games.push_back(std::move(g));
  }
  bool operator==(const ExperienceBuffer&) const = default;
};

// Chooses a move for whoever is to play in state.
using MovePolicy = std::function<Move(const GameState&, const FeatureTensor&, Rng&)>;

inline MovePolicy agent_policy(const Agent& agent) {
  return [agent](const GameState& s, const FeatureTensor& f, Rng& rng) { return select_move(agent, s, f, rng); };
}

inline ExperienceGame play_game(const MovePolicy& black, const MovePolicy& white, int board_size, Rng& rng) {
  ExperienceGame game;
  GameState state = new_game(board_size);
  while (!state.is_over()) {
    const Player mover = state.next_player();
    FeatureTensor features = encode(state);
    const Move m = (mover == Player::Black ? black : white)(state, features, rng);
    if (m.is_play()) {
      game.steps.push_back(ExperienceStep{std::move(features), MoveLabel{m.point().index(board_size)}, 0, mover});
    }
    game.moves.push_back(m);
    state = state.apply(m);
  }
  game.result = score(state);
  for (auto& step : game.steps) step.ret = step.mover == game.result.winner ? 1 : -1;
  return game;
}

inline ExperienceGame self_play_game(const Agent& black, const Agent& white, Rng& rng) {
  if (black.board_size() != white.board_size()) throw ConfigError("agents play on different board sizes");
  return play_game(agent_policy(black), agent_policy(white), black.board_size(), rng);
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads; results are written
// by index so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// Game i is played with its own stream derived from (seed, i).
inline ExperienceBuffer collect_experience(const Agent& agent, int n_games, std::uint64_t seed, int workers = 1) {
  if (n_games < 1) throw ConfigError("collect_experience needs at least one game");
  std::vector<ExperienceGame> games(static_cast<std::size_t>(n_games));
  detail::parallel_for(n_games, workers, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    games[static_cast<std::size_t>(i)] = self_play_game(agent, agent, rng);
  });
  ExperienceBuffer buffer;
  for (auto& g : games) buffer.add(std::move(g));
  return buffer;
}

// ---- experience files ---------------------------------------------------------
//
// "CHGX" | u32 version (1) | u32 board_size | u32 n_games, then per game:
// u8 winner | u32 n_moves | u16[n_moves] moves (n*n = pass, n*n+1 = resign)
// | u32 n_steps | per step: u16 action | i8 return | u8 mover | u8[11*n*n] planes

inline void save_experience(const fs::path& path, const ExperienceBuffer& buffer, int board_size) {
  std::ostringstream os(std::ios::binary);
  os.write("CHGX", 4);
  const auto pts = static_cast<std::uint16_t>(board_size * board_size);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(board_size));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(buffer.games.size()));
  for (const auto& g : buffer.games) {
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(g.result.winner));
    detail::write_pod<std::uint8_t>(os, g.result.by_resignation ? 1 : 0);
    detail::write_pod<std::int32_t>(os, g.result.black_area);
    detail::write_pod<std::int32_t>(os, g.result.white_area);
    detail::write_pod<double>(os, g.result.komi);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g.moves.size()));
    for (const auto& m : g.moves) {
      const std::uint16_t code = m.is_play() ? static_cast<std::uint16_t>(m.point().index(board_size))
                                             : static_cast<std::uint16_t>(m.is_pass() ? pts : pts + 1);
      detail::write_pod(os, code);
    }
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g.steps.size()));
    for (const auto& s : g.steps) {
      detail::write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(s.action.index));
      detail::write_pod<std::int8_t>(os, static_cast<std::int8_t>(s.ret));
      detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(s.mover));
      os.write(reinterpret_cast<const char*>(s.features.planes.data()),
               static_cast<std::streamsize>(s.features.planes.size()));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file_atomic(path, os.str());
}

inline ExperienceBuffer load_experience(const fs::path& path) {
  const std::string file = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptionError(file, "cannot open experience file");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CHGX", 4) != 0) throw CorruptionError(file, "bad experience magic");
  if (detail::read_pod<std::uint32_t>(is, file) != 1) throw CorruptionError(file, "unsupported experience version");
  const int n = static_cast<int>(detail::read_pod<std::uint32_t>(is, file));
  if (n < 1 || n > kMaxBoardSize) throw CorruptionError(file, "bad board size");
  const auto n_games = detail::read_pod<std::uint32_t>(is, file);
  const int pts = n * n;
  ExperienceBuffer buffer;
  for (std::uint32_t gi = 0; gi < n_games; ++gi) {
    ExperienceGame g;
    const auto winner = detail::read_pod<std::uint8_t>(is, file);
    if (winner > 1) throw CorruptionError(file, "bad winner");
    g.result.winner = static_cast<Player>(winner);
    g.result.by_resignation = detail::read_pod<std::uint8_t>(is, file) != 0;
    g.result.black_area = detail::read_pod<std::int32_t>(is, file);
    g.result.white_area = detail::read_pod<std::int32_t>(is, file);
    g.result.komi = detail::read_pod<double>(is, file);
    const auto n_moves = detail::read_pod<std::uint32_t>(is, file);
    for (std::uint32_t i = 0; i < n_moves; ++i) {
      const auto code = detail::read_pod<std::uint16_t>(is, file);
      if (code < pts) {
        g.moves.push_back(Move::play(Point::from_index(code, n)));
      } else if (code == pts) {
        g.moves.push_back(Move::pass());
      } else if (code == pts + 1) {
        g.moves.push_back(Move::resign());
      } else {
        throw CorruptionError(file, "bad move code");
      }
    }
    const auto n_steps = detail::read_pod<std::uint32_t>(is, file);
    for (std::uint32_t i = 0; i < n_steps; ++i) {
      ExperienceStep s;
      s.action.index = detail::read_pod<std::uint16_t>(is, file);
      s.ret = detail::read_pod<std::int8_t>(is, file);
      const auto mover = detail::read_pod<std::uint8_t>(is, file);
      if (s.action.index >= pts || (s.ret != 1 && s.ret != -1) || mover > 1) {
        throw CorruptionError(file, "bad experience step");
      }
      s.mover = static_cast<Player>(mover);
      s.features = FeatureTensor(n);
      if (!is.read(reinterpret_cast<char*>(s.features.planes.data()),
                   static_cast<std::streamsize>(s.features.planes.size()))) {
        throw CorruptionError(file, "truncated experience file");
      }
      g.steps.push_back(std::move(s));
    }
    buffer.add(std::move(g));
  }
  return buffer;
}

// ---- REINFORCE ----------------------------------------------------------------

enum class RlOptimizer { Sgd, Adadelta };

// Gradient of -G * ln p(action) with respect to the logits: G * (p - onehot).
template <typename Scalar>
void reinforce_logit_gradient(std::span<const Scalar> probs, int action, double ret, std::span<Scalar> out) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double onehot = static_cast<int>(i) == action ? 1.0 : 0.0;
    out[i] = static_cast<Scalar>(ret * (static_cast<double>(probs[i]) - onehot));
  }
}

// Steps are visited in buffer order in mini-batches of batch_size; each batch
// takes one descent step on sum_t -G_t ln p(A_t | S_t). In Sgd mode that step
// is exactly alpha * sum_t G_t grad ln p(A_t | S_t).
template <typename Scalar>
Parameters<Scalar> reinforce_update(const Parameters<Scalar>& params, const ExperienceBuffer& buffer, double alpha,
                                    RlOptimizer mode = RlOptimizer::Sgd, AdadeltaState<Scalar>* adadelta = nullptr,
                                    int batch_size = kBatchSize) {
  if (buffer.total_steps == 0) throw ConfigError("reinforce_update needs a non-empty buffer");
  if (!(alpha > 0.0) && mode == RlOptimizer::Sgd) throw ConfigError("reinforce_update needs alpha > 0");
  AdadeltaState<Scalar> local_state;
  if (mode == RlOptimizer::Adadelta && adadelta == nullptr) adadelta = &local_state;

  std::vector<const ExperienceStep*> steps;
  steps.reserve(buffer.total_steps);
  for (const auto& g : buffer.games) {
    for (const auto& s : g.steps) steps.push_back(&s);
  }
  Parameters<Scalar> out = params;
  const int n = params.config.board_size;
  const int classes = params.config.n_classes();
  const std::size_t plane_bytes = static_cast<std::size_t>(params.config.n_planes) * n * n;
  std::vector<std::uint8_t> features;
  for (std::size_t start = 0; start < steps.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(steps.size(), start + static_cast<std::size_t>(batch_size));
    const int b = static_cast<int>(end - start);
    features.clear();
    for (std::size_t i = start; i < end; ++i) {
      const auto& planes = steps[i]->features.planes;
      if (planes.size() != plane_bytes) throw ConfigError("experience board size does not match the network");
      features.insert(features.end(), planes.begin(), planes.end());
    }
    const TrainingPass<Scalar> pass(out, features, b);
    RowMatrix<Scalar> dlogits(b, classes);
    for (int r = 0; r < b; ++r) {
      const auto* s = steps[start + static_cast<std::size_t>(r)];
      reinforce_logit_gradient<Scalar>(std::span<const Scalar>(pass.probabilities().row(r).data(), classes),
                                       s->action.index, s->ret,
                                       std::span<Scalar>(dlogits.row(r).data(), static_cast<std::size_t>(classes)));
    }
    const auto grads = pass.backward(dlogits);
    if (mode == RlOptimizer::Adadelta) {
      adadelta_step(out, std::span<const Scalar>(grads), *adadelta);
      continue;
    }
    for (auto g : grads) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite policy gradient; iteration aborted");
    }
    const auto a = static_cast<Scalar>(alpha);
    for (std::size_t i = 0; i < grads.size(); ++i) out.values[i] -= a * grads[i];
  }
  return out;
}

// ---- evaluation -----------------------------------------------------------------

struct EvalReport {
  int wins = 0;
  int games = 0;
  double p_value = 1.0;
  double win_rate() const { return games == 0 ? 0.0 : static_cast<double>(wins) / games; }
  bool operator==(const EvalReport&) const = default;
};

// Wins of a against b. a takes Black in even-numbered games and White in odd
// ones; game i uses the stream derived from (seed, i).
inline EvalReport play_match(const Agent& a, const Agent& b, int games, std::uint64_t seed, int workers = 1) {
  if (games < 1) throw ConfigError("play_match needs at least one game");
  if (a.board_size() != b.board_size()) throw ConfigError("agents play on different board sizes");
  std::vector<char> won(static_cast<std::size_t>(games), 0);
  const auto pa = agent_policy(a);
  const auto pb = agent_policy(b);
  detail::parallel_for(games, workers, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const bool a_black = i % 2 == 0;
    const auto g = play_game(a_black ? pa : pb, a_black ? pb : pa, a.board_size(), rng);
    won[static_cast<std::size_t>(i)] = (g.result.winner == Player::Black) == a_black;
  });
  EvalReport r;
  r.games = games;
  for (char w : won) r.wins += w;
  r.p_value = binomial_test(r.wins, r.games, 0.5);
  return r;
}

struct RlOptions {
  int iterations = 20;
  int games_per_iteration = 128;
  double alpha = 1e-5;
  std::uint64_t seed = 0;
  int screen_games = 100;
  int confirm_games = 1000;
  double screen_threshold = 0.5;
  int final_games = 1000;  // final match against the starting agent; 0 skips it
  RlOptimizer optimizer = RlOptimizer::Sgd;
  int workers = 1;
};

struct RlIterationReport {
  int version = 0;
  std::size_t steps = 0;
  EvalReport screen;                  // against the previous version
  std::optional<EvalReport> confirm;  // only when the screen passes
  bool operator==(const RlIterationReport&) const = default;
};

struct RlOutcome {
  Agent agent;
  std::vector<RlIterationReport> trail;
  std::optional<EvalReport> versus_initial;
};

inline RlOutcome run_rl(const Agent& initial, const RlOptions& opts,
                        const std::function<void(const RlIterationReport&)>& progress = {}) {
  RlOutcome out{initial, {}, std::nullopt};
  AdadeltaState<float> adadelta;
  for (int it = 0; it < opts.iterations; ++it) {
    const auto base = static_cast<std::uint64_t>(it) * 4;
    const Agent previous = out.agent;
    const auto buffer =
        collect_experience(previous, opts.games_per_iteration, derive_seed(opts.seed, base), opts.workers);
    auto params = reinforce_update(*previous.params, buffer, opts.alpha, opts.optimizer, &adadelta);
    Agent next = previous;
    next.params = std::make_shared<const Parameters<float>>(std::move(params));
    next.version = previous.version + 1;

    RlIterationReport report;
    report.version = next.version;
    report.steps = buffer.total_steps;
    report.screen = play_match(next, previous, opts.screen_games, derive_seed(opts.seed, base + 1), opts.workers);
    if (report.screen.win_rate() >= opts.screen_threshold && opts.confirm_games > 0) {
      report.confirm = play_match(next, previous, opts.confirm_games, derive_seed(opts.seed, base + 2), opts.workers);
    }
    out.agent = std::move(next);
    out.trail.push_back(report);
    if (progress) progress(report);
  }
  if (opts.iterations > 0 && opts.final_games > 0) {
    out.versus_initial = play_match(out.agent, initial, opts.final_games, derive_seed(opts.seed, ~0ULL), opts.workers);
  }
  return out;
}

}  // namespace chgo
