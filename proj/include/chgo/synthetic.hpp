#pragma once

// Scripted "teacher" games for exercising the pipeline without a game server.
// The teacher captures when it can, rescues its own strings from atari, and
// otherwise mostly plays the best empty point of a fixed opening ranking, so
// its moves are partly predictable from the board alone.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chgo/archive.hpp"
#include "chgo/goboard.hpp"
#include "chgo/rng.hpp"
#include "chgo/sgf.hpp"

namespace chgo {

struct TeacherConfig {
  int board_size = 19;
  double ranked_probability = 0.7;  // otherwise a uniformly random sensible move
  int max_moves = 0;                // 0 means n*n*2/3
};

namespace detail {

// Third line first, then fourth, second, fifth, ... ; ties broken by the
// distance to the nearest corner, then by index.
inline std::vector<int> teacher_ranking(int n) {
  std::vector<std::pair<std::pair<int, int>, int>> keyed;
  for (int i = 0; i < n * n; ++i) {
    const Point p = Point::from_index(i, n);
    const int line = std::min({p.row, p.col, n - 1 - p.row, n - 1 - p.col});
    const int preference = line == 2 ? 0 : line == 3 ? 1 : line == 1 ? 2 : line == 0 ? 9 : line + 1;
    const int corner = std::min(p.row, n - 1 - p.row) + std::min(p.col, n - 1 - p.col);
    keyed.push_back({{preference, corner}, i});
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> order;
  for (const auto& k : keyed) order.push_back(k.second);
  return order;
}

inline bool sensible(const GameState& s, int index) {
  const Point p = Point::from_index(index, s.board_size());
  return s.is_legal(Move::play(p)) && !is_eye(s, p, s.next_player());
}

inline Move teacher_move(const GameState& s, const std::vector<int>& ranking, const TeacherConfig& cfg, Rng& rng) {
  const int n = s.board_size();
  const Player me = s.next_player();
  // Capture the largest opposing string in atari.
  int best = -1;
  std::size_t best_size = 0;
  for (int i = 0; i < n * n; ++i) {
    const GoString* g = s.string_at(i);
    if (g == nullptr || g->owner == me || g->liberties.size() != 1) continue;
    const int lib = g->liberties.front();
    if (g->stones.size() > best_size && s.is_legal(Move::play(Point::from_index(lib, n)))) {
      best = lib;
      best_size = g->stones.size();
    }
  }
  if (best >= 0) return Move::play(Point::from_index(best, n));
  // Extend an own string out of atari when that gains liberties.
  for (int i = 0; i < n * n; ++i) {
    const GoString* g = s.string_at(i);
    if (g == nullptr || g->owner != me || g->liberties.size() != 1) continue;
    const Point lib = Point::from_index(g->liberties.front(), n);
    if (!s.is_legal(Move::play(lib))) continue;
    const GameState next = s.apply(Move::play(lib));
    if (next.string_at(lib)->liberties.size() >= 2) return Move::play(lib);
  }
  if (uniform_unit(rng) < cfg.ranked_probability) {
    for (int i : ranking) {
      if (s.at(i) != PointState::Empty || !sensible(s, i)) continue;
      // Skip points that would leave the new stone in atari.
      const GameState next = s.apply(Move::play(Point::from_index(i, n)));
      if (next.string_at(i)->liberties.size() >= 2) return Move::play(Point::from_index(i, n));
    }
  }
  std::vector<int> options;
  for (int i = 0; i < n * n; ++i) {
    if (s.at(i) == PointState::Empty && sensible(s, i)) options.push_back(i);
  }
  if (options.empty()) return Move::pass();
  return Move::play(Point::from_index(options[uniform_below(rng, options.size())], n));
}

}  // namespace detail

inline GameRecord teacher_game(const TeacherConfig& cfg, std::uint64_t seed) {
  const int n = cfg.board_size;
  const int cap = cfg.max_moves > 0 ? cfg.max_moves : n * n * 2 / 3;
  const auto ranking = detail::teacher_ranking(n);
  Rng rng(seed);
  GameRecord rec;
  rec.board_size = n;
  rec.komi = kDefaultKomi;
  GameState s = new_game(n);
  while (!s.is_over()) {
    const Move m = rec.moves.size() >= static_cast<std::size_t>(cap) ? Move::pass()
                                                                     : detail::teacher_move(s, ranking, cfg, rng);
    rec.moves.push_back(RecordedMove{s.next_player(), m});
    s = s.apply(m);
  }
  const auto result = score(s);
  std::ostringstream re;
  re << (result.winner == Player::Black ? "B+" : "W+") << std::fixed << std::setprecision(1)
     << std::abs(result.black_margin());
  rec.result = re.str();
  return rec;
}

// Writes `archives` zip files of `games_per_archive` teacher games into
// cache_dir and registers them in its manifest.
inline std::vector<ArchiveEntry> write_teacher_cache(const fs::path& cache_dir, int archives, int games_per_archive,
                                                     std::uint64_t seed, const TeacherConfig& cfg = {}) {
  fs::create_directories(cache_dir);
  std::vector<ArchiveEntry> out;
  std::uint64_t game = 0;
  for (int a = 0; a < archives; ++a) {
    std::vector<std::pair<std::string, std::string>> files;
    for (int g = 0; g < games_per_archive; ++g, ++game) {
      std::ostringstream name;
      name << "teacher-" << std::setw(5) << std::setfill('0') << game << ".sgf";
      files.emplace_back(name.str(), to_sgf(teacher_game(cfg, derive_seed(seed, game))));
    }
    std::ostringstream file;
    file << "teacher-" << std::setw(3) << std::setfill('0') << a << ".zip";
    detail::write_file_atomic(cache_dir / file.str(), make_zip(files));
    out.push_back(register_archive(cache_dir, file.str()));
  }
  return out;
}

}  // namespace chgo
