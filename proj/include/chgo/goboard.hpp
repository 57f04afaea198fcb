#pragma once

// Go rules engine: immutable positions, strings and liberties, captures,
// suicide and positional superko, ladder reading, eyes and area scoring.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chgo/errors.hpp"
#include "chgo/types.hpp"
#include "chgo/zobrist.hpp"

namespace chgo {

inline constexpr double kDefaultKomi = 7.5;

inline bool is_supported_board_size(int n) { return n == 5 || n == 9 || n == 13 || n == 19; }

enum class MoveLegality : std::uint8_t { Legal, Occupied, Suicide, Ko, OffBoard };

inline const char* to_string(MoveLegality l) {
  switch (l) {
    case MoveLegality::Legal: return "legal";
    case MoveLegality::Occupied: return "occupied";
    case MoveLegality::Suicide: return "suicide";
    case MoveLegality::Ko: return "ko";
    case MoveLegality::OffBoard: return "off-board";
  }
  return "?";
}

class IllegalMoveError : public std::runtime_error {
 public:
  IllegalMoveError(MoveLegality reason, const std::string& where)
      : std::runtime_error("illegal move at " + where + ": " + to_string(reason)), reason_(reason) {}
  MoveLegality reason() const { return reason_; }

 private:
  MoveLegality reason_;
};

// Stones and liberties are sorted point indices.
struct GoString {
  Player owner = Player::Black;
  std::vector<int> stones;
  std::vector<int> liberties;

  bool operator==(const GoString&) const = default;
};

namespace detail {

struct Neighbors {
  std::array<int, 4> points{};
  int count = 0;
  const int* begin() const { return points.data(); }
  const int* end() const { return points.data() + count; }
};

inline const std::vector<Neighbors>& neighbor_table(int n) {
  static std::mutex mu;
  static std::array<std::vector<Neighbors>, kMaxBoardSize + 1> cache;
  std::lock_guard lock(mu);
  auto& t = cache[static_cast<std::size_t>(n)];
  if (t.empty()) {
    t.resize(static_cast<std::size_t>(n * n));
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        auto& nb = t[static_cast<std::size_t>(r * n + c)];
        if (r > 0) nb.points[nb.count++] = (r - 1) * n + c;
        if (r < n - 1) nb.points[nb.count++] = (r + 1) * n + c;
        if (c > 0) nb.points[nb.count++] = r * n + c - 1;
        if (c < n - 1) nb.points[nb.count++] = r * n + c + 1;
      }
    }
  }
  return t;
}

inline void sorted_insert(std::vector<int>& v, int x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

inline void sorted_erase(std::vector<int>& v, int x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it != v.end() && *it == x) v.erase(it);
}

inline std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace detail

class GameState {
 public:
  using StringPtr = std::shared_ptr<const GoString>;

  static GameState new_game(int board_size) {
    if (!is_supported_board_size(board_size)) {
      throw ConfigError("unsupported board size " + std::to_string(board_size) + " (allowed: 5, 9, 13, 19)");
    }
    GameState s;
    s.size_ = board_size;
    s.table_ = production_table(board_size);
    s.neighbors_ = &detail::neighbor_table(board_size);
    s.grid_.assign(static_cast<std::size_t>(board_size * board_size), nullptr);
    s.hash_ = s.table_->empty_board_hash;
    return s;
  }

  // Position set up directly from stone lists, with an empty history. Every
  // resulting string must have a liberty.
  static GameState from_stones(int board_size, std::span<const Point> black, std::span<const Point> white,
                               Player to_move = Player::Black) {
    GameState s = new_game(board_size);
    std::vector<PointState> cells(static_cast<std::size_t>(board_size * board_size), PointState::Empty);
    auto put = [&](Point p, PointState st) {
      if (!p.on_board(board_size)) throw ConfigError("setup stone off the board");
      auto& cell = cells[static_cast<std::size_t>(p.index(board_size))];
      if (cell != PointState::Empty) throw ConfigError("setup stone placed twice at " + to_coordinate(p));
      cell = st;
    };
    for (auto p : black) put(p, PointState::Black);
    for (auto p : white) put(p, PointState::White);
    s.rebuild_strings(cells);
    for (const auto& str : s.grid_) {
      if (str && str->liberties.empty()) throw ConfigError("setup position has a string without liberties");
    }
    s.hash_ = full_hash(cells, *s.table_);
    s.next_ = to_move;
    return s;
  }

  int board_size() const { return size_; }
  int point_count() const { return size_ * size_; }
  Player next_player() const { return next_; }
  std::uint64_t hash() const { return hash_; }
  const HashHistory& previous_hashes() const { return history_; }
  const std::optional<Move>& last_move() const { return last_move_; }
  int consecutive_passes() const { return passes_; }
  int move_number() const { return move_number_; }
  std::optional<Player> resigned() const { return resigned_; }
  const ZobristTable& zobrist() const { return *table_; }
  int move_cap() const { return 2 * size_ * size_; }

  bool is_over() const { return passes_ >= 2 || resigned_.has_value() || move_number_ >= move_cap(); }

  PointState at(int index) const {
    const auto& s = grid_[static_cast<std::size_t>(index)];
    return s ? stone_of(s->owner) : PointState::Empty;
  }
  PointState at(Point p) const { return at(p.index(size_)); }

  std::vector<PointState> grid() const {
    std::vector<PointState> out(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) out[i] = at(static_cast<int>(i));
    return out;
  }

  // nullptr for an empty point.
  const GoString* string_at(int index) const { return grid_[static_cast<std::size_t>(index)].get(); }
  const GoString* string_at(Point p) const { return string_at(p.index(size_)); }

  const detail::Neighbors& neighbors(int index) const { return (*neighbors_)[static_cast<std::size_t>(index)]; }

  MoveLegality classify(const Move& move) const { return classify_for(next_, move); }
  bool is_legal(const Move& move) const { return classify(move) == MoveLegality::Legal; }

  // Legality for an arbitrary player, ignoring turn order (reading, setup).
  MoveLegality classify_for(Player player, const Move& move) const {
    if (!move.is_play()) return MoveLegality::Legal;
    const Point p = move.point();
    if (!p.on_board(size_)) return MoveLegality::OffBoard;
    const int idx = p.index(size_);
    if (grid_[static_cast<std::size_t>(idx)]) return MoveLegality::Occupied;

    bool has_liberty = false;
    std::array<const GoString*, 4> captured{};
    int n_captured = 0;
    for (int nb : neighbors(idx)) {
      const GoString* s = grid_[static_cast<std::size_t>(nb)].get();
      if (s == nullptr) {
        has_liberty = true;
      } else if (s->owner == player) {
        if (s->liberties.size() > 1) has_liberty = true;
      } else if (s->liberties.size() == 1) {
        if (std::find(captured.begin(), captured.begin() + n_captured, s) == captured.begin() + n_captured) {
          captured[static_cast<std::size_t>(n_captured++)] = s;
        }
      }
    }
    if (!has_liberty && n_captured == 0) return MoveLegality::Suicide;

    std::uint64_t h = hash_apply(hash_, idx, PointState::Empty, stone_of(player), *table_);
    const PointState victim = stone_of(other(player));
    for (int i = 0; i < n_captured; ++i) {
      for (int q : captured[static_cast<std::size_t>(i)]->stones) {
        h = hash_apply(h, q, victim, PointState::Empty, *table_);
      }
    }
    if (h == hash_ || history_.contains(h)) return MoveLegality::Ko;
    return MoveLegality::Legal;
  }

  // Returns the successor position; this position is unchanged.
  GameState apply(const Move& move) const { return apply_for(next_, move); }

  // Plays for an arbitrary player; the successor has other(player) to move.
  GameState apply_for(Player player, const Move& move) const {
    const auto legality = classify_for(player, move);
    if (legality != MoveLegality::Legal) throw IllegalMoveError(legality, to_coordinate(move));
    GameState s = *this;
    s.history_.insert(hash_);
    s.last_move_ = move;
    s.next_ = other(player);
    ++s.move_number_;
    if (move.is_pass()) {
      ++s.passes_;
    } else {
      s.passes_ = 0;
      if (move.is_resign()) {
        s.resigned_ = player;
      } else {
        s.place_stone(player, move.point().index(size_));
      }
    }
    return s;
  }

  // Structural equality of everything observable about the position.
  bool operator==(const GameState& o) const {
    if (size_ != o.size_ || next_ != o.next_ || hash_ != o.hash_ || passes_ != o.passes_ ||
        move_number_ != o.move_number_ || resigned_ != o.resigned_ || last_move_ != o.last_move_ ||
        history_.size() != o.history_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const auto& a = grid_[i];
      const auto& b = o.grid_[i];
      if (static_cast<bool>(a) != static_cast<bool>(b)) return false;
      if (a && !(*a == *b)) return false;
    }
    return true;
  }

  // Top row first; X black, O white.
  std::string to_text() const {
    std::ostringstream os;
    for (int r = size_ - 1; r >= 0; --r) {
      for (int c = 0; c < size_; ++c) {
        const auto st = at(Point{r, c});
        os << (st == PointState::Black ? 'X' : st == PointState::White ? 'O' : '.');
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  GameState() = default;

  void place_stone(Player player, int idx) {
    const PointState mine = stone_of(player);
    const PointState theirs = stone_of(other(player));

    auto merged = std::make_shared<GoString>();
    merged->owner = player;
    merged->stones.push_back(idx);
    std::vector<StringPtr> opponents;
    for (int nb : neighbors(idx)) {
      const auto& s = grid_[static_cast<std::size_t>(nb)];
      if (!s) {
        detail::sorted_insert(merged->liberties, nb);
      } else if (s->owner == player) {
        if (std::find(merged->stones.begin(), merged->stones.end(), s->stones.front()) == merged->stones.end()) {
          merged->stones = detail::sorted_union(merged->stones, s->stones);
          merged->liberties = detail::sorted_union(merged->liberties, s->liberties);
        }
      } else if (std::find(opponents.begin(), opponents.end(), s) == opponents.end()) {
        opponents.push_back(s);
      }
    }
    std::sort(merged->stones.begin(), merged->stones.end());
    detail::sorted_erase(merged->liberties, idx);
    StringPtr placed = merged;
    for (int q : placed->stones) grid_[static_cast<std::size_t>(q)] = placed;
    hash_ = hash_apply(hash_, idx, PointState::Empty, mine, *table_);

    std::vector<int> freed;
    for (const auto& s : opponents) {
      if (s->liberties.size() == 1) {
        for (int q : s->stones) {
          grid_[static_cast<std::size_t>(q)] = nullptr;
          hash_ = hash_apply(hash_, q, theirs, PointState::Empty, *table_);
          freed.push_back(q);
        }
      } else {
        auto shrunk = std::make_shared<GoString>(*s);
        detail::sorted_erase(shrunk->liberties, idx);
        StringPtr ptr = shrunk;
        for (int q : ptr->stones) grid_[static_cast<std::size_t>(q)] = ptr;
      }
    }
    if (freed.empty()) return;

    // Captured points become liberties of the strings that border them.
    std::vector<std::pair<const GoString*, std::shared_ptr<GoString>>> updated;
    for (int q : freed) {
      for (int nb : neighbors(q)) {
        const GoString* s = grid_[static_cast<std::size_t>(nb)].get();
        if (s == nullptr) continue;
        auto it = std::find_if(updated.begin(), updated.end(), [&](const auto& e) { return e.first == s; });
        if (it == updated.end()) {
          updated.emplace_back(s, std::make_shared<GoString>(*s));
          it = std::prev(updated.end());
        }
        detail::sorted_insert(it->second->liberties, q);
      }
    }
    for (auto& [old, fresh] : updated) {
      StringPtr ptr = fresh;
      for (int q : ptr->stones) grid_[static_cast<std::size_t>(q)] = ptr;
    }
  }

  void rebuild_strings(const std::vector<PointState>& cells) {
    std::fill(grid_.begin(), grid_.end(), nullptr);
    for (int start = 0; start < point_count(); ++start) {
      const auto st = cells[static_cast<std::size_t>(start)];
      if (st == PointState::Empty || grid_[static_cast<std::size_t>(start)]) continue;
      auto str = std::make_shared<GoString>();
      str->owner = st == PointState::Black ? Player::Black : Player::White;
      std::vector<int> stack{start};
      std::vector<char> seen(cells.size(), 0);
      seen[static_cast<std::size_t>(start)] = 1;
      while (!stack.empty()) {
        const int q = stack.back();
        stack.pop_back();
        str->stones.push_back(q);
        for (int nb : neighbors(q)) {
          const auto ns = cells[static_cast<std::size_t>(nb)];
          if (ns == PointState::Empty) {
            detail::sorted_insert(str->liberties, nb);
          } else if (ns == st && !seen[static_cast<std::size_t>(nb)]) {
            seen[static_cast<std::size_t>(nb)] = 1;
            stack.push_back(nb);
          }
        }
      }
      std::sort(str->stones.begin(), str->stones.end());
      StringPtr ptr = str;
      for (int q : ptr->stones) grid_[static_cast<std::size_t>(q)] = ptr;
    }
  }

  int size_ = 0;
  std::shared_ptr<const ZobristTable> table_;
  const std::vector<detail::Neighbors>* neighbors_ = nullptr;
  std::vector<StringPtr> grid_;
  Player next_ = Player::Black;
  HashHistory history_;
  std::uint64_t hash_ = 0;
  std::optional<Move> last_move_;
  int passes_ = 0;
  int move_number_ = 0;
  std::optional<Player> resigned_;
};

struct GameResult {
  int black_area = 0;
  int white_area = 0;
  double komi = kDefaultKomi;
  Player winner = Player::White;
  bool by_resignation = false;

  // Black's area minus White's area and komi.
  double black_margin() const { return black_area - white_area - komi; }
};

// ---- free-function interface ----------------------------------------------

inline GameState new_game(int board_size) { return GameState::new_game(board_size); }

inline bool is_legal(const GameState& state, const Move& move) { return state.is_legal(move); }

inline GameState apply_move(const GameState& state, const Move& move) { return state.apply(move); }

inline int liberties_of(const GameState& state, Point point) {
  if (!point.on_board(state.board_size())) throw QueryError("liberties_of: point off the board");
  const GoString* s = state.string_at(point);
  if (s == nullptr) throw QueryError("liberties_of: " + to_coordinate(point) + " is empty");
  return static_cast<int>(s->liberties.size());
}

// Row-major plays, then Pass.
inline std::vector<Move> legal_moves(const GameState& state) {
  std::vector<Move> out;
  const int n = state.board_size();
  for (int i = 0; i < n * n; ++i) {
    const Move m = Move::play(Point::from_index(i, n));
    if (state.is_legal(m)) out.push_back(m);
  }
  out.push_back(Move::pass());
  return out;
}

// Empty point whose orthogonal neighbours are all owner's stones and whose
// diagonals are owner's stones: at least 3 of 4 in the interior, all of them
// on the edge or in the corner.
inline bool is_eye(const GameState& state, Point point, Player owner) {
  const int n = state.board_size();
  if (!point.on_board(n) || state.at(point) != PointState::Empty) return false;
  const PointState mine = stone_of(owner);
  for (int nb : state.neighbors(point.index(n))) {
    if (state.at(nb) != mine) return false;
  }
  int on_board = 0;
  int friendly = 0;
  for (int dr : {-1, 1}) {
    for (int dc : {-1, 1}) {
      const Point d{point.row + dr, point.col + dc};
      if (!d.on_board(n)) continue;
      ++on_board;
      if (state.at(d) == mine) ++friendly;
    }
  }
  if (on_board < 4) return friendly == on_board;
  return friendly >= 3;
}

// Area scoring: stones plus empty regions that border only one colour.
inline GameResult score(const GameState& state, double komi = kDefaultKomi) {
  GameResult result;
  result.komi = komi;
  const int n = state.board_size();
  std::vector<char> visited(static_cast<std::size_t>(n * n), 0);
  std::vector<int> stack;
  for (int i = 0; i < n * n; ++i) {
    const auto st = state.at(i);
    if (st == PointState::Black) {
      ++result.black_area;
      continue;
    }
    if (st == PointState::White) {
      ++result.white_area;
      continue;
    }
    if (visited[static_cast<std::size_t>(i)]) continue;
    int region = 0;
    bool touches_black = false;
    bool touches_white = false;
    stack.assign(1, i);
    visited[static_cast<std::size_t>(i)] = 1;
    while (!stack.empty()) {
      const int q = stack.back();
      stack.pop_back();
      ++region;
      for (int nb : state.neighbors(q)) {
        const auto ns = state.at(nb);
        if (ns == PointState::Black) {
          touches_black = true;
        } else if (ns == PointState::White) {
          touches_white = true;
        } else if (!visited[static_cast<std::size_t>(nb)]) {
          visited[static_cast<std::size_t>(nb)] = 1;
          stack.push_back(nb);
        }
      }
    }
    if (touches_black && !touches_white) result.black_area += region;
    if (touches_white && !touches_black) result.white_area += region;
  }
  if (const auto resigner = state.resigned()) {
    result.winner = other(*resigner);
    result.by_resignation = true;
  } else {
    result.winner = result.black_area > result.white_area + komi ? Player::Black : Player::White;
  }
  return result;
}

namespace detail {

inline int defender_liberties(const GameState& s, int anchor) {
  const GoString* str = s.string_at(anchor);
  return str == nullptr ? 0 : static_cast<int>(str->liberties.size());
}

// Defender to be chased at `anchor`, attacker to move. `budget` caps the
// number of positions read.
inline bool ladder_survives(const GameState& cur, int anchor, Player defender, int plies_left, int& budget) {
  const int libs = defender_liberties(cur, anchor);
  if (libs >= 3) return true;
  if (libs <= 1 || plies_left <= 0 || --budget < 0) return false;
  const int n = cur.board_size();
  const Player attacker = other(defender);
  std::vector<GameState> chases;
  for (int lib : cur.string_at(anchor)->liberties) {
    const Move m = Move::play(Point::from_index(lib, n));
    if (cur.classify_for(attacker, m) != MoveLegality::Legal) continue;
    GameState next = cur.apply_for(attacker, m);
    if (defender_liberties(next, anchor) == 1) chases.push_back(std::move(next));
  }
  for (const auto& chase : chases) {
    const Move ext = Move::play(Point::from_index(chase.string_at(anchor)->liberties.front(), n));
    if (chase.classify_for(defender, ext) != MoveLegality::Legal) return false;
    if (!ladder_survives(chase.apply_for(defender, ext), anchor, defender, plies_left - 2, budget)) return false;
  }
  return true;
}

}  // namespace detail

// Atari-chase reading. The defender plays candidate next to one of its
// strings in atari; the attacker then fills either remaining liberty to put
// the string back in atari and the defender extends. The escape succeeds if
// the string reaches 3 liberties, or the attacker has no atari, on every
// line. It fails once the string is captured, the extension is illegal, or the
// read exceeds board_size^2 plies or 4096 positions.
inline bool is_ladder_escape(const GameState& state, Point candidate, Player defender) {
  const int n = state.board_size();
  if (!candidate.on_board(n) || state.at(candidate) != PointState::Empty) return false;
  const int anchor = candidate.index(n);
  bool in_atari = false;
  for (int nb : state.neighbors(anchor)) {
    const GoString* s = state.string_at(nb);
    if (s != nullptr && s->owner == defender && s->liberties.size() == 1) in_atari = true;
  }
  if (!in_atari) return false;
  if (state.classify_for(defender, Move::play(candidate)) != MoveLegality::Legal) return false;
  int budget = 4096;
  return detail::ladder_survives(state.apply_for(defender, Move::play(candidate)), anchor, defender, n * n - 1,
                                 budget);
}

}  // namespace chgo
