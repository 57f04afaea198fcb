#pragma once

#include <cctype>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "chgo/errors.hpp"

namespace chgo {

inline constexpr int kMaxBoardSize = 19;

enum class Player : std::uint8_t { Black = 0, White = 1 };

constexpr Player other(Player p) { return p == Player::Black ? Player::White : Player::Black; }

inline const char* to_string(Player p) { return p == Player::Black ? "black" : "white"; }

enum class PointState : std::uint8_t { Empty = 0, Black = 1, White = 2 };

constexpr PointState stone_of(Player p) {
  return p == Player::Black ? PointState::Black : PointState::White;
}

// Row 0 is the bottom edge ("1" in human coordinates), col 0 is column "A".
struct Point {
  int row = 0;
  int col = 0;

  constexpr auto operator<=>(const Point&) const = default;

  constexpr int index(int board_size) const { return row * board_size + col; }
  static constexpr Point from_index(int index, int board_size) {
    return Point{index / board_size, index % board_size};
  }
  constexpr bool on_board(int board_size) const {
    return row >= 0 && row < board_size && col >= 0 && col < board_size;
  }
};

class Move {
 public:
  enum class Kind : std::uint8_t { Play, Pass, Resign };

  static constexpr Move play(Point p) { return Move(Kind::Play, p); }
  static constexpr Move play(int row, int col) { return Move(Kind::Play, Point{row, col}); }
  static constexpr Move pass() { return Move(Kind::Pass, {}); }
  static constexpr Move resign() { return Move(Kind::Resign, {}); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_play() const { return kind_ == Kind::Play; }
  constexpr bool is_pass() const { return kind_ == Kind::Pass; }
  constexpr bool is_resign() const { return kind_ == Kind::Resign; }
  // Only meaningful for plays.
  constexpr Point point() const { return point_; }

  constexpr bool operator==(const Move& o) const {
    return kind_ == o.kind_ && (kind_ != Kind::Play || point_ == o.point_);
  }

 private:
  constexpr Move(Kind kind, Point p) : kind_(kind), point_(p) {}
  Kind kind_;
  Point point_;
};

// Human coordinates: columns A-T without I, rows 1..board_size from the bottom.
inline constexpr std::string_view kColumnLetters = "ABCDEFGHJKLMNOPQRST";

inline std::string to_coordinate(Point p) {
  return std::string(1, kColumnLetters[static_cast<std::size_t>(p.col)]) + std::to_string(p.row + 1);
}

inline std::string to_coordinate(const Move& m) {
  if (m.is_pass()) return "pass";
  if (m.is_resign()) return "resign";
  return to_coordinate(m.point());
}

// Accepts "D16", "d16", "pass" and "resign". Throws FormatError otherwise or
// when the point lies outside board_size.
inline Move parse_coordinate(std::string_view text, int board_size) {
  std::string s(text);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "PASS") return Move::pass();
  if (s == "RESIGN") return Move::resign();
  if (s.size() < 2 || s.size() > 3) throw FormatError("bad coordinate '" + std::string(text) + "'");
  const auto col = kColumnLetters.find(s[0]);
  if (col == std::string_view::npos) throw FormatError("bad column in '" + std::string(text) + "'");
  int row = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') throw FormatError("bad row in '" + std::string(text) + "'");
    row = row * 10 + (s[i] - '0');
  }
  if (s[1] == '0') throw FormatError("bad row in '" + std::string(text) + "'");
  const Point p{row - 1, static_cast<int>(col)};
  if (!p.on_board(board_size)) throw FormatError("'" + std::string(text) + "' is off the board");
  return Move::play(p);
}

}  // namespace chgo
