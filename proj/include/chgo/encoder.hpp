#pragma once

// 11-plane binary input encoding and move labels.
//
// Plane layout (frozen; shared with chunk files and the network):
//   0-3   black stones whose string has 1, 2, 3, >=4 liberties
//   4-7   white stones whose string has 1, 2, 3, >=4 liberties
//   8     all ones when Black is to move
//   9     empty points where the player to move escapes a ladder
//   10    empty points that are illegal only because of superko

#include <cstdint>
#include <optional>
#include <vector>

#include "chgo/errors.hpp"
#include "chgo/goboard.hpp"

namespace chgo {

inline constexpr int kNumPlanes = 11;
inline constexpr int kPlayerPlane = 8;
inline constexpr int kLadderPlane = 9;
inline constexpr int kKoPlane = 10;

struct FeatureTensor {
  int board_size = 19;
  std::vector<std::uint8_t> planes;  // [plane][row][col]

  explicit FeatureTensor(int n = 19)
      : board_size(n), planes(static_cast<std::size_t>(kNumPlanes) * n * n, 0) {}

  std::uint8_t& at(int plane, int index) {
    return planes[static_cast<std::size_t>(plane) * board_size * board_size + static_cast<std::size_t>(index)];
  }
  std::uint8_t at(int plane, int index) const {
    return planes[static_cast<std::size_t>(plane) * board_size * board_size + static_cast<std::size_t>(index)];
  }
  std::uint8_t at(int plane, Point p) const { return at(plane, p.index(board_size)); }

  bool operator==(const FeatureTensor&) const = default;
};

inline FeatureTensor encode(const GameState& state) {
  const int n = state.board_size();
  FeatureTensor t(n);
  const Player mover = state.next_player();
  for (int i = 0; i < n * n; ++i) {
    if (mover == Player::Black) t.at(kPlayerPlane, i) = 1;
    if (const GoString* s = state.string_at(i)) {
      const int libs = std::min<int>(static_cast<int>(s->liberties.size()), 4);
      const int base = s->owner == Player::Black ? 0 : 4;
      t.at(base + libs - 1, i) = 1;
      continue;
    }
    const Point p = Point::from_index(i, n);
    if (is_ladder_escape(state, p, mover)) t.at(kLadderPlane, i) = 1;
    if (state.classify(Move::play(p)) == MoveLegality::Ko) t.at(kKoPlane, i) = 1;
  }
  return t;
}

struct MoveLabel {
  int index = 0;
  bool operator==(const MoveLabel&) const = default;
};

// Plays map to row * board_size + col; passes and resignations have no label.
inline std::optional<MoveLabel> encode_label(const Move& move, int board_size = 19) {
  if (!move.is_play()) return std::nullopt;
  return MoveLabel{move.point().index(board_size)};
}

inline Move decode_label(int index, int board_size = 19) {
  if (index < 0 || index >= board_size * board_size) {
    throw QueryError("label " + std::to_string(index) + " out of range for a " + std::to_string(board_size) +
                     "x" + std::to_string(board_size) + " board");
  }
  return Move::play(Point::from_index(index, board_size));
}

}  // namespace chgo
