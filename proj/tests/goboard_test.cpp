#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "chgo/goboard.hpp"
#include "test_util.hpp"

namespace chgo {
namespace {

using testing::flood_liberties;
using testing::pt;
using testing::pts;
using testing::random_game;

GameState ko_position() {
  // Black surrounds (3,3) on three sides, White surrounds (3,4) on three
  // sides and has a stone on (3,3).
  const std::vector<Point> black{{2, 3}, {4, 3}, {3, 2}};
  const std::vector<Point> white{{2, 4}, {4, 4}, {3, 5}, {3, 3}};
  return GameState::from_stones(9, black, white, Player::Black);
}

TEST(Player, OtherIsAnInvolution) {
  EXPECT_EQ(other(Player::Black), Player::White);
  EXPECT_EQ(other(Player::White), Player::Black);
  EXPECT_EQ(other(other(Player::Black)), Player::Black);
}

TEST(Coordinates, RoundTripEveryPoint) {
  for (int n : {5, 9, 13, 19}) {
    std::set<std::string> names;
    for (int i = 0; i < n * n; ++i) {
      const Point p = Point::from_index(i, n);
      const std::string c = to_coordinate(p);
      names.insert(c);
      EXPECT_EQ(parse_coordinate(c, n).point(), p) << c;
    }
    EXPECT_EQ(names.size(), static_cast<std::size_t>(n * n));
  }
}

TEST(Coordinates, KnownValues) {
  EXPECT_EQ(pt("D16"), (Point{15, 3}));
  EXPECT_EQ(pt("A1"), (Point{0, 0}));
  EXPECT_EQ(pt("T19"), (Point{18, 18}));
  EXPECT_EQ(pt("J10"), (Point{9, 8}));
  EXPECT_TRUE(parse_coordinate("pass", 19).is_pass());
  EXPECT_THROW(parse_coordinate("I5", 19), FormatError);
  EXPECT_THROW(parse_coordinate("D20", 19), FormatError);
  EXPECT_THROW(parse_coordinate("F1", 5), FormatError);
  EXPECT_THROW(parse_coordinate("D0", 19), FormatError);
}

TEST(NewGame, EmptyBoardBlackToMove) {
  const auto s = new_game(19);
  EXPECT_EQ(s.point_count(), 361);
  EXPECT_EQ(s.next_player(), Player::Black);
  EXPECT_EQ(s.move_number(), 0);
  EXPECT_TRUE(s.previous_hashes().empty());
  EXPECT_EQ(s.hash(), s.zobrist().empty_board_hash);
  for (int i = 0; i < 361; ++i) EXPECT_EQ(s.at(i), PointState::Empty);
  EXPECT_EQ(new_game(5).point_count(), 25);
}

TEST(NewGame, RejectsUnsupportedSizes) {
  EXPECT_THROW(new_game(8), ConfigError);
  EXPECT_THROW(new_game(0), ConfigError);
  EXPECT_THROW(new_game(21), ConfigError);
}

TEST(IsLegal, EmptyBoardAndOccupied) {
  const auto s = new_game(9);
  for (int i = 0; i < 81; ++i) EXPECT_TRUE(is_legal(s, Move::play(Point::from_index(i, 9))));
  EXPECT_TRUE(is_legal(s, Move::pass()));
  EXPECT_TRUE(is_legal(s, Move::resign()));
  const auto t = apply_move(s, Move::play(4, 4));
  EXPECT_FALSE(is_legal(t, Move::play(4, 4)));
  EXPECT_EQ(t.classify(Move::play(4, 4)), MoveLegality::Occupied);
}

TEST(IsLegal, SuicideIsIllegal) {
  const std::vector<Point> black{{0, 1}, {1, 0}};
  const auto s = GameState::from_stones(9, black, {}, Player::White);
  EXPECT_EQ(s.classify(Move::play(0, 0)), MoveLegality::Suicide);
  EXPECT_THROW(s.apply(Move::play(0, 0)), IllegalMoveError);
}

TEST(IsLegal, CaptureIsNotSuicide) {
  // White (0,0) in atari; Black filling (0,1) would have no liberty if it did
  // not capture.
  const std::vector<Point> black{{1, 0}, {1, 1}, {0, 2}};
  const std::vector<Point> white{{0, 0}};
  const auto s = GameState::from_stones(9, black, white, Player::Black);
  EXPECT_TRUE(s.is_legal(Move::play(0, 1)));
  const auto t = s.apply(Move::play(0, 1));
  EXPECT_EQ(t.at(Point{0, 0}), PointState::Empty);
}

TEST(Ko, ImmediateRecaptureIsBlocked) {
  const auto s = ko_position();
  const auto after_take = s.apply(Move::play(3, 4));
  EXPECT_EQ(after_take.at(Point{3, 3}), PointState::Empty);
  EXPECT_EQ(after_take.classify(Move::play(3, 3)), MoveLegality::Ko);
  // The recapture would reproduce the position before Black's capture.
  EXPECT_TRUE(after_take.previous_hashes().contains(s.hash()));
  // After an exchange elsewhere the recapture becomes legal.
  const auto later = after_take.apply(Move::play(7, 7)).apply(Move::play(7, 1));
  EXPECT_TRUE(later.is_legal(Move::play(3, 3)));
}

TEST(Ko, SuperkoRejectsAnyRepeatedPosition) {
  Rng rng(12);
  for (int game = 0; game < 100; ++game) {
    const auto states = random_game(5, 80, rng);
    for (std::size_t k = 0; k + 1 < states.size(); ++k) {
      const auto& s = states[k];
      for (const auto& m : legal_moves(s)) {
        if (!m.is_play()) continue;
        const auto next = s.apply(m);
        EXPECT_FALSE(s.previous_hashes().contains(next.hash()));
        EXPECT_NE(next.hash(), s.hash());
      }
    }
  }
}

TEST(ApplyMove, TwoPassesEndTheGame) {
  const auto s = new_game(9).apply(Move::pass());
  EXPECT_FALSE(s.is_over());
  EXPECT_EQ(s.consecutive_passes(), 1);
  const auto t = s.apply(Move::pass());
  EXPECT_TRUE(t.is_over());
  EXPECT_EQ(t.consecutive_passes(), 2);
  EXPECT_EQ(s.apply(Move::play(1, 1)).consecutive_passes(), 0);
}

TEST(ApplyMove, MoveCapEndsTheGame) {
  EXPECT_EQ(new_game(5).move_cap(), 50);
  Rng rng(4);
  for (int game = 0; game < 50; ++game) {
    const auto states = random_game(5, 1000, rng);
    EXPECT_TRUE(states.back().is_over());
    EXPECT_LE(states.back().move_number(), 50);
  }
}

TEST(ApplyMove, CapturesTheLastLibertyOfAThreeStoneString) {
  // White string (1,1),(1,2),(1,3) with Black around it except (1,4).
  const std::vector<Point> white{{1, 1}, {1, 2}, {1, 3}};
  const std::vector<Point> black{{0, 1}, {0, 2}, {0, 3}, {2, 1}, {2, 2}, {2, 3}, {1, 0}};
  const auto s = GameState::from_stones(9, black, white, Player::Black);
  EXPECT_EQ(liberties_of(s, Point{1, 2}), 1);
  EXPECT_EQ(flood_liberties(s, Point{1, 2}), 1);
  const auto t = s.apply(Move::play(1, 4));
  for (const auto& p : white) EXPECT_EQ(t.at(p), PointState::Empty);
  EXPECT_EQ(liberties_of(t, Point{1, 4}), 4);
  EXPECT_EQ(t.hash(), full_hash(t.grid(), t.zobrist()));
}

TEST(ApplyMove, DoesNotMutateItsInput) {
  Rng rng(3);
  const auto states = random_game(9, 60, rng);
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    const GameState copy = states[k];
    const auto grid = copy.grid();
    const auto hash = copy.hash();
    (void)states[k].apply(Move::pass());
    EXPECT_TRUE(copy == states[k]);
    EXPECT_EQ(states[k].grid(), grid);
    EXPECT_EQ(states[k].hash(), hash);
  }
}

TEST(ApplyMove, IllegalMoveNamesTheRule) {
  const auto s = new_game(9).apply(Move::play(2, 2));
  try {
    (void)s.apply(Move::play(2, 2));
    FAIL();
  } catch (const IllegalMoveError& e) {
    EXPECT_EQ(e.reason(), MoveLegality::Occupied);
    EXPECT_NE(std::string(e.what()).find("occupied"), std::string::npos);
  }
}

TEST(Property, NoStringWithoutLibertiesAndHistoryComplete) {
  Rng rng(99);
  for (int game = 0; game < 60; ++game) {
    const auto states = random_game(game % 3 == 0 ? 19 : 9, 200, rng);
    for (std::size_t k = 1; k < states.size(); ++k) {
      const auto& s = states[k];
      for (int i = 0; i < s.point_count(); ++i) {
        if (s.at(i) == PointState::Empty) continue;
        const Point p = Point::from_index(i, s.board_size());
        ASSERT_GT(liberties_of(s, p), 0);
        ASSERT_EQ(liberties_of(s, p), flood_liberties(s, p));
      }
      for (std::size_t j = 0; j < k; ++j) ASSERT_TRUE(s.previous_hashes().contains(states[j].hash()));
    }
  }
}

TEST(Liberties, KnownCounts) {
  const auto center = new_game(19).apply(Move::play(9, 9));
  EXPECT_EQ(liberties_of(center, Point{9, 9}), 4);
  const auto corner = new_game(19).apply(Move::play(0, 0));
  EXPECT_EQ(liberties_of(corner, Point{0, 0}), 2);
  const std::vector<Point> pair{{0, 5}, {0, 6}};
  const auto edge = GameState::from_stones(19, pair, {});
  EXPECT_EQ(liberties_of(edge, Point{0, 5}), 4);
  EXPECT_EQ(flood_liberties(edge, Point{0, 6}), 4);
  EXPECT_THROW(liberties_of(edge, Point{5, 5}), QueryError);
}

TEST(LegalMoves, CountsAndOrder) {
  const auto empty = legal_moves(new_game(19));
  EXPECT_EQ(empty.size(), 362u);
  EXPECT_TRUE(empty.back().is_pass());
  EXPECT_EQ(empty.front(), Move::play(0, 0));
  EXPECT_EQ(legal_moves(new_game(19).apply(Move::play(3, 3))).size(), 361u);
}

TEST(LegalMoves, SaturatedBoardLeavesOnlyPass) {
  // Black owns the 5x5 board except two single-point eyes; White to move has
  // only suicides.
  std::vector<Point> black;
  for (int i = 0; i < 25; ++i) {
    const Point p = Point::from_index(i, 5);
    if (p != Point{1, 1} && p != Point{3, 3}) black.push_back(p);
  }
  const auto s = GameState::from_stones(5, black, {}, Player::White);
  const auto moves = legal_moves(s);
  ASSERT_EQ(moves.size(), 1u);
  EXPECT_TRUE(moves[0].is_pass());
}

TEST(IsEye, Shapes) {
  EXPECT_FALSE(is_eye(new_game(9), Point{4, 4}, Player::Black));
  std::vector<Point> ring;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr != 0 || dc != 0) ring.push_back(Point{4 + dr, 4 + dc});
    }
  }
  const auto s = GameState::from_stones(9, ring, {});
  EXPECT_TRUE(is_eye(s, Point{4, 4}, Player::Black));
  EXPECT_FALSE(is_eye(s, Point{4, 4}, Player::White));
  // One missing diagonal is still an eye in the interior; two are not.
  std::vector<Point> three = ring;
  std::erase(three, Point{3, 3});
  EXPECT_TRUE(is_eye(GameState::from_stones(9, three, {}), Point{4, 4}, Player::Black));
  std::erase(three, Point{5, 5});
  EXPECT_FALSE(is_eye(GameState::from_stones(9, three, {}), Point{4, 4}, Player::Black));
  // Corner: both orthogonal neighbours and the single diagonal.
  const std::vector<Point> corner{{0, 1}, {1, 0}, {1, 1}};
  EXPECT_TRUE(is_eye(GameState::from_stones(9, corner, {}), Point{0, 0}, Player::Black));
  const std::vector<Point> loose{{0, 1}, {1, 0}};
  EXPECT_FALSE(is_eye(GameState::from_stones(9, loose, {}), Point{0, 0}, Player::Black));
}

TEST(Score, EmptyBoardGoesToWhiteOnKomi) {
  const auto r = score(new_game(19));
  EXPECT_EQ(r.black_area, 0);
  EXPECT_EQ(r.white_area, 0);
  EXPECT_EQ(r.winner, Player::White);
  EXPECT_DOUBLE_EQ(r.komi, 7.5);
}

TEST(Score, LoneBlackStoneOwnsTheBoard) {
  const auto s = new_game(5).apply(Move::play(2, 2));
  const auto r = score(s);
  EXPECT_EQ(r.black_area, 25);
  EXPECT_EQ(r.white_area, 0);
  EXPECT_EQ(r.winner, Player::Black);
}

TEST(Score, ResignationDecidesRegardlessOfArea) {
  const auto s = new_game(5).apply(Move::play(2, 2)).apply(Move::pass()).apply(Move::resign());
  const auto r = score(s);
  EXPECT_EQ(r.winner, Player::White);
  EXPECT_TRUE(r.by_resignation);
  EXPECT_TRUE(s.is_over());
}

// Flood-fill oracle with an independent traversal order (breadth first from
// the highest index).
GameResult score_oracle(const GameState& s, double komi) {
  const int n = s.board_size();
  GameResult r;
  r.komi = komi;
  std::vector<int> region(static_cast<std::size_t>(n * n), -1);
  for (int start = n * n - 1; start >= 0; --start) {
    const auto st = s.at(start);
    if (st == PointState::Black) ++r.black_area;
    if (st == PointState::White) ++r.white_area;
    if (st != PointState::Empty || region[static_cast<std::size_t>(start)] >= 0) continue;
    std::vector<int> queue{start};
    region[static_cast<std::size_t>(start)] = start;
    bool b = false;
    bool w = false;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Point p = Point::from_index(queue[head], n);
      const Point around[4] = {{p.row, p.col + 1}, {p.row, p.col - 1}, {p.row + 1, p.col}, {p.row - 1, p.col}};
      for (const Point q : around) {
        if (!q.on_board(n)) continue;
        const auto qs = s.at(q);
        if (qs == PointState::Black) b = true;
        if (qs == PointState::White) w = true;
        if (qs == PointState::Empty && region[static_cast<std::size_t>(q.index(n))] < 0) {
          region[static_cast<std::size_t>(q.index(n))] = start;
          queue.push_back(q.index(n));
        }
      }
    }
    if (b && !w) r.black_area += static_cast<int>(queue.size());
    if (w && !b) r.white_area += static_cast<int>(queue.size());
  }
  r.winner = r.black_area > r.white_area + komi ? Player::Black : Player::White;
  return r;
}

TEST(Score, MatchesAnIndependentFloodFill) {
  Rng rng(8);
  for (int game = 0; game < 100; ++game) {
    const auto states = random_game(game % 2 == 0 ? 9 : 13, 300, rng);
    const auto& s = states.back();
    const auto r = score(s);
    const auto o = score_oracle(s, 7.5);
    EXPECT_EQ(r.black_area, o.black_area);
    EXPECT_EQ(r.white_area, o.white_area);
    EXPECT_EQ(r.winner, o.winner);
    EXPECT_LE(r.black_area + r.white_area, s.point_count());
  }
}

// ---- ladders ------------------------------------------------------------------

// Exhaustive version of the chase: the attacker may fill either remaining
// liberty; the defender extends. Escape means the defender survives every
// attacker line.
bool ladder_oracle(const GameState& s, int anchor, Player defender, int depth) {
  const int n = s.board_size();
  const GoString* str = s.string_at(anchor);
  if (str == nullptr) return false;
  if (str->liberties.size() >= 3) return true;
  if (str->liberties.size() <= 1) return false;
  if (depth <= 0) return false;
  const Player attacker = other(defender);
  bool any_chase = false;
  for (int lib : str->liberties) {
    const Move m = Move::play(Point::from_index(lib, n));
    if (s.classify_for(attacker, m) != MoveLegality::Legal) continue;
    const GameState a = s.apply_for(attacker, m);
    const GoString* left = a.string_at(anchor);
    if (left == nullptr) return false;
    if (left->liberties.size() >= 2) continue;
    any_chase = true;
    const Move ext = Move::play(Point::from_index(left->liberties.front(), n));
    if (a.classify_for(defender, ext) != MoveLegality::Legal) return false;
    if (!ladder_oracle(a.apply_for(defender, ext), anchor, defender, depth - 2)) return false;
  }
  (void)any_chase;
  return true;
}

bool ladder_oracle_root(const GameState& s, Point candidate, Player defender) {
  const int n = s.board_size();
  if (s.at(candidate) != PointState::Empty) return false;
  bool atari = false;
  for (int nb : s.neighbors(candidate.index(n))) {
    const GoString* g = s.string_at(nb);
    if (g != nullptr && g->owner == defender && g->liberties.size() == 1) atari = true;
  }
  if (!atari || s.classify_for(defender, Move::play(candidate)) != MoveLegality::Legal) return false;
  return ladder_oracle(s.apply_for(defender, Move::play(candidate)), candidate.index(n), defender, n * n - 1);
}

TEST(Ladder, AtariEscapeNextToTheStone) {
  // White D16 in atari after Black C16 (with D17 and E16 already placed).
  const auto s = GameState::from_stones(19, pts({"C16", "D17", "E16"}), pts({"D16"}), Player::White);
  EXPECT_EQ(liberties_of(s, pt("D16")), 1);
  EXPECT_TRUE(is_ladder_escape(s, pt("D15"), Player::White));
  EXPECT_EQ(ladder_oracle_root(s, pt("D15"), Player::White), true);
}

TEST(Ladder, StringWithTwoLibertiesIsNotInAtari) {
  const auto s = GameState::from_stones(19, pts({"C16", "D17"}), pts({"D16"}), Player::White);
  EXPECT_FALSE(is_ladder_escape(s, pt("D15"), Player::White));
  EXPECT_FALSE(is_ladder_escape(s, pt("E16"), Player::White));
}

TEST(Ladder, ClassicLadderFailsOnAnEmptyBoard) {
  // White stone at (2,2) in atari, the ladder runs toward the lower-left
  // corner along the diagonal.
  const std::vector<Point> black{{3, 2}, {2, 3}, {1, 3}};
  const std::vector<Point> white{{2, 2}};
  const auto s = GameState::from_stones(9, black, white, Player::White);
  ASSERT_EQ(liberties_of(s, Point{2, 2}), 2);
  // Put it in atari first: Black takes (2,1).
  const auto atari = s.apply_for(Player::Black, Move::play(2, 1));
  ASSERT_EQ(liberties_of(atari, Point{2, 2}), 1);
  EXPECT_FALSE(is_ladder_escape(atari, Point{1, 2}, Player::White));
  EXPECT_FALSE(ladder_oracle_root(atari, Point{1, 2}, Player::White));
}

TEST(Ladder, LadderBreakerOnTheDiagonal) {
  const std::vector<Point> black{{3, 2}, {2, 3}, {1, 3}, {2, 1}};
  const std::vector<Point> white{{2, 2}, {0, 0}};
  const auto s = GameState::from_stones(9, black, white, Player::White);
  ASSERT_EQ(liberties_of(s, Point{2, 2}), 1);
  const bool expected = ladder_oracle_root(s, Point{1, 2}, Player::White);
  EXPECT_EQ(is_ladder_escape(s, Point{1, 2}, Player::White), expected);
}

TEST(Ladder, AgreesWithExhaustiveSearchOnRandomPositions) {
  Rng rng(55);
  int checked = 0;
  int escapes = 0;
  for (int game = 0; game < 150; ++game) {
    const auto states = random_game(9, 60 + static_cast<int>(uniform_below(rng, 60)), rng);
    for (std::size_t k = 10; k < states.size(); k += 3) {
      const auto& s = states[k];
      const int n = s.board_size();
      for (int i = 0; i < n * n; ++i) {
        const GoString* g = s.string_at(i);
        if (g == nullptr || g->liberties.size() != 1 || g->stones.front() != i) continue;
        const Point cand = Point::from_index(g->liberties.front(), n);
        const bool got = is_ladder_escape(s, cand, g->owner);
        ASSERT_EQ(got, ladder_oracle_root(s, cand, g->owner)) << s.to_text() << "candidate " << to_coordinate(cand);
        ++checked;
        escapes += got ? 1 : 0;
      }
    }
  }
  EXPECT_GT(checked, 100);
  EXPECT_GT(escapes, 0);
  EXPECT_LT(escapes, checked);
}

TEST(Ladder, DefenderToMoveWithoutAtariIsNeverAnEscape) {
  EXPECT_FALSE(is_ladder_escape(new_game(9), Point{4, 4}, Player::Black));
}

// ---- capture scenario ------------------------------------------------------------

TEST(Capture, LastLibertyPlayRemovesTheString) {
  const auto s = GameState::from_stones(19, pts({"D17"}), pts({"D16", "D15", "C17", "E17"}), Player::White);
  EXPECT_EQ(liberties_of(s, pt("D17")), 1);
  const auto t = s.apply(Move::play(pt("D18")));
  EXPECT_EQ(t.at(pt("D17")), PointState::Empty);
  EXPECT_EQ(t.hash(), full_hash(t.grid(), t.zobrist()));
}

TEST(FromStones, RejectsStringsWithoutLiberties) {
  const std::vector<Point> black{{0, 1}, {1, 0}};
  const std::vector<Point> white{{0, 0}};
  EXPECT_THROW(GameState::from_stones(9, black, white), ConfigError);
}

}  // namespace
}  // namespace chgo
