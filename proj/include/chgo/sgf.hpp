#pragma once

// SGF reading for KGS-style records: GM, SZ, RE, HA, KM, B and W on the main
// line. Other properties are skipped, variations are ignored.

#include <cctype>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chgo/errors.hpp"
#include "chgo/goboard.hpp"
#include "chgo/types.hpp"

namespace chgo {

class SgfParseError : public FormatError {
 public:
  SgfParseError(std::size_t offset, const std::string& what)
      : FormatError("sgf parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct RecordedMove {
  Player player = Player::Black;
  Move move = Move::pass();
  bool operator==(const RecordedMove&) const = default;
};

struct GameRecord {
  int board_size = 19;
  std::vector<RecordedMove> moves;
  std::optional<std::string> result;
  int handicap = 0;
  std::optional<double> komi;
  std::string source_id;

  bool operator==(const GameRecord&) const = default;
};

namespace detail {

class SgfReader {
 public:
  explicit SgfReader(std::string_view text) : text_(text) {}

  GameRecord read(std::string source_id) {
    skip_space();
    if (at_end() || peek() != '(') fail("expected '('");
    parse_tree(true);
    GameRecord rec;
    rec.source_id = std::move(source_id);
    finish(rec);
    return rec;
  }

 private:
  struct RawMove {
    Player player;
    std::string value;
    std::size_t offset;
  };

  [[noreturn]] void fail(const std::string& what) const { throw SgfParseError(pos_, what); }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void parse_tree(bool main_line) {
    ++pos_;  // '('
    skip_space();
    if (at_end() || peek() != ';') fail("expected ';' to start a node");
    while (true) {
      skip_space();
      if (at_end()) fail("unterminated game tree");
      if (peek() != ';') break;
      ++pos_;
      parse_node(main_line);
    }
    bool first_child = true;
    while (true) {
      skip_space();
      if (at_end()) fail("unterminated game tree");
      if (peek() == ')') {
        ++pos_;
        return;
      }
      if (peek() != '(') fail(std::string("unexpected character '") + peek() + "'");
      parse_tree(main_line && first_child);
      first_child = false;
    }
  }

  void parse_node(bool main_line) {
    while (true) {
      skip_space();
      if (at_end()) fail("unterminated node");
      const char c = peek();
      if (!std::isalpha(static_cast<unsigned char>(c))) return;
      std::string ident;
      while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) {
        if (std::isupper(static_cast<unsigned char>(peek()))) ident.push_back(peek());
        ++pos_;
      }
      skip_space();
      if (at_end() || peek() != '[') fail("property " + ident + " has no value");
      std::vector<std::pair<std::string, std::size_t>> values;
      while (!at_end() && peek() == '[') {
        const std::size_t start = pos_;
        values.emplace_back(parse_value(), start);
        skip_space();
      }
      if (main_line) handle_property(ident, values);
    }
  }

  std::string parse_value() {
    ++pos_;  // '['
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated property value");
      char c = peek();
      ++pos_;
      if (c == ']') return out;
      if (c == '\\') {
        if (at_end()) fail("dangling escape");
        c = peek();
        ++pos_;
        if (c == '\n' || c == '\r') continue;  // soft line break
      }
      out.push_back(c);
    }
  }

  void handle_property(const std::string& ident, const std::vector<std::pair<std::string, std::size_t>>& values) {
    const auto& [value, offset] = values.front();
    if (ident == "B" || ident == "W") {
      moves_.push_back(RawMove{ident == "B" ? Player::Black : Player::White, value, offset});
    } else if (ident == "SZ") {
      size_ = parse_int(value.substr(0, value.find(':')), offset);
      size_offset_ = offset;
    } else if (ident == "HA") {
      handicap_ = parse_int(value, offset);
    } else if (ident == "KM") {
      try {
        komi_ = std::stod(value);
      } catch (const std::exception&) {
        throw SgfParseError(offset, "bad KM value '" + value + "'");
      }
    } else if (ident == "RE") {
      result_ = value;
    } else if (ident == "GM") {
      if (parse_int(value, offset) != 1) throw SgfParseError(offset, "not a Go record (GM != 1)");
    }
  }

  static int parse_int(const std::string& s, std::size_t offset) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SgfParseError(offset, "bad integer '" + s + "'");
    }
  }

  void finish(GameRecord& rec) const {
    if (size_ < 1 || size_ > kMaxBoardSize) {
      throw SgfParseError(size_offset_, "unsupported board size " + std::to_string(size_));
    }
    rec.board_size = size_;
    rec.handicap = handicap_;
    rec.komi = komi_;
    rec.result = result_;
    for (const auto& raw : moves_) {
      RecordedMove m{raw.player, Move::pass()};
      const auto& v = raw.value;
      if (!v.empty() && !(v == "tt" && size_ <= 19)) {
        if (v.size() != 2) throw SgfParseError(raw.offset, "bad move value '" + v + "'");
        const int col = v[0] - 'a';
        const int sgf_row = v[1] - 'a';
        if (col < 0 || col >= size_ || sgf_row < 0 || sgf_row >= size_) {
          throw SgfParseError(raw.offset, "move '" + v + "' is off the board");
        }
        m.move = Move::play(Point{size_ - 1 - sgf_row, col});
      }
      rec.moves.push_back(m);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int size_ = 19;
  std::size_t size_offset_ = 0;
  int handicap_ = 0;
  std::optional<double> komi_;
  std::optional<std::string> result_;
  std::vector<RawMove> moves_;
};

inline std::string sgf_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ']' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline GameRecord parse_sgf(std::string_view text, std::string source_id = {}) {
  return detail::SgfReader(text).read(std::move(source_id));
}

inline std::string to_sgf_point(Point p, int board_size) {
  return {static_cast<char>('a' + p.col), static_cast<char>('a' + (board_size - 1 - p.row))};
}

inline std::string to_sgf(const GameRecord& rec) {
  std::ostringstream os;
  os << "(;GM[1]FF[4]SZ[" << rec.board_size << "]";
  if (rec.komi) os << "KM[" << *rec.komi << "]";
  if (rec.handicap != 0) os << "HA[" << rec.handicap << "]";
  if (rec.result) os << "RE[" << detail::sgf_escape(*rec.result) << "]";
  for (const auto& m : rec.moves) {
    os << ';' << (m.player == Player::Black ? 'B' : 'W') << '[';
    if (m.move.is_play()) os << to_sgf_point(m.move.point(), rec.board_size);
    os << ']';
  }
  os << ")\n";
  return os.str();
}

struct ReplayWarning {
  std::size_t move_index = 0;
  std::string reason;
};

struct Replay {
  // Element k is (position before move k, move k).
  std::vector<std::pair<GameState, Move>> steps;
  std::optional<GameState> final_state;
  std::optional<ReplayWarning> warning;
};

// Replays the main line, stopping at the first move that is out of turn or
// illegal. Everything before it stays usable.
inline Replay replay(const GameRecord& record) {
  Replay out;
  GameState state = new_game(record.board_size);
  for (std::size_t k = 0; k < record.moves.size(); ++k) {
    const auto& rm = record.moves[k];
    std::string problem;
    if (rm.player != state.next_player()) {
      problem = "out of turn";
    } else if (const auto legality = state.classify(rm.move); legality != MoveLegality::Legal) {
      problem = to_string(legality);
    }
    if (!problem.empty()) {
      out.warning = ReplayWarning{k, problem + " (" + to_coordinate(rm.move) + ")"};
      break;
    }
    GameState next = state.apply(rm.move);
    out.steps.emplace_back(std::move(state), rm.move);
    state = std::move(next);
  }
  out.final_state = std::move(state);
  return out;
}

}  // namespace chgo
