#pragma once

// Zobrist position hashing. Every (point, state) pair owns a 64-bit code,
// Empty included, so a board of size n uses 3*n*n codes and the empty board
// hashes to the XOR of all Empty codes rather than zero.

#include <algorithm>
#include <array>
#include <cassert>
#include <cstdint>
#include <iostream>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_set>
#include <vector>

#include "chgo/errors.hpp"
#include "chgo/rng.hpp"
#include "chgo/types.hpp"

namespace chgo {

inline constexpr std::uint64_t kZobristProductionSeed = 0x43482D476F5A6F62ULL;  // "CH-GoZob"
inline constexpr const char* kZobristGenerator = "splitmix64";

struct ZobristTable {
  int board_size = 0;
  std::uint64_t seed = 0;            // requested seed
  std::uint64_t effective_seed = 0;  // seed actually used after collision retries
  std::vector<std::uint64_t> codes;  // index = point_index * 3 + state
  std::uint64_t empty_board_hash = 0;

  std::uint64_t code(int point_index, PointState state) const {
    return codes[static_cast<std::size_t>(point_index) * 3 + static_cast<std::size_t>(state)];
  }
  std::uint64_t code(Point p, PointState state) const { return code(p.index(board_size), state); }
};

inline ZobristTable build_table(std::uint64_t seed, int board_size) {
  if (board_size < 1 || board_size > kMaxBoardSize) {
    throw ConfigError("zobrist: unsupported board size " + std::to_string(board_size));
  }
  const std::size_t n = 3 * static_cast<std::size_t>(board_size) * board_size;
  ZobristTable table;
  table.board_size = board_size;
  table.seed = seed;
  for (std::uint64_t attempt = seed;; ++attempt) {
    SplitMix64 gen(attempt);
    table.codes.resize(n);
    std::unordered_set<std::uint64_t> seen;
    bool distinct = true;
    for (auto& c : table.codes) {
      c = gen.next();
      distinct = distinct && seen.insert(c).second;
    }
    if (distinct) {
      table.effective_seed = attempt;
      break;
    }
    std::clog << "zobrist: code collision with seed " << attempt << ", retrying with seed+1\n";
  }
  table.empty_board_hash = 0;
  for (int i = 0; i < board_size * board_size; ++i) table.empty_board_hash ^= table.code(i, PointState::Empty);
  return table;
}

// Shared production table for a board size; built once, immutable afterwards.
inline std::shared_ptr<const ZobristTable> production_table(int board_size) {
  static std::mutex mu;
  static std::array<std::shared_ptr<const ZobristTable>, kMaxBoardSize + 1> cache;
  if (board_size < 1 || board_size > kMaxBoardSize) {
    throw ConfigError("zobrist: unsupported board size " + std::to_string(board_size));
  }
  std::lock_guard lock(mu);
  auto& slot = cache[static_cast<std::size_t>(board_size)];
  if (!slot) slot = std::make_shared<const ZobristTable>(build_table(kZobristProductionSeed, board_size));
  return slot;
}

inline std::uint64_t hash_apply(std::uint64_t h, int point_index, PointState from, PointState to,
                                const ZobristTable& table) {
  if (from == to) {
#ifndef NDEBUG
    std::clog << "zobrist: degenerate hash_apply at point " << point_index << "\n";
#endif
    return h;
  }
  return h ^ table.code(point_index, from) ^ table.code(point_index, to);
}

inline std::uint64_t hash_apply(std::uint64_t h, Point p, PointState from, PointState to,
                                const ZobristTable& table) {
  return hash_apply(h, p.index(table.board_size), from, to, table);
}

// grid is row-major, one entry per board point.
inline std::uint64_t full_hash(std::span<const PointState> grid, const ZobristTable& table) {
  assert(grid.size() == static_cast<std::size_t>(table.board_size * table.board_size));
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) h ^= table.code(static_cast<int>(i), grid[i]);
  return h;
}

// Persistent set of position hashes. Values are cheap to copy: frozen levels
// are shared between copies and only a short tail is duplicated. Levels are
// merged like a binary counter, so a game of n moves keeps O(log n) levels.
class HashHistory {
 public:
  using Level = std::unordered_set<std::uint64_t>;

  bool contains(std::uint64_t h) const {
    if (std::find(tail_.begin(), tail_.end(), h) != tail_.end()) return true;
    for (const auto& level : levels_) {
      if (level->count(h) != 0) return true;
    }
    return false;
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  [[nodiscard]] HashHistory with(std::uint64_t h) const {
    HashHistory out = *this;
    out.insert(h);
    return out;
  }

  void insert(std::uint64_t h) {
    ++size_;
    tail_.push_back(h);
    if (tail_.size() < kTailCapacity) return;
    auto merged = std::make_shared<Level>(tail_.begin(), tail_.end());
    tail_.clear();
    while (!levels_.empty() && levels_.back()->size() <= merged->size()) {
      merged->insert(levels_.back()->begin(), levels_.back()->end());
      levels_.pop_back();
    }
    levels_.push_back(std::move(merged));
  }

  std::size_t level_count() const { return levels_.size(); }

 private:
  static constexpr std::size_t kTailCapacity = 32;
  std::vector<std::shared_ptr<const Level>> levels_;
  std::vector<std::uint64_t> tail_;
  std::size_t size_ = 0;
};

}  // namespace chgo
