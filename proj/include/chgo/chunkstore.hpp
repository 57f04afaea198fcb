#pragma once

// Chunked binary storage of (features, label) samples.
//
// Chunk file (.chg), all integers little-endian:
//   offset  size  field
//   0       4     magic "CHGO"
//   4       2     format version (1)
//   6       4     n_samples, 1..chunk_size
//   10      2     n_planes (11)
//   12      2     board_size
//   14      2     label width in bytes (2)
//   16      8     zobrist seed of the hash table used while encoding
//                 (version 1 implies the splitmix64 generator)
//   24      8     reserved, zero
//   32      ...   features: n_samples * n_planes * board_size^2 bytes, each 0 or 1,
//                 sample-major, then plane, then row, then column
//   ...     ...   labels: n_samples * u16, each < board_size^2
//
// Readers hold at most one chunk of samples in memory and cut it into
// fixed-size batches; the tail of a chunk shorter than a batch is dropped.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "chgo/archive.hpp"
#include "chgo/encoder.hpp"
#include "chgo/errors.hpp"
#include "chgo/log.hpp"
#include "chgo/rng.hpp"
#include "chgo/sgf.hpp"
#include "chgo/zobrist.hpp"

namespace chgo {

inline constexpr int kChunkSize = 1024;
inline constexpr int kBatchSize = 128;
inline constexpr std::uint16_t kChunkVersion = 1;
inline constexpr std::size_t kChunkHeaderSize = 32;
inline constexpr const char* kChunkExtension = ".chg";

struct ChunkHeader {
  std::uint16_t version = kChunkVersion;
  std::uint32_t n_samples = 0;
  std::uint16_t n_planes = kNumPlanes;
  std::uint16_t board_size = 19;
  std::uint16_t label_width = 2;
  std::uint64_t zobrist_seed = kZobristProductionSeed;

  std::size_t feature_bytes() const { return static_cast<std::size_t>(n_planes) * board_size * board_size; }
  std::size_t file_size() const { return kChunkHeaderSize + n_samples * (feature_bytes() + label_width); }
};

struct Sample {
  FeatureTensor features;
  MoveLabel label;
  bool operator==(const Sample&) const = default;
};

struct Batch {
  int board_size = 19;
  int n_planes = kNumPlanes;
  std::vector<std::uint8_t> features;  // [sample][plane][row][col]
  std::vector<std::uint16_t> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::size_t feature_bytes() const { return static_cast<std::size_t>(n_planes) * board_size * board_size; }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::string encode_header(const ChunkHeader& h) {
  std::string out = "CHGO";
  put_le(out, h.version);
  put_le(out, h.n_samples);
  put_le(out, h.n_planes);
  put_le(out, h.board_size);
  put_le(out, h.label_width);
  put_le(out, h.zobrist_seed);
  out.append(8, '\0');
  return out;
}

inline std::string chunk_name(const std::string& prefix, int seq) {
  std::ostringstream os;
  os << prefix << std::setw(5) << std::setfill('0') << seq << kChunkExtension;
  return os.str();
}

}  // namespace detail

// Serializes samples into the chunk layout above.
inline std::string encode_chunk(std::span<const Sample> samples, std::uint64_t zobrist_seed = kZobristProductionSeed) {
  if (samples.empty()) throw ConfigError("a chunk needs at least one sample");
  ChunkHeader h;
  h.n_samples = static_cast<std::uint32_t>(samples.size());
  h.board_size = static_cast<std::uint16_t>(samples.front().features.board_size);
  h.zobrist_seed = zobrist_seed;
  std::string out = detail::encode_header(h);
  out.reserve(h.file_size());
  for (const auto& s : samples) {
    if (s.features.board_size != h.board_size) throw ConfigError("mixed board sizes in one chunk");
    out.append(reinterpret_cast<const char*>(s.features.planes.data()), s.features.planes.size());
  }
  for (const auto& s : samples) {
    if (s.label.index < 0 || s.label.index >= h.board_size * h.board_size) throw ConfigError("label out of range");
    detail::put_le(out, static_cast<std::uint16_t>(s.label.index));
  }
  return out;
}

// One chunk loaded and validated.
struct ChunkData {
  ChunkHeader header;
  std::vector<std::uint8_t> features;
  std::vector<std::uint16_t> labels;

  Sample sample(std::size_t i) const {
    Sample s{FeatureTensor(header.board_size), MoveLabel{labels[i]}};
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(i * header.feature_bytes()), header.feature_bytes(),
                s.features.planes.begin());
    return s;
  }
};

inline ChunkData load_chunk(const fs::path& path) {
  const std::string label = path.string();
  std::string bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::exception& e) {
    throw CorruptionError(label, e.what());
  }
  if (bytes.size() < kChunkHeaderSize) throw CorruptionError(label, "truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, "CHGO", 4) != 0) throw CorruptionError(label, "bad magic");
  ChunkData c;
  c.header.version = detail::get_le<std::uint16_t>(p + 4);
  c.header.n_samples = detail::get_le<std::uint32_t>(p + 6);
  c.header.n_planes = detail::get_le<std::uint16_t>(p + 10);
  c.header.board_size = detail::get_le<std::uint16_t>(p + 12);
  c.header.label_width = detail::get_le<std::uint16_t>(p + 14);
  c.header.zobrist_seed = detail::get_le<std::uint64_t>(p + 16);
  if (c.header.version != kChunkVersion) {
    throw CorruptionError(label, "unsupported version " + std::to_string(c.header.version));
  }
  if (c.header.n_samples == 0) throw CorruptionError(label, "empty chunk");
  if (c.header.n_planes != kNumPlanes || c.header.label_width != 2 || c.header.board_size == 0 ||
      c.header.board_size > kMaxBoardSize) {
    throw CorruptionError(label, "unexpected shape fields");
  }
  if (bytes.size() != c.header.file_size()) {
    throw CorruptionError(label, "size " + std::to_string(bytes.size()) + " does not match header (" +
                                     std::to_string(c.header.file_size()) + ")");
  }
  const std::size_t fbytes = c.header.n_samples * c.header.feature_bytes();
  c.features.assign(p + kChunkHeaderSize, p + kChunkHeaderSize + fbytes);
  if (std::any_of(c.features.begin(), c.features.end(), [](std::uint8_t v) { return v > 1; })) {
    throw CorruptionError(label, "feature value outside {0,1}");
  }
  const unsigned label_limit = static_cast<unsigned>(c.header.board_size) * c.header.board_size;
  c.labels.resize(c.header.n_samples);
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    c.labels[i] = detail::get_le<std::uint16_t>(p + kChunkHeaderSize + fbytes + 2 * i);
    if (c.labels[i] >= label_limit) throw CorruptionError(label, "label out of range");
  }
  return c;
}

// Accumulates samples and flushes a file every chunk_size samples. Files are
// named <prefix>NNNNN.chg and written atomically.
class ChunkWriter {
 public:
  ChunkWriter(fs::path dir, int chunk_size = kChunkSize, std::string prefix = "chunk_",
              std::uint64_t zobrist_seed = kZobristProductionSeed)
      : dir_(std::move(dir)), chunk_size_(chunk_size), prefix_(std::move(prefix)), zobrist_seed_(zobrist_seed) {
    if (chunk_size_ < 1) throw ConfigError("chunk size must be positive");
    fs::create_directories(dir_);
  }

  void push(Sample s) {
    pending_.push_back(std::move(s));
    ++n_samples_;
    if (static_cast<int>(pending_.size()) == chunk_size_) flush();
  }

  // Writes the remainder; returns every file written.
  const std::vector<fs::path>& finish() {
    if (!pending_.empty()) flush();
    return written_;
  }

  // Removes every file this writer produced.
  void discard() {
    for (const auto& p : written_) fs::remove(p);
    written_.clear();
    pending_.clear();
  }

  // Hands back the samples not yet written; the writer forgets them.
  std::vector<Sample> take_pending() {
    n_samples_ -= pending_.size();
    return std::exchange(pending_, {});
  }

  const std::vector<fs::path>& written() const { return written_; }
  std::size_t samples_written() const { return n_samples_; }

 private:
  void flush() {
    const fs::path path = dir_ / detail::chunk_name(prefix_, static_cast<int>(written_.size()));
    try {
      detail::write_file_atomic(path, encode_chunk(pending_, zobrist_seed_));
    } catch (...) {
      discard();
      throw;
    }
    written_.push_back(path);
    pending_.clear();
  }

  fs::path dir_;
  int chunk_size_;
  std::string prefix_;
  std::uint64_t zobrist_seed_;
  std::vector<Sample> pending_;
  std::vector<fs::path> written_;
  std::size_t n_samples_ = 0;
};

inline std::vector<fs::path> write_chunks(std::span<const Sample> samples, const fs::path& dir,
                                          int chunk_size = kChunkSize) {
  ChunkWriter writer(dir, chunk_size);
  for (const auto& s : samples) writer.push(s);
  return writer.finish();
}

inline std::vector<fs::path> list_chunks(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == kChunkExtension) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Lazy batch stream over a chunk directory. Only the current chunk is
// resident. With a shuffle seed both the chunk order and the sample order
// inside each chunk are permuted deterministically.
class BatchReader {
 public:
  BatchReader(const fs::path& dir, int batch_size = kBatchSize, std::optional<std::uint64_t> shuffle_seed = {})
      : files_(list_chunks(dir)), batch_size_(batch_size), seed_(shuffle_seed) {
    if (batch_size_ < 1) throw ConfigError("batch size must be positive");
    if (files_.empty()) throw ConfigError("no chunk files in " + dir.string());
    if (seed_) {
      Rng rng(*seed_);
      shuffle(std::span<fs::path>(files_), rng);
    }
  }

  std::optional<Batch> next() {
    while (!chunk_ || cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) {
      if (next_file_ == files_.size()) {
        release();
        return std::nullopt;
      }
      load(next_file_++);
    }
    Batch b;
    b.board_size = chunk_->header.board_size;
    b.n_planes = chunk_->header.n_planes;
    const std::size_t fb = chunk_->header.feature_bytes();
    b.features.resize(fb * static_cast<std::size_t>(batch_size_));
    b.labels.resize(static_cast<std::size_t>(batch_size_));
    for (int k = 0; k < batch_size_; ++k) {
      const std::size_t src = order_[cursor_ + static_cast<std::size_t>(k)];
      std::copy_n(chunk_->features.begin() + static_cast<std::ptrdiff_t>(src * fb), fb,
                  b.features.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(k) * fb));
      b.labels[static_cast<std::size_t>(k)] = chunk_->labels[src];
    }
    cursor_ += static_cast<std::size_t>(batch_size_);
    samples_emitted_ += static_cast<std::size_t>(batch_size_);
    return b;
  }

  std::size_t resident_samples() const { return chunk_ ? chunk_->labels.size() : 0; }
  std::size_t peak_resident_samples() const { return peak_resident_; }
  std::size_t samples_emitted() const { return samples_emitted_; }
  std::size_t samples_dropped() const { return samples_dropped_; }

 private:
  void release() {
    if (chunk_) samples_dropped_ += order_.size() - cursor_;
    chunk_.reset();
  }

  void load(std::size_t file_pos) {
    release();
    chunk_ = load_chunk(files_[file_pos]);
    order_.resize(chunk_->labels.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (seed_) {
      Rng rng(derive_seed(*seed_, file_pos + 1));
      shuffle(std::span<std::size_t>(order_), rng);
    }
    cursor_ = 0;
    peak_resident_ = std::max(peak_resident_, chunk_->labels.size());
  }

  std::vector<fs::path> files_;
  int batch_size_;
  std::optional<std::uint64_t> seed_;
  std::size_t next_file_ = 0;
  std::optional<ChunkData> chunk_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t peak_resident_ = 0;
  std::size_t samples_emitted_ = 0;
  std::size_t samples_dropped_ = 0;
};

inline BatchReader read_batches(const fs::path& dir, int batch_size = kBatchSize,
                                std::optional<std::uint64_t> shuffle_seed = {}) {
  return BatchReader(dir, batch_size, shuffle_seed);
}

// Visits every stored sample once (no tail drop), one chunk at a time, in
// batches of at most batch_size.
template <typename Fn>
void for_each_batch_all(const fs::path& dir, int batch_size, Fn&& fn) {
  for (const auto& file : list_chunks(dir)) {
    const ChunkData c = load_chunk(file);
    const std::size_t fb = c.header.feature_bytes();
    for (std::size_t start = 0; start < c.labels.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), c.labels.size() - start);
      Batch b;
      b.board_size = c.header.board_size;
      b.n_planes = c.header.n_planes;
      b.features.assign(c.features.begin() + static_cast<std::ptrdiff_t>(start * fb),
                        c.features.begin() + static_cast<std::ptrdiff_t>((start + count) * fb));
      b.labels.assign(c.labels.begin() + static_cast<std::ptrdiff_t>(start),
                      c.labels.begin() + static_cast<std::ptrdiff_t>(start + count));
      fn(b);
    }
  }
}

// ---- parallel encoding ----------------------------------------------------------

// Where one game's SGF text comes from: a member of a zip archive, or a
// plain .sgf file when entry is empty.
struct GameSource {
  fs::path archive;
  std::string entry;

  std::string id() const { return entry.empty() ? archive.string() : archive.string() + "#" + entry; }
  std::string load() const {
    return entry.empty() ? detail::read_file(archive) : ZipArchive::open(archive).read(entry);
  }
};

struct EncodeOptions {
  int board_size = 19;
  int chunk_size = kChunkSize;
};

struct ProcessSummary {
  int n_games = 0;     // games that contributed samples
  int n_samples = 0;
  int n_chunks = 0;
  int n_excluded = 0;  // handicap games or other board sizes
  int n_skipped = 0;   // unreadable or unparsable sources

  bool operator==(const ProcessSummary&) const = default;
};

enum class GameOutcome { Encoded, Excluded, Failed };

// Parses, replays and encodes one game; every non-pass move becomes a sample.
template <typename Sink>
GameOutcome encode_game(std::string_view sgf_text, const std::string& id, const EncodeOptions& opts, Sink&& sink,
                        int* samples = nullptr) {
  GameRecord rec;
  try {
    rec = parse_sgf(sgf_text, id);
  } catch (const std::exception& e) {
    log_warning("skipping ", id, ": ", e.what());
    return GameOutcome::Failed;
  }
  if (rec.handicap > 1 || rec.board_size != opts.board_size) return GameOutcome::Excluded;
  const Replay r = replay(rec);
  if (r.warning) log_warning(id, ": replay truncated at move ", r.warning->move_index, ": ", r.warning->reason);
  int count = 0;
  for (const auto& [state, move] : r.steps) {
    const auto label = encode_label(move, rec.board_size);
    if (!label) continue;
    sink(Sample{encode(state), *label});
    ++count;
  }
  if (samples) *samples = count;
  return GameOutcome::Encoded;
}

namespace detail {

inline std::string worker_prefix(int w) {
  std::ostringstream os;
  os << "chunk_w" << std::setw(3) << std::setfill('0') << w << '_';
  return os.str();
}

// Runs fn(worker, begin, end) over contiguous slices of [0, n).
template <typename Fn>
void run_partitioned(std::size_t n, int workers, Fn&& fn) {
  workers = std::max(1, workers);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = n * static_cast<std::size_t>(w) / static_cast<std::size_t>(workers);
    const std::size_t end = n * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(workers);
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

namespace detail {

inline void add_summary(ProcessSummary& into, const ProcessSummary& x) {
  into.n_games += x.n_games;
  into.n_samples += x.n_samples;
  into.n_chunks += x.n_chunks;
  into.n_excluded += x.n_excluded;
  into.n_skipped += x.n_skipped;
}

// Encodes games[begin, end) serially into the writer's chunk files.
inline ProcessSummary encode_sources(std::span<const GameSource> games, ChunkWriter& writer,
                                     const EncodeOptions& opts) {
  ProcessSummary local;
  for (const auto& g : games) {
    std::string text;
    try {
      text = g.load();
    } catch (const std::exception& e) {
      log_warning("skipping ", g.id(), ": ", e.what());
      ++local.n_skipped;
      continue;
    }
    int n = 0;
    switch (encode_game(text, g.id(), opts, [&](Sample s) { writer.push(std::move(s)); }, &n)) {
      case GameOutcome::Encoded:
        ++local.n_games;
        local.n_samples += n;
        break;
      case GameOutcome::Excluded: ++local.n_excluded; break;
      case GameOutcome::Failed: ++local.n_skipped; break;
    }
  }
  return local;
}

// Full chunks stay with each worker; the remainders are pooled in worker
// order so that at most one partial chunk is produced.
class RemainderPool {
 public:
  explicit RemainderPool(int workers) : parts_(static_cast<std::size_t>(std::max(workers, 1))) {}

  void add(int w, ChunkWriter& writer, const ProcessSummary& local) {
    auto rest = writer.take_pending();
    std::lock_guard lock(mu_);
    parts_[static_cast<std::size_t>(w)] = std::move(rest);
    add_summary(total_, local);
    total_.n_chunks += static_cast<int>(writer.written().size());
  }

  ProcessSummary finish(const fs::path& out_dir, const EncodeOptions& opts) {
    ChunkWriter tail(out_dir, opts.chunk_size, "chunk_tail_");
    for (auto& part : parts_)
      for (auto& s : part) tail.push(std::move(s));
    total_.n_chunks += static_cast<int>(tail.finish().size());
    return total_;
  }

 private:
  std::mutex mu_;
  std::vector<std::vector<Sample>> parts_;
  ProcessSummary total_;
};

}  // namespace detail

// Encodes the given games into out_dir using `workers` threads, each owning
// its own chunk files.
inline ProcessSummary process_games(const std::vector<GameSource>& games, const fs::path& out_dir, int workers = 8,
                                    const EncodeOptions& opts = {}) {
  fs::create_directories(out_dir);
  detail::RemainderPool pool(workers);
  detail::run_partitioned(games.size(), workers, [&](int w, std::size_t begin, std::size_t end) {
    ChunkWriter writer(out_dir, opts.chunk_size, detail::worker_prefix(w));
    const auto local =
        detail::encode_sources(std::span<const GameSource>(games).subspan(begin, end - begin), writer, opts);
    pool.add(w, writer, local);
  });
  return pool.finish(out_dir, opts);
}

// Archives (zip bundles or single .sgf files) are split across workers; each
// worker expands and encodes its own archives.
inline ProcessSummary process_archives(const std::vector<fs::path>& archives, const fs::path& out_dir,
                                       int workers = 8, const EncodeOptions& opts = {}) {
  fs::create_directories(out_dir);
  detail::RemainderPool pool(workers);
  detail::run_partitioned(archives.size(), workers, [&](int w, std::size_t begin, std::size_t end) {
    std::vector<GameSource> games;
    ProcessSummary local;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& path = archives[i];
      if (detail::ends_with_ci(path.string(), ".sgf")) {
        games.push_back(GameSource{path, {}});
        continue;
      }
      try {
        for (auto& name : sgf_entries(ZipArchive::open(path))) games.push_back(GameSource{path, std::move(name)});
      } catch (const std::exception& e) {
        log_warning("skipping archive ", path.string(), ": ", e.what());
        ++local.n_skipped;
      }
    }
    ChunkWriter writer(out_dir, opts.chunk_size, detail::worker_prefix(w));
    detail::add_summary(local, detail::encode_sources(games, writer, opts));
    pool.add(w, writer, local);
  });
  return pool.finish(out_dir, opts);
}

}  // namespace chgo
