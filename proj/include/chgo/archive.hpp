#pragma once

// Game-record archives: a small zip reader/writer over zlib, the on-disk
// cache with its manifest, the crawler that fills it and seeded game sampling.

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chgo/errors.hpp"
#include "chgo/rng.hpp"

namespace chgo {

namespace fs = std::filesystem;

namespace detail {

inline std::uint16_t read_u16(std::string_view b, std::size_t at) {
  if (at + 2 > b.size()) throw FormatError("zip: truncated structure");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) | (static_cast<unsigned char>(b[at + 1]) << 8));
}

inline std::uint32_t read_u32(std::string_view b, std::size_t at) {
  return static_cast<std::uint32_t>(read_u16(b, at)) | (static_cast<std::uint32_t>(read_u16(b, at + 2)) << 16);
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  put_u16(out, static_cast<std::uint16_t>(v & 0xFFFF));
  put_u16(out, static_cast<std::uint16_t>(v >> 16));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

inline bool ends_with_ci(std::string_view s, std::string_view suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) != suffix[i]) return false;
  }
  return true;
}

}  // namespace detail

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return os.str();
}

// Read-only view of a zip archive held in memory. Stored and deflated entries
// are supported; zip64 is not.
class ZipArchive {
 public:
  struct Entry {
    std::string name;
    std::uint16_t method = 0;
    std::uint32_t crc = 0;
    std::uint32_t compressed_size = 0;
    std::uint32_t size = 0;
    std::uint32_t local_offset = 0;
  };

  static ZipArchive open(const fs::path& path) { return ZipArchive(detail::read_file(path), path.string()); }

  ZipArchive(std::string bytes, std::string label) : bytes_(std::move(bytes)), label_(std::move(label)) {
    index();
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::string read(const Entry& e) const {
    const std::string_view b = bytes_;
    if (detail::read_u32(b, e.local_offset) != 0x04034b50) fail("bad local header for " + e.name);
    const std::size_t data = e.local_offset + 30 + detail::read_u16(b, e.local_offset + 26) +
                             detail::read_u16(b, e.local_offset + 28);
    if (data + e.compressed_size > b.size()) fail("entry data truncated: " + e.name);
    std::string out;
    if (e.method == 0) {
      out.assign(b.substr(data, e.compressed_size));
    } else if (e.method == 8) {
      out.resize(e.size);
      z_stream zs{};
      if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) fail("inflateInit2 failed");
      zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(b.data() + data));
      zs.avail_in = e.compressed_size;
      zs.next_out = reinterpret_cast<Bytef*>(out.data());
      zs.avail_out = e.size;
      const int rc = inflate(&zs, Z_FINISH);
      inflateEnd(&zs);
      if (rc != Z_STREAM_END || zs.total_out != e.size) fail("inflate failed for " + e.name);
    } else {
      fail("unsupported compression method " + std::to_string(e.method) + " for " + e.name);
    }
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
    if (crc != e.crc) fail("crc mismatch for " + e.name);
    return out;
  }

  std::string read(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return read(e);
    }
    fail("no entry named " + std::string(name));
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw FormatError("zip " + label_ + ": " + what); }

  void index() {
    const std::string_view b = bytes_;
    if (b.size() < 22) fail("too small to be a zip archive");
    std::size_t eocd = std::string_view::npos;
    const std::size_t lowest = b.size() > 22 + 65535 ? b.size() - 22 - 65535 : 0;
    for (std::size_t at = b.size() - 22 + 1; at-- > lowest;) {
      if (detail::read_u32(b, at) == 0x06054b50) {
        eocd = at;
        break;
      }
    }
    if (eocd == std::string_view::npos) fail("end of central directory not found");
    const std::uint16_t count = detail::read_u16(b, eocd + 10);
    std::size_t at = detail::read_u32(b, eocd + 16);
    if (at == 0xFFFFFFFFu) fail("zip64 archives are not supported");
    for (std::uint16_t i = 0; i < count; ++i) {
      if (detail::read_u32(b, at) != 0x02014b50) fail("bad central directory entry");
      Entry e;
      e.method = detail::read_u16(b, at + 10);
      e.crc = detail::read_u32(b, at + 16);
      e.compressed_size = detail::read_u32(b, at + 20);
      e.size = detail::read_u32(b, at + 24);
      const std::uint16_t name_len = detail::read_u16(b, at + 28);
      const std::uint16_t extra_len = detail::read_u16(b, at + 30);
      const std::uint16_t comment_len = detail::read_u16(b, at + 32);
      e.local_offset = detail::read_u32(b, at + 42);
      if (at + 46 + name_len > b.size()) fail("truncated entry name");
      e.name.assign(b.substr(at + 46, name_len));
      entries_.push_back(std::move(e));
      at += 46u + name_len + extra_len + comment_len;
    }
  }

  std::string bytes_;
  std::string label_;
  std::vector<Entry> entries_;
};

// Builds a deflate-compressed zip from (name, content) pairs.
inline std::string make_zip(const std::vector<std::pair<std::string, std::string>>& files) {
  std::string out;
  std::string central;
  for (const auto& [name, content] : files) {
    uLongf bound = compressBound(static_cast<uLong>(content.size()));
    std::string packed(bound, '\0');
    z_stream zs{};
    deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(content.data()));
    zs.avail_in = static_cast<uInt>(content.size());
    zs.next_out = reinterpret_cast<Bytef*>(packed.data());
    zs.avail_out = static_cast<uInt>(packed.size());
    deflate(&zs, Z_FINISH);
    packed.resize(zs.total_out);
    deflateEnd(&zs);

    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(content.data()), static_cast<uInt>(content.size())));
    const auto offset = static_cast<std::uint32_t>(out.size());
    detail::put_u32(out, 0x04034b50);
    detail::put_u16(out, 20);
    detail::put_u16(out, 0);
    detail::put_u16(out, 8);
    detail::put_u32(out, 0);  // dos time + date
    detail::put_u32(out, crc);
    detail::put_u32(out, static_cast<std::uint32_t>(packed.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(content.size()));
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    detail::put_u16(out, 0);
    out += name;
    out += packed;

    detail::put_u32(central, 0x02014b50);
    detail::put_u16(central, 20);
    detail::put_u16(central, 20);
    detail::put_u16(central, 0);
    detail::put_u16(central, 8);
    detail::put_u32(central, 0);
    detail::put_u32(central, crc);
    detail::put_u32(central, static_cast<std::uint32_t>(packed.size()));
    detail::put_u32(central, static_cast<std::uint32_t>(content.size()));
    detail::put_u16(central, static_cast<std::uint16_t>(name.size()));
    detail::put_u16(central, 0);
    detail::put_u16(central, 0);
    detail::put_u16(central, 0);
    detail::put_u16(central, 0);
    detail::put_u32(central, 0);
    detail::put_u32(central, offset);
    central += name;
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  detail::put_u32(out, 0x06054b50);
  detail::put_u16(out, 0);
  detail::put_u16(out, 0);
  detail::put_u16(out, static_cast<std::uint16_t>(files.size()));
  detail::put_u16(out, static_cast<std::uint16_t>(files.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(central.size()));
  detail::put_u32(out, cd_offset);
  detail::put_u16(out, 0);
  return out;
}

// Names of the .sgf members of an archive, in archive order.
inline std::vector<std::string> sgf_entries(const ZipArchive& zip) {
  std::vector<std::string> out;
  for (const auto& e : zip.entries()) {
    if (!e.name.empty() && e.name.back() != '/' && detail::ends_with_ci(e.name, ".sgf")) out.push_back(e.name);
  }
  return out;
}

// ---- cache + manifest -------------------------------------------------------

struct ArchiveEntry {
  std::string archive;  // url or cache-relative file name
  int game_count = 0;
  std::string sha256;
};

struct GameRef {
  std::string archive;  // file name inside the cache dir
  std::string entry;    // member name inside the archive
  bool operator==(const GameRef&) const = default;
  auto operator<=>(const GameRef&) const = default;
  std::string id() const { return archive + "#" + entry; }
};

struct ArchiveIndex {
  std::vector<ArchiveEntry> entries;
  std::vector<GameRef> sampled;

  int total_games() const {
    int n = 0;
    for (const auto& e : entries) n += e.game_count;
    return n;
  }
};

inline constexpr const char* kManifestName = "manifest.tsv";

inline std::vector<ArchiveEntry> read_manifest(const fs::path& cache_dir) {
  std::vector<ArchiveEntry> out;
  const fs::path path = cache_dir / kManifestName;
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ArchiveEntry e;
    std::string count;
    if (!std::getline(ls, e.archive, '\t') || !std::getline(ls, count, '\t') || !std::getline(ls, e.sha256)) {
      throw FormatError(path.string() + ": bad manifest line '" + line + "'");
    }
    e.game_count = std::stoi(count);
    if (fs::exists(cache_dir / e.archive)) out.push_back(std::move(e));
  }
  return out;
}

inline void write_manifest(const fs::path& cache_dir, const std::vector<ArchiveEntry>& entries) {
  std::ostringstream os;
  os << "# archive\tgame_count\tsha256\n";
  for (const auto& e : entries) os << e.archive << '\t' << e.game_count << '\t' << e.sha256 << '\n';
  detail::write_file_atomic(cache_dir / kManifestName, os.str());
}

// Adds an archive file already present in the cache to the manifest.
inline ArchiveEntry register_archive(const fs::path& cache_dir, const std::string& file_name) {
  const std::string bytes = detail::read_file(cache_dir / file_name);
  const ZipArchive zip(bytes, file_name);
  ArchiveEntry e{file_name, static_cast<int>(sgf_entries(zip).size()), sha256_hex(bytes)};
  auto entries = read_manifest(cache_dir);
  std::erase_if(entries, [&](const ArchiveEntry& x) { return x.archive == file_name; });
  entries.push_back(e);
  write_manifest(cache_dir, entries);
  return e;
}

// Uniform sample of n_games over every game in the cache. Same seed and same
// cache give the same games; the result is sorted by (archive, entry).
inline std::vector<GameRef> sample_games(const fs::path& cache_dir, int n_games, std::uint64_t seed) {
  auto manifest = read_manifest(cache_dir);
  std::sort(manifest.begin(), manifest.end(),
            [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.archive < b.archive; });
  std::vector<GameRef> all;
  for (const auto& e : manifest) {
    const auto zip = ZipArchive::open(cache_dir / e.archive);
    for (auto& name : sgf_entries(zip)) all.push_back(GameRef{e.archive, std::move(name)});
  }
  if (n_games < 0 || static_cast<std::size_t>(n_games) > all.size()) {
    throw ConfigError("requested " + std::to_string(n_games) + " games but only " + std::to_string(all.size()) +
                      " are available in " + cache_dir.string());
  }
  Rng rng(seed);
  shuffle(std::span<GameRef>(all), rng);
  all.resize(static_cast<std::size_t>(n_games));
  std::sort(all.begin(), all.end());
  return all;
}

inline std::string read_game(const fs::path& cache_dir, const GameRef& ref) {
  return ZipArchive::open(cache_dir / ref.archive).read(ref.entry);
}

// ---- crawler ------------------------------------------------------------------

using HttpGet = std::function<std::string(const std::string& url)>;

// Links ending in .zip found in an HTML index page, resolved against its URL,
// in page order without duplicates.
inline std::vector<std::string> parse_index_links(const std::string& html, const std::string& index_url) {
  static const std::regex href(R"(href\s*=\s*["']([^"']+\.zip)["'])", std::regex::icase);
  std::vector<std::string> out;
  std::set<std::string> seen;
  const auto scheme_end = index_url.find("://");
  const auto host_end = scheme_end == std::string::npos ? std::string::npos : index_url.find('/', scheme_end + 3);
  const std::string origin = host_end == std::string::npos ? index_url : index_url.substr(0, host_end);
  const std::string base = index_url.substr(0, index_url.rfind('/') + 1);
  for (auto it = std::sregex_iterator(html.begin(), html.end(), href); it != std::sregex_iterator(); ++it) {
    std::string link = (*it)[1].str();
    if (link.find("://") == std::string::npos) link = link.front() == '/' ? origin + link : base + link;
    if (seen.insert(link).second) out.push_back(link);
  }
  return out;
}

// Fills cache_dir with archives listed on the index page until it holds at
// least n_games games, then samples n_games of them. A cache that already
// holds enough games is used without touching the network.
inline ArchiveIndex fetch_archives(const std::string& index_url, int n_games, const fs::path& cache_dir,
                                   std::uint64_t seed, const HttpGet& http_get) {
  fs::create_directories(cache_dir);
  ArchiveIndex index;
  index.entries = read_manifest(cache_dir);
  if (index.total_games() < n_games) {
    std::string html;
    try {
      html = http_get(index_url);
    } catch (const FetchError&) {
      throw;
    } catch (const std::exception& e) {
      throw FetchError("fetching index " + index_url + ": " + e.what());
    }
    const auto links = parse_index_links(html, index_url);
    if (links.empty()) throw FormatError("no .zip links found on index page " + index_url);
    for (const auto& url : links) {
      if (index.total_games() >= n_games) break;
      const std::string file_name = url.substr(url.rfind('/') + 1);
      const bool cached = std::any_of(index.entries.begin(), index.entries.end(),
                                      [&](const ArchiveEntry& e) { return e.archive == file_name; });
      if (cached) continue;
      std::string bytes;
      try {
        bytes = http_get(url);
      } catch (const FetchError&) {
        throw;
      } catch (const std::exception& e) {
        throw FetchError("fetching " + url + ": " + e.what());
      }
      const ZipArchive zip(bytes, url);
      detail::write_file_atomic(cache_dir / file_name, bytes);
      index.entries.push_back(ArchiveEntry{file_name, static_cast<int>(sgf_entries(zip).size()), sha256_hex(bytes)});
      write_manifest(cache_dir, index.entries);
    }
  }
  if (index.total_games() < n_games) {
    throw ConfigError("requested " + std::to_string(n_games) + " games but only " +
                      std::to_string(index.total_games()) + " are available");
  }
  index.sampled = sample_games(cache_dir, n_games, seed);
  return index;
}

}  // namespace chgo
