#pragma once

#include <httplib.h>

#include <regex>
#include <string>

#include "chgo/archive.hpp"
#include "chgo/errors.hpp"

namespace chgo {

// GET over http or https, following redirects. Non-200 answers throw
// FetchError.
inline std::string http_get(const std::string& url) {
  static const std::regex parts(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, parts)) throw FetchError("unsupported url " + url);
  httplib::Client client(m[1].str());
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Get(path);
  if (!res) throw FetchError("GET " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw FetchError("GET " + url + " returned HTTP " + std::to_string(res->status));
  return res->body;
}

inline HttpGet default_http_get() { return [](const std::string& url) { return http_get(url); }; }

}  // namespace chgo
