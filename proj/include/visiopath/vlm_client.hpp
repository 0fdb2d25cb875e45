/*
 Copyright 2026 The VisioPath Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <string>

// Eigen must be parsed before httplib: the socket headers httplib pulls in
// define macros (glibc resolver state) that mangle later declarations.
#include "visiopath/perception.hpp"

#include <httplib.h>
#include <json.hpp>

namespace visiopath::perception {

/// Connection settings for an external structured-output endpoint. The
/// endpoint receives a small request record and answers with the payload
/// schema documented next to parse_external_payload.
struct EndpointConfig {
  std::string url;       // base URL plus path, e.g. http://host:8080/observe
  std::string key;       // bearer credential, optional
  double timeout_s = 2.0;

  bool configured() const { return !url.empty(); }

  /// Reads VISIOPATH_VLM_URL and VISIOPATH_VLM_KEY. An unset URL leaves the
  /// config unconfigured, which callers treat as "adapter disabled".
  static EndpointConfig from_env() {
    EndpointConfig cfg;
    if (const char* url = std::getenv("VISIOPATH_VLM_URL")) cfg.url = url;
    if (const char* key = std::getenv("VISIOPATH_VLM_KEY")) cfg.key = key;
    return cfg;
  }
};

namespace detail {

/// Splits a URL into the scheme://host:port base and the request path.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint URL must include a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// Builds the transport for ExternalAdapter: one blocking POST per attempt,
/// the attempt index in the request so the server can adjust its prompt on
/// re-prompts. A transport error or non-200 status throws, which the
/// adapter counts as a failed attempt.
inline ExternalAdapter::FetchFn make_http_fetch(const EndpointConfig& cfg) {
  if (!cfg.configured()) {
    throw std::invalid_argument("make_http_fetch: endpoint not configured");
  }
  const auto [base, path] = detail::split_url(cfg.url);
  const std::string key = cfg.key;
  const double timeout = cfg.timeout_s;
  return [base, path, key, timeout](int attempt) -> std::string {
    httplib::Client client(base);
    const auto t = std::chrono::duration<double>(timeout);
    client.set_connection_timeout(t);
    client.set_read_timeout(t);
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    nlohmann::json body{{"request", "obstacle_frame"}, {"attempt", attempt}};
    const auto reply =
        client.Post(path, headers, body.dump(), "application/json");
    if (!reply) {
      throw std::runtime_error("endpoint unreachable: " +
                               httplib::to_string(reply.error()));
    }
    if (reply->status != 200) {
      throw std::runtime_error("endpoint returned status " +
                               std::to_string(reply->status));
    }
    return reply->body;
  };
}

}  // namespace visiopath::perception
