#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "allocrisk/io.hpp"
#include "allocrisk/sequential.hpp"

namespace httplib {
class Server;
}

namespace allocrisk::service {

using io::json;

struct Response {
  int status = 200;
  json body;
};

struct SessionRecord {
  std::string session_id;
  std::string created_at;  // UTC, ISO 8601
  std::uint64_t revision = 0;
  SequentialSession state;
};

int http_status(ErrorCode code);

/// 128 random bits, base64url without padding (22 characters).
std::string new_session_token();
bool is_valid_token(std::string_view token);

/// One JSON file per session under `data_dir`; writes go to a temp file that
/// is then renamed over the old one.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return dir_; }
  std::filesystem::path path_for(std::string_view id) const;

  SessionRecord load(std::string_view id) const;  // NotFound when absent
  void save(const SessionRecord& record) const;
  bool exists(std::string_view id) const;

  /// Serializes writers of one session.
  std::shared_ptr<std::mutex> lock_for(const std::string& id);

 private:
  std::filesystem::path dir_;
  std::mutex locks_mu_;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> locks_;
};

json record_to_json(const SessionRecord& record);
SessionRecord record_from_json(const json& doc);

/// Audit view served by GET /sessions/{id}.
json audit_view(const SessionRecord& record);

/// Transport-independent request handler. `body` is the raw request body.
class SessionService {
 public:
  explicit SessionService(std::filesystem::path data_dir);

  Response handle(std::string_view method, std::string_view path, std::string_view body);

  SessionStore& store() { return store_; }

 private:
  Response create(const json& body);
  Response add_batch(const std::string& id, const json& body);
  Response add_outcomes(const std::string& id, const json& body);
  Response show(const std::string& id);

  SessionStore store_;
};

/// Routes /sessions endpoints of `server` to `svc`, plus static files when
/// `static_dir` is set.
void install_routes(httplib::Server& server, SessionService& svc,
                    const std::optional<std::filesystem::path>& static_dir);

/// Blocks until the server stops.
int run_server(const std::string& host, int port, const std::filesystem::path& data_dir,
               const std::optional<std::filesystem::path>& static_dir);

}  // namespace allocrisk::service
