#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace pilaw {

/// Append-only content-addressed byte store: objects/<sha256>. Writes are
/// atomic, so a crash never leaves a partial object behind.
class ContentStore {
 public:
  explicit ContentStore(std::filesystem::path root);

  /// Returns the hex SHA-256 id; storing identical bytes twice is a no-op.
  std::string put(std::string_view bytes);
  [[nodiscard]] std::optional<std::string> get(const std::string& id) const;
  [[nodiscard]] bool contains(const std::string& id) const;
  [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

 private:
  [[nodiscard]] std::filesystem::path path_of(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

inline constexpr int kDefaultPort = 8642;
inline constexpr std::size_t kMaxUploadBytes = 50u * 1024u * 1024u;

struct ServiceConfig {
  std::filesystem::path data_dir = "pilaw_data";
  std::string host = "127.0.0.1";
  int port = kDefaultPort;  // 0 picks a free port
  std::size_t workers = 0;  // concurrent jobs; 0 means hardware concurrency
  std::optional<std::filesystem::path> static_dir;
  double poll_interval = 1.0;  // seconds, advisory

  /// Applies PILAW_DATA_DIR and PILAW_WORKERS when set.
  static ServiceConfig from_environment(ServiceConfig base);
};

/// HTTP/1.1 JSON API plus static UI serving. See README for the endpoints.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  bool run();
  /// Blocks until a started server stops.
  void wait();
  void stop();

  [[nodiscard]] int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pilaw
