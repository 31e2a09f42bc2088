#pragma once

// REST + WebSocket front end for SessionService, all routes under /v1.
// One thread per connection; requests for a session serialize on the
// store's session lock, so different sessions proceed in parallel.

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "qdex/service/service.h"

namespace qdex::service {

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

// Routes one plain HTTP request. Exposed for tests; the server calls it for
// everything except WebSocket upgrades.
HttpResponse handle_request(SessionService& service, const std::string& method, const std::string& target,
                            const std::string& body);

// Problem body {status, code, message, detail}.
HttpResponse problem(int status, std::string_view code, const std::string& detail);

// "host:port"; port 0 picks a free one.
struct BindAddress {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
};
BindAddress parse_bind_address(const std::string& text);

class HttpServer {
 public:
  HttpServer(SessionService& service, BindAddress address);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  void start();  // binds, then accepts on a background thread
  void stop();   // closes the listener and every open connection, then waits
  unsigned short port() const { return port_; }

 private:
  struct Impl;
  void serve_connection(int fd);

  SessionService& service_;
  BindAddress address_;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};

  std::mutex mutex_;
  std::condition_variable idle_;
  std::map<int, bool> open_;  // connection fds
};

}  // namespace qdex::service
