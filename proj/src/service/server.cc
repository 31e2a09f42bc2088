#include "qdex/service/server.h"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <chrono>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/service/export.h"

namespace qdex::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kBodyLimit = 64u << 20;

struct Target {
  std::vector<std::string> segments;  // path after /v1
  std::map<std::string, std::string> query;
  bool versioned = false;
};

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      const auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec == std::errc() && p == s.data() + i + 3) {
        out += static_cast<char>(v);
        i += 2;
      } else {
        out += s[i];
      }
    } else {
      out += s[i];
    }
  }
  return out;
}

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  if (q != std::string_view::npos) {
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const std::string_view pair = rest.substr(0, amp);
      const auto eq = pair.find('=');
      t.query[percent_decode(pair.substr(0, eq))] =
          eq == std::string_view::npos ? std::string() : percent_decode(pair.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  std::vector<std::string> parts;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const std::string_view part = path.substr(0, slash);
    if (!part.empty()) parts.push_back(percent_decode(part));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  if (!parts.empty() && parts.front() == "v1") {
    t.versioned = true;
    t.segments.assign(parts.begin() + 1, parts.end());
  }
  return t;
}

std::int64_t int_param(const Target& t, const std::string& name, std::int64_t fallback) {
  const auto it = t.query.find(name);
  if (it == t.query.end() || it->second.empty()) return fallback;
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || p != it->second.data() + it->second.size() || v < 0) {
    throw Error(ErrorCode::kInvalidArgument, "query parameter '" + name + "' must be a non-negative integer");
  }
  return v;
}

bool flag_param(const Target& t, const std::string& name) {
  const auto it = t.query.find(name);
  return it != t.query.end() && (it->second.empty() || it->second == "true" || it->second == "1");
}

HttpResponse ok(const json& body, int status = 200) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("request body is not valid JSON: ") + e.what());
  }
}

json document_summary(const Document& d) {
  json j = {{"doc_id", d.doc_id}, {"source_name", d.source_name}, {"metadata", d.metadata}, {"chars", d.text.size()}};
  if (d.title) j["title"] = *d.title;
  return j;
}

json session_summary(SessionService& service, const SessionState& s) {
  json docs = json::array();
  for (const Document& d : s.documents) docs.push_back(document_summary(d));
  json j = {{"session_id", s.session_id},
            {"query", s.query},
            {"phase", to_string(s.phase)},
            {"documents", docs},
            {"has_table", s.table.has_value()},
            {"edit_log", s.edit_log},
            {"parked_edits", s.parked_edits},
            {"discovered_doc_ids", s.discovered_doc_ids},
            {"last_event_seq", service.events().last_seq(s.session_id)},
            {"extraction_running", service.job_running(s.session_id)}};
  if (s.ou_spec) j["ou_spec"] = *s.ou_spec;
  if (s.schema) j["schema"] = *s.schema;
  return j;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnusableName:
    case ErrorCode::kNotFound:  // unknown field / instance inside a valid session
      return 422;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kTransport:
    case ErrorCode::kContractViolation: return 502;
    case ErrorCode::kMissingBinding:
    case ErrorCode::kConfig:
    case ErrorCode::kIo: return 500;
  }
  return 500;
}

HttpResponse method_not_allowed() { return problem(405, "method_not_allowed", "method not allowed on this resource"); }

HttpResponse route_session(SessionService& service, const std::string& method, const Target& t,
                           const std::string& body) {
  const std::string& id = t.segments[1];
  if (!service.store().exists(id)) return problem(404, "not_found", "unknown session '" + id + "'");
  const std::string sub = t.segments.size() > 2 ? t.segments[2] : "";
  const std::size_t depth = t.segments.size();

  if (depth == 2) {
    if (method != "GET") return method_not_allowed();
    return ok(session_summary(service, service.get(id)));
  }
  if (sub == "documents") {
    if (depth == 4 && method == "GET") {
      const SessionState s = service.get(id);
      const Document* d = s.find_document(t.segments[3]);
      if (d == nullptr) return problem(404, "not_found", "unknown document '" + t.segments[3] + "'");
      return ok(json(*d));
    }
    if (depth != 3) return problem(404, "not_found", "no such resource");
    if (method == "GET") {
      json docs = json::array();
      for (const Document& d : service.get(id).documents) docs.push_back(document_summary(d));
      return ok(docs);
    }
    if (method == "POST") {
      const json b = parse_body(body);
      const json docs = b.is_array() ? b : b.value("documents", json());
      const SessionState s = service.add_documents(id, docs);
      return ok(session_summary(service, s));
    }
    return method_not_allowed();
  }
  if (depth != 3 && !(sub == "table" && depth == 4)) return problem(404, "not_found", "no such resource");

  if (sub == "unit:discover") {
    if (method != "POST") return method_not_allowed();
    const UnitResult r = service.discover_unit(id);
    HttpResponse res = ok(json(r.unit));
    if (r.warning) res.headers["Warning"] = "299 - \"" + *r.warning + "\"";
    return res;
  }
  if (sub == "unit") {
    if (method == "GET") {
      const SessionState s = service.get(id);
      if (!s.ou_spec) return problem(409, "conflict", "no observation unit yet");
      return ok(json(*s.ou_spec));
    }
    if (method == "PUT") return ok(json(service.put_unit(id, parse_body(body))));
    return method_not_allowed();
  }
  if (sub == "schema:discover") {
    if (method != "POST") return method_not_allowed();
    const json b = parse_body(body);
    std::optional<Schema> seed;
    if (b.contains("seed_schema") && !b["seed_schema"].is_null()) seed = b["seed_schema"].get<Schema>();
    return ok(json(service.discover_schema(id, b.value("incremental", false), seed)));
  }
  if (sub == "schema") {
    if (method == "GET") {
      const SessionState s = service.get(id);
      if (!s.schema) return problem(409, "conflict", "no schema yet");
      return ok(json(*s.schema));
    }
    if (method == "PATCH") return ok(json(service.patch_schema(id, parse_body(body))));
    return method_not_allowed();
  }
  if (sub == "table:extract") {
    if (method != "POST") return method_not_allowed();
    const JobInfo job = service.start_extraction(id);
    HttpResponse res = ok(job_to_json(job), 202);
    res.headers["Location"] = "/v1/jobs/" + job.job_id;
    return res;
  }
  if (sub == "table") {
    if (depth == 4) {
      if (t.segments[3] != "cells") return problem(404, "not_found", "no such resource");
      if (method != "PATCH") return method_not_allowed();
      return ok(json(service.patch_cells(id, parse_body(body))));
    }
    if (method != "GET") return method_not_allowed();
    return ok(json(service.get_table(id)));
  }
  if (sub == "events") {
    if (method != "GET") return method_not_allowed();
    const std::int64_t last = int_param(t, "last_seq", 0);
    const std::int64_t wait_ms = std::min<std::int64_t>(int_param(t, "wait_ms", 0), 30000);
    auto events = service.events().since(id, last);
    if (events.empty() && wait_ms > 0) {
      events = service.events().wait_since(id, last, std::chrono::milliseconds(wait_ms));
    }
    return ok(json(events));
  }
  if (sub == "export") {
    if (method != "GET") return method_not_allowed();
    const auto fmt = t.query.count("format") ? t.query.at("format") : std::string("json");
    const SessionState s = service.get(id);
    if (!s.table) return problem(409, "conflict", "no table yet; run extraction first");
    HttpResponse res;
    if (fmt == "csv") {
      res.body = table_to_csv(*s.table, *s.schema, flag_param(t, "include_conflicts"));
      res.content_type = "text/csv; charset=utf-8";
      res.headers["Content-Disposition"] = "attachment; filename=\"table.csv\"";
    } else if (fmt == "json") {
      res.body = table_to_json(*s.table);
      res.headers["Content-Disposition"] = "attachment; filename=\"table.json\"";
    } else {
      return problem(422, "invalid_argument", "format must be csv or json");
    }
    return res;
  }
  if (sub == "coverage") {
    if (method != "GET") return method_not_allowed();
    const auto report = service.last_report(id);
    if (!report) return problem(409, "conflict", "no extraction report yet");
    return ok(*report);
  }
  return problem(404, "not_found", "no such resource");
}

}  // namespace

HttpResponse problem(int status, std::string_view code, const std::string& detail) {
  HttpResponse r;
  r.status = status;
  r.content_type = "application/problem+json";
  r.body = json{{"status", status},
                {"code", code},
                {"message", std::string(http::obsolete_reason(static_cast<http::status>(status)))},
                {"detail", detail}}
               .dump();
  return r;
}

HttpResponse handle_request(SessionService& service, const std::string& method, const std::string& target,
                            const std::string& body) {
  const Target t = parse_target(target);
  if (!t.versioned || t.segments.empty()) return problem(404, "not_found", "routes live under /v1");
  try {
    const std::string& root = t.segments[0];
    if (root == "health" && t.segments.size() == 1) return ok({{"status", "ok"}});
    if (root == "jobs" && t.segments.size() == 2) {
      if (method != "GET") return method_not_allowed();
      try {
        return ok(job_to_json(service.job(t.segments[1])));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNotFound) return problem(404, "not_found", e.what());
        throw;
      }
    }
    if (root == "sessions" && t.segments.size() == 1) {
      if (method == "GET") return ok(service.store().list());
      if (method != "POST") return method_not_allowed();
      const json b = parse_body(body);
      if (!b.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be an object");
      const ResearchQuery query = b.at("query").get<ResearchQuery>();
      const auto docs = b.value("documents", json::array()).get<std::vector<Document>>();
      const SessionState s = service.create_session(query, docs);
      HttpResponse res = ok({{"session_id", s.session_id}, {"phase", to_string(s.phase)}}, 201);
      res.headers["Location"] = "/v1/sessions/" + s.session_id;
      return res;
    }
    if (root == "sessions") return route_session(service, method, t, body);
    return problem(404, "not_found", "no such resource");
  } catch (const Error& e) {
    return problem(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return problem(422, "invalid_argument", std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    spdlog::error("{} {}: {}", method, target, e.what());
    return problem(500, "internal", e.what());
  }
}

BindAddress parse_bind_address(const std::string& text) {
  BindAddress a;
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kConfig, "bind address must be host:port, got '" + text + "'");
  a.host = text.substr(0, colon);
  unsigned v = 0;
  const std::string port = text.substr(colon + 1);
  const auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), v);
  if (a.host.empty() || ec != std::errc() || p != port.data() + port.size() || v > 65535) {
    throw Error(ErrorCode::kConfig, "bind address must be host:port, got '" + text + "'");
  }
  a.port = static_cast<unsigned short>(v);
  return a;
}

struct HttpServer::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  tcp protocol = tcp::v4();
};

HttpServer::HttpServer(SessionService& service, BindAddress address)
    : service_(service), address_(std::move(address)), impl_(std::make_unique<Impl>()) {}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start() {
  boost::system::error_code ec;
  const auto ip = asio::ip::make_address(address_.host, ec);
  if (ec) throw Error(ErrorCode::kConfig, "bad bind host '" + address_.host + "'");
  const tcp::endpoint endpoint(ip, address_.port);
  auto& acc = impl_->acceptor;
  impl_->protocol = endpoint.protocol();
  acc.open(endpoint.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(endpoint, ec);
  if (ec) throw Error(ErrorCode::kConfig, "cannot bind " + address_.host + ":" + std::to_string(address_.port) + ": " + ec.message());
  acc.listen();
  port_ = acc.local_endpoint().port();
  spdlog::info("listening on {}:{}", address_.host, port_);

  acceptor_ = std::thread([this] {
    while (!stopping_) {
      tcp::socket socket(impl_->io);
      boost::system::error_code aec;
      impl_->acceptor.accept(socket, aec);
      if (aec) {
        if (stopping_) break;
        continue;
      }
      const int fd = socket.release(aec);
      if (aec) continue;
      {
        std::lock_guard lock(mutex_);
        open_[fd] = true;
      }
      std::thread([this, fd] {
        serve_connection(fd);
        std::lock_guard lock(mutex_);
        open_.erase(fd);
        ::close(fd);
        idle_.notify_all();
      }).detach();
    }
  });
}

void HttpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (impl_->acceptor.is_open()) ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  boost::system::error_code ec;
  impl_->acceptor.close(ec);
  std::unique_lock lock(mutex_);
  for (const auto& [fd, unused] : open_) ::shutdown(fd, SHUT_RDWR);
  idle_.wait(lock, [&] { return open_.empty(); });
}

namespace {

// True once the stream has nothing more to say: the extraction finished and
// its completion was delivered.
bool stream_finished(SessionService& service, const std::string& id, const ProgressEvent* last_sent) {
  return last_sent != nullptr && last_sent->kind == "phase_completed" &&
         last_sent->payload.value("phase", std::string()) == "extraction" && !service.job_running(id) &&
         service.events().last_seq(id) == last_sent->seq;
}

bool peer_has_data(int fd) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, 0) > 0;
}

}  // namespace

namespace {

void serve_events(SessionService& service, const std::atomic<bool>& stopping, tcp::socket& socket,
                  const http::request<http::string_body>& req, const std::string& id, std::int64_t last) {
  boost::system::error_code ec;
  websocket::stream<tcp::socket&> ws(socket);
  ws.accept(req, ec);
  if (ec) return;
  ws.text(true);
  std::optional<ProgressEvent> last_sent;
  while (!stopping) {
    const auto events = service.events().wait_since(id, last, std::chrono::milliseconds(100));
    for (const ProgressEvent& e : events) {
      ws.write(asio::buffer(json(e).dump()), ec);
      if (ec) return;
      last = e.seq;
      last_sent = e;
    }
    if (stream_finished(service, id, last_sent ? &*last_sent : nullptr)) {
      ws.close(websocket::close_code::normal, ec);
      return;
    }
    if (events.empty() && peer_has_data(socket.native_handle())) {
      beast::flat_buffer incoming;
      ws.read(incoming, ec);  // a close frame ends the stream; anything else is ignored
      if (ec) return;
    }
  }
  ws.close(websocket::close_code::going_away, ec);
}

}  // namespace

void HttpServer::serve_connection(int fd) {
  asio::io_context io;
  boost::system::error_code ec;
  tcp::socket socket(io);
  socket.assign(impl_->protocol, fd, ec);
  if (ec) return;
  beast::flat_buffer buffer;
  for (;;) {
    http::request_parser<http::string_body> parser;
    parser.body_limit(kBodyLimit);
    http::read(socket, buffer, parser, ec);
    if (ec) break;
    http::request<http::string_body> req = parser.release();
    const std::string target(req.target());

    if (websocket::is_upgrade(req)) {
      const Target t = parse_target(target);
      const bool events_route = t.versioned && t.segments.size() == 3 && t.segments[0] == "sessions" &&
                                t.segments[2] == "events";
      HttpResponse refusal;
      std::int64_t last = 0;
      try {
        if (!events_route) {
          refusal = problem(404, "not_found", "only the events stream accepts WebSocket upgrades");
        } else if (!service_.store().exists(t.segments[1])) {
          refusal = problem(404, "not_found", "unknown session '" + t.segments[1] + "'");
        } else {
          last = int_param(t, "last_seq", 0);
        }
      } catch (const Error& e) {
        refusal = problem(422, "invalid_argument", e.what());
      }
      if (refusal.body.empty()) {
        serve_events(service_, stopping_, socket, req, t.segments[1], last);
        break;
      }
      http::response<http::string_body> res{static_cast<http::status>(refusal.status), req.version()};
      res.set(http::field::content_type, refusal.content_type);
      res.body() = refusal.body;
      res.prepare_payload();
      http::write(socket, res, ec);
      break;
    }

    const HttpResponse r = handle_request(service_, std::string(req.method_string()), target, req.body());
    http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
    res.set(http::field::server, "qdex");
    res.set(http::field::content_type, r.content_type);
    for (const auto& [k, v] : r.headers) res.set(k, v);
    res.keep_alive(req.keep_alive());
    res.body() = r.body;
    res.prepare_payload();
    http::write(socket, res, ec);
    if (ec || !req.keep_alive()) break;
  }
  socket.shutdown(tcp::socket::shutdown_send, ec);
  socket.release(ec);  // the caller closes fd once it is off the open list
}

}  // namespace qdex::service
