#include "support.h"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace qdex::testing {

namespace fs = std::filesystem;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

TempDir::TempDir() {
  std::random_device rd;
  path = fs::temp_directory_path() / ("qdex_test_" + std::to_string(rd()) + std::to_string(rd()));
  fs::create_directories(path);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path, ec);
}

fs::path fixture_dir() { return QDEX_FIXTURE_DIR; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

CsvParse parse_csv(const std::string& text) {
  CsvParse out;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(field);
    out.records.push_back(record);
    record.clear();
    field.clear();
    field_started = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
          throw std::runtime_error("text after closing quote");
        }
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"') {
      if (field_started) throw std::runtime_error("quote inside unquoted field");
      quoted = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
      field_started = false;
      ++i;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_record();
      i += 2;
    } else if (c == '\n') {
      out.crlf_only = false;
      end_record();
      ++i;
    } else {
      field += c;
      field_started = true;
      ++i;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return out;
}

llm::ProviderReply SlowProvider::complete(const llm::ProviderRequest& request) {
  std::this_thread::sleep_for(delay_);
  return inner_->complete(request);
}

WsResult ws_collect(unsigned short port, const std::string& path, std::size_t max_events) {
  WsResult out;
  asio::io_context io;
  tcp::resolver resolver(io);
  websocket::stream<tcp::socket> ws(io);
  asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1:" + std::to_string(port), path);
  while (out.events.size() < max_events) {
    beast::flat_buffer buffer;
    boost::system::error_code ec;
    ws.read(buffer, ec);
    if (ec == websocket::error::closed) {
      out.closed_by_server = true;
      break;
    }
    if (ec) throw std::runtime_error("websocket read failed: " + ec.message());
    out.events.push_back(nlohmann::json::parse(beast::buffers_to_string(buffer.data())));
  }
  if (!out.closed_by_server) {
    boost::system::error_code ec;
    ws.next_layer().close(ec);  // drop without a close handshake, like a lost connection
  }
  return out;
}

}  // namespace qdex::testing
