#include "qdex/store/session_store.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"

namespace qdex::store {
namespace fs = std::filesystem;
namespace {

using nlohmann::json;

void check_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid session id '" + id + "'");
}

// Write to a sibling temp file and rename, so readers never see half a file.
void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot replace " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kIo, path.filename().string() + " is corrupt: " + e.what());
  }
}

std::vector<json> read_ndjson(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  std::istringstream lines(read_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kIo, path.filename().string() + " is corrupt: " + e.what());
    }
  }
  return out;
}

}  // namespace

SessionLock::SessionLock(const fs::path& lock_file) {
  fd_ = ::open(lock_file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open lock file " + lock_file.string());
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw Error(ErrorCode::kIo, "cannot lock " + lock_file.string());
  }
}

SessionLock::~SessionLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::string new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

SessionStore::SessionStore(StoreConfig config) : config_(std::move(config)) {
  if (config_.root_dir.empty()) throw Error(ErrorCode::kConfig, "store root_dir is empty");
  std::error_code ec;
  fs::create_directories(config_.root_dir, ec);
  if (ec || ::access(config_.root_dir.c_str(), W_OK) != 0) {
    throw Error(ErrorCode::kConfig, "store root " + config_.root_dir.string() + " is not writable");
  }
}

fs::path SessionStore::session_dir(const std::string& session_id) const {
  check_id(session_id);
  return config_.root_dir / session_id;
}

bool SessionStore::exists(const std::string& session_id) const {
  return fs::exists(session_dir(session_id) / "session.json");
}

SessionLock SessionStore::lock(const std::string& session_id) const {
  const fs::path dir = session_dir(session_id);
  fs::create_directories(dir);
  return SessionLock(dir / ".lock");
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(config_.root_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "session.json")) ids.push_back(entry.path().filename());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SessionState SessionStore::create_session(const ResearchQuery& query, std::vector<Document> docs,
                                          std::optional<std::string> session_id) {
  SessionState s;
  s.session_id = session_id ? *session_id : new_session_id();
  check_id(s.session_id);
  if (exists(s.session_id)) throw Error(ErrorCode::kConflict, "session '" + s.session_id + "' already exists");
  s.query = query;
  s.documents = std::move(docs);
  validate_session(s);
  save(s);
  return s;
}

void SessionStore::save(const SessionState& state) {
  validate_session(state);
  const fs::path dir = session_dir(state.session_id);
  fs::create_directories(dir);

  json session = {{"session_id", state.session_id},
                   {"query", state.query},
                   {"documents", state.documents},
                   {"phase", to_string(state.phase)},
                   {"discovered_doc_ids", state.discovered_doc_ids},
                   {"parked_edits", state.parked_edits}};
  if (state.ou_spec) session["ou_spec"] = *state.ou_spec;
  write_atomic(dir / "session.json", dump_canonical(session));

  if (state.schema) {
    write_atomic(dir / "schema.json", dump_canonical(json(*state.schema)));
  } else {
    fs::remove(dir / "schema.json");
  }
  if (state.table) {
    write_atomic(dir / "table.json", dump_canonical(json(*state.table)));
  } else {
    fs::remove(dir / "table.json");
  }
  std::string edits;
  for (const EditEvent& e : state.edit_log) edits += json(e).dump() + "\n";
  write_atomic(dir / "edits.ndjson", edits);
}

SessionState SessionStore::load(const std::string& session_id) const {
  if (!exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  const fs::path dir = session_dir(session_id);
  SessionState s;
  try {
    const json session = parse_file(dir / "session.json");
    s.session_id = session.at("session_id").get<std::string>();
    s.query = session.at("query").get<ResearchQuery>();
    s.documents = session.at("documents").get<std::vector<Document>>();
    s.phase = phase_from_string(session.at("phase").get<std::string>());
    s.discovered_doc_ids = session.value("discovered_doc_ids", std::set<std::string>{});
    s.parked_edits = session.value("parked_edits", std::vector<ParkedEdit>{});
    if (session.contains("ou_spec")) s.ou_spec = session["ou_spec"].get<ObservationUnitSpec>();
    if (fs::exists(dir / "schema.json")) s.schema = parse_file(dir / "schema.json").get<Schema>();
    if (fs::exists(dir / "table.json")) s.table = parse_file(dir / "table.json").get<Table>();
    for (const json& e : read_ndjson(dir / "edits.ndjson")) s.edit_log.push_back(e.get<EditEvent>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "session '" + session_id + "' cannot be read: " + e.what());
  }
  validate_session(s);
  return s;
}

void SessionStore::append_exchange(const std::string& session_id, const json& exchange) {
  if (!config_.retain_raw_exchanges) return;
  const fs::path dir = session_dir(session_id);
  fs::create_directories(dir);
  std::ofstream out(dir / "exchanges.ndjson", std::ios::app | std::ios::binary);
  out << exchange.dump() << "\n";
  if (!out) throw Error(ErrorCode::kIo, "cannot append to exchanges.ndjson");
}

std::vector<json> SessionStore::exchanges(const std::string& session_id) const {
  return read_ndjson(session_dir(session_id) / "exchanges.ndjson");
}

void SessionStore::write_artifact(const std::string& session_id, const std::string& name, const json& value) {
  check_id(name);
  write_atomic(session_dir(session_id) / (name + ".json"), dump_canonical(value));
}

std::optional<json> SessionStore::read_artifact(const std::string& session_id, const std::string& name) const {
  check_id(name);
  const fs::path path = session_dir(session_id) / (name + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return parse_file(path);
}

}  // namespace qdex::store
