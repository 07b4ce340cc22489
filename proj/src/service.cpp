#include "allocrisk/service.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

namespace allocrisk::service {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

Response error_response(const Error& err) {
  return {http_status(err.code()), io::error_to_json(err)};
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.contains(key)) {
    throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  }
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' has the wrong type");
  }
}

void check_revision(const SessionRecord& rec, const json& body) {
  const auto expected = field<std::uint64_t>(body, "expected_revision");
  if (expected != rec.revision) {
    throw Error(ErrorCode::RevisionConflict, "expected revision " + std::to_string(expected) +
                                                 ", session is at " +
                                                 std::to_string(rec.revision));
  }
}

std::optional<FixedSizes> parse_quota(const json& body) {
  if (!body.contains("quota") || body.at("quota").is_null()) return std::nullopt;
  const json& q = body.at("quota");
  try {
    if (q.is_array() && q.size() == 2) {
      return FixedSizes{q[0].get<std::size_t>(), q[1].get<std::size_t>()};
    }
    return FixedSizes{q.at("n_c").get<std::size_t>(), q.at("n_t").get<std::size_t>()};
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, "quota must be [n_c, n_t] or {\"n_c\", \"n_t\"}");
  }
}

json arms_json(const Allocation& alloc) {
  json out = json::array();
  for (auto v : alloc.w()) out.push_back(v ? "T" : "C");
  return out;
}

std::optional<double> what_if(const SequentialSession& s, const RowVectorXd& unit, bool treated) {
  MatrixXd u(1, unit.size());
  u.row(0) = unit;
  try {
    return conditional_risk(s, CovariateMatrix(std::move(u)),
                            Allocation({static_cast<std::uint8_t>(treated ? 1 : 0)}))
        .risk;
  } catch (const Error&) {
    return std::nullopt;
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::RaggedRows:
    case ErrorCode::EmptyFile:
    case ErrorCode::InvalidPrior:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::SchurNotDiagonal:
    case ErrorCode::InvalidConfig:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::RevisionConflict:
    case ErrorCode::AlreadyScored:
      return 409;
    default:
      return 422;
  }
}

std::string new_session_token() {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::random_device rd;
  std::array<std::uint8_t, 16> bytes{};
  for (std::size_t i = 0; i < bytes.size(); i += 4) {
    const std::uint32_t r = rd();
    for (std::size_t k = 0; k < 4; ++k) bytes[i + k] = static_cast<std::uint8_t>(r >> (8 * k));
  }
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (auto b : bytes) {
    acc = (acc << 8) | b;
    bits += 8;
    while (bits >= 6) {
      bits -= 6;
      out.push_back(kAlphabet[(acc >> bits) & 0x3f]);
    }
  }
  if (bits > 0) out.push_back(kAlphabet[(acc << (6 - bits)) & 0x3f]);
  return out;
}

bool is_valid_token(std::string_view token) {
  if (token.size() != 22) return false;
  for (char c : token) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

SessionStore::SessionStore(fs::path data_dir) : dir_(std::move(data_dir)) {
  fs::create_directories(dir_);
}

fs::path SessionStore::path_for(std::string_view id) const {
  return dir_ / (std::string(id) + ".json");
}

bool SessionStore::exists(std::string_view id) const {
  return is_valid_token(id) && fs::exists(path_for(id));
}

SessionRecord SessionStore::load(std::string_view id) const {
  if (!exists(id)) throw Error(ErrorCode::NotFound, "no session '" + std::string(id) + "'");
  std::ifstream in(path_for(id), std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "corrupt session file: " + std::string(e.what()));
  }
  return record_from_json(doc);
}

void SessionStore::save(const SessionRecord& record) const {
  const fs::path target = path_for(record.session_id);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << record_to_json(record).dump(2) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::shared_ptr<std::mutex> SessionStore::lock_for(const std::string& id) {
  std::lock_guard guard(locks_mu_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

json record_to_json(const SessionRecord& record) {
  return {{"session_id", record.session_id},
          {"created_at", record.created_at},
          {"revision", record.revision},
          {"state", io::session_to_json(record.state)}};
}

SessionRecord record_from_json(const json& doc) {
  try {
    return SessionRecord{doc.at("session_id").get<std::string>(),
                         doc.at("created_at").get<std::string>(),
                         doc.at("revision").get<std::uint64_t>(),
                         io::session_from_json(doc.at("state"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed session record: ") + e.what());
  }
}

json audit_view(const SessionRecord& record) {
  const SequentialSession& s = record.state;
  const double e = s.expected_sigma2();
  json batches = json::array();
  for (std::size_t i = 0; i < s.history().size(); ++i) {
    const BatchRecord& b = s.history()[i];
    batches.push_back({{"index", i},
                       {"size", b.w.size()},
                       {"n_c", b.w.n_c()},
                       {"n_t", b.w.n_t()},
                       {"allocation", io::to_json(b.w)},
                       {"arms", arms_json(b.w)},
                       {"contrast_variance", b.contrast_variance},
                       {"risk", b.contrast_variance * e},
                       {"scored", b.y.has_value()}});
  }
  const ArmTotals& t = s.totals();
  const std::size_t count = t.count_c + t.count_t;
  RowVectorXd mean = RowVectorXd::Zero(static_cast<Eigen::Index>(s.p()));
  if (count > 0) mean = (t.sum_c + t.sum_t) / static_cast<double>(count);

  json out;
  out["session_id"] = record.session_id;
  out["created_at"] = record.created_at;
  out["revision"] = record.revision;
  out["p"] = s.p();
  out["l_c"] = s.l_c();
  out["l_t"] = s.l_t();
  out["expected_sigma2"] = e;
  out["a"] = s.a();
  out["b"] = s.b();
  out["batches"] = std::move(batches);
  out["what_if"] = {{"unit", std::vector<double>(mean.data(), mean.data() + mean.size())},
                    {"control", opt_json(what_if(s, mean, false))},
                    {"treatment", opt_json(what_if(s, mean, true))}};
  out["state"] = io::session_to_json(s);
  return out;
}

SessionService::SessionService(fs::path data_dir) : store_(std::move(data_dir)) {}

Response SessionService::handle(std::string_view method, std::string_view path,
                                std::string_view body) {
  try {
    constexpr std::string_view kPrefix = "/sessions";
    if (path.substr(0, kPrefix.size()) != kPrefix) {
      throw Error(ErrorCode::NotFound, "no route " + std::string(path));
    }
    std::string_view rest = path.substr(kPrefix.size());
    if (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
    if (rest.empty()) {
      if (method != "POST") throw Error(ErrorCode::NotFound, "no route " + std::string(path));
      return create(parse_body(body));
    }
    if (rest.front() != '/') throw Error(ErrorCode::NotFound, "no route " + std::string(path));
    rest.remove_prefix(1);
    const std::size_t slash = rest.find('/');
    const std::string id(rest.substr(0, slash));
    const std::string_view action =
        slash == std::string_view::npos ? std::string_view{} : rest.substr(slash + 1);
    if (action.empty() && method == "GET") return show(id);
    if (action == "batches" && method == "POST") return add_batch(id, parse_body(body));
    if (action == "outcomes" && method == "POST") return add_outcomes(id, parse_body(body));
    throw Error(ErrorCode::NotFound, "no route " + std::string(method) + " " + std::string(path));
  } catch (const Error& err) {
    return error_response(err);
  } catch (const std::exception& e) {
    return {500, {{"code", "Internal"}, {"message", e.what()}, {"detail", "service.Internal"}}};
  }
}

Response SessionService::create(const json& body) {
  std::optional<std::size_t> p;
  if (body.contains("p")) p = field<std::size_t>(body, "p");
  const json prior_doc = body.contains("prior") ? body.at("prior") : body;
  const NigPrior prior = io::prior_from_json(prior_doc, p);
  std::string id;
  do {
    id = new_session_token();
  } while (store_.exists(id));
  const SessionRecord rec{id, utc_now(), 0, open_session(prior, prior.p())};
  store_.save(rec);
  return {201, {{"session_id", id}, {"revision", 0}}};
}

Response SessionService::add_batch(const std::string& id, const json& body) {
  const auto mu = store_.lock_for(id);
  std::lock_guard guard(*mu);
  SessionRecord rec = store_.load(id);
  check_revision(rec, body);
  if (!body.contains("covariates")) throw Error(ErrorCode::ParseError, "missing field 'covariates'");
  MatrixXd u = io::matrix_from_json(body.at("covariates"), "covariates");
  if (u.rows() == 0) throw Error(ErrorCode::EmptyFile, "batch has no units");

  BatchRequest req{CovariateMatrix(std::move(u)), parse_quota(body), OptimizerConfig{}};
  if (body.contains("mode")) req.optimizer.mode = parse_mode(field<std::string>(body, "mode"));
  if (body.contains("seed")) req.optimizer.rng_seed = field<std::uint64_t>(body, "seed");
  if (body.contains("restarts")) req.optimizer.restarts = field<std::size_t>(body, "restarts");

  BatchDecision decision = allocate_batch(rec.state, req);
  const std::size_t index = decision.session.history().size() - 1;
  SessionRecord next{rec.session_id, rec.created_at, rec.revision + 1, std::move(decision.session)};
  store_.save(next);
  return {200,
          {{"allocation", io::to_json(decision.alloc)},
           {"arms", arms_json(decision.alloc)},
           {"risk", io::to_json(decision.risk)},
           {"ties", decision.search.ties.size()},
           {"batch_index", index},
           {"revision", next.revision},
           {"l_c", next.state.l_c()},
           {"l_t", next.state.l_t()}}};
}

Response SessionService::add_outcomes(const std::string& id, const json& body) {
  const auto mu = store_.lock_for(id);
  std::lock_guard guard(*mu);
  SessionRecord rec = store_.load(id);
  check_revision(rec, body);
  const auto index = field<std::size_t>(body, "batch_index");
  if (!body.contains("y")) throw Error(ErrorCode::ParseError, "missing field 'y'");
  const VectorXd y = io::vector_from_json(body.at("y"), "y");
  SessionRecord next{rec.session_id, rec.created_at, rec.revision + 1,
                     record_outcomes(rec.state, index, y)};
  store_.save(next);
  return {200,
          {{"revision", next.revision},
           {"expected_sigma2", next.state.expected_sigma2()},
           {"a", next.state.a()},
           {"b", next.state.b()}}};
}

Response SessionService::show(const std::string& id) {
  return {200, audit_view(store_.load(id))};
}

void install_routes(httplib::Server& server, SessionService& svc,
                    const std::optional<fs::path>& static_dir) {
  const auto forward = [&svc](const httplib::Request& req, httplib::Response& res) {
    const Response r = svc.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/sessions/[^/]+)", forward);
  server.Post(R"(/sessions/?)", forward);
  server.Post(R"(/sessions/[^/]+/(batches|outcomes))", forward);
  if (static_dir) server.set_mount_point("/", static_dir->string());
}

int run_server(const std::string& host, int port, const fs::path& data_dir,
               const std::optional<fs::path>& static_dir) {
  SessionService svc(data_dir);
  httplib::Server server;
  install_routes(server, svc, static_dir);
  if (!server.listen(host, port)) return 1;
  return 0;
}

}  // namespace allocrisk::service
