#include <fstream>
#include <sstream>

#include "callscape/eval.hpp"

namespace callscape {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ApiReply error_reply(int status, EvalErrc code, const std::string& message) {
  return {status, json{{"error", {{"code", std::string(to_string(code))}, {"message", message}}}}.dump()};
}

ApiReply json_reply(const json& doc, int status = 200) { return {status, doc.dump()}; }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError(EvalErrc::SchemaViolation, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

EvalService::EvalService(const fs::path& runs_dir, fs::path ratings_path) : ratings_path_(std::move(ratings_path)) {
  const auto runs = read_run_store(runs_dir);
  const PackageSet set = read_packages(runs_dir);
  for (const auto& p : set.packages) packages_[p.rater_id] = p;

  std::map<std::string, const RunRecord*> by_id;
  for (const auto& r : runs) by_id[r.run_id] = &r;
  for (const auto& [item, run_id] : set.key) {
    const auto it = by_id.find(run_id);
    if (it == by_id.end()) throw EvalError(EvalErrc::UnmappedItem, "item " + item + " maps to unknown run " + run_id);
    if (!it->second->scene) throw EvalError(EvalErrc::MissingScene, "run " + run_id + " has no scene");
    scenes_[item] = to_json(*it->second->scene).dump();
    program_of_[item] = it->second->config.program;
  }

  const fs::path programs = runs_dir / "programs";
  if (fs::is_directory(programs)) {
    for (const auto& entry : fs::directory_iterator(programs)) {
      if (!fs::exists(entry.path() / "program.json")) continue;
      const json info = json::parse(slurp(entry.path() / "program.json"));
      Program p;
      p.truth = json::parse(slurp(entry.path() / "truth.json")).dump();
      if (fs::exists(entry.path() / "source.txt")) p.source = slurp(entry.path() / "source.txt");
      programs_[info.value("file_id", "")] = p;
      programs_[info.value("name", entry.path().filename().string())] = std::move(p);
    }
  }

  ratings_ = read_ratings_file(ratings_path_);
}

std::vector<RatingRecord> EvalService::ratings() const {
  std::lock_guard lock(mutex_);
  return ratings_;
}

const EvalService::Program* EvalService::program_of(const std::string& item) const {
  const auto it = program_of_.find(item);
  if (it == program_of_.end()) return nullptr;
  const auto p = programs_.find(it->second);
  return p == programs_.end() ? nullptr : &p->second;
}

ApiReply EvalService::get_package(const std::string& rater) const {
  const auto it = packages_.find(rater);
  if (it == packages_.end()) return error_reply(404, EvalErrc::UnknownRater, "no package for rater '" + rater + "'");
  return json_reply(to_json(it->second));
}

ApiReply EvalService::get_scene(const std::string& item) const {
  const auto it = scenes_.find(item);
  if (it == scenes_.end()) return error_reply(404, EvalErrc::UnknownItem, "no item '" + item + "'");
  return {200, it->second};
}

ApiReply EvalService::get_truth(const std::string& item) const {
  if (!scenes_.count(item)) return error_reply(404, EvalErrc::UnknownItem, "no item '" + item + "'");
  const Program* p = program_of(item);
  if (!p) return error_reply(404, EvalErrc::UnknownItem, "no ground truth recorded for item '" + item + "'");
  return {200, p->truth};
}

ApiReply EvalService::get_source(const std::string& item) const {
  if (!scenes_.count(item)) return error_reply(404, EvalErrc::UnknownItem, "no item '" + item + "'");
  const Program* p = program_of(item);
  if (!p || !p->source) return error_reply(404, EvalErrc::UnknownItem, "no source recorded for item '" + item + "'");
  return {200, *p->source, "text/plain; charset=utf-8"};
}

ApiReply EvalService::get_progress(const std::string& rater) const {
  const auto it = packages_.find(rater);
  if (it == packages_.end()) return error_reply(404, EvalErrc::UnknownRater, "no package for rater '" + rater + "'");
  std::set<std::string> rated;
  {
    std::lock_guard lock(mutex_);
    for (const auto& r : ratings_)
      if (r.rater_id == rater) rated.insert(r.item_id);
  }
  json submitted = json::array();
  for (const auto& item : it->second.items)
    if (rated.count(item.item_id)) submitted.push_back(item.item_id);
  const std::size_t total = it->second.items.size(), done = submitted.size();
  return json_reply({{"rater_id", rater},
                     {"total", total},
                     {"rated", done},
                     {"remaining", total - done},
                     {"submitted", std::move(submitted)}});
}

ApiReply EvalService::get_ratings(const std::string& rater) const {
  if (!packages_.count(rater)) return error_reply(404, EvalErrc::UnknownRater, "no package for rater '" + rater + "'");
  json out = json::array();
  std::lock_guard lock(mutex_);
  for (const auto& r : ratings_)
    if (r.rater_id == rater) out.push_back(to_json(r));
  return json_reply(out);
}

ApiReply EvalService::post_rating(std::string_view body) {
  RatingRecord record;
  try {
    record = rating_from_json(json::parse(body));
  } catch (const json::exception& e) {
    return error_reply(400, EvalErrc::SchemaViolation, std::string("body is not JSON: ") + e.what());
  } catch (const EvalError& e) {
    return error_reply(400, e.code(), e.what());
  }
  const auto pkg = packages_.find(record.rater_id);
  if (pkg == packages_.end())
    return error_reply(404, EvalErrc::UnknownRater, "no package for rater '" + record.rater_id + "'");
  const auto& items = pkg->second.items;
  if (std::none_of(items.begin(), items.end(), [&](const PackageItem& i) { return i.item_id == record.item_id; }))
    return error_reply(404, EvalErrc::UnknownItem,
                       "item '" + record.item_id + "' is not in the package of " + record.rater_id);

  std::lock_guard lock(mutex_);
  for (const auto& r : ratings_)
    if (r.rater_id == record.rater_id && r.item_id == record.item_id)
      return {409, json{{"error", {{"code", std::string(to_string(EvalErrc::DuplicateRating))},
                                   {"message", record.rater_id + " already rated " + record.item_id}}},
                        {"stored", to_json(r)}}
                       .dump()};
  if (!ratings_path_.empty()) {
    if (ratings_path_.has_parent_path()) fs::create_directories(ratings_path_.parent_path());
    const bool fresh = !fs::exists(ratings_path_) || fs::file_size(ratings_path_) == 0;
    std::ofstream out(ratings_path_, std::ios::binary | std::ios::app);
    if (fresh) out << ratings_csv_header() << "\n";
    out << to_csv_row(record) << "\n";
    out.flush();
    if (!out) return {500, json{{"error", {{"code", "StoreFailure"}, {"message", "cannot append rating"}}}}.dump()};
  }
  ratings_.push_back(record);
  return json_reply(to_json(record), 201);
}

ApiReply EvalService::handle(std::string_view method, std::string_view path, std::string_view body) {
  constexpr std::string_view prefix = "/api/";
  if (path.substr(0, prefix.size()) != prefix)
    return error_reply(404, EvalErrc::UnknownItem, "no route " + std::string(path));
  std::string_view rest = path.substr(prefix.size());
  const auto slash = rest.find('/');
  const std::string resource(rest.substr(0, slash));
  const std::string id = slash == std::string_view::npos ? std::string() : std::string(rest.substr(slash + 1));

  if (method == "POST") {
    if (resource == "ratings" && id.empty()) return post_rating(body);
    return {405, json{{"error", {{"code", "MethodNotAllowed"}, {"message", "POST only on /api/ratings"}}}}.dump()};
  }
  if (method != "GET" || id.empty() || id.find('/') != std::string::npos)
    return error_reply(404, EvalErrc::UnknownItem, "no route " + std::string(method) + " " + std::string(path));
  if (resource == "packages") return get_package(id);
  if (resource == "scenes") return get_scene(id);
  if (resource == "truth") return get_truth(id);
  if (resource == "source") return get_source(id);
  if (resource == "progress") return get_progress(id);
  if (resource == "ratings") return get_ratings(id);
  return error_reply(404, EvalErrc::UnknownItem, "no route " + std::string(path));
}

void mount_eval_api(httplib::Server& http, EvalService& service) {
  auto serve = [&service](const httplib::Request& req, httplib::Response& res) {
    const ApiReply reply = service.handle(req.method, req.path, req.body);
    res.status = reply.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(reply.body, reply.content_type);
  };
  http.Get(R"(/api/.*)", serve);
  http.Post(R"(/api/.*)", serve);
  http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace callscape
