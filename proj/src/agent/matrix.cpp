#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "callscape/agent.hpp"

namespace callscape {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AgentError(AgentErrc::MissingRecording, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string run_id_for(const RunConfig& config, int repetition) {
  return config.config_id() + "-r" + std::to_string(repetition);
}

std::uint64_t seed_for(const std::string& run_id) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : run_id) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

MatrixSummary summarize(const std::vector<RunRecord>& records) {
  MatrixSummary s;
  s.runs = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (r.scene) ++s.scenes;
    if (r.failure) ++s.failures[std::string(to_string(r.failure->code))];
  }
  return s;
}

json to_json(const MatrixSummary& s) {
  return {{"runs", s.runs}, {"scenes", s.scenes}, {"failures", s.failures}};
}

void write_run(const fs::path& out_dir, const RunRecord& r) {
  const fs::path dir = out_dir / "runs" / r.run_id;
  fs::create_directories(dir);
  json config = to_json(r.config);
  config["run_id"] = r.run_id;
  config["repetition"] = r.repetition;
  config["seed"] = r.seed;
  write_json(dir / "config.json", config);
  write_json(dir / "transcript.json", to_json(r.transcript));
  fs::remove(dir / "scene.json");
  fs::remove(dir / "metrics.json");
  if (r.scene) write_json(dir / "scene.json", to_json(*r.scene));
  if (r.metrics) write_json(dir / "metrics.json", to_json(*r.metrics));
  write_json(dir / "run.json",
             {{"run_id", r.run_id},
              {"file_id", r.file_id},
              {"validation_retries", r.validation_retries},
              {"failure", r.failure ? json{{"code", std::string(to_string(r.failure->code))},
                                           {"message", r.failure->message}}
                                    : json()},
              {"sampling", {{"temperature", "provider default"}}}});
}

RunRecord read_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw AgentError(AgentErrc::MissingRecording, "no recorded run at " + dir.string());
  try {
    RunRecord r;
    const json config = json::parse(slurp(dir / "config.json"));
    r.config = run_config_from_json(config);
    r.run_id = config.at("run_id").get<std::string>();
    r.repetition = config.at("repetition").get<int>();
    r.seed = config.at("seed").get<std::uint64_t>();
    r.transcript = transcript_from_json(json::parse(slurp(dir / "transcript.json")));
    const json run = json::parse(slurp(dir / "run.json"));
    r.file_id = run.at("file_id").get<std::string>();
    r.validation_retries = run.at("validation_retries").get<int>();
    if (!run.at("failure").is_null()) {
      const auto code = agent_errc_from_string(run["failure"].at("code").get<std::string>());
      r.failure = RunFailure{code.value_or(AgentErrc::ProviderError), run["failure"].value("message", "")};
    }
    if (fs::exists(dir / "scene.json")) r.scene = validate_scene(slurp(dir / "scene.json"));
    if (fs::exists(dir / "metrics.json"))
      r.metrics = metrics_from_json(json::parse(slurp(dir / "metrics.json")));
    return r;
  } catch (const json::exception& e) {
    throw AgentError(AgentErrc::MissingRecording, "corrupt recording at " + dir.string() + ": " + e.what());
  }
}

std::vector<RunRecord> read_run_store(const fs::path& out_dir) {
  const fs::path runs = out_dir / "runs";
  if (!fs::is_directory(runs)) throw AgentError(AgentErrc::MissingRecording, "no run store at " + out_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunRecord> out;
  for (const auto& d : dirs) out.push_back(read_run(d));
  return out;
}

std::vector<RunRecord> run_matrix(const std::vector<RunConfig>& configs, ToolClient& tools,
                                  ChatProvider& provider, const MatrixOptions& options) {
  struct Job {
    const RunConfig* config;
    int repetition;
  };
  std::vector<Job> jobs;
  for (const auto& c : configs)
    for (int rep = 1; rep <= c.repetitions; ++rep) jobs.push_back({&c, rep});

  std::vector<RunRecord> records(jobs.size());
  TokenRateLimiter limiter(options.tokens_per_minute);
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      SessionOptions session;
      session.run_id = run_id_for(*job.config, job.repetition);
      session.repetition = job.repetition;
      session.seed = seed_for(session.run_id);
      session.limiter = &limiter;
      ChatProvider& chat = options.provider_for ? options.provider_for(*job.config, job.repetition) : provider;
      RunRecord rec;
      try {
        rec = run_session(*job.config, tools, chat, session);
      } catch (const AgentError& e) {
        rec.run_id = session.run_id;
        rec.config = *job.config;
        rec.repetition = job.repetition;
        rec.seed = session.seed;
        rec.failure = RunFailure{e.code(), e.what()};
      }
      if (!options.out_dir.empty()) write_run(options.out_dir, rec);
      if (options.on_record) {
        std::lock_guard lock(report_mutex);
        options.on_record(rec);
      }
      records[i] = std::move(rec);
    }
  };

  const int threads = std::max(1, std::min<int>(options.parallelism, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (!options.out_dir.empty()) write_json(options.out_dir / "summary.json", to_json(summarize(records)));
  return records;
}

void write_program_info(const fs::path& out_dir, const std::string& program, ToolClient& tools,
                        const std::optional<fs::path>& source) {
  std::string name = program, file_id = tools.resolve_file_id(program);
  for (const auto& f : tools.files())
    if (f.file_id == file_id) name = f.name;
  const auto graph = tools.call("get_call_graph", {{"file_id", file_id}});
  if (!graph.ok()) throw AgentError(AgentErrc::ProviderError, "tool server: " + graph.error->message);
  const fs::path dir = out_dir / "programs" / name;
  fs::create_directories(dir);
  write_json(dir / "program.json", {{"name", name}, {"file_id", file_id}, {"has_source", source.has_value()}});
  write_json(dir / "truth.json", *graph.result);
  if (source) fs::copy_file(*source, dir / "source.txt", fs::copy_options::overwrite_existing);
}

RunRecord replay(const fs::path& out_dir, const std::string& run_id, ToolClient& tools) {
  const RunRecord recorded = read_run(out_dir / "runs" / run_id);
  std::vector<ChatMessage> replies;
  for (const auto& m : recorded.transcript.messages)
    if (m.role == "assistant") replies.push_back(m);
  ReplayProvider provider(std::move(replies), recorded.transcript.turn_usage);
  SessionOptions session;
  session.run_id = recorded.run_id;
  session.repetition = recorded.repetition;
  session.seed = recorded.seed;
  return run_session(recorded.config, tools, provider, session);
}

}  // namespace callscape
