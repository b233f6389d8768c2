// agent run|matrix|replay: drives the LLM visualization sessions.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "callscape/agent.hpp"

namespace {

using namespace callscape;
using nlohmann::json;
namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const char* flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw std::runtime_error(std::string(flag) + " expects name=path, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

// Tool server connection shared by every subcommand: either binaries
// registered in-process or a remote server.
struct ToolOptions {
  std::vector<std::string> binaries;  // name=path
  std::vector<std::string> sidecars;  // name=path
  std::vector<std::string> sources;   // name=path
  std::string remote;

  void add_to(CLI::App* app) {
    app->add_option("--binary", binaries, "Register an ELF file in-process as name=path (repeatable)");
    app->add_option("--sidecar", sidecars, "Decompilation sidecar for a registered binary, name=path");
    app->add_option("--source", sources, "Source listing shown to raters, name=path");
    app->add_option("--toolserver", remote, "Use a running tool server at http://host:port instead");
  }

  std::unique_ptr<ToolServer> server;
  std::unique_ptr<ToolEndpoint> endpoint;
  std::unique_ptr<ToolClient> client;

  ToolClient& connect() {
    if (!remote.empty()) {
      endpoint = std::make_unique<HttpEndpoint>(remote);
    } else {
      if (binaries.empty()) throw std::runtime_error("give --binary name=path or --toolserver URL");
      std::map<std::string, std::string> sidecar_of;
      for (const auto& s : sidecars) sidecar_of.insert(split_assignment(s, "--sidecar"));
      std::vector<RegisteredFile> files;
      for (const auto& b : binaries) {
        const auto [name, path] = split_assignment(b, "--binary");
        BinaryProgram program = load_binary(path);
        if (auto it = sidecar_of.find(name); it != sidecar_of.end()) {
          auto result = attach_decompilation(std::move(program), slurp(it->second));
          for (const auto& w : result.warnings) std::cerr << "agent: " << w << "\n";
          program = std::move(result.program);
        }
        files.push_back(register_file(std::move(program), name));
      }
      server = std::make_unique<ToolServer>(std::move(files));
      endpoint = std::make_unique<InProcessEndpoint>(*server);
    }
    client = std::make_unique<ToolClient>(*endpoint);
    return *client;
  }

  void write_programs(const fs::path& out, const std::vector<RunConfig>& configs) {
    std::map<std::string, std::string> source_of;
    for (const auto& s : sources) source_of.insert(split_assignment(s, "--source"));
    std::set<std::string> done;
    for (const auto& c : configs) {
      if (!done.insert(c.program).second) continue;
      std::optional<fs::path> source;
      if (auto it = source_of.find(c.program); it != source_of.end()) source = it->second;
      write_program_info(out, c.program, *client, source);
    }
  }
};

std::unique_ptr<ChatProvider> make_provider(const std::string& kind) {
  if (kind == "stub") return std::make_unique<StubProvider>();
  if (kind == "openai") {
    auto options = OpenAICompatibleProvider::options_from_environment();
    if (options.api_key.empty())
      std::cerr << "agent: warning: no CALLSCAPE_LLM_API_KEY or OPENAI_API_KEY set\n";
    return std::make_unique<OpenAICompatibleProvider>(std::move(options));
  }
  throw std::runtime_error("unknown provider '" + kind + "'");
}

int run_and_report(const std::vector<RunConfig>& configs, ToolOptions& tools, const std::string& provider_kind,
                   const fs::path& out, int parallel, std::int64_t tpm) {
  ToolClient& client = tools.connect();
  for (const auto& c : configs) client.resolve_file_id(c.program);
  auto provider = make_provider(provider_kind);
  tools.write_programs(out, configs);
  MatrixOptions options;
  options.out_dir = out;
  options.parallelism = parallel;
  options.tokens_per_minute = tpm;
  options.on_record = [](const RunRecord& r) {
    std::cerr << r.run_id << ": "
              << (r.scene ? "scene" : "FAILED " + std::string(to_string(r.failure->code)) + ": " + r.failure->message)
              << " (" << r.transcript.tool_call_count << " tool calls, " << r.validation_retries << " retries, "
              << r.transcript.wall_seconds << " s)\n";
  };
  const auto records = run_matrix(configs, client, *provider, options);
  const auto summary = summarize(records);
  std::cout << to_json(summary).dump(2) << "\n";
  if (summary.scenes < summary.runs)
    std::cerr << "agent: warning: " << summary.runs - summary.scenes << " of " << summary.runs
              << " runs produced no scene\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM visualization agent: prompt, tool loop, scene capture"};
  app.require_subcommand(1);

  ToolOptions tools;
  std::string provider_kind = "openai", out_dir;
  int parallel = 1;
  std::int64_t tpm = 0;

  auto* run = app.add_subcommand("run", "Run one configuration");
  RunConfig single;
  std::string guidance = "low";
  run->add_option("--program", single.program, "Registered program name or file id")->required();
  run->add_option("--guidance", guidance, "low or high")->check(CLI::IsMember({"low", "high"}));
  run->add_option("--model", single.model, "Provider model name")->required();
  run->add_option("--reps", single.repetitions, "Repetitions")->check(CLI::PositiveNumber);
  run->add_option("--max-tool-calls", single.max_tool_calls)->check(CLI::PositiveNumber);
  run->add_option("--max-retries", single.max_retries)->check(CLI::NonNegativeNumber);

  auto* matrix = app.add_subcommand("matrix", "Run every configuration of a matrix file");
  std::string matrix_path;
  matrix->add_option("--config", matrix_path, "Matrix document (omit for the default 2x2x2, 5 repetitions)");

  for (auto* sub : {run, matrix}) {
    sub->add_option("--out", out_dir, "Run store directory")->required();
    sub->add_option("--provider", provider_kind, "openai or stub")->check(CLI::IsMember({"openai", "stub"}));
    sub->add_option("--parallel", parallel, "Concurrent sessions")->check(CLI::PositiveNumber);
    sub->add_option("--tpm", tpm, "Tokens-per-minute budget shared by all sessions (0: unlimited)");
    tools.add_to(sub);
  }

  auto* rep = app.add_subcommand("replay", "Re-execute stored sessions and compare with the recording");
  std::string store, run_id;
  rep->add_option("--store", store, "Run store directory")->required();
  rep->add_option("--run", run_id, "One run id (default: every run)");
  tools.add_to(rep);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      single.guidance = guidance_from_string(guidance);
      return run_and_report({single}, tools, provider_kind, out_dir, parallel, tpm);
    }
    if (*matrix) {
      const auto configs = matrix_path.empty() ? default_matrix() : matrix_from_json(json::parse(slurp(matrix_path)));
      return run_and_report(configs, tools, provider_kind, out_dir, parallel, tpm);
    }
    ToolClient& client = tools.connect();
    std::vector<std::string> ids;
    if (!run_id.empty()) {
      ids.push_back(run_id);
    } else {
      for (const auto& r : read_run_store(store)) ids.push_back(r.run_id);
    }
    int mismatches = 0;
    for (const auto& id : ids) {
      const auto recorded = read_run(fs::path(store) / "runs" / id);
      const auto replayed = replay(store, id, client);
      const bool same = canonical_record(recorded).dump() == canonical_record(replayed).dump();
      mismatches += !same;
      std::cout << id << ": " << (same ? "identical" : "DIFFERS") << "\n";
    }
    return mismatches == 0 ? 0 : 1;
  } catch (const AgentError& e) {
    std::cerr << "agent: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "agent: " << e.what() << "\n";
    return 2;
  }
}
