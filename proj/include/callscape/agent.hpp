#pragma once

// LLM tool-calling client: prompts, chat providers, the session loop, the
// configuration matrix and the on-disk run store.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "callscape/metrics.hpp"
#include "callscape/scene.hpp"
#include "callscape/tool_server.hpp"
#include "json.hpp"

namespace callscape {

enum class AgentErrc {
  UnknownProgram,
  BudgetExhausted,
  RetriesExhausted,
  ProviderError,
  RateLimited,
  MissingRecording,
  ConfigInvalid,
};

std::string_view to_string(AgentErrc code);
std::optional<AgentErrc> agent_errc_from_string(std::string_view name);

class AgentError : public std::runtime_error {
 public:
  AgentError(AgentErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  AgentErrc code() const { return code_; }

 private:
  AgentErrc code_;
};

// ---------------------------------------------------------------------------
// Configuration and prompts.

enum class Guidance { Low, High };

std::string_view to_string(Guidance g);
Guidance guidance_from_string(std::string_view name);

struct RunConfig {
  std::string program;  // registered program name or file id
  Guidance guidance = Guidance::Low;
  std::string model;
  int repetitions = 5;
  int max_tool_calls = 50;
  int max_retries = 3;

  // "<program>-<guidance>-<model>", restricted to [A-Za-z0-9._-].
  std::string config_id() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& doc);

inline const std::vector<std::string> kDefaultPrograms = {"hexdump", "v11"};
inline const std::vector<std::string> kDefaultModels = {"gpt-4.1", "o4-mini"};

// programs x {low, high} x models, in that nesting order.
std::vector<RunConfig> default_matrix(int repetitions = 5);

// A matrix file: {"programs": [...], "guidance": [...], "models": [...],
// "repetitions": N, "max_tool_calls": N, "max_retries": N}; every key optional.
std::vector<RunConfig> matrix_from_json(const nlohmann::json& doc);

// The common introduction, with the binary's file id placeholder.
extern const std::string_view kPromptIntroduction;
extern const std::string_view kLowGuidanceConclusion;
extern const std::string_view kHighGuidanceConclusion;

std::string build_prompt(Guidance guidance, std::string_view file_id);

// ---------------------------------------------------------------------------
// Tool server access.

class ToolEndpoint {
 public:
  virtual ~ToolEndpoint() = default;
  // One JSON-RPC request; returns the response object.
  virtual nlohmann::json rpc(const nlohmann::json& request) = 0;
};

class InProcessEndpoint : public ToolEndpoint {
 public:
  explicit InProcessEndpoint(const ToolServer& server) : server_(server) {}
  nlohmann::json rpc(const nlohmann::json& request) override;

 private:
  const ToolServer& server_;
};

// POSTs to <base_url>/rpc.
class HttpEndpoint : public ToolEndpoint {
 public:
  explicit HttpEndpoint(std::string base_url) : base_url_(std::move(base_url)) {}
  nlohmann::json rpc(const nlohmann::json& request) override;

 private:
  std::string base_url_;
};

struct ServerFile {
  std::string file_id;
  std::string name;
};

class ToolClient {
 public:
  explicit ToolClient(ToolEndpoint& endpoint) : endpoint_(endpoint) {}

  std::vector<ServerFile> files();
  std::vector<ToolDescriptor> list_tools();
  ToolOutcome call(const std::string& tool, const nlohmann::json& arguments);

  // Accepts a program name or a file id.
  std::string resolve_file_id(const std::string& program);

 private:
  nlohmann::json request(const std::string& method, nlohmann::json params);

  ToolEndpoint& endpoint_;
  std::mutex mutex_;
  std::int64_t next_id_ = 1;
};

std::string build_prompt(const RunConfig& config, ToolClient& tools);

// ---------------------------------------------------------------------------
// Chat wire types.

inline constexpr std::string_view kSubmitSceneTool = "submit_scene";

struct ToolCallRequest {
  std::string id;
  std::string name;
  nlohmann::json arguments;  // a string when the model sent unparseable JSON

  bool operator==(const ToolCallRequest&) const = default;
};

struct ChatMessage {
  std::string role;  // system | user | assistant | tool
  std::string content;
  std::vector<ToolCallRequest> tool_calls;
  std::string tool_call_id;  // role == tool

  bool operator==(const ChatMessage&) const = default;
};

nlohmann::json to_json(const ChatMessage& message);
ChatMessage chat_message_from_json(const nlohmann::json& doc);

struct TokenUsage {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;

  std::int64_t total() const { return prompt + completion; }
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  nlohmann::json tools = nlohmann::json::array();  // function definitions
  std::uint64_t seed = 0;
};

struct ChatResponse {
  ChatMessage message;
  TokenUsage usage;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Throws AgentError(ProviderError | RateLimited).
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Function definitions for every server tool plus submit_scene.
nlohmann::json function_definitions(const std::vector<ToolDescriptor>& tools);
nlohmann::json submit_scene_parameters();

// ---------------------------------------------------------------------------
// Providers.

// Deterministic offline agent. Calls list_functions and get_call_graph, then
// submits a layered layout of the returned graph. Encoding choices depend on
// the guidance text in the prompt and on the model name; position jitter
// depends on the request seed.
class StubProvider : public ChatProvider {
 public:
  ChatResponse complete(const ChatRequest& request) override;
};

// Returns queued steps in order; ProviderError once exhausted.
class ScriptedProvider : public ChatProvider {
 public:
  using Step = std::function<ChatMessage(const ChatRequest&)>;

  explicit ScriptedProvider(std::vector<Step> steps) : steps_(std::move(steps)) {}
  explicit ScriptedProvider(const std::vector<ChatMessage>& replies);

  ChatResponse complete(const ChatRequest& request) override;
  std::size_t calls() const { return next_; }

 private:
  std::vector<Step> steps_;
  std::size_t next_ = 0;
};

// Replays the assistant messages of a recorded transcript.
class ReplayProvider : public ChatProvider {
 public:
  ReplayProvider(std::vector<ChatMessage> assistant_messages, std::vector<TokenUsage> usage);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::vector<ChatMessage> replies_;
  std::vector<TokenUsage> usage_;
  std::size_t next_ = 0;
};

struct BackoffPolicy {
  int max_attempts = 6;
  std::chrono::milliseconds initial{1000};
  std::chrono::milliseconds cap{32000};
  std::function<void(std::chrono::milliseconds)> sleep;  // default: this_thread
};

// Chat-completions endpoint with function calling. 429 and 5xx responses are
// retried with exponential backoff; Retry-After is honoured up to the cap.
class OpenAICompatibleProvider : public ChatProvider {
 public:
  struct Options {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    BackoffPolicy backoff;
    std::chrono::seconds timeout{600};
    bool send_seed = false;
  };

  explicit OpenAICompatibleProvider(Options options);
  // CALLSCAPE_LLM_BASE_URL, CALLSCAPE_LLM_API_KEY (falls back to OPENAI_API_KEY).
  static Options options_from_environment();

  ChatResponse complete(const ChatRequest& request) override;

 private:
  Options options_;
};

nlohmann::json chat_request_body(const ChatRequest& request, bool send_seed);
ChatResponse parse_chat_response(const nlohmann::json& body);

// Sliding one-minute token budget shared by concurrent sessions.
class TokenRateLimiter {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  using Sleep = std::function<void(std::chrono::milliseconds)>;

  // tokens_per_minute <= 0 disables limiting.
  explicit TokenRateLimiter(std::int64_t tokens_per_minute, Clock clock = {}, Sleep sleep = {});

  // Blocks until the spend over the last minute is below the budget.
  void acquire();
  void record(std::int64_t tokens);
  std::int64_t spent_last_minute();

 private:
  std::int64_t prune_locked(std::chrono::steady_clock::time_point now);

  std::int64_t budget_;
  Clock clock_;
  Sleep sleep_;
  std::mutex mutex_;
  std::vector<std::pair<std::chrono::steady_clock::time_point, std::int64_t>> spend_;
};

// ---------------------------------------------------------------------------
// Sessions.

struct Transcript {
  std::vector<ChatMessage> messages;
  std::vector<TokenUsage> turn_usage;  // one entry per assistant message
  int tool_call_count = 0;
  std::string started;   // UTC, ISO 8601
  std::string finished;  // UTC, ISO 8601
  TokenUsage token_usage;
  double wall_seconds = 0;
};

nlohmann::json to_json(const Transcript& transcript);
Transcript transcript_from_json(const nlohmann::json& doc);

struct RunFailure {
  AgentErrc code;
  std::string message;
};

struct RunRecord {
  std::string run_id;
  RunConfig config;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string file_id;
  Transcript transcript;
  std::optional<Scene> scene;
  std::optional<MetricsReport> metrics;
  int validation_retries = 0;
  std::optional<RunFailure> failure;
};

// Every field except wall-clock timing.
nlohmann::json canonical_record(const RunRecord& record);
nlohmann::json to_json(const RunRecord& record);

struct SessionOptions {
  std::string run_id = "run";
  int repetition = 0;
  std::uint64_t seed = 0;
  TokenRateLimiter* limiter = nullptr;
};

// Never throws for budget, retry or provider failures; they are recorded in
// RunRecord::failure. Throws AgentError(UnknownProgram) before any chat turn.
RunRecord run_session(const RunConfig& config, ToolClient& tools, ChatProvider& provider,
                      const SessionOptions& options = {});

// ---------------------------------------------------------------------------
// Matrix and run store.
//
// <out>/runs/<run_id>/{config,transcript,scene,metrics,run}.json, plus
// <out>/summary.json. scene.json and metrics.json exist only on success.

std::string run_id_for(const RunConfig& config, int repetition);
std::uint64_t seed_for(const std::string& run_id);

struct MatrixOptions {
  std::filesystem::path out_dir;  // empty: do not persist
  int parallelism = 1;
  std::int64_t tokens_per_minute = 0;
  // Called from worker threads; must be thread-safe when parallelism > 1.
  std::function<ChatProvider&(const RunConfig&, int repetition)> provider_for;
  std::function<void(const RunRecord&)> on_record;
};

struct MatrixSummary {
  int runs = 0;
  int scenes = 0;
  std::map<std::string, int> failures;  // by AgentErrc name
};

MatrixSummary summarize(const std::vector<RunRecord>& records);
nlohmann::json to_json(const MatrixSummary& summary);

// Records are returned in matrix order (config, then repetition).
std::vector<RunRecord> run_matrix(const std::vector<RunConfig>& configs, ToolClient& tools,
                                  ChatProvider& provider, const MatrixOptions& options = {});

void write_run(const std::filesystem::path& out_dir, const RunRecord& record);
RunRecord read_run(const std::filesystem::path& run_dir);
std::vector<RunRecord> read_run_store(const std::filesystem::path& out_dir);

// <out>/programs/<name>/{program.json, truth.json[, source.txt]}: what the
// evaluation harness shows next to each scene.
void write_program_info(const std::filesystem::path& out_dir, const std::string& program, ToolClient& tools,
                        const std::optional<std::filesystem::path>& source = std::nullopt);

// Re-executes a stored session against the recorded assistant turns.
// Throws AgentError(MissingRecording).
RunRecord replay(const std::filesystem::path& out_dir, const std::string& run_id, ToolClient& tools);

}  // namespace callscape
