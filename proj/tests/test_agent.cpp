#include "callscape/agent.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "callscape/http.hpp"
#include "callscape/tool_server_http.hpp"

namespace callscape {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fixture(const char* name) { return std::string(CALLSCAPE_FIXTURE_DIR) + "/" + name; }

class AgentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::vector<RegisteredFile> files;
    files.push_back(register_file(load_binary(fixture("chain")), "chain"));
    files.push_back(register_file(load_binary(fixture("v11")), "v11"));
    files.push_back(register_file(load_binary(fixture("hexdump")), "hexdump"));
    server_ = new ToolServer(std::move(files));
  }
  static void TearDownTestSuite() { delete server_; }

  void SetUp() override {
    endpoint_ = std::make_unique<InProcessEndpoint>(*server_);
    client_ = std::make_unique<ToolClient>(*endpoint_);
  }

  static std::string id(const char* name) { return server_->file_by_name(name)->program.file_id; }

  static RunConfig config(std::string program = "chain", Guidance g = Guidance::Low) {
    RunConfig c;
    c.program = std::move(program);
    c.guidance = g;
    c.model = "gpt-4.1";
    c.repetitions = 1;
    return c;
  }

  static fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("callscape_agent_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
  }

  static ToolServer* server_;
  std::unique_ptr<InProcessEndpoint> endpoint_;
  std::unique_ptr<ToolClient> client_;
};

ToolServer* AgentTest::server_ = nullptr;

ChatMessage calls(std::vector<ToolCallRequest> tool_calls, std::string content = {}) {
  return {"assistant", std::move(content), std::move(tool_calls), {}};
}

ChatMessage text(std::string content) { return {"assistant", std::move(content), {}, {}}; }

json chain_scene() {
  return json::parse(R"({
    "nodes":[
      {"id":"main","label":"main","position":[0,0,0],"shape":"cone","color":"#E04040","scale":1},
      {"id":"foo","label":"foo","position":[0,-2,0],"shape":"sphere","color":"#4080C0","scale":0.5},
      {"id":"bar","label":"bar","position":[0,-4,0],"shape":"sphere","color":"#4080C0","scale":0.5}],
    "edges":[{"source":"main","target":"foo"},{"source":"foo","target":"bar"}],
    "reasoning":"top-down chain"})");
}

int tool_messages(const Transcript& t) {
  return static_cast<int>(std::count_if(t.messages.begin(), t.messages.end(),
                                        [](const ChatMessage& m) { return m.role == "tool"; }));
}

// ---------------------------------------------------------------------------
// Prompts.

TEST_F(AgentTest, LowGuidancePromptEndsWithBareInstruction) {
  const auto prompt = build_prompt(config("v11", Guidance::Low), *client_);
  EXPECT_TRUE(prompt.ends_with("to convey the most meaning to the user. \nExplain your reasoning."));
  EXPECT_EQ(prompt.find("- Group related elements spatially"), std::string::npos);
  EXPECT_NE(prompt.find("The binary file has ID = " + id("v11") + "\n"), std::string::npos);
  EXPECT_EQ(prompt.find("<insert ID here>"), std::string::npos);
}

TEST_F(AgentTest, HighGuidancePromptCarriesTheFiveBullets) {
  const auto prompt = build_prompt(config("v11", Guidance::High), *client_);
  for (const char* bullet :
       {"- Group related elements spatially\n",
        "- Use color or shape to distinguish different function types or behaviors\n",
        "- Avoid unnecessary clutter or overlap\n", "- Place important elements where they are easy to notice\n",
        "- Label elements when that helps clarity\n"})
    EXPECT_NE(prompt.find(bullet), std::string::npos) << bullet;
  EXPECT_TRUE(prompt.ends_with("\nExplain your reasoning."));
}

TEST_F(AgentTest, PromptsShareTheIntroductionVerbatim) {
  const auto low = build_prompt(Guidance::Low, "bin-x");
  const auto high = build_prompt(Guidance::High, "bin-x");
  const auto marker = low.find("The binary file has ID");
  ASSERT_NE(marker, std::string::npos);
  EXPECT_EQ(low.substr(0, marker), high.substr(0, marker));
  const std::string intro = std::string(kPromptIntroduction).replace(
      kPromptIntroduction.find("<insert ID here>"), 16, "bin-x");
  EXPECT_EQ(low, intro + std::string(kLowGuidanceConclusion));
  EXPECT_EQ(high, intro + std::string(kHighGuidanceConclusion));
  EXPECT_TRUE(low.starts_with("You are an assistant in an immersive virtual reality \n"));
}

TEST_F(AgentTest, UnknownProgramIsRejected) {
  try {
    build_prompt(config("ls"), *client_);
    FAIL();
  } catch (const AgentError& e) {
    EXPECT_EQ(e.code(), AgentErrc::UnknownProgram);
  }
  StubProvider stub;
  EXPECT_THROW(run_session(config("ls"), *client_, stub), AgentError);
  EXPECT_EQ(client_->resolve_file_id(id("v11")), id("v11"));
}

// ---------------------------------------------------------------------------
// Configuration.

TEST(RunConfigTest, DefaultMatrixHasEightConfigsAndFortyRuns) {
  const auto m = default_matrix();
  ASSERT_EQ(m.size(), 8u);
  int runs = 0;
  std::set<std::string> ids;
  for (const auto& c : m) {
    runs += c.repetitions;
    ids.insert(c.config_id());
    EXPECT_EQ(c.max_tool_calls, 50);
    EXPECT_EQ(c.max_retries, 3);
  }
  EXPECT_EQ(runs, 40);
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_TRUE(ids.count("v11-high-o4-mini"));
}

TEST(RunConfigTest, JsonRoundTripAndMatrixDocuments) {
  RunConfig c;
  c.program = "v11";
  c.guidance = Guidance::High;
  c.model = "o4-mini";
  c.repetitions = 2;
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
  const auto m = matrix_from_json(json::parse(R"({"programs":["v11"],"models":["m1"],"repetitions":3})"));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].guidance, Guidance::Low);
  EXPECT_EQ(m[1].repetitions, 3);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"guidance":["medium"]})")), AgentError);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"repetitions":0})")), AgentError);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"models":[]})")), AgentError);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"models":["a","a"]})")), AgentError);
}

// ---------------------------------------------------------------------------
// Sessions.

TEST_F(AgentTest, ScriptedListThenSubmitYieldsScene) {
  ScriptedProvider provider({calls({{"c1", "list_functions", {{"file_id", id("chain")}}}}),
                             calls({{"c2", "submit_scene", chain_scene()}})});
  const auto rec = run_session(config(), *client_, provider);
  ASSERT_TRUE(rec.scene.has_value()) << (rec.failure ? rec.failure->message : "");
  EXPECT_FALSE(rec.failure.has_value());
  EXPECT_EQ(rec.transcript.tool_call_count, 2);
  EXPECT_EQ(tool_messages(rec.transcript), 2);
  EXPECT_EQ(rec.validation_retries, 0);
  EXPECT_EQ(rec.scene->nodes.size(), 3u);
  ASSERT_TRUE(rec.metrics.has_value());
  EXPECT_EQ(rec.metrics->hierarchy_depth, 2);
  EXPECT_EQ(rec.file_id, id("chain"));

  // The list_functions result reached the model verbatim.
  const auto& listing = rec.transcript.messages[2];
  EXPECT_EQ(listing.role, "tool");
  EXPECT_EQ(listing.tool_call_id, "c1");
  EXPECT_NE(listing.content.find("\"foo\""), std::string::npos);
  EXPECT_EQ(rec.transcript.messages.front().role, "user");
  EXPECT_GE(rec.transcript.wall_seconds, 0.0);
  EXPECT_FALSE(rec.transcript.started.empty());
}

TEST_F(AgentTest, InvalidThenCorrectedSceneCountsOneRetry) {
  json bad = chain_scene();
  bad["edges"].push_back({{"source", "main"}, {"target", "ghost"}});
  std::string feedback;
  ScriptedProvider provider(std::vector<ScriptedProvider::Step>{
      [&](const ChatRequest&) { return calls({{"c1", "submit_scene", bad}}); },
      [&](const ChatRequest& r) {
        feedback = r.messages.back().content;
        return calls({{"c2", "submit_scene", chain_scene()}});
      }});
  const auto rec = run_session(config(), *client_, provider);
  ASSERT_TRUE(rec.scene.has_value());
  EXPECT_EQ(rec.validation_retries, 1);
  EXPECT_EQ(rec.transcript.tool_call_count, 2);
  const auto errors = json::parse(feedback);
  ASSERT_TRUE(errors.contains("errors"));
  EXPECT_EQ(errors["errors"][0]["rule"], "dangling-edge");
}

TEST_F(AgentTest, NeverSubmittingExhaustsRetries) {
  auto cfg = config();
  ScriptedProvider provider(std::vector<ChatMessage>(10, text("Here is my analysis.")));
  const auto rec = run_session(cfg, *client_, provider);
  EXPECT_FALSE(rec.scene.has_value());
  EXPECT_FALSE(rec.metrics.has_value());
  ASSERT_TRUE(rec.failure.has_value());
  EXPECT_EQ(rec.failure->code, AgentErrc::RetriesExhausted);
  EXPECT_EQ(provider.calls(), static_cast<std::size_t>(cfg.max_retries + 1));
  EXPECT_EQ(rec.transcript.tool_call_count, 0);
}

TEST_F(AgentTest, PersistentlyInvalidScenesExhaustRetries) {
  json bad = chain_scene();
  bad["nodes"][0]["shape"] = "pyramid";
  ScriptedProvider provider(std::vector<ChatMessage>(10, calls({{"c", "submit_scene", bad}})));
  const auto rec = run_session(config(), *client_, provider);
  ASSERT_TRUE(rec.failure.has_value());
  EXPECT_EQ(rec.failure->code, AgentErrc::RetriesExhausted);
  EXPECT_EQ(rec.transcript.tool_call_count, 4);
  EXPECT_EQ(rec.validation_retries, 4);
}

TEST_F(AgentTest, ToolBudgetIsNeverExceeded) {
  auto cfg = config();
  cfg.max_tool_calls = 7;
  ScriptedProvider provider(std::vector<ScriptedProvider::Step>(
      20, [&](const ChatRequest&) {
        return calls({{"a", "file_stats", {{"file_id", id("chain")}}}, {"b", "list_functions", {{"file_id", id("chain")}}}});
      }));
  const auto rec = run_session(cfg, *client_, provider);
  ASSERT_TRUE(rec.failure.has_value());
  EXPECT_EQ(rec.failure->code, AgentErrc::BudgetExhausted);
  EXPECT_EQ(rec.transcript.tool_call_count, 7);
  EXPECT_EQ(tool_messages(rec.transcript), 7);
}

TEST_F(AgentTest, ToolErrorsAreFedBackAndTheSessionContinues) {
  ScriptedProvider provider({calls({{"c1", "frobnicate", json::object()},
                                    {"c2", "get_decompilation", {{"file_id", "bin-nope"}, {"function", "main"}}}}),
                             calls({{"c3", "submit_scene", "{not json"}}),
                             calls({{"c4", "submit_scene", chain_scene()}})});
  const auto rec = run_session(config(), *client_, provider);
  ASSERT_TRUE(rec.scene.has_value());
  const auto first = json::parse(rec.transcript.messages[2].content);
  EXPECT_EQ(first["error"]["code"], static_cast<int>(ToolErrc::UnknownTool));
  const auto second = json::parse(rec.transcript.messages[3].content);
  EXPECT_EQ(second["error"]["code"], static_cast<int>(ToolErrc::UnknownFileId));
  EXPECT_EQ(rec.validation_retries, 1);
  EXPECT_EQ(rec.transcript.tool_call_count, 4);
}

TEST_F(AgentTest, ProviderFailureIsRecordedNotThrown) {
  ScriptedProvider provider(std::vector<ScriptedProvider::Step>{[](const ChatRequest&) -> ChatMessage {
    throw AgentError(AgentErrc::RateLimited, "quota");
  }});
  const auto rec = run_session(config(), *client_, provider);
  ASSERT_TRUE(rec.failure.has_value());
  EXPECT_EQ(rec.failure->code, AgentErrc::RateLimited);
  ScriptedProvider empty(std::vector<ChatMessage>{});
  EXPECT_EQ(run_session(config(), *client_, empty).failure->code, AgentErrc::ProviderError);
}

TEST_F(AgentTest, SelfLoopNotInTruthIsRejectedBySubmitScene) {
  json looped = chain_scene();
  looped["edges"].push_back({{"source", "foo"}, {"target", "foo"}});
  ScriptedProvider provider({calls({{"c1", "submit_scene", looped}}), calls({{"c2", "submit_scene", chain_scene()}})});
  const auto rec = run_session(config(), *client_, provider);
  EXPECT_EQ(rec.validation_retries, 1);
  EXPECT_NE(rec.transcript.messages[2].content.find("self-loop"), std::string::npos);
}

TEST_F(AgentTest, StubSessionsValidateOnEveryProgram) {
  StubProvider stub;
  for (const char* program : {"chain", "v11", "hexdump"}) {
    for (auto g : {Guidance::Low, Guidance::High}) {
      const auto rec = run_session(config(program, g), *client_, stub, {"r", 1, 42, nullptr});
      ASSERT_TRUE(rec.scene.has_value()) << program << (rec.failure ? rec.failure->message : "");
      EXPECT_EQ(rec.transcript.tool_call_count, 3);
      EXPECT_EQ(rec.validation_retries, 0);
      const auto report = correctness_report(*rec.scene, server_->file_by_name(program)->graph);
      EXPECT_DOUBLE_EQ(report.node_coverage, 1.0) << program;
      EXPECT_DOUBLE_EQ(report.edge_coverage, 1.0) << program;
    }
  }
}

TEST_F(AgentTest, StubHighGuidanceUsesMoreShapes) {
  StubProvider stub;
  const auto low = run_session(config("v11", Guidance::Low), *client_, stub, {"r", 1, 1, nullptr});
  const auto high = run_session(config("v11", Guidance::High), *client_, stub, {"r", 1, 1, nullptr});
  EXPECT_EQ(low.metrics->shape_diversity, 1);
  EXPECT_GT(high.metrics->shape_diversity, low.metrics->shape_diversity);
}

TEST_F(AgentTest, StubPipelineIsReproducible) {
  StubProvider stub;
  const auto a = run_session(config("hexdump", Guidance::High), *client_, stub, {"x", 2, 99, nullptr});
  const auto b = run_session(config("hexdump", Guidance::High), *client_, stub, {"x", 2, 99, nullptr});
  EXPECT_EQ(canonical_record(a).dump(), canonical_record(b).dump());
  const auto c = run_session(config("hexdump", Guidance::High), *client_, stub, {"x", 2, 100, nullptr});
  EXPECT_NE(canonical_bytes(*a.scene), canonical_bytes(*c.scene));
}

TEST_F(AgentTest, TranscriptRoundTrips) {
  StubProvider stub;
  const auto rec = run_session(config("v11"), *client_, stub);
  const auto doc = to_json(rec.transcript);
  EXPECT_EQ(to_json(transcript_from_json(json::parse(doc.dump()))), doc);
}

// ---------------------------------------------------------------------------
// Matrix, store and replay.

TEST_F(AgentTest, DefaultMatrixWithStubYieldsFortyScenes) {
  const auto out = scratch("matrix");
  StubProvider stub;
  MatrixOptions options;
  options.out_dir = out;
  const auto records = run_matrix(default_matrix(), *client_, stub, options);
  ASSERT_EQ(records.size(), 40u);
  std::set<std::string> ids;
  for (const auto& r : records) {
    EXPECT_TRUE(r.scene.has_value()) << r.run_id;
    ids.insert(r.run_id);
    for (const char* f : {"config.json", "transcript.json", "scene.json", "metrics.json", "run.json"})
      EXPECT_TRUE(fs::exists(out / "runs" / r.run_id / f)) << r.run_id << "/" << f;
  }
  EXPECT_EQ(ids.size(), 40u);
  const auto summary = json::parse(std::ifstream(out / "summary.json"));
  EXPECT_EQ(summary["runs"], 40);
  EXPECT_EQ(summary["scenes"], 40);

  const auto stored = read_run_store(out);
  ASSERT_EQ(stored.size(), 40u);
  for (const auto& s : stored) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const RunRecord& r) { return r.run_id == s.run_id; });
    ASSERT_NE(it, records.end());
    EXPECT_EQ(canonical_record(s).dump(), canonical_record(*it).dump()) << s.run_id;
  }
  fs::remove_all(out);
}

TEST_F(AgentTest, SingleConfigSingleRepetition) {
  StubProvider stub;
  const auto records = run_matrix({config("v11")}, *client_, stub);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].run_id, "v11-low-gpt-4.1-r1");
}

class FailingOnOneConfig : public ChatProvider {
 public:
  ChatResponse complete(const ChatRequest& request) override {
    const bool high = request.messages.front().content.find("- Group related") != std::string::npos;
    if (request.model == "o4-mini" && high && request.messages.front().content.find(bad_file_) != std::string::npos)
      throw AgentError(AgentErrc::ProviderError, "simulated outage");
    return stub_.complete(request);
  }
  std::string bad_file_;

 private:
  StubProvider stub_;
};

TEST_F(AgentTest, OneFailingConfigLeavesThirtyFiveScenes) {
  FailingOnOneConfig provider;
  provider.bad_file_ = id("v11");
  const auto records = run_matrix(default_matrix(), *client_, provider);
  ASSERT_EQ(records.size(), 40u);
  const auto summary = summarize(records);
  EXPECT_EQ(summary.scenes, 35);
  EXPECT_EQ(summary.failures.at("ProviderError"), 5);
}

TEST_F(AgentTest, ParallelMatrixMatchesSerial) {
  StubProvider stub;
  auto m = default_matrix();
  for (auto& c : m) c.repetitions = 2;
  MatrixOptions parallel;
  parallel.parallelism = 4;
  const auto a = run_matrix(m, *client_, stub);
  const auto b = run_matrix(m, *client_, stub, parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(canonical_record(a[i]).dump(), canonical_record(b[i]).dump());
}

TEST_F(AgentTest, ReplayReproducesTheStoredRunBitForBit) {
  const auto out = scratch("replay");
  ScriptedProvider provider({calls({{"c1", "list_functions", {{"file_id", id("chain")}}}}), text("thinking"),
                             calls({{"c2", "submit_scene", json::parse(R"({"nodes":[]})")}}),
                             calls({{"c3", "submit_scene", chain_scene()}})});
  MatrixOptions options;
  options.out_dir = out;
  const auto original = run_matrix({config()}, *client_, provider, options);
  ASSERT_TRUE(original[0].scene.has_value());
  EXPECT_EQ(original[0].validation_retries, 2);

  const auto replayed = replay(out, original[0].run_id, *client_);
  EXPECT_EQ(canonical_record(replayed).dump(), canonical_record(original[0]).dump());
  EXPECT_EQ(canonical_bytes(*replayed.scene), canonical_bytes(*original[0].scene));

  try {
    replay(out, "no-such-run", *client_);
    FAIL();
  } catch (const AgentError& e) {
    EXPECT_EQ(e.code(), AgentErrc::MissingRecording);
  }
  EXPECT_THROW(replay(scratch("absent"), "x", *client_), AgentError);
  fs::remove_all(out);
}

TEST_F(AgentTest, FailedRunsAreStoredWithoutSceneOrMetrics) {
  const auto out = scratch("failed");
  ScriptedProvider provider(std::vector<ChatMessage>(5, text("no")));
  MatrixOptions options;
  options.out_dir = out;
  const auto records = run_matrix({config()}, *client_, provider, options);
  const auto dir = out / "runs" / records[0].run_id;
  EXPECT_FALSE(fs::exists(dir / "scene.json"));
  EXPECT_FALSE(fs::exists(dir / "metrics.json"));
  const auto back = read_run(dir);
  ASSERT_TRUE(back.failure.has_value());
  EXPECT_EQ(back.failure->code, AgentErrc::RetriesExhausted);
  fs::remove_all(out);
}

// ---------------------------------------------------------------------------
// Rate limiting and the HTTP provider.

TEST(TokenRateLimiterTest, BlocksUntilTheWindowDrains) {
  auto now = std::chrono::steady_clock::time_point{};
  std::vector<std::chrono::milliseconds> sleeps;
  TokenRateLimiter limiter(
      1000, [&] { return now; },
      [&](std::chrono::milliseconds d) {
        sleeps.push_back(d);
        now += d;
      });
  limiter.acquire();
  limiter.record(600);
  now += std::chrono::seconds(10);
  limiter.acquire();
  limiter.record(600);
  EXPECT_EQ(limiter.spent_last_minute(), 1200);
  limiter.acquire();  // must wait for the first entry to age out
  ASSERT_EQ(sleeps.size(), 1u);
  EXPECT_EQ(sleeps[0], std::chrono::milliseconds(50001));
  EXPECT_EQ(limiter.spent_last_minute(), 600);

  TokenRateLimiter unlimited(0);
  unlimited.record(1'000'000);
  unlimited.acquire();
}

class MockChatServer {
 public:
  explicit MockChatServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<int> hits{0};
  std::string last_body, last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const char* kCompletion = R"({"choices":[{"message":{"role":"assistant","content":null,
  "tool_calls":[{"id":"call_9","type":"function","function":{"name":"list_functions","arguments":"{\"file_id\":\"bin-1\"}"}}]}}],
  "usage":{"prompt_tokens":120,"completion_tokens":30}})";

OpenAICompatibleProvider::Options mock_options(const MockChatServer& server, std::vector<std::chrono::milliseconds>& sleeps) {
  OpenAICompatibleProvider::Options o;
  o.base_url = server.url();
  o.api_key = "sk-test";
  o.backoff.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d); };
  return o;
}

ChatRequest sample_request() {
  ChatRequest r;
  r.model = "gpt-4.1";
  r.messages = {{"user", "hello", {}, {}},
                {"assistant", "", {{"c1", "file_stats", {{"file_id", "bin-1"}}}}, {}},
                {"tool", "{\"size\":1}", {}, "c1"}};
  r.tools = function_definitions({});
  return r;
}

TEST(OpenAIProviderTest, SendsChatCompletionsWithTools) {
  MockChatServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(kCompletion, "application/json");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  OpenAICompatibleProvider provider(mock_options(server, sleeps));
  const auto response = provider.complete(sample_request());
  ASSERT_EQ(response.message.tool_calls.size(), 1u);
  EXPECT_EQ(response.message.tool_calls[0].name, "list_functions");
  EXPECT_EQ(response.message.tool_calls[0].arguments, json({{"file_id", "bin-1"}}));
  EXPECT_EQ(response.usage.prompt, 120);
  EXPECT_EQ(response.usage.completion, 30);
  EXPECT_EQ(server.last_auth, "Bearer sk-test");

  const auto body = json::parse(server.last_body);
  EXPECT_EQ(body["model"], "gpt-4.1");
  EXPECT_FALSE(body.contains("temperature"));
  EXPECT_FALSE(body.contains("seed"));
  EXPECT_EQ(body["tools"].back()["function"]["name"], "submit_scene");
  EXPECT_TRUE(body["messages"][1]["content"].is_null());
  EXPECT_TRUE(body["messages"][1]["tool_calls"][0]["function"]["arguments"].is_string());
  EXPECT_EQ(body["messages"][2]["tool_call_id"], "c1");
  EXPECT_TRUE(sleeps.empty());
}

TEST(OpenAIProviderTest, RetriesRateLimitsWithExponentialBackoff) {
  std::atomic<int> calls{0};
  MockChatServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls <= 3) {
      res.status = calls == 2 ? 503 : 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    res.set_content(kCompletion, "application/json");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  OpenAICompatibleProvider provider(mock_options(server, sleeps));
  provider.complete(sample_request());
  EXPECT_EQ(server.hits, 4);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(1000), std::chrono::milliseconds(2000),
                                                           std::chrono::milliseconds(4000)}));
}

TEST(OpenAIProviderTest, BackoffIsCappedAndHonoursRetryAfter) {
  MockChatServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_header("Retry-After", "3");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  auto options = mock_options(server, sleeps);
  options.backoff.max_attempts = 4;
  options.backoff.cap = std::chrono::milliseconds(2500);
  OpenAICompatibleProvider provider(options);
  try {
    provider.complete(sample_request());
    FAIL();
  } catch (const AgentError& e) {
    EXPECT_EQ(e.code(), AgentErrc::RateLimited);
  }
  EXPECT_EQ(server.hits, 4);
  EXPECT_EQ(sleeps, std::vector<std::chrono::milliseconds>(3, std::chrono::milliseconds(2500)));
}

TEST(OpenAIProviderTest, ClientErrorsAreNotRetried) {
  MockChatServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content(R"({"error":"bad key"})", "application/json");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  OpenAICompatibleProvider provider(mock_options(server, sleeps));
  try {
    provider.complete(sample_request());
    FAIL();
  } catch (const AgentError& e) {
    EXPECT_EQ(e.code(), AgentErrc::ProviderError);
  }
  EXPECT_EQ(server.hits, 1);
}

TEST(OpenAIProviderTest, UnparseableArgumentsArePreservedAsText) {
  const auto r = parse_chat_response(json::parse(R"({"choices":[{"message":{"content":"x","tool_calls":[
    {"id":"a","function":{"name":"submit_scene","arguments":"{oops"}}]}}]})"));
  ASSERT_EQ(r.message.tool_calls.size(), 1u);
  EXPECT_EQ(r.message.tool_calls[0].arguments, json("{oops"));
  EXPECT_THROW(parse_chat_response(json::parse(R"({"choices":[]})")), AgentError);
}

TEST_F(AgentTest, SessionOverHttpToolEndpoint) {
  httplib::Server http;
  mount_tool_server(http, *server_);
  const int port = http.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { http.listen_after_bind(); });
  http.wait_until_ready();
  HttpEndpoint endpoint("http://127.0.0.1:" + std::to_string(port));
  ToolClient client(endpoint);
  StubProvider stub;
  const auto remote = run_session(config("v11", Guidance::High), client, stub, {"h", 1, 5, nullptr});
  const auto local = run_session(config("v11", Guidance::High), *client_, stub, {"h", 1, 5, nullptr});
  http.stop();
  thread.join();
  ASSERT_TRUE(remote.scene.has_value());
  EXPECT_EQ(canonical_record(remote).dump(), canonical_record(local).dump());
}

}  // namespace
}  // namespace callscape
