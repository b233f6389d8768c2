#include <ctime>

#include "callscape/agent.hpp"

namespace callscape {

using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr std::string_view kSubmitReminder =
    "Call submit_scene with the finished scene document to deliver the visualization.";

ChatMessage tool_message(const std::string& call_id, std::string content) {
  ChatMessage m;
  m.role = "tool";
  m.tool_call_id = call_id;
  m.content = std::move(content);
  return m;
}

}  // namespace

json to_json(const Transcript& t) {
  json messages = json::array();
  for (const auto& m : t.messages) messages.push_back(to_json(m));
  json usage = json::array();
  for (const auto& u : t.turn_usage) usage.push_back({{"prompt", u.prompt}, {"completion", u.completion}});
  return {{"messages", std::move(messages)},
          {"turn_usage", std::move(usage)},
          {"tool_call_count", t.tool_call_count},
          {"started", t.started},
          {"finished", t.finished},
          {"token_usage", {{"prompt", t.token_usage.prompt}, {"completion", t.token_usage.completion}}},
          {"wall_seconds", t.wall_seconds}};
}

Transcript transcript_from_json(const json& doc) {
  Transcript t;
  for (const auto& m : doc.at("messages")) t.messages.push_back(chat_message_from_json(m));
  for (const auto& u : doc.value("turn_usage", json::array()))
    t.turn_usage.push_back({u.value("prompt", std::int64_t{0}), u.value("completion", std::int64_t{0})});
  t.tool_call_count = doc.at("tool_call_count").get<int>();
  t.started = doc.value("started", "");
  t.finished = doc.value("finished", "");
  t.token_usage.prompt = doc.at("token_usage").value("prompt", std::int64_t{0});
  t.token_usage.completion = doc.at("token_usage").value("completion", std::int64_t{0});
  t.wall_seconds = doc.value("wall_seconds", 0.0);
  return t;
}

json to_json(const RunRecord& r) {
  json doc = {{"run_id", r.run_id},
              {"config", to_json(r.config)},
              {"repetition", r.repetition},
              {"seed", r.seed},
              {"file_id", r.file_id},
              {"transcript", to_json(r.transcript)},
              {"scene", r.scene ? to_json(*r.scene) : json()},
              {"metrics", r.metrics ? to_json(*r.metrics) : json()},
              {"validation_retries", r.validation_retries},
              {"failure", r.failure ? json{{"code", std::string(to_string(r.failure->code))},
                                           {"message", r.failure->message}}
                                    : json()},
              {"sampling", {{"temperature", "provider default"}}}};
  return doc;
}

json canonical_record(const RunRecord& record) {
  json doc = to_json(record);
  for (const char* key : {"started", "finished", "wall_seconds"}) doc["transcript"].erase(key);
  if (record.scene) doc["scene"] = json::parse(canonical_bytes(*record.scene));
  return doc;
}

RunRecord run_session(const RunConfig& config, ToolClient& tools, ChatProvider& provider,
                      const SessionOptions& options) {
  RunRecord rec;
  rec.run_id = options.run_id;
  rec.config = config;
  rec.repetition = options.repetition;
  rec.seed = options.seed;
  rec.file_id = tools.resolve_file_id(config.program);

  const auto clock_start = std::chrono::steady_clock::now();
  auto& transcript = rec.transcript;
  transcript.started = utc_now();
  auto finish = [&] {
    transcript.finished = utc_now();
    transcript.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return rec;
  };
  auto fail = [&](AgentErrc code, std::string message) {
    rec.failure = RunFailure{code, std::move(message)};
  };

  CallGraph truth;
  ChatRequest request;
  try {
    const auto graph = tools.call("get_call_graph", {{"file_id", rec.file_id}});
    if (!graph.ok()) throw AgentError(AgentErrc::ProviderError, "tool server: " + graph.error->message);
    truth = import_call_graph(graph.result->dump());
    request.tools = function_definitions(tools.list_tools());
  } catch (const AgentError& e) {
    fail(e.code(), e.what());
    return finish();
  }
  request.model = config.model;
  request.seed = options.seed;
  request.messages.push_back({"user", build_prompt(config.guidance, rec.file_id), {}, {}});
  const ValidationContext context{&truth};

  int failed_submissions = 0;
  auto submission_failed = [&](std::string why) {
    rec.validation_retries = ++failed_submissions;
    if (failed_submissions > config.max_retries) {
      fail(AgentErrc::RetriesExhausted, "no valid scene after " + std::to_string(failed_submissions) +
                                            " attempts; last problem: " + why);
      return true;
    }
    return false;
  };

  while (!rec.failure && !rec.scene) {
    ChatResponse response;
    try {
      if (options.limiter) options.limiter->acquire();
      response = provider.complete(request);
    } catch (const AgentError& e) {
      fail(e.code(), e.what());
      break;
    } catch (const std::exception& e) {
      fail(AgentErrc::ProviderError, e.what());
      break;
    }
    if (options.limiter) options.limiter->record(response.usage.total());
    transcript.token_usage.prompt += response.usage.prompt;
    transcript.token_usage.completion += response.usage.completion;
    transcript.turn_usage.push_back(response.usage);
    response.message.role = "assistant";
    request.messages.push_back(response.message);

    if (response.message.tool_calls.empty()) {
      if (submission_failed("the turn ended without a submit_scene call")) break;
      request.messages.push_back({"user", std::string(kSubmitReminder), {}, {}});
      continue;
    }

    for (const auto& call : response.message.tool_calls) {
      if (transcript.tool_call_count >= config.max_tool_calls) {
        fail(AgentErrc::BudgetExhausted,
             "tool-call budget of " + std::to_string(config.max_tool_calls) + " exhausted");
        break;
      }
      ++transcript.tool_call_count;

      if (call.name == kSubmitSceneTool) {
        try {
          if (call.arguments.is_string())
            throw SceneValidationError({{"", "parse", "arguments are not valid JSON"}});
          Scene scene = validate_scene_document(call.arguments, context);
          request.messages.push_back(tool_message(call.id, json{{"status", "accepted"}}.dump()));
          rec.metrics = score_scene(scene, truth);
          rec.scene = canonicalize(std::move(scene));
          break;
        } catch (const SceneValidationError& e) {
          request.messages.push_back(tool_message(call.id, e.to_json().dump()));
          if (submission_failed(e.issues().empty() ? "invalid scene" : e.issues().front().message)) break;
          continue;
        }
      }

      ToolOutcome outcome;
      try {
        outcome = tools.call(call.name, call.arguments.is_string() ? json::object() : call.arguments);
      } catch (const AgentError& e) {
        fail(e.code(), e.what());
        break;
      }
      request.messages.push_back(tool_message(
          call.id, outcome.ok() ? outcome.result->dump()
                                : json{{"error", {{"code", static_cast<int>(outcome.error->code)},
                                                  {"message", outcome.error->message}}}}
                                      .dump()));
    }
  }

  transcript.messages = std::move(request.messages);
  return finish();
}

}  // namespace callscape
