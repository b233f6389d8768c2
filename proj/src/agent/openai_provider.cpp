#include <algorithm>
#include <cstdlib>
#include <thread>

#include "callscape/agent.hpp"
#include "callscape/http.hpp"

namespace callscape {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  SplitUrl out{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

json chat_request_body(const ChatRequest& request, bool send_seed) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json doc = {{"role", m.role}};
    if (m.role == "assistant" && !m.tool_calls.empty()) {
      doc["content"] = m.content.empty() ? json() : json(m.content);
      doc["tool_calls"] = json::array();
      for (const auto& c : m.tool_calls)
        doc["tool_calls"].push_back(
            {{"id", c.id},
             {"type", "function"},
             {"function",
              {{"name", c.name}, {"arguments", c.arguments.is_string() ? c.arguments.get<std::string>() : c.arguments.dump()}}}});
    } else {
      doc["content"] = m.content;
    }
    if (m.role == "tool") doc["tool_call_id"] = m.tool_call_id;
    messages.push_back(std::move(doc));
  }
  json body = {{"model", request.model}, {"messages", std::move(messages)}};
  if (!request.tools.empty()) body["tools"] = request.tools;
  if (send_seed) body["seed"] = request.seed;
  return body;
}

ChatResponse parse_chat_response(const json& body) {
  try {
    const auto& message = body.at("choices").at(0).at("message");
    ChatResponse out;
    out.message.role = "assistant";
    if (message.contains("content") && message["content"].is_string())
      out.message.content = message["content"].get<std::string>();
    for (const auto& c : message.value("tool_calls", json::array())) {
      ToolCallRequest call;
      call.id = c.at("id").get<std::string>();
      call.name = c.at("function").at("name").get<std::string>();
      const auto raw = c.at("function").value("arguments", std::string("{}"));
      call.arguments = json::parse(raw, nullptr, false);
      if (call.arguments.is_discarded()) call.arguments = raw;
      out.message.tool_calls.push_back(std::move(call));
    }
    if (body.contains("usage")) {
      out.usage.prompt = body["usage"].value("prompt_tokens", std::int64_t{0});
      out.usage.completion = body["usage"].value("completion_tokens", std::int64_t{0});
    }
    return out;
  } catch (const json::exception& e) {
    throw AgentError(AgentErrc::ProviderError, std::string("unexpected chat response: ") + e.what());
  }
}

OpenAICompatibleProvider::OpenAICompatibleProvider(Options options) : options_(std::move(options)) {
  if (!options_.backoff.sleep)
    options_.backoff.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

OpenAICompatibleProvider::Options OpenAICompatibleProvider::options_from_environment() {
  Options o;
  if (const char* url = std::getenv("CALLSCAPE_LLM_BASE_URL"); url && *url) o.base_url = url;
  if (const char* key = std::getenv("CALLSCAPE_LLM_API_KEY"); key && *key) {
    o.api_key = key;
  } else if (const char* fallback = std::getenv("OPENAI_API_KEY"); fallback && *fallback) {
    o.api_key = fallback;
  }
  return o;
}

ChatResponse OpenAICompatibleProvider::complete(const ChatRequest& request) {
  const auto url = split_url(options_.base_url);
  httplib::Client client(url.origin);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(std::chrono::seconds(60));
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const std::string body = chat_request_body(request, options_.send_seed).dump();

  auto delay = options_.backoff.initial;
  std::string last_problem = "no attempts made";
  bool rate_limited = false;
  for (int attempt = 1; attempt <= options_.backoff.max_attempts; ++attempt) {
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    std::chrono::milliseconds wait = delay;
    if (!res) {
      last_problem = "transport error: " + httplib::to_string(res.error());
      rate_limited = false;
    } else if (res->status == 200) {
      try {
        return parse_chat_response(json::parse(res->body));
      } catch (const json::parse_error& e) {
        throw AgentError(AgentErrc::ProviderError, std::string("malformed chat response: ") + e.what());
      }
    } else if (res->status == 429 || res->status >= 500) {
      rate_limited = res->status == 429;
      last_problem = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      if (res->has_header("Retry-After")) {
        const int seconds = std::atoi(res->get_header_value("Retry-After").c_str());
        if (seconds > 0) wait = std::chrono::milliseconds(1000LL * seconds);
      }
    } else {
      throw AgentError(AgentErrc::ProviderError,
                       "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    if (attempt == options_.backoff.max_attempts) break;
    options_.backoff.sleep(std::min(wait, options_.backoff.cap));
    delay = std::min(delay * 2, options_.backoff.cap);
  }
  throw AgentError(rate_limited ? AgentErrc::RateLimited : AgentErrc::ProviderError,
                   "giving up after " + std::to_string(options_.backoff.max_attempts) + " attempts: " + last_problem);
}

}  // namespace callscape
