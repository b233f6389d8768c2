#include <map>
#include <set>
#include <thread>

#include "callscape/agent.hpp"

namespace callscape {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

// Uniform in [-1, 1), identical on every platform.
double jitter(std::uint64_t seed, std::string_view id, int axis) {
  const auto bits = splitmix64(seed ^ fnv1a(id) ^ (static_cast<std::uint64_t>(axis) << 56));
  return static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
}

std::int64_t approx_tokens(std::size_t chars) { return static_cast<std::int64_t>((chars + 3) / 4); }

std::string file_id_in(const ChatRequest& request) {
  for (const auto& m : request.messages) {
    const auto at = m.content.find("ID = ");
    if (m.role != "user" || at == std::string::npos) continue;
    const auto begin = at + 5;
    const auto end = m.content.find_first_of(" \t\r\n", begin);
    return m.content.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
  }
  return {};
}

Scene stub_scene(const CallGraph& graph, bool high, const std::string& model, std::uint64_t seed) {
  Scene scene = scene_from_graph(graph);
  std::set<std::string> callers, imports;
  for (const auto& [a, b] : graph.edges) callers.insert(a);
  for (const auto& n : graph.nodes)
    if (n.is_import) imports.insert(n.id);
  const bool deep = model.find("mini") != std::string::npos;
  const double spread = high ? 1.75 : 1.0;

  int column = 0;
  for (auto& node : scene.nodes) {
    Eigen::Vector3d p = node.position * spread;
    if (deep) p.z() = (column++ % 3 - 1) * 1.5;
    p += 0.25 * Eigen::Vector3d(jitter(seed, node.id, 0), jitter(seed, node.id, 1), jitter(seed, node.id, 2));
    node.position = p;
    const bool is_import = imports.count(node.id) > 0;
    const bool is_entry = node.id == graph.entry;
    const bool is_leaf = !is_import && callers.count(node.id) == 0;
    if (high) {
      node.shape = is_entry ? Shape::Cone : is_import ? Shape::Cube : is_leaf ? Shape::Cylinder : Shape::Sphere;
      node.color = is_entry ? "#E04040" : is_import ? "#E0A030" : is_leaf ? "#40A060" : "#4080C0";
      node.scale = is_entry ? 0.9 : 0.5;
    } else {
      node.shape = Shape::Sphere;
      node.color = is_import ? "#A0A0A0" : "#4080C0";
      node.scale = 0.5;
    }
  }
  if (deep) {
    scene.slates.push_back({"summary",
                            std::to_string(graph.nodes.size()) + " functions, " +
                                std::to_string(graph.edges.size()) + " calls; entry " + graph.entry,
                            Eigen::Vector3d(-4, 2, 0)});
  }
  scene.reasoning = high ? "Callers sit above callees. Entry is a red cone, imports are orange cubes and "
                           "leaf functions green cylinders so roles read at a glance; layers are spaced "
                           "to avoid overlap."
                         : "Callers sit above callees in layers; imported functions are grey.";
  return canonicalize(std::move(scene));
}

}  // namespace

ChatResponse StubProvider::complete(const ChatRequest& request) {
  std::size_t prompt_chars = 0;
  std::map<std::string, std::string> call_names;
  const ChatMessage* graph_result = nullptr;
  for (const auto& m : request.messages) {
    prompt_chars += m.content.size();
    for (const auto& c : m.tool_calls) call_names[c.id] = c.name;
    if (m.role == "tool" && call_names[m.tool_call_id] == "get_call_graph") graph_result = &m;
  }

  ChatResponse response;
  response.message.role = "assistant";
  const std::string file_id = file_id_in(request);
  if (!graph_result) {
    response.message.content = "Listing the functions and the call graph first.";
    response.message.tool_calls = {{"call_1", "list_functions", {{"file_id", file_id}}},
                                   {"call_2", "get_call_graph", {{"file_id", file_id}}}};
  } else {
    try {
      const CallGraph graph = import_call_graph(graph_result->content);
      const bool high = request.messages.front().content.find("Group related elements spatially") != std::string::npos;
      const Scene scene = stub_scene(graph, high, request.model, request.seed);
      response.message.content = scene.reasoning;
      response.message.tool_calls = {{"call_3", std::string(kSubmitSceneTool), to_json(scene)}};
    } catch (const std::exception&) {
      response.message.content = "The call graph could not be read.";
    }
  }
  response.usage.prompt = approx_tokens(prompt_chars);
  response.usage.completion = approx_tokens(to_json(response.message).dump().size());
  return response;
}

ScriptedProvider::ScriptedProvider(const std::vector<ChatMessage>& replies) {
  for (const auto& r : replies) steps_.push_back([r](const ChatRequest&) { return r; });
}

ChatResponse ScriptedProvider::complete(const ChatRequest& request) {
  if (next_ >= steps_.size())
    throw AgentError(AgentErrc::ProviderError, "scripted provider exhausted after " + std::to_string(next_) + " turns");
  ChatResponse response;
  response.message = steps_[next_++](request);
  if (response.message.role.empty()) response.message.role = "assistant";
  response.usage = {approx_tokens(request.messages.back().content.size()),
                    approx_tokens(to_json(response.message).dump().size())};
  return response;
}

ReplayProvider::ReplayProvider(std::vector<ChatMessage> assistant_messages, std::vector<TokenUsage> usage)
    : replies_(std::move(assistant_messages)), usage_(std::move(usage)) {}

ChatResponse ReplayProvider::complete(const ChatRequest&) {
  if (next_ >= replies_.size())
    throw AgentError(AgentErrc::ProviderError, "recording has only " + std::to_string(replies_.size()) + " turns");
  ChatResponse response{replies_[next_], next_ < usage_.size() ? usage_[next_] : TokenUsage{}};
  ++next_;
  return response;
}

TokenRateLimiter::TokenRateLimiter(std::int64_t tokens_per_minute, Clock clock, Sleep sleep)
    : budget_(tokens_per_minute), clock_(std::move(clock)), sleep_(std::move(sleep)) {
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::int64_t TokenRateLimiter::prune_locked(std::chrono::steady_clock::time_point now) {
  const auto horizon = now - std::chrono::minutes(1);
  std::erase_if(spend_, [&](const auto& entry) { return entry.first <= horizon; });
  std::int64_t total = 0;
  for (const auto& [t, n] : spend_) total += n;
  return total;
}

void TokenRateLimiter::acquire() {
  if (budget_ <= 0) return;
  for (;;) {
    std::chrono::milliseconds wait;
    {
      std::lock_guard lock(mutex_);
      const auto now = clock_();
      if (prune_locked(now) < budget_) return;
      wait = std::chrono::duration_cast<std::chrono::milliseconds>(spend_.front().first + std::chrono::minutes(1) - now) +
             std::chrono::milliseconds(1);
    }
    sleep_(wait);
  }
}

void TokenRateLimiter::record(std::int64_t tokens) {
  if (budget_ <= 0 || tokens <= 0) return;
  std::lock_guard lock(mutex_);
  spend_.emplace_back(clock_(), tokens);
}

std::int64_t TokenRateLimiter::spent_last_minute() {
  std::lock_guard lock(mutex_);
  return prune_locked(clock_());
}

}  // namespace callscape
