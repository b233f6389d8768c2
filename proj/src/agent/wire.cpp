#include "callscape/agent.hpp"
#include "callscape/http.hpp"

namespace callscape {

using nlohmann::json;

json InProcessEndpoint::rpc(const json& request) { return server_.handle(request); }

json HttpEndpoint::rpc(const json& request) {
  httplib::Client client(base_url_);
  client.set_read_timeout(std::chrono::seconds(120));
  auto res = client.Post("/rpc", request.dump(), "application/json");
  if (!res)
    throw AgentError(AgentErrc::ProviderError,
                     "tool server unreachable at " + base_url_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw AgentError(AgentErrc::ProviderError, "tool server returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw AgentError(AgentErrc::ProviderError, std::string("tool server sent malformed JSON: ") + e.what());
  }
}

json ToolClient::request(const std::string& method, json params) {
  std::int64_t id;
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
  }
  return endpoint_.rpc({{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", std::move(params)}});
}

std::vector<ServerFile> ToolClient::files() {
  const auto res = request("initialize", json::object());
  std::vector<ServerFile> out;
  for (const auto& f : res.at("result").value("files", json::array()))
    out.push_back({f.at("file_id").get<std::string>(), f.at("name").get<std::string>()});
  return out;
}

std::vector<ToolDescriptor> ToolClient::list_tools() {
  const auto res = request("tools/list", json::object());
  std::vector<ToolDescriptor> out;
  for (const auto& t : res.at("result").at("tools")) out.push_back(descriptor_from_json(t));
  return out;
}

ToolOutcome ToolClient::call(const std::string& tool, const json& arguments) {
  const auto res = request("tools/call", {{"name", tool}, {"arguments", arguments}});
  ToolOutcome outcome;
  if (res.contains("error")) {
    const auto& e = res["error"];
    outcome.error = ToolError{static_cast<ToolErrc>(e.value("code", 0)), e.value("message", "")};
  } else {
    outcome.result = res.at("result").at("structuredContent");
  }
  return outcome;
}

std::string ToolClient::resolve_file_id(const std::string& program) {
  for (const auto& f : files())
    if (f.name == program || f.file_id == program) return f.file_id;
  throw AgentError(AgentErrc::UnknownProgram, "no registered program or file id '" + program + "'");
}

json to_json(const ChatMessage& m) {
  json doc = {{"role", m.role}, {"content", m.content}};
  if (!m.tool_calls.empty()) {
    doc["tool_calls"] = json::array();
    for (const auto& c : m.tool_calls)
      doc["tool_calls"].push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
  }
  if (!m.tool_call_id.empty()) doc["tool_call_id"] = m.tool_call_id;
  return doc;
}

ChatMessage chat_message_from_json(const json& doc) {
  ChatMessage m;
  m.role = doc.at("role").get<std::string>();
  m.content = doc.value("content", "");
  for (const auto& c : doc.value("tool_calls", json::array()))
    m.tool_calls.push_back({c.at("id").get<std::string>(), c.at("name").get<std::string>(),
                            c.value("arguments", json::object())});
  m.tool_call_id = doc.value("tool_call_id", "");
  return m;
}

json submit_scene_parameters() {
  const json vec3 = {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 3}, {"maxItems", 3}};
  json shapes = json::array();
  for (auto s : kAllShapes) shapes.push_back(std::string(to_string(s)));
  const json color = {{"type", "string"}, {"description", "sRGB hex color #RRGGBB"}};
  return {
      {"type", "object"},
      {"properties",
       {{"nodes",
         {{"type", "array"},
          {"description", "One node per function shown in the scene"},
          {"items",
           {{"type", "object"},
            {"properties",
             {{"id", {{"type", "string"}}},
              {"label", {{"type", "string"}}},
              {"position", vec3},
              {"shape", {{"type", "string"}, {"enum", shapes}}},
              {"color", color},
              {"scale", {{"type", "number"}, {"exclusiveMinimum", 0}}}}},
            {"required", {"id", "label", "position", "shape", "color", "scale"}}}}}},
        {"edges",
         {{"type", "array"},
          {"description", "Calls, from caller node id to callee node id"},
          {"items",
           {{"type", "object"},
            {"properties",
             {{"source", {{"type", "string"}}},
              {"target", {{"type", "string"}}},
              {"color", color},
              {"width", {{"type", "number"}, {"exclusiveMinimum", 0}}}}},
            {"required", {"source", "target"}}}}}},
        {"slates",
         {{"type", "array"},
          {"description", "Floating text windows"},
          {"items",
           {{"type", "object"},
            {"properties", {{"id", {{"type", "string"}}}, {"text", {{"type", "string"}}}, {"position", vec3}}},
            {"required", {"id", "text", "position"}}}}}},
        {"reasoning", {{"type", "string"}, {"description", "Your explanation of the design"}}}}},
      {"required", {"nodes", "edges", "reasoning"}}};
}

json function_definitions(const std::vector<ToolDescriptor>& tools) {
  json out = json::array();
  for (const auto& t : tools)
    out.push_back({{"type", "function"},
                   {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameter_schema}}}});
  out.push_back({{"type", "function"},
                 {"function",
                  {{"name", std::string(kSubmitSceneTool)},
                   {"description",
                    "Submit the finished 3D call-graph scene. Validation errors are returned; fix them and "
                    "submit again."},
                   {"parameters", submit_scene_parameters()}}}});
  return out;
}

}  // namespace callscape
