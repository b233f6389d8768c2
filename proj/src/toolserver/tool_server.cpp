#include "callscape/tool_server.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "callscape/json_schema.hpp"

namespace callscape {
namespace {

using nlohmann::json;

json file_id_schema() {
  return {{"type", "string"}, {"description", "Identifier of a registered binary file"}};
}

json function_schema() {
  return {{"type", "string"}, {"description", "Function id or name as listed by list_functions"}};
}

json closed_object(json properties, std::vector<std::string> required) {
  return {{"type", "object"},
          {"properties", std::move(properties)},
          {"required", std::move(required)},
          {"additionalProperties", false}};
}

json capability_tags() {
  json tags = json::array();
  for (auto cap : {Capability::FileIo, Capability::Network, Capability::Process,
                   Capability::Memory, Capability::String, Capability::CryptoLike,
                   Capability::Unknown})
    tags.push_back(std::string(to_string(cap)));
  return tags;
}

std::vector<ToolDescriptor> make_catalog() {
  const json node_schema =
      closed_object({{"id", {{"type", "string"}}},
                     {"name", {{"type", "string"}}},
                     {"address", {{"type", "string"}}},
                     {"is_import", {{"type", "boolean"}}}},
                    {"id", "name", "address", "is_import"});
  const json example_file = {{"file_id", "bin-0123456789abcdef"}};
  const json example_function = {{"file_id", "bin-0123456789abcdef"}, {"function", "main"}};

  std::vector<ToolDescriptor> tools;
  tools.push_back(
      {"file_stats",
       "Summary of a binary file: program name, size in bytes, architecture and number of "
       "functions.",
       closed_object({{"file_id", file_id_schema()}}, {"file_id"}),
       closed_object({{"name", {{"type", "string"}}},
                      {"size", {{"type", "integer"}, {"minimum", 0}}},
                      {"arch", {{"type", "string"}, {"enum", {"x86-64"}}}},
                      {"function_count", {{"type", "integer"}, {"minimum", 0}}}},
                     {"name", "size", "arch", "function_count"}),
       example_file});
  tools.push_back({"list_functions",
                   "All functions in the binary, including imported library functions.",
                   closed_object({{"file_id", file_id_schema()}}, {"file_id"}),
                   {{"type", "array"}, {"items", node_schema}},
                   example_file});
  tools.push_back(
      {"get_call_graph",
       "The program's call graph: nodes are functions, edges are caller -> callee pairs.",
       closed_object({{"file_id", file_id_schema()}}, {"file_id"}),
       closed_object({{"nodes", {{"type", "array"}, {"items", node_schema}}},
                      {"edges",
                       {{"type", "array"},
                        {"items", closed_object({{"caller", {{"type", "string"}}},
                                                 {"callee", {{"type", "string"}}}},
                                                {"caller", "callee"})}}},
                      {"entry", {{"type", "string"}}}},
                     {"nodes", "edges"}),
       example_file});
  tools.push_back(
      {"get_function_capabilities",
       "Behavioural capability tags of a function derived from the library calls it makes.",
       closed_object({{"file_id", file_id_schema()}, {"function", function_schema()}},
                     {"file_id", "function"}),
       {{"type", "array"}, {"items", {{"type", "string"}, {"enum", capability_tags()}}}},
       example_function});
  tools.push_back(
      {"get_decompilation",
       "Decompiled pseudo-source code of a function, when available.",
       closed_object({{"file_id", file_id_schema()}, {"function", function_schema()}},
                     {"file_id", "function"}),
       closed_object({{"function", {{"type", "string"}}},
                      {"code", {{"type", "string"}}},
                      {"truncated", {{"type", "boolean"}}}},
                     {"function", "code", "truncated"}),
       example_function});
  return tools;
}

json node_json(const FunctionRecord& fn) {
  return {{"id", fn.id},
          {"name", fn.name},
          {"address", hex_address(fn.address)},
          {"is_import", fn.is_import}};
}

const FunctionRecord* resolve_function(const BinaryProgram& program, const std::string& key) {
  if (const auto* fn = program.find(key)) return fn;
  for (const auto& fn : program.functions)
    if (fn.name == key) return &fn;
  return nullptr;
}

// Longest prefix of text that does not split a UTF-8 sequence.
std::string utf8_prefix(const std::string& text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return text;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

ToolOutcome failure(ToolErrc code, std::string message) {
  return {std::nullopt, ToolError{code, std::move(message)}};
}

json rpc_error(const json& id, int code, const std::string& message) {
  return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

json to_json(const ToolDescriptor& d) {
  return {{"name", d.name},
          {"description", d.description},
          {"inputSchema", d.parameter_schema},
          {"outputSchema", d.result_schema},
          {"examples", json::array({d.example_arguments})}};
}

ToolDescriptor descriptor_from_json(const json& doc) {
  ToolDescriptor d;
  d.name = doc.at("name").get<std::string>();
  d.description = doc.value("description", "");
  d.parameter_schema = doc.at("inputSchema");
  d.result_schema = doc.value("outputSchema", json::object());
  if (auto it = doc.find("examples"); it != doc.end() && it->is_array() && !it->empty())
    d.example_arguments = (*it)[0];
  return d;
}

RegisteredFile register_file(BinaryProgram program, std::string name) {
  RegisteredFile file;
  file.name = name.empty() ? program.path.stem().string() : std::move(name);
  file.graph = extract_call_graph(program);
  file.program = std::move(program);
  return file;
}

ToolServer::ToolServer(std::vector<RegisteredFile> files)
    : files_(std::move(files)), tools_(make_catalog()) {}

const RegisteredFile* ToolServer::file(std::string_view file_id) const {
  for (const auto& f : files_)
    if (f.program.file_id == file_id) return &f;
  return nullptr;
}

const RegisteredFile* ToolServer::file_by_name(std::string_view name) const {
  for (const auto& f : files_)
    if (f.name == name) return &f;
  return nullptr;
}

ToolOutcome ToolServer::dispatch(const ToolCall& call) const {
  const auto tool = std::find_if(tools_.begin(), tools_.end(),
                                 [&](const ToolDescriptor& t) { return t.name == call.tool; });
  if (tool == tools_.end()) return failure(ToolErrc::UnknownTool, "unknown tool '" + call.tool + "'");

  const auto violations = schema_violations(tool->parameter_schema, call.arguments);
  if (!violations.empty()) {
    std::string message = "invalid arguments for " + call.tool + ":";
    for (const auto& v : violations) message += " " + v + ";";
    return failure(ToolErrc::ArgumentInvalid, message);
  }

  const auto file_id = call.arguments.at("file_id").get<std::string>();
  const auto* registered = file(file_id);
  if (!registered) return failure(ToolErrc::UnknownFileId, "no binary file has ID '" + file_id + "'");
  const auto& program = registered->program;

  const FunctionRecord* function = nullptr;
  if (call.arguments.contains("function")) {
    const auto key = call.arguments.at("function").get<std::string>();
    function = resolve_function(program, key);
    if (!function)
      return failure(ToolErrc::ArgumentInvalid, "no function '" + key + "' in " + file_id);
  }

  json result;
  if (call.tool == "file_stats") {
    const auto count = std::count_if(program.functions.begin(), program.functions.end(),
                                     [](const FunctionRecord& fn) { return !fn.is_import; });
    result = {{"name", registered->name},
              {"size", program.image.size()},
              {"arch", program.arch},
              {"function_count", count}};
  } else if (call.tool == "list_functions") {
    result = json::array();
    for (const auto& fn : program.functions) result.push_back(node_json(fn));
  } else if (call.tool == "get_call_graph") {
    result = json::parse(export_call_graph(registered->graph));
  } else if (call.tool == "get_function_capabilities") {
    result = json::array();
    for (auto cap : function->capabilities) result.push_back(std::string(to_string(cap)));
  } else {  // get_decompilation
    if (!function->decompilation)
      return failure(ToolErrc::NoDecompilation,
                     "no decompilation available for '" + function->name + "'");
    result = {{"function", function->id}, {"code", *function->decompilation}, {"truncated", false}};
    if (result.dump().size() > kMaxToolResultBytes) {
      // Longest prefix whose escaped form still fits.
      const auto& full = *function->decompilation;
      auto fits = [&](std::size_t n) {
        return json{{"function", function->id}, {"code", utf8_prefix(full, n)}, {"truncated", true}}
                   .dump()
                   .size() <= kMaxToolResultBytes;
      };
      std::size_t lo = 0, hi = std::min(full.size(), kMaxToolResultBytes);
      while (lo < hi) {
        const auto mid = lo + (hi - lo + 1) / 2;
        if (fits(mid)) lo = mid;
        else hi = mid - 1;
      }
      result = {{"function", function->id}, {"code", utf8_prefix(full, lo)}, {"truncated", true}};
    }
  }
  if (result.dump().size() > kMaxToolResultBytes)
    return failure(ToolErrc::ResultTooLarge,
                   call.tool + " result exceeds " + std::to_string(kMaxToolResultBytes) + " bytes");
  return {std::move(result), std::nullopt};
}

json ToolServer::handle(const json& request) const {
  if (request.is_array()) {
    if (request.empty()) return rpc_error(nullptr, rpc::kInvalidRequest, "empty batch");
    json responses = json::array();
    for (const auto& item : request) {
      auto response = handle_single(item);
      if (!response.is_null()) responses.push_back(std::move(response));
    }
    return responses.empty() ? json() : responses;
  }
  return handle_single(request);
}

json ToolServer::handle_single(const json& request) const {
  if (!request.is_object() || request.value("jsonrpc", "") != "2.0" || !request.contains("method") ||
      !request["method"].is_string())
    return rpc_error(request.is_object() ? request.value("id", json()) : json(),
                     rpc::kInvalidRequest, "not a JSON-RPC 2.0 request");
  const bool notification = !request.contains("id");
  const json id = request.value("id", json());
  const auto method = request["method"].get<std::string>();
  const json params = request.value("params", json::object());

  json result;
  if (method == "initialize") {
    result = {{"protocolVersion", "2025-03-26"},
              {"serverInfo", {{"name", "callscape-toolserver"}, {"version", "1.0.0"}}},
              {"capabilities", {{"tools", json::object()}}},
              {"files", json::array()}};
    for (const auto& f : files_)
      result["files"].push_back({{"file_id", f.program.file_id}, {"name", f.name}});
  } else if (method == "tools/list") {
    result = {{"tools", json::array()}};
    for (const auto& t : tools_) result["tools"].push_back(to_json(t));
  } else if (method == "tools/call") {
    if (!params.is_object() || !params.contains("name") || !params["name"].is_string())
      return rpc_error(id, rpc::kInvalidParams, "tools/call requires params.name");
    ToolCall call;
    call.call_id = id.is_null() ? "" : id.dump();
    call.tool = params["name"].get<std::string>();
    call.arguments = params.value("arguments", json::object());
    auto outcome = dispatch(call);
    if (!outcome.ok())
      return notification ? json()
                          : rpc_error(id, static_cast<int>(outcome.error->code),
                                      outcome.error->message);
    result = {{"content", json::array({{{"type", "text"}, {"text", outcome.result->dump()}}})},
              {"structuredContent", *outcome.result},
              {"isError", false}};
  } else if (method.rfind("notifications/", 0) == 0) {
    return json();
  } else {
    return notification ? json() : rpc_error(id, rpc::kMethodNotFound, "unknown method " + method);
  }
  if (notification) return json();
  return {{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

std::string ToolServer::handle_text(std::string_view body) const {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return rpc_error(nullptr, rpc::kParseError, e.what()).dump();
  }
  const auto response = handle(request);
  return response.is_null() ? std::string() : response.dump();
}

std::optional<std::string> read_framed_message(std::istream& in) {
  std::string line;
  std::optional<std::size_t> length;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (length) break;
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (key == "content-length") length = std::stoul(line.substr(colon + 1));
  }
  if (!length) return std::nullopt;
  std::string body(*length, '\0');
  in.read(body.data(), static_cast<std::streamsize>(*length));
  if (static_cast<std::size_t>(in.gcount()) != *length) return std::nullopt;
  return body;
}

void write_framed_message(std::ostream& out, std::string_view body) {
  out << "Content-Length: " << body.size() << "\r\n\r\n" << body;
  out.flush();
}

void serve_stdio(const ToolServer& server, std::istream& in, std::ostream& out) {
  while (auto message = read_framed_message(in)) {
    const auto response = server.handle_text(*message);
    if (!response.empty()) write_framed_message(out, response);
  }
}

}  // namespace callscape
