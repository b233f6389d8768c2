#pragma once

// Binary-analysis tools exposed to a language model over JSON-RPC 2.0.
//
// Methods: "initialize", "tools/list", "tools/call" {name, arguments}.
// Tool failures are JSON-RPC error objects carrying one of the ToolErrc
// codes; transport-level problems use the standard -327xx/-326xx codes.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "callscape/binary.hpp"
#include "json.hpp"

namespace callscape {

enum class ToolErrc : int {
  UnknownTool = -32001,
  UnknownFileId = -32002,
  ArgumentInvalid = -32003,
  NoDecompilation = -32004,
  ResultTooLarge = -32005,
};

namespace rpc {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
}  // namespace rpc

inline constexpr std::size_t kMaxToolResultBytes = 64 * 1024;

struct ToolDescriptor {
  std::string name;
  std::string description;
  nlohmann::json parameter_schema;
  nlohmann::json result_schema;
  nlohmann::json example_arguments;

  bool operator==(const ToolDescriptor&) const = default;
};

nlohmann::json to_json(const ToolDescriptor& descriptor);
ToolDescriptor descriptor_from_json(const nlohmann::json& doc);

struct ToolCall {
  std::string call_id;
  std::string tool;
  nlohmann::json arguments = nlohmann::json::object();
};

struct ToolError {
  ToolErrc code;
  std::string message;
};

struct ToolOutcome {
  std::optional<nlohmann::json> result;
  std::optional<ToolError> error;

  bool ok() const { return result.has_value(); }
};

struct RegisteredFile {
  std::string name;  // human-readable program name, e.g. "v11"
  BinaryProgram program;
  CallGraph graph;
};

RegisteredFile register_file(BinaryProgram program, std::string name = {});

class ToolServer {
 public:
  explicit ToolServer(std::vector<RegisteredFile> files);

  const std::vector<ToolDescriptor>& list_tools() const { return tools_; }
  ToolOutcome dispatch(const ToolCall& call) const;

  // One JSON-RPC request (or batch). Returns null for notifications.
  nlohmann::json handle(const nlohmann::json& request) const;
  // Parses, handles and serializes; empty string when there is nothing to send.
  std::string handle_text(std::string_view body) const;

  const RegisteredFile* file(std::string_view file_id) const;
  const RegisteredFile* file_by_name(std::string_view name) const;
  const std::vector<RegisteredFile>& files() const { return files_; }

 private:
  nlohmann::json handle_single(const nlohmann::json& request) const;

  std::vector<RegisteredFile> files_;
  std::vector<ToolDescriptor> tools_;
};

// Content-Length framed transport over byte streams (stdio).
std::optional<std::string> read_framed_message(std::istream& in);
void write_framed_message(std::ostream& out, std::string_view body);
void serve_stdio(const ToolServer& server, std::istream& in, std::ostream& out);

}  // namespace callscape
