#include <charconv>

#include "callscape/binary.hpp"
#include "json.hpp"

namespace callscape {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& message) {
  throw BinaryError(BinaryErrc::SchemaViolation, message);
}

const json& require(const json& object, const char* key, const std::string& where) {
  auto it = object.find(key);
  if (it == object.end()) schema_error(where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& object, const char* key, const std::string& where) {
  const auto& value = require(object, key, where);
  if (!value.is_string()) schema_error(where + "." + key + ": expected a string");
  return value.get<std::string>();
}

std::uint64_t parse_hex(const std::string& text, const std::string& where) {
  if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X'))
    schema_error(where + ": address must be a 0x-prefixed hexadecimal string");
  std::uint64_t value = 0;
  const auto* first = text.data() + 2;
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value, 16);
  if (ec != std::errc() || ptr != last) schema_error(where + ": malformed address '" + text + "'");
  return value;
}

}  // namespace

std::string export_call_graph(const CallGraph& graph) {
  json doc;
  doc["nodes"] = json::array();
  for (const auto& node : graph.nodes)
    doc["nodes"].push_back({{"id", node.id},
                            {"name", node.name},
                            {"address", hex_address(node.address)},
                            {"is_import", node.is_import}});
  doc["edges"] = json::array();
  for (const auto& [caller, callee] : graph.edges)
    doc["edges"].push_back({{"caller", caller}, {"callee", callee}});
  if (!graph.entry.empty()) doc["entry"] = graph.entry;
  return doc.dump(2);
}

CallGraph import_call_graph(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    schema_error(std::string("not a JSON document: ") + e.what());
  }
  if (!doc.is_object()) schema_error("top level must be an object");
  const auto& nodes = require(doc, "nodes", "graph");
  const auto& edges = require(doc, "edges", "graph");
  if (!nodes.is_array()) schema_error("graph.nodes: expected an array");
  if (!edges.is_array()) schema_error("graph.edges: expected an array");

  std::vector<GraphNode> parsed_nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto where = "nodes[" + std::to_string(i) + "]";
    const auto& n = nodes[i];
    if (!n.is_object()) schema_error(where + ": expected an object");
    GraphNode node;
    node.id = require_string(n, "id", where);
    node.name = require_string(n, "name", where);
    node.address = parse_hex(require_string(n, "address", where), where + ".address");
    const auto& imp = require(n, "is_import", where);
    if (!imp.is_boolean()) schema_error(where + ".is_import: expected a boolean");
    node.is_import = imp.get<bool>();
    parsed_nodes.push_back(std::move(node));
  }
  std::vector<CallEdge> parsed_edges;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto where = "edges[" + std::to_string(i) + "]";
    if (!edges[i].is_object()) schema_error(where + ": expected an object");
    parsed_edges.emplace_back(require_string(edges[i], "caller", where),
                              require_string(edges[i], "callee", where));
  }
  std::string entry;
  if (auto it = doc.find("entry"); it != doc.end()) {
    if (!it->is_string()) schema_error("graph.entry: expected a string");
    entry = it->get<std::string>();
  }
  return make_call_graph(std::move(parsed_nodes), std::move(parsed_edges), std::move(entry));
}

DecompilationResult attach_decompilation(BinaryProgram program, std::string_view sidecar) {
  json doc;
  try {
    doc = json::parse(sidecar);
  } catch (const json::parse_error& e) {
    schema_error(std::string("sidecar is not JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_error("sidecar must map function names to pseudo-code strings");

  DecompilationResult result;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_string()) schema_error("sidecar entry '" + key + "' must be a string");
    FunctionRecord* target = nullptr;
    for (auto& fn : program.functions) {
      if (fn.name == key || fn.id == key) {
        target = &fn;
        break;
      }
    }
    if (!target && key.size() > 2 && key[0] == '0' && (key[1] == 'x' || key[1] == 'X')) {
      std::uint64_t addr = 0;
      auto [ptr, ec] = std::from_chars(key.data() + 2, key.data() + key.size(), addr, 16);
      if (ec == std::errc() && ptr == key.data() + key.size())
        for (auto& fn : program.functions)
          if (!fn.is_import && fn.address == addr) target = &fn;
    }
    if (!target) {
      result.warnings.push_back("no function matches sidecar entry '" + key + "'");
      continue;
    }
    target->decompilation = value.get<std::string>();
  }
  result.program = std::move(program);
  return result;
}

}  // namespace callscape
