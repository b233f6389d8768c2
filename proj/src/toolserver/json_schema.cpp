#include "callscape/json_schema.hpp"

#include <algorithm>
#include <set>

namespace callscape {
namespace {

using nlohmann::json;

bool matches_type(const std::string& type, const json& value) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "integer") return value.is_number_integer();
  if (type == "number") return value.is_number();
  if (type == "null") return value.is_null();
  return false;
}

void check(const json& schema, const json& value, const std::string& pointer,
           std::vector<std::string>& out) {
  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = matches_type(it->get<std::string>(), value);
    } else {
      for (const auto& t : *it) ok = ok || matches_type(t.get<std::string>(), value);
    }
    if (!ok) {
      out.push_back(pointer + ": expected type " + it->dump());
      return;
    }
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    if (std::find(it->begin(), it->end(), value) == it->end())
      out.push_back(pointer + ": value " + value.dump() + " not in " + it->dump());
  }
  if (auto it = schema.find("minimum"); it != schema.end() && value.is_number()) {
    if (value.get<double>() < it->get<double>())
      out.push_back(pointer + ": below minimum " + it->dump());
  }
  if (value.is_object()) {
    const json* properties = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) properties = &*it;
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it)
        if (!value.contains(key.get<std::string>()))
          out.push_back(pointer + ": missing required property '" + key.get<std::string>() + "'");
    }
    const bool closed = schema.value("additionalProperties", true) == false;
    for (const auto& [key, member] : value.items()) {
      if (properties && properties->contains(key)) {
        check((*properties)[key], member, pointer + "/" + key, out);
      } else if (closed) {
        out.push_back(pointer + ": unexpected property '" + key + "'");
      }
    }
  }
  if (value.is_array()) {
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < value.size(); ++i)
        check(*it, value[i], pointer + "/" + std::to_string(i), out);
    }
  }
}

void check_dialect(const json& schema, const std::string& pointer, std::vector<std::string>& out) {
  static const std::set<std::string> kKeywords = {
      "type", "properties", "required", "additionalProperties", "items",
      "enum", "minimum",    "description"};
  static const std::set<std::string> kTypes = {"object",  "array",  "string", "boolean",
                                               "integer", "number", "null"};
  if (!schema.is_object()) {
    out.push_back(pointer + ": schema must be an object");
    return;
  }
  for (const auto& [key, value] : schema.items()) {
    if (!kKeywords.count(key)) {
      out.push_back(pointer + ": unsupported keyword '" + key + "'");
      continue;
    }
    if (key == "type") {
      auto valid = [&](const json& t) { return t.is_string() && kTypes.count(t.get<std::string>()); };
      const bool ok = value.is_array() ? std::all_of(value.begin(), value.end(), valid) : valid(value);
      if (!ok) out.push_back(pointer + "/type: unknown type " + value.dump());
    } else if (key == "properties") {
      if (!value.is_object()) {
        out.push_back(pointer + "/properties: must be an object");
        continue;
      }
      for (const auto& [name, sub] : value.items())
        check_dialect(sub, pointer + "/properties/" + name, out);
    } else if (key == "items") {
      check_dialect(value, pointer + "/items", out);
    } else if (key == "required") {
      if (!value.is_array() ||
          !std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_string(); }))
        out.push_back(pointer + "/required: must be an array of strings");
    } else if (key == "additionalProperties" && !value.is_boolean()) {
      out.push_back(pointer + "/additionalProperties: only booleans are supported");
    } else if (key == "enum" && (!value.is_array() || value.empty())) {
      out.push_back(pointer + "/enum: must be a non-empty array");
    } else if (key == "minimum" && !value.is_number()) {
      out.push_back(pointer + "/minimum: must be a number");
    } else if (key == "description" && !value.is_string()) {
      out.push_back(pointer + "/description: must be a string");
    }
  }
}

}  // namespace

std::vector<std::string> schema_violations(const json& schema, const json& value) {
  std::vector<std::string> out;
  check(schema, value, "", out);
  return out;
}

std::vector<std::string> schema_dialect_errors(const json& schema) {
  std::vector<std::string> out;
  check_dialect(schema, "", out);
  return out;
}

}  // namespace callscape
