#pragma once

// Validator for the JSON Schema subset used by tool descriptors: type,
// properties, required, additionalProperties (boolean), items, enum,
// minimum and description. Unknown keywords are a dialect error.

#include <string>
#include <vector>

#include "json.hpp"

namespace callscape {

// Violations of `value` against `schema`, each prefixed with a JSON pointer.
std::vector<std::string> schema_violations(const nlohmann::json& schema,
                                           const nlohmann::json& value);

// Problems with the schema itself (unknown keywords, malformed keyword values).
std::vector<std::string> schema_dialect_errors(const nlohmann::json& schema);

}  // namespace callscape
