#include <set>

#include "callscape/agent.hpp"

namespace callscape {

using nlohmann::json;

namespace {

constexpr std::string_view kIdPlaceholder = "<insert ID here>";

}  // namespace

const std::string_view kPromptIntroduction =
    "You are an assistant in an immersive virtual reality \n"
    "system designed to help users reverse engineer \n"
    "binary programs.\n"
    " \n"
    "The user operates in 3D space and can view visual \n"
    "artifacts such as call graphs, control flow graphs, \n"
    "and text windows (slates) with function listings. \n"
    "\n"
    "Your overall goal is to use the available \n"
    "capabilities to help the user understand how the \n"
    "binary works.\n"
    "\n"
    "You should use the tools provided to understand what \n"
    "functions are in the binary program, the \n"
    "capabilities of the functions, and review the \n"
    "decompiled pseudo-source code to understand what key \n"
    "functions do. You may need to make many tool calls. \n"
    " \n"
    "The binary file has ID = <insert ID here>\n"
    "\n"
    "After you have your best understanding of the \n"
    "program's structure and purpose, build a 3D function \n"
    "call graph that is designed and organized in a way \n"
    "to convey the most meaning to the user. \n";

const std::string_view kLowGuidanceConclusion = "Explain your reasoning.";

const std::string_view kHighGuidanceConclusion =
    "To support the user's reasoning, try to:\n"
    "- Group related elements spatially\n"
    "- Use color or shape to distinguish different function types or behaviors\n"
    "- Avoid unnecessary clutter or overlap\n"
    "- Place important elements where they are easy to notice\n"
    "- Label elements when that helps clarity\n"
    "Explain your reasoning.";

std::string_view to_string(AgentErrc code) {
  switch (code) {
    case AgentErrc::UnknownProgram: return "UnknownProgram";
    case AgentErrc::BudgetExhausted: return "BudgetExhausted";
    case AgentErrc::RetriesExhausted: return "RetriesExhausted";
    case AgentErrc::ProviderError: return "ProviderError";
    case AgentErrc::RateLimited: return "RateLimited";
    case AgentErrc::MissingRecording: return "MissingRecording";
    case AgentErrc::ConfigInvalid: return "ConfigInvalid";
  }
  return "ProviderError";
}

std::optional<AgentErrc> agent_errc_from_string(std::string_view name) {
  for (auto code : {AgentErrc::UnknownProgram, AgentErrc::BudgetExhausted, AgentErrc::RetriesExhausted,
                    AgentErrc::ProviderError, AgentErrc::RateLimited, AgentErrc::MissingRecording,
                    AgentErrc::ConfigInvalid})
    if (to_string(code) == name) return code;
  return std::nullopt;
}

std::string_view to_string(Guidance g) { return g == Guidance::High ? "high" : "low"; }

Guidance guidance_from_string(std::string_view name) {
  if (name == "high") return Guidance::High;
  if (name == "low") return Guidance::Low;
  throw AgentError(AgentErrc::ConfigInvalid, "guidance must be 'low' or 'high', got '" + std::string(name) + "'");
}

std::string RunConfig::config_id() const {
  std::string id = program + "-" + std::string(to_string(guidance)) + "-" + model;
  for (auto& c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
  return id;
}

json to_json(const RunConfig& c) {
  return {{"program", c.program},
          {"guidance", std::string(to_string(c.guidance))},
          {"model", c.model},
          {"repetitions", c.repetitions},
          {"max_tool_calls", c.max_tool_calls},
          {"max_retries", c.max_retries}};
}

RunConfig run_config_from_json(const json& doc) {
  try {
    RunConfig c;
    c.program = doc.at("program").get<std::string>();
    c.guidance = guidance_from_string(doc.at("guidance").get<std::string>());
    c.model = doc.at("model").get<std::string>();
    c.repetitions = doc.value("repetitions", 5);
    c.max_tool_calls = doc.value("max_tool_calls", 50);
    c.max_retries = doc.value("max_retries", 3);
    if (c.program.empty() || c.model.empty() || c.repetitions < 1 || c.max_tool_calls < 1 || c.max_retries < 0)
      throw AgentError(AgentErrc::ConfigInvalid, "run config out of range: " + doc.dump());
    return c;
  } catch (const json::exception& e) {
    throw AgentError(AgentErrc::ConfigInvalid, std::string("run config: ") + e.what());
  }
}

std::vector<RunConfig> default_matrix(int repetitions) {
  std::vector<RunConfig> out;
  for (const auto& program : kDefaultPrograms)
    for (auto g : {Guidance::Low, Guidance::High})
      for (const auto& model : kDefaultModels) {
        RunConfig c;
        c.program = program;
        c.guidance = g;
        c.model = model;
        c.repetitions = repetitions;
        out.push_back(c);
      }
  return out;
}

std::vector<RunConfig> matrix_from_json(const json& doc) {
  if (!doc.is_object()) throw AgentError(AgentErrc::ConfigInvalid, "matrix document must be an object");
  try {
    const auto programs = doc.value("programs", kDefaultPrograms);
    const auto guidance = doc.value("guidance", std::vector<std::string>{"low", "high"});
    const auto models = doc.value("models", kDefaultModels);
    std::vector<RunConfig> out;
    std::set<std::string> seen;
    for (const auto& program : programs)
      for (const auto& g : guidance)
        for (const auto& model : models) {
          json one = {{"program", program}, {"guidance", g}, {"model", model}};
          for (const char* key : {"repetitions", "max_tool_calls", "max_retries"})
            if (doc.contains(key)) one[key] = doc[key];
          auto c = run_config_from_json(one);
          if (!seen.insert(c.config_id()).second)
            throw AgentError(AgentErrc::ConfigInvalid, "duplicate configuration " + c.config_id());
          out.push_back(std::move(c));
        }
    if (out.empty()) throw AgentError(AgentErrc::ConfigInvalid, "matrix has no configurations");
    return out;
  } catch (const json::exception& e) {
    throw AgentError(AgentErrc::ConfigInvalid, std::string("matrix document: ") + e.what());
  }
}

std::string build_prompt(Guidance guidance, std::string_view file_id) {
  std::string prompt(kPromptIntroduction);
  prompt.replace(prompt.find(kIdPlaceholder), kIdPlaceholder.size(), file_id);
  prompt += guidance == Guidance::High ? kHighGuidanceConclusion : kLowGuidanceConclusion;
  return prompt;
}

std::string build_prompt(const RunConfig& config, ToolClient& tools) {
  return build_prompt(config.guidance, tools.resolve_file_id(config.program));
}

}  // namespace callscape
