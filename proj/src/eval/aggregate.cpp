#include <algorithm>
#include <set>

#include "callscape/eval.hpp"

namespace callscape {

bool Condition::contains(const Condition& c) const {
  return (program == kAll || program == c.program) && (guidance == kAll || guidance == c.guidance) &&
         (model == kAll || model == c.model);
}

std::string Condition::label() const {
  if (is_config()) return program + " " + guidance + " " + model;
  std::string out(kAll);
  if (program != kAll) out += " " + program;
  if (guidance != kAll) out += guidance == "high" ? " High Guidance" : guidance == "low" ? " Low Guidance" : " " + guidance;
  if (model != kAll) out += " " + model;
  return out;
}

Condition condition_of(const RunConfig& config) {
  return {config.program, std::string(to_string(config.guidance)), config.model};
}

std::vector<Condition> table_conditions(const std::vector<Condition>& configs) {
  const std::set<Condition> unique(configs.begin(), configs.end());
  std::set<std::string> programs, guidance, models;
  for (const auto& c : unique) {
    programs.insert(c.program);
    guidance.insert(c.guidance);
    models.insert(c.model);
  }
  const std::string all(kAll);
  std::vector<Condition> out(unique.begin(), unique.end());
  for (const auto& p : programs) out.push_back({p, all, all});
  for (const auto& g : guidance) out.push_back({all, g, all});
  for (const auto& m : models) out.push_back({all, all, m});
  return out;
}

RunIndex run_index(const PackageSet& packages, const std::vector<RunRecord>& runs) {
  std::map<std::string, const RunRecord*> by_id;
  for (const auto& r : runs) by_id[r.run_id] = &r;
  RunIndex index;
  for (const auto& [item, run_id] : packages.key) {
    const auto it = by_id.find(run_id);
    if (it == by_id.end())
      throw EvalError(EvalErrc::UnmappedItem, "item " + item + " maps to unknown run " + run_id);
    index[item] = condition_of(it->second->config);
  }
  return index;
}

std::vector<AggregateRow> aggregate(const std::vector<RatingRecord>& records, const RunIndex& index) {
  std::vector<const Condition*> config_of;
  config_of.reserve(records.size());
  for (const auto& r : records) {
    const auto it = index.find(r.item_id);
    if (it == index.end()) throw EvalError(EvalErrc::UnmappedItem, "rated item " + r.item_id + " maps to no run");
    config_of.push_back(&it->second);
  }
  std::vector<Condition> configs;
  for (const auto& [item, c] : index) configs.push_back(c);

  std::vector<AggregateRow> out;
  for (const auto& condition : table_conditions(configs)) {
    std::vector<double> pooled;
    std::array<std::vector<double>, 6> per_dimension;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!condition.contains(*config_of[i])) continue;
      for (std::size_t d = 0; d < 6; ++d) {
        pooled.push_back(records[i].scores[d]);
        per_dimension[d].push_back(records[i].scores[d]);
      }
    }
    AggregateRow row{condition, summarize(pooled), {}};
    for (std::size_t d = 0; d < 6; ++d) row.dimensions[d] = summarize(per_dimension[d]);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace callscape
