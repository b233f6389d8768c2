#include <algorithm>
#include <cctype>
#include <functional>
#include <random>
#include <set>

#include "callscape/eval.hpp"

namespace callscape {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Words that would reveal a condition if they appeared in a package.
const std::set<std::string> kConditionWords = {"high", "low", "guidance", "model", "llm", "gpt", "mini", "o4"};

// Keys that would carry a condition in a structured document.
const std::set<std::string> kConditionKeys = {"guidance", "model", "llm", "condition", "config", "config_id", "run_id"};

std::string item_id(std::size_t index, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count).size());
  std::string digits = std::to_string(index + 1);
  return "item-" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 gen(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t range = i;
    const std::uint64_t reject_below = (0 - range) % range;
    std::uint64_t r;
    do r = gen();
    while (r < reject_below);
    std::swap(order[i - 1], order[r % range]);
  }
  return order;
}

json to_json(const Package& p) {
  json items = json::array();
  for (const auto& it : p.items)
    items.push_back({{"item_id", it.item_id},
                     {"scene_ref", it.scene_ref},
                     {"truth_ref", it.truth_ref},
                     {"program", it.program},
                     {"source_ref", it.source_ref}});
  return {{"rater_id", p.rater_id}, {"seed", p.seed}, {"items", std::move(items)}};
}

Package package_from_json(const json& doc) {
  try {
    Package p;
    p.rater_id = doc.at("rater_id").get<std::string>();
    p.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& it : doc.at("items"))
      p.items.push_back({it.at("item_id").get<std::string>(), it.at("scene_ref").get<std::string>(),
                         it.at("truth_ref").get<std::string>(), it.at("program").get<std::string>(),
                         it.at("source_ref").get<std::string>()});
    return p;
  } catch (const json::exception& e) {
    throw EvalError(EvalErrc::SchemaViolation, std::string("package document: ") + e.what());
  }
}

std::vector<RunRecord> runs_with_scenes(const std::vector<RunRecord>& runs, std::vector<std::string>* dropped) {
  std::vector<RunRecord> out;
  for (const auto& r : runs) {
    if (r.scene)
      out.push_back(r);
    else if (dropped)
      dropped->push_back(r.run_id);
  }
  return out;
}

std::vector<std::string> blinding_findings(std::string_view serialized, const std::vector<RunRecord>& runs) {
  std::set<std::string> found;
  const std::string text = lower(serialized);
  std::string token;
  auto flush = [&] {
    if (kConditionWords.count(token)) found.insert(token);
    token.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      token += c;
    else
      flush();
  }
  flush();
  for (const auto& r : runs)
    for (const auto& needle : {lower(r.config.model), lower(r.config.config_id())})
      if (!needle.empty() && text.find(needle) != std::string::npos) found.insert(needle);
  return {found.begin(), found.end()};
}

std::vector<std::string> condition_field_findings(const json& doc, const std::vector<RunRecord>& runs) {
  std::set<std::string> found;
  std::vector<std::string> needles;
  for (const auto& r : runs)
    for (const auto& n : {lower(r.config.model), lower(r.config.config_id()), lower(r.run_id)})
      if (!n.empty()) needles.push_back(n);
  std::function<void(const json&)> walk = [&](const json& v) {
    if (v.is_object()) {
      for (const auto& [key, child] : v.items()) {
        if (kConditionKeys.count(lower(key))) found.insert(key);
        walk(child);
      }
    } else if (v.is_array()) {
      for (const auto& child : v) walk(child);
    } else if (v.is_string()) {
      const std::string text = lower(v.get<std::string>());
      for (const auto& n : needles)
        if (text.find(n) != std::string::npos) found.insert(n);
    }
  };
  walk(doc);
  return {found.begin(), found.end()};
}

PackageSet make_packages(const std::vector<RunRecord>& runs, const std::vector<std::string>& raters,
                         std::uint64_t seed) {
  if (raters.empty()) throw EvalError(EvalErrc::SchemaViolation, "at least one rater is required");
  std::set<std::string> unique;
  for (const auto& r : raters) {
    if (r.empty() || r.find('/') != std::string::npos || r.find(',') != std::string::npos)
      throw EvalError(EvalErrc::SchemaViolation, "invalid rater id '" + r + "'");
    if (!unique.insert(r).second) throw EvalError(EvalErrc::SchemaViolation, "duplicate rater id '" + r + "'");
  }
  for (const auto& r : runs)
    if (!r.scene) throw EvalError(EvalErrc::MissingScene, "run " + r.run_id + " has no scene");

  PackageSet set;
  set.seed = seed;
  std::vector<PackageItem> items;
  for (std::size_t k : seeded_permutation(runs.size(), seed)) {
    const auto& run = runs[k];
    const std::string id = item_id(items.size(), runs.size());
    set.key[id] = run.run_id;
    items.push_back({id, "/api/scenes/" + id, "/api/truth/" + id, run.config.program, "/api/source/" + id});
  }
  for (const auto& rater : raters) {
    Package p;
    p.rater_id = rater;
    p.seed = splitmix64(seed ^ fnv1a(rater));
    for (std::size_t k : seeded_permutation(items.size(), p.seed)) p.items.push_back(items[k]);
    const auto findings = blinding_findings(to_json(p).dump(), runs);
    if (!findings.empty())
      throw EvalError(EvalErrc::BlindingViolation, "package for " + rater + " reveals '" + findings.front() + "'");
    set.packages.push_back(std::move(p));
  }
  return set;
}

}  // namespace callscape
