#include <cmath>
#include <cstdio>
#include <set>

#include "callscape/eval.hpp"

namespace callscape {

namespace {

std::string number(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string probability(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SplitTest {
  std::string split;
  StatTestResult result;
};

std::vector<SplitTest> split_tests(const std::vector<RunRecord>& runs) {
  struct Factor {
    const char* name;
    std::string Condition::*field;
  };
  const Factor factors[] = {{"program", &Condition::program},
                            {"guidance", &Condition::guidance},
                            {"model", &Condition::model}};
  std::vector<SplitTest> out;
  for (const auto& factor : factors) {
    std::set<std::string> levels;
    for (const auto& r : runs) levels.insert(condition_of(r.config).*factor.field);
    const std::vector<std::string> ordered(levels.begin(), levels.end());
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      for (std::size_t j = i + 1; j < ordered.size(); ++j) {
        Condition a{std::string(kAll), std::string(kAll), std::string(kAll)}, b = a;
        a.*factor.field = ordered[i];
        b.*factor.field = ordered[j];
        for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
          std::vector<double> xs, ys;
          for (const auto& r : runs) {
            if (!r.metrics) continue;
            const double v = metric_vector(*r.metrics)[static_cast<Eigen::Index>(k)];
            const Condition c = condition_of(r.config);
            if (a.contains(c)) xs.push_back(v);
            if (b.contains(c)) ys.push_back(v);
          }
          StatTestResult res;
          try {
            res = welch_t_test(xs, ys);
          } catch (const EvalError&) {
            const Summary sa = summarize(xs), sb = summarize(ys);
            res.n_a = sa.n;
            res.n_b = sb.n;
            res.mean_a = sa.mean;
            res.mean_b = sb.mean;
            res.t = res.df = res.p = std::nan("");
          }
          res.metric = std::string(kMetricNames[k]);
          res.group_a = a.label();
          res.group_b = b.label();
          out.push_back({factor.name, std::move(res)});
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<StatTestResult> condition_tests(const std::vector<RunRecord>& runs) {
  std::vector<StatTestResult> out;
  for (auto& s : split_tests(runs)) out.push_back(std::move(s.result));
  return out;
}

ReportDocuments report(const std::vector<RunRecord>& runs, const PackageSet& packages,
                       const std::vector<RatingRecord>& records) {
  std::vector<std::pair<std::string, MetricsReport>> cohort;
  for (const auto& r : runs)
    if (r.metrics) cohort.emplace_back(r.run_id, *r.metrics);
  std::map<std::string, double> composite;
  if (cohort.size() >= 2)
    for (const auto& c : composite_scores(cohort)) composite[c.scene_id] = c.value;

  std::vector<AggregateRow> rated;
  if (!records.empty()) rated = aggregate(records, run_index(packages, runs));
  std::map<Condition, const AggregateRow*> rated_by;
  for (const auto& row : rated) rated_by[row.condition] = &row;

  std::map<Condition, std::size_t> ratings_in;
  if (!records.empty()) {
    const RunIndex index = run_index(packages, runs);
    for (const auto& rec : records)
      for (const auto& row : rated)
        if (row.condition.contains(index.at(rec.item_id))) ++ratings_in[row.condition];
  }

  std::vector<Condition> configs;
  for (const auto& r : runs) configs.push_back(condition_of(r.config));

  ReportDocuments docs;
  docs.table1_csv =
      "condition,program,guidance,model,runs,scenes,ratings,subj_mean,subj_cv,composite_mean,composite_cv\n";
  for (const auto& condition : table_conditions(configs)) {
    std::size_t n_runs = 0, n_scenes = 0;
    std::vector<double> values;
    for (const auto& r : runs) {
      if (!condition.contains(condition_of(r.config))) continue;
      ++n_runs;
      n_scenes += r.scene.has_value();
      if (const auto it = composite.find(r.run_id); it != composite.end()) values.push_back(it->second);
    }
    const Summary comp = summarize(values);
    const auto row = rated_by.find(condition);
    const bool has_subjective = row != rated_by.end() && row->second->subjective.n > 0;
    docs.table1_csv += condition.label() + "," + condition.program + "," + condition.guidance + "," +
                       condition.model + "," + std::to_string(n_runs) + "," + std::to_string(n_scenes) + "," +
                       std::to_string(has_subjective ? ratings_in[condition] : 0) + "," +
                       (has_subjective ? number(row->second->subjective.mean) : "NA") + "," +
                       (has_subjective ? number(row->second->subjective.cv) : "NA") + "," + number(comp.mean) +
                       "," + number(comp.cv) + "\n";
  }

  docs.tests_csv = "split,metric,group_a,group_b,n_a,n_b,mean_a,mean_b,t,df,p\n";
  for (const auto& [split, r] : split_tests(runs))
    docs.tests_csv += split + "," + r.metric + "," + r.group_a + "," + r.group_b + "," + std::to_string(r.n_a) +
                      "," + std::to_string(r.n_b) + "," + number(r.mean_a) + "," + number(r.mean_b) + "," +
                      number(r.t) + "," + number(r.df) + "," + probability(r.p) + "\n";

  docs.dimensions_csv = "condition,dimension,n,mean,cv\n";
  for (const auto& row : rated) {
    if (row.subjective.n == 0) continue;
    for (std::size_t d = 0; d < kRatingDimensions.size(); ++d)
      docs.dimensions_csv += row.condition.label() + "," + std::string(kRatingDimensions[d]) + "," +
                             std::to_string(row.dimensions[d].n) + "," + number(row.dimensions[d].mean) + "," +
                             number(row.dimensions[d].cv) + "\n";
  }

  std::size_t scenes = 0;
  for (const auto& r : runs) scenes += r.scene.has_value();
  std::string& n = docs.notes;
  n += "runs: " + std::to_string(runs.size()) + ", scenes: " + std::to_string(scenes) +
       ", runs with metrics: " + std::to_string(cohort.size()) + ", rating records: " +
       std::to_string(records.size()) + "\n";
  n += "subj_mean pools all six dimensions of every rating of the condition's items into one population. "
       "When ratings are missing this differs from the mean of per-dimension means (see dimensions.csv).\n";
  n += "cv is the population standard deviation divided by the mean.\n";
  n += "composite_mean and composite_cv summarize per-run composites: each of the seven objective metrics is "
       "min-max normalized over all runs with metrics (0.5 for a constant metric) and the normalized values "
       "are averaged.\n";
  n += "tests.csv: Welch two-sided t-tests on the objective metrics per run, alpha 0.05, no multiple-comparison "
       "correction. NA marks a degenerate sample (fewer than two values or zero variance in both).\n";
  n += "cognitive_load is used as answered (1 = most effort; 5 = least), with no reversal.\n";
  if (records.empty()) n += "No ratings: subjective columns are NA.\n";
  if (cohort.size() < 2) n += "Fewer than two runs with metrics: composite columns are NA.\n";
  return docs;
}

}  // namespace callscape
