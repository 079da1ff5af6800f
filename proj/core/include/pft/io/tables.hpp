#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pft/error.hpp"
#include "pft/io/config.hpp"
#include "pft/pipeline/report.hpp"

namespace pft {

/// Accuracy printed the way result tables show it: two decimals.
std::string format_accuracy(double percent);
/// Shortest text that reads back to the same double.
std::string format_raw(double v);

// Evaluation CSV: manifest,subject_id,setting,accuracy,accuracy_raw,n_test
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows, const std::string& manifest);

struct EvalCsv {
  std::string manifest;
  std::vector<EvalRow> rows;
};
EvalCsv read_eval_csv(std::istream& in, const std::string& source_name = "<stream>");

/// Settings as rows, subjects as columns, plus an Avg. column. Refuses to
/// combine files written under different manifests and duplicate
/// (subject, setting) cells.
std::string merge_report(const std::vector<EvalCsv>& parts);

// Ablation CSV: manifest,variable,value,seed,setting,accuracy,accuracy_raw
void write_ablation_csv(std::ostream& out, const std::vector<AblationPoint>& points, const std::string& manifest);

/// Seed-averaged accuracy per value, in first-seen value order:
/// manifest,variable,value,setting,seeds,accuracy,accuracy_raw
void write_ablation_summary_csv(std::ostream& out, const std::vector<AblationPoint>& points, const std::string& manifest);

/// {code, message, context}
nlohmann::json error_json(const Error& e);

/// Config echo, seed, manifest hash, and any extras (cost, timing, notes).
nlohmann::json run_manifest(const RunConfig& cfg, const nlohmann::json& extras = nlohmann::json::object());

nlohmann::json cost_json(const CostReport& cost);
nlohmann::json timing_json(const PhaseTiming& t);

}  // namespace pft
