#include "pft/io/tables.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "pft/io/config.hpp"

namespace pft {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw FormatError("malformed number '" + text + "'", where);
  return v;
}

constexpr const char* kEvalHeader = "manifest,subject_id,setting,accuracy,accuracy_raw,n_test";

}  // namespace

std::string format_accuracy(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", percent);
  return buf;
}

std::string format_raw(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows, const std::string& manifest) {
  out << kEvalHeader << '\n';
  for (const auto& r : rows) {
    out << manifest << ',' << r.subject_id << ',' << setting_name(r.setting) << ',' << format_accuracy(r.accuracy) << ','
        << format_raw(r.accuracy) << ',' << r.n_test << '\n';
  }
}

EvalCsv read_eval_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line) || line != kEvalHeader) throw FormatError("not an evaluation CSV (unexpected header)", source_name);
  EvalCsv out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(lineno);
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) throw FormatError("expected 6 columns", where);
    if (out.rows.empty() && out.manifest.empty()) out.manifest = cells[0];
    if (cells[0] != out.manifest) throw ManifestError("rows from different manifests in one file", where);
    EvalRow r;
    r.subject_id = parse_number<int>(cells[1], where);
    r.setting = parse_setting(cells[2]);
    r.accuracy = parse_number<double>(cells[4], where);
    r.n_test = parse_number<std::size_t>(cells[5], where);
    out.rows.push_back(r);
  }
  return out;
}

std::string merge_report(const std::vector<EvalCsv>& parts) {
  if (parts.empty()) throw ContractError("report: nothing to merge");
  const std::string& manifest = parts.front().manifest;
  std::map<Setting, std::map<int, double>> cells;
  std::set<int> subjects;
  for (const auto& part : parts) {
    if (part.manifest != manifest) {
      throw ManifestError("refusing to merge results from different run manifests", manifest + " vs " + part.manifest);
    }
    for (const auto& r : part.rows) {
      if (!cells[r.setting].emplace(r.subject_id, r.accuracy).second) {
        throw FormatError("duplicate result for one subject and setting",
                          "subject=" + std::to_string(r.subject_id) + " setting=" + setting_name(r.setting));
      }
      subjects.insert(r.subject_id);
    }
  }
  std::ostringstream out;
  out << "manifest,setting";
  for (const int s : subjects) out << ",S" << s;
  out << ",Avg.\n";
  for (const auto& [setting, row] : cells) {
    out << manifest << ',' << setting_name(setting);
    double sum = 0.0;
    for (const int s : subjects) {
      const auto it = row.find(s);
      out << ',';
      if (it != row.end()) {
        out << format_accuracy(it->second);
        sum += it->second;
      }
    }
    out << ',' << format_accuracy(sum / static_cast<double>(row.size())) << '\n';
  }
  return out.str();
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationPoint>& points, const std::string& manifest) {
  out << "manifest,variable,value,seed,setting,accuracy,accuracy_raw\n";
  for (const auto& p : points) {
    for (const Setting s : {Setting::source_only, Setting::pft, Setting::oracle}) {
      if (!p.report.has(s)) continue;
      const double a = p.report.average(s);
      out << manifest << ',' << p.variable << ',' << p.value << ',' << p.seed << ',' << setting_name(s) << ','
          << format_accuracy(a) << ',' << format_raw(a) << '\n';
    }
  }
}

void write_ablation_summary_csv(std::ostream& out, const std::vector<AblationPoint>& points, const std::string& manifest) {
  out << "manifest,variable,value,setting,seeds,accuracy,accuracy_raw\n";
  std::vector<std::string> order;
  for (const auto& p : points)
    if (std::find(order.begin(), order.end(), p.value) == order.end()) order.push_back(p.value);
  for (const auto& value : order) {
    for (const Setting s : {Setting::source_only, Setting::pft, Setting::oracle}) {
      double sum = 0.0;
      std::size_t n = 0;
      std::string variable;
      for (const auto& p : points) {
        if (p.value != value || !p.report.has(s)) continue;
        sum += p.report.average(s);
        variable = p.variable;
        ++n;
      }
      if (n == 0) continue;
      const double a = sum / static_cast<double>(n);
      out << manifest << ',' << variable << ',' << value << ',' << setting_name(s) << ',' << n << ','
          << format_accuracy(a) << ',' << format_raw(a) << '\n';
    }
  }
}

nlohmann::json error_json(const Error& e) {
  return {{"code", e.code()}, {"message", e.what()}, {"context", e.context()}};
}

nlohmann::json run_manifest(const RunConfig& cfg, const nlohmann::json& extras) {
  nlohmann::json j{{"manifest", manifest_hash(cfg)}, {"seed", cfg.seed}, {"config", to_json(cfg)}};
  for (const auto& [k, v] : extras.items()) j[k] = v;
  return j;
}

nlohmann::json cost_json(const CostReport& cost) {
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& r : paper_reported_costs()) {
    refs.push_back({{"method", r.method}, {"params_millions", r.params_millions}, {"gflops", r.gflops}, {"note", r.note}});
  }
  return {{"trainable_params", cost.trainable_params},
          {"total_params", cost.total_params},
          {"trainable_fraction", cost.total_params == 0 ? 0.0 : static_cast<double>(cost.trainable_params) / static_cast<double>(cost.total_params)},
          {"flops_per_sample", cost.flops_per_sample},
          {"reference", refs}};
}

nlohmann::json timing_json(const PhaseTiming& t) {
  return {{"classifier_s", t.classifier_s},
          {"translator_s", t.translator_s},
          {"adaptation_s", t.adaptation_s},
          {"oracle_s", t.oracle_s},
          {"evaluation_s", t.evaluation_s}};
}

}  // namespace pft
