// pft: command-line driver for the personalised feature translation pipeline.
//
// Every command works inside one run directory (--out). Artifacts carry the
// manifest hash of the (config, seed) pair that produced them, and commands
// refuse inputs from a different run.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pft/io/artifacts.hpp"
#include "pft/io/tables.hpp"
#include "pft/pipeline/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "run";
};

struct Context {
  pft::RunConfig cfg;
  std::string manifest;
  fs::path out;
};

Context open_context(const Common& c) {
  Context ctx;
  if (!c.config.empty()) ctx.cfg = pft::load_run_config(c.config);
  ctx.cfg.set_seed(c.seed);
  ctx.cfg.validate();
  ctx.manifest = pft::manifest_hash(ctx.cfg);
  ctx.out = c.out;
  fs::create_directories(ctx.out);
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  pft::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

fs::path data_dir(const Context& ctx) { return ctx.out / "data"; }

pft::Dataset load_data(const Context& ctx) {
  const fs::path dir = data_dir(ctx);
  if (!fs::exists(dir / "manifest.json")) throw pft::DependencyError("dataset not found; run gen-data first", dir.string());
  return pft::read_dataset_dir(dir, ctx.manifest);
}

pft::SourceModel load_source(const Context& ctx) {
  return pft::unpack_source(pft::load_artifact(ctx.out / "source.ckpt", "source", ctx.manifest), ctx.cfg.train.feat_dim);
}

pft::PretrainedTranslator load_translator(const Context& ctx) {
  return pft::unpack_translator(pft::load_artifact(ctx.out / "translator.ckpt", "translator", ctx.manifest),
                                ctx.cfg.train.feat_dim);
}

std::vector<pft::Personalization> load_personalizations(const Context& ctx) {
  return pft::unpack_personalizations(
      pft::load_artifact(ctx.out / "personalized.ckpt", "personalizations", ctx.manifest), ctx.cfg.train.feat_dim);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw pft::ConfigError("seed range is reversed", item);
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw pft::ConfigError("cannot parse seed list", text);
    }
  }
  return out;
}

int cmd_gen_data(const Common& c) {
  const Context ctx = open_context(c);
  const pft::Dataset data = pft::generate_dataset(ctx.cfg.dataset);
  pft::write_dataset_dir(data, ctx.cfg, data_dir(ctx));
  write_json(ctx.out / "run.json", pft::run_manifest(ctx.cfg));
  std::cout << "dataset written to " << data_dir(ctx).string() << " (" << data.source_train.size() << " source train, "
            << data.source_val.size() << " source val, " << data.targets.size() << " target subjects)\n";
  return 0;
}

int cmd_train_source(const Common& c) {
  const Context ctx = open_context(c);
  const pft::Dataset data = load_data(ctx);
  const pft::SourceData src = pft::make_source_data(data);
  const pft::SourceModel m = pft::train_source_classifier(src, data.spec.input_dim, data.spec.classes, ctx.cfg.train);
  pft::save_container(pft::pack_source(m, ctx.manifest), ctx.out / "source.ckpt");
  std::cout << "source classifier: validation accuracy " << pft::format_accuracy(m.final_val_accuracy) << "%\n";
  return 0;
}

int cmd_pretrain(const Common& c) {
  const Context ctx = open_context(c);
  const pft::SourceModel m = load_source(ctx);
  const pft::Dataset data = load_data(ctx);
  const pft::SourceData src = pft::make_source_data(data);
  const auto pairs = pft::initial_pairs(src, m.extractor, m.classifier, ctx.cfg.train);
  write_stream(ctx.out / "pairs.csv", [&](std::ostream& o) { pft::write_pairs_csv(o, pairs, src.train(), ctx.manifest); });
  const pft::PretrainedTranslator t = pft::pretrain_translator(src, m.extractor, m.classifier, ctx.cfg.train);
  pft::save_container(pft::pack_translator(t, ctx.manifest), ctx.out / "translator.ckpt");
  std::cout << "translator pretrained with " << pft::strategy_name(ctx.cfg.train.pairing.strategy)
            << " pairing; final objective " << (t.objective.empty() ? 0.0 : t.objective.back()) << "\n";
  return 0;
}

int cmd_adapt(const Common& c) {
  const Context ctx = open_context(c);
  const pft::SourceModel m = load_source(ctx);
  const pft::PretrainedTranslator t = load_translator(ctx);
  const pft::Dataset data = load_data(ctx);
  pft::SourceData src = pft::make_source_data(data);
  src.close();
  std::vector<pft::Personalization> ps;
  for (const auto& target : data.targets) {
    const pft::SubjectProfile attrs = pft::observable_attributes(data.profile(target.subject_id));
    ps.push_back(pft::adapt_target(target.adaptation, &attrs, m.extractor, m.classifier, t, src, ctx.cfg.train));
    std::cout << "subject " << target.subject_id << ": reference " << ps.back().reference_subject << ", loss "
              << ps.back().loss.front() << " -> " << ps.back().loss.back() << "\n";
  }
  pft::save_container(pft::pack_personalizations(ps, ctx.manifest), ctx.out / "personalized.ckpt");
  return 0;
}

int cmd_eval(const Common& c, bool oracle) {
  const Context ctx = open_context(c);
  const pft::SourceModel m = load_source(ctx);
  const pft::PretrainedTranslator t = load_translator(ctx);
  const std::vector<pft::Personalization> ps = load_personalizations(ctx);
  const pft::Dataset data = load_data(ctx);

  pft::EvalReport report;
  report.rows = pft::evaluate(data.targets, m.extractor, m.classifier, ps);
  if (oracle) {
    for (const auto& target : data.targets) {
      const auto [f, cl] = pft::oracle_finetune(target.train, m.extractor, m.classifier, ctx.cfg.train);
      report.rows.push_back(pft::score_subject(pft::Setting::oracle, target, f, cl));
    }
  }
  report.cost = pft::adaptation_cost(m.extractor, m.classifier, t.translator);
  write_stream(ctx.out / "eval.csv", [&](std::ostream& o) { pft::write_eval_csv(o, report.rows, ctx.manifest); });

  json averages = json::object();
  for (const auto s : {pft::Setting::source_only, pft::Setting::pft, pft::Setting::oracle}) {
    if (report.has(s)) averages[pft::setting_name(s)] = report.average(s);
  }
  write_json(ctx.out / "eval.json", pft::run_manifest(ctx.cfg, {{"averages", averages}, {"cost", pft::cost_json(report.cost)}}));
  for (const auto& [k, v] : averages.items()) std::cout << k << ": " << pft::format_accuracy(v.get<double>()) << "%\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& seeds_text, bool dims) {
  const Context ctx = open_context(c);
  const auto seeds = parse_seed_list(seeds_text, c.seed);
  std::vector<pft::AblationPoint> points;
  std::string annotation;
  std::string stem;
  if (dims) {
    const std::vector<std::size_t> widths(std::begin(pft::kFeatureDims), std::end(pft::kFeatureDims));
    points = pft::ablate_dims(ctx.cfg.dataset, ctx.cfg.train, widths, seeds);
    annotation = pft::dims_annotation();
    stem = "ablate_dim";
  } else {
    points = pft::ablate_pairing(ctx.cfg.dataset, ctx.cfg.train,
                                 {pft::PairingStrategy::random, pft::PairingStrategy::cosine, pft::PairingStrategy::landmark},
                                 seeds);
    annotation = pft::pairing_annotation();
    stem = "ablate_pairing";
  }
  write_stream(ctx.out / (stem + ".csv"), [&](std::ostream& o) { pft::write_ablation_csv(o, points, ctx.manifest); });
  write_stream(ctx.out / (stem + "_summary.csv"),
               [&](std::ostream& o) { pft::write_ablation_summary_csv(o, points, ctx.manifest); });
  json cost = json::array();
  for (const auto& p : points) {
    cost.push_back({{"value", p.value}, {"seed", p.seed}, {"cost", pft::cost_json(p.report.cost)}});
  }
  write_json(ctx.out / (stem + ".json"),
             pft::run_manifest(ctx.cfg, {{"seeds", seeds}, {"annotation", annotation}, {"cost", cost}}));
  std::ostringstream summary;
  pft::write_ablation_summary_csv(summary, points, ctx.manifest);
  std::cout << summary.str() << annotation << "\n";
  return 0;
}

int cmd_export_embeddings(const Common& c) {
  const Context ctx = open_context(c);
  const pft::SourceModel m = load_source(ctx);
  const std::vector<pft::Personalization> ps = load_personalizations(ctx);
  const pft::Dataset data = load_data(ctx);
  std::vector<pft::EmbeddingRow> rows;
  json separation = json::array();
  for (const auto& target : data.targets) {
    const auto it = std::find_if(ps.begin(), ps.end(), [&](const auto& p) { return p.subject_id == target.subject_id; });
    if (it == ps.end()) {
      throw pft::DependencyError("no personalisation for target subject", std::to_string(target.subject_id));
    }
    pft::SeparationPoint sep;
    const auto sub = pft::embed_subject(target.test, m.extractor, *it, &sep);
    rows.insert(rows.end(), sub.begin(), sub.end());
    separation.push_back({{"subject_id", sep.subject_id}, {"source_only", sep.source_only}, {"pft", sep.pft}});
  }
  write_stream(ctx.out / "embeddings.csv", [&](std::ostream& o) { pft::write_embeddings_csv(o, rows, ctx.manifest); });
  write_json(ctx.out / "embeddings.json", pft::run_manifest(ctx.cfg, {{"separation", separation}}));
  std::cout << rows.size() << " embedding rows written\n";
  return 0;
}

int cmd_report(const Common& c, std::vector<std::string> inputs) {
  const Context ctx = open_context(c);
  if (inputs.empty()) inputs.push_back((ctx.out / "eval.csv").string());
  std::vector<pft::EvalCsv> parts;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw pft::DependencyError("evaluation CSV not found; run eval first", path);
    parts.push_back(pft::read_eval_csv(in, path));
  }
  const std::string table = pft::merge_report(parts);
  write_text(ctx.out / "report.csv", table);
  std::cout << table;
  return 0;
}

int exit_code_for(const pft::Error& e) {
  if (e.code() == "invalid_config") return 2;
  if (e.code() == "missing_dependency") return 3;
  if (e.code() == "manifest_mismatch") return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalised feature translation for source-free adaptation on synthetic subjects"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration (JSON)");
    sub->add_option("--seed", common.seed, "Seed for data generation and training");
    sub->add_option("--out", common.out, "Run directory")->capture_default_str();
    return sub;
  };

  auto* gen = add_common(app.add_subcommand("gen-data", "Generate the synthetic subject dataset"));
  auto* train = add_common(app.add_subcommand("train-source", "Train the source feature extractor and classifier"));
  auto* pre = add_common(app.add_subcommand("pretrain-translator", "Pretrain the translator by subject swapping"));
  auto* adapt = add_common(app.add_subcommand("adapt", "Personalise the translator per target subject"));
  auto* eval = add_common(app.add_subcommand("eval", "Evaluate source-only, personalised and oracle models"));
  bool no_oracle = false;
  eval->add_flag("--no-oracle", no_oracle, "Skip the oracle fine-tuning bound");
  std::string seeds;
  auto* abl_dim = add_common(app.add_subcommand("ablate-dim", "Feature width sweep over 64, 128, 256, 512"));
  abl_dim->add_option("--seeds", seeds, "Seed list such as 0-4 or 0,2,3 (default: --seed)");
  auto* abl_pair = add_common(app.add_subcommand("ablate-pairing", "Pairing strategy sweep: random, cosine, landmark"));
  abl_pair->add_option("--seeds", seeds, "Seed list such as 0-4 or 0,2,3 (default: --seed)");
  auto* emb = add_common(app.add_subcommand("export-embeddings", "2-D projection of target features before and after adaptation"));
  auto* rep = add_common(app.add_subcommand("report", "Merge evaluation CSVs into a per-subject table"));
  std::vector<std::string> inputs;
  rep->add_option("--inputs", inputs, "Evaluation CSVs (default: <out>/eval.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"code", "usage"}, {"message", e.what()}, {"context", ""}}.dump() << "\n";
    return 64;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*train) return cmd_train_source(common);
    if (*pre) return cmd_pretrain(common);
    if (*adapt) return cmd_adapt(common);
    if (*eval) return cmd_eval(common, !no_oracle);
    if (*abl_dim) return cmd_ablate(common, seeds, true);
    if (*abl_pair) return cmd_ablate(common, seeds, false);
    if (*emb) return cmd_export_embeddings(common);
    if (*rep) return cmd_report(common, inputs);
  } catch (const pft::Error& e) {
    std::cerr << pft::error_json(e).dump() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"code", "internal"}, {"message", e.what()}, {"context", ""}}.dump() << "\n";
    return 1;
  }
  return 1;
}
