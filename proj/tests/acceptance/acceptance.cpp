// Acceptance runner: one PASS/FAIL line per criterion on stdout, progress on
// stderr, and an optional JSON summary at the path given as the first argument.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pft/error.hpp"
#include "pft/io/artifacts.hpp"
#include "pft/io/tables.hpp"
#include "pft/log.hpp"
#include "pft/pipeline/report.hpp"
#include "support/cases.hpp"

namespace {

using namespace pft;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeeds = 5;
constexpr std::size_t kAblationDims[] = {64, 256, 512};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

SourceModel copy_of(const SourceModel& m) {
  return {m.extractor.clone(), m.classifier.clone(), m.val_loss, m.val_accuracy, m.final_val_accuracy};
}

bool cost_within_budget(const CostReport& c) {
  return c.total_params > 0 && 10 * c.trainable_params <= c.total_params;
}

// Everything measured on one seed of the default benchmark.
struct SeedResult {
  std::uint64_t seed = 0;
  double seconds = 0;
  EvalReport report;
  std::string eval_csv;
  std::vector<SeparationPoint> separation;
  bool frozen_intact = false;
  bool identity_start_equal = false;
  std::size_t identity_start_frames = 0;
  std::map<std::string, double> pairing_pft;  // strategy -> pft average
  std::map<std::size_t, double> dims_pft;     // feat_dim -> pft average
  std::vector<CostReport> costs;
  std::vector<std::uint8_t> source_checkpoint;
  std::vector<std::uint8_t> translator_checkpoint;
  std::vector<double> adaptation_loss_first, adaptation_loss_last;
};

SeedResult run_seed(std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  RunConfig rc;
  rc.set_seed(seed);
  const std::string manifest = manifest_hash(rc);
  const Dataset data = generate_dataset(rc.dataset);

  const auto t0 = Clock::now();
  const SourceData src = make_source_data(data);
  SourceModel trained = train_source_classifier(src, rc.dataset.input_dim, rc.dataset.classes, rc.train);
  const SourceModel reference = copy_of(trained);
  const auto frozen_bytes = encode(pack_source(trained, manifest));
  BenchmarkRun run = run_from_source(data, std::move(trained), rc.train, {.oracle = true, .embeddings = true});
  r.seconds = since(t0);

  r.frozen_intact = encode(pack_source(run.source, manifest)) == frozen_bytes &&
                    parameter_bytes(run.source.extractor, run.source.classifier) ==
                        parameter_bytes(reference.extractor, reference.classifier);
  r.report = run.report;
  std::ostringstream csv;
  write_eval_csv(csv, run.report.rows, manifest);
  r.eval_csv = csv.str();
  r.separation = run.separation;
  r.costs.push_back(run.report.cost);
  r.pairing_pft[strategy_name(rc.train.pairing.strategy)] = run.report.average(Setting::pft);
  r.dims_pft[rc.train.feat_dim] = run.report.average(Setting::pft);
  r.source_checkpoint = frozen_bytes;
  r.translator_checkpoint = encode(pack_translator(run.pretrained, manifest));
  for (const auto& p : run.personalizations) {
    r.adaptation_loss_first.push_back(p.loss.front());
    r.adaptation_loss_last.push_back(p.loss.back());
  }
  progress("seed " + std::to_string(seed) + ": source_only " + fmt("%.2f", run.report.average(Setting::source_only)) +
           " pft " + fmt("%.2f", run.report.average(Setting::pft)) + " oracle " +
           fmt("%.2f", run.report.average(Setting::oracle)) + " in " + fmt("%.1f", r.seconds) + " s");

  // Identity start: an untouched translator without statistics alignment.
  {
    TrainConfig cfg = rc.train;
    cfg.epochs_translator = 0;
    cfg.epochs_adaptation = 0;
    cfg.subject_statistics = false;
    const BenchmarkRun idr = run_from_source(data, copy_of(reference), cfg, {.oracle = false});
    bool equal = true;
    for (std::size_t i = 0; i < data.targets.size(); ++i) {
      const Tensor x = data.targets[i].test.matrix();
      const Prediction base = predict(x, reference.extractor, reference.classifier, nullptr);
      const Prediction pft = predict(x, reference.extractor, reference.classifier, &idr.personalizations[i]);
      equal = equal && !pft.fallback && base.labels == pft.labels;
      r.identity_start_frames += base.labels.size();
    }
    for (const auto& row : idr.report.rows) {
      if (row.setting != Setting::pft) continue;
      for (const auto& base : idr.report.rows)
        if (base.setting == Setting::source_only && base.subject_id == row.subject_id) equal = equal && base.accuracy == row.accuracy;
    }
    r.identity_start_equal = equal;
    r.costs.push_back(idr.report.cost);
  }

  for (const PairingStrategy s : {PairingStrategy::random, PairingStrategy::cosine}) {
    TrainConfig cfg = rc.train;
    cfg.pairing.strategy = s;
    const BenchmarkRun pr = run_from_source(data, copy_of(reference), cfg, {.oracle = false});
    r.pairing_pft[strategy_name(s)] = pr.report.average(Setting::pft);
    r.costs.push_back(pr.report.cost);
  }
  progress("seed " + std::to_string(seed) + ": pairing random " + fmt("%.2f", r.pairing_pft["random"]) + " cosine " +
           fmt("%.2f", r.pairing_pft["cosine"]) + " landmark " + fmt("%.2f", r.pairing_pft["landmark"]));

  for (const std::size_t d : kAblationDims) {
    TrainConfig cfg = rc.train;
    cfg.feat_dim = d;
    const BenchmarkRun dr = run_benchmark(data, cfg, {.oracle = false});
    r.dims_pft[d] = dr.report.average(Setting::pft);
    r.costs.push_back(dr.report.cost);
    progress("seed " + std::to_string(seed) + ": feat_dim " + std::to_string(d) + " pft " + fmt("%.2f", r.dims_pft[d]));
  }
  return r;
}

Verdict gradient_oracle() {
  const auto t0 = Clock::now();
  std::size_t cases = 0, failures = 0;
  std::string first;
  double worst = 0;
  for (const OpKind k : testing::kAllOps) {
    for (std::uint64_t seed = 0; seed < 100; ++seed, ++cases) {
      const auto g = testing::check_op(k, seed);
      worst = std::max(worst, g.worst_rel);
      if (!g.ok() && failures++ == 0) first = std::string(op_name(k)) + " seed " + std::to_string(seed) + ": " + g.first_failure;
    }
  }
  for (const auto which : testing::kObjectives) {
    for (std::uint64_t seed = 0; seed < 100; ++seed, ++cases) {
      const auto g = testing::check_objective(which, seed);
      worst = std::max(worst, g.worst_rel);
      if (!g.ok() && failures++ == 0) first = std::string(which) + " seed " + std::to_string(seed) + ": " + g.first_failure;
    }
  }
  const double secs = since(t0);
  std::string detail = std::to_string(testing::kAllOps.size()) + " ops + " + std::to_string(testing::kObjectives.size()) +
                       " objectives x 100 seeds (" + std::to_string(cases) + " cases), " + std::to_string(failures) +
                       " failures, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f", secs) + " s";
  if (!first.empty()) detail += "; first: " + first;
  return {"AC1", "gradient oracle", failures == 0 && secs < 30.0, detail};
}

Verdict analytic_losses() {
  const int label = 0;
  const double ce = cross_entropy(Tensor::from({1, 2}, {0, 0}), std::span(&label, 1)).item();
  Rng rng(7);
  const Tensor a = testing::random_tensor(rng, {6, 4});
  const double kl_same = kl_divergence(a, a).item();
  const double kl = kl_divergence(Tensor::from({1, 2}, {0, 0}), Tensor::from({1, 2}, {0, std::log(3.0)})).item();
  const double kl_oracle = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  const std::vector<std::size_t> l0{0};
  const double style_zero = style_loss({{a}, {0}}, {{a.clone()}, {0}}, l0).item();
  const double style_unit =
      style_loss({{Tensor::from({2, 2}, {0, 0, 2, 2})}, {0}}, {{Tensor::from({2, 2}, {1, 0, 3, 2})}, {0}}, l0).item();
  const bool pass = std::abs(ce - std::log(2.0)) <= 1e-9 && std::abs(kl_same) <= 1e-12 && std::abs(kl - 0.143841) <= 1e-6 &&
                    std::abs(kl - kl_oracle) <= 1e-12 && std::abs(style_zero) <= 1e-9 && std::abs(style_unit - 1.0) <= 1e-9;
  return {"AC2", "analytic loss values", pass,
          "CE uniform " + fmt("%.12f", ce) + ", KL identity " + fmt("%.1e", kl_same) + ", KL(.5,.5||.25,.75) " +
              fmt("%.9f", kl) + ", style zero " + fmt("%.1e", style_zero) + ", style unit offset " + fmt("%.12f", style_unit)};
}

Verdict cost_contract(const std::vector<SeedResult>& seeds) {
  std::size_t runs = 0, over = 0;
  double worst = 0;
  for (const auto& s : seeds) {
    for (const auto& c : s.costs) {
      ++runs;
      worst = std::max(worst, static_cast<double>(c.trainable_params) / static_cast<double>(c.total_params));
      if (!cost_within_budget(c)) ++over;
    }
  }
  struct Arch {
    std::size_t input, hidden, feat, blocks, classes, k;
  };
  bool formulas = true;
  for (const Arch a : {Arch{32, 512, 128, 3, 2, 32}, Arch{32, 512, 64, 3, 2, 32}, Arch{10, 20, 8, 2, 5, 4}}) {
    Rng rng(1);
    FeatureExtractor f({a.input, a.hidden, a.feat, a.blocks}, rng);
    Classifier c(a.feat, a.classes, rng);
    Translator t(a.feat, a.k, rng);
    set_frozen(f, true);
    set_frozen(c, true);
    std::size_t fp = 0, ff = 0;
    for (std::size_t b = 0; b < a.blocks; ++b) {
      const std::size_t in = b == 0 ? a.input : a.hidden;
      const std::size_t out = b + 1 == a.blocks ? a.feat : a.hidden;
      fp += in * out + out;
      ff += 2 * in * out + out;
    }
    const std::size_t cp = a.feat * a.classes + a.classes;
    const std::size_t tp = 2 * a.feat * a.k + a.k + a.feat;
    const std::size_t tf = 2 * a.feat + 2 * a.feat * a.k + a.k + 2 * a.k * a.feat + a.feat;
    const CostReport r = count_cost(f, c, &t);
    formulas = formulas && r.total_params == fp + cp + tp && r.trainable_params == tp &&
               r.flops_per_sample == ff + 2 * a.feat * a.classes + tf;
  }
  return {"AC8", "lightweight contract", over == 0 && formulas,
          std::to_string(runs) + " configurations, max trainable share " + fmt("%.2f%%", 100.0 * worst) +
              " (budget 10%), hand formulas on 3 architectures " + (formulas ? "exact" : "MISMATCH")};
}

Verdict pairing_equivalence() {
  std::size_t cosine_rows = 0, cosine_bad = 0, landmark_queries = 0, landmark_bad = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DatasetSpec spec;
    spec.n_source_subjects = 10;
    spec.samples_per_class = 20;
    spec.adaptation_frames = 5;
    spec.seed = seed;
    const Dataset d = generate_dataset(spec);
    Rng rng(derive_seed(seed, 3));
    const FeatureExtractor f({spec.input_dim, 64, 64, 3}, rng);
    const Classifier c(64, spec.classes, rng);
    NoGradGuard guard;
    const Tensor feats = f.extract(d.source_train.matrix()).final();
    const Tensor logp = log_softmax(c.classify(feats));
    std::vector<double> loss(d.source_train.size());
    for (std::size_t i = 0; i < loss.size(); ++i) loss[i] = -logp.at(i, static_cast<std::size_t>(d.source_train.labels[i]));
    std::vector<double> sorted = loss;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double threshold = sorted[sorted.size() / 2];
    const auto pairs = cosine_pairs(feats, loss, d.source_train.subjects, threshold);
    const auto oracle = testing::brute_force_cosine(feats, loss, d.source_train.subjects, threshold);
    for (std::size_t i = 0; i < oracle.size(); ++i, ++cosine_rows)
      if (!pairs || (*pairs)[i].identity != oracle[i]) ++cosine_bad;

    const auto profiles = d.source_profiles();
    for (const bool same_gender : {true, false}) {
      PairingConfig cfg;
      cfg.same_gender_required = same_gender;
      for (const SubjectProfile* q : profiles) {
        ++landmark_queries;
        const SubjectMatch m = best_landmark_match(*q, profiles, cfg);
        const SubjectMatch o = testing::exhaustive_landmark_match(*q, profiles, cfg);
        if (m.subject_id != o.subject_id || m.relaxed != o.relaxed || m.score != o.score) ++landmark_bad;
      }
    }
  }
  Rng rng(2024);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto a = testing::random_shape(rng);
    const auto b = testing::random_shape(rng);
    worst = std::max(worst, std::abs(procrustes_residual(a, b) - testing::procrustes_by_grid_search(a, b)));
  }
  const bool pass = cosine_bad == 0 && landmark_bad == 0 && worst <= 1e-6;
  return {"AC9", "brute-force pairing equivalence", pass,
          "cosine " + std::to_string(cosine_rows - cosine_bad) + "/" + std::to_string(cosine_rows) + " rows, landmark " +
              std::to_string(landmark_queries - landmark_bad) + "/" + std::to_string(landmark_queries) +
              " queries (10-subject instances), Procrustes max |closed form - grid| " + fmt("%.2e", worst) + " on 50 pairs"};
}

Verdict determinism(const SeedResult& first) {
  RunConfig rc;
  rc.set_seed(first.seed);
  const Dataset data = generate_dataset(rc.dataset);
  const BenchmarkRun again = run_benchmark(data, rc.train, {.oracle = true});
  std::ostringstream csv;
  write_eval_csv(csv, again.report.rows, manifest_hash(rc));
  const bool csv_equal = csv.str() == first.eval_csv;

  const auto dir = std::filesystem::temp_directory_path() / "pft_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  bool roundtrip = true, rejected = false;
  for (const auto* bytes : {&first.source_checkpoint, &first.translator_checkpoint}) {
    const auto path = dir / "artifact.ckpt";
    write_file(path, *bytes);
    roundtrip = roundtrip && encode(load_container(path)) == *bytes;
  }
  {
    const SourceModel back = unpack_source(decode(first.source_checkpoint), rc.train.feat_dim);
    roundtrip = roundtrip && encode(pack_source(back, manifest_hash(rc))) == first.source_checkpoint;
    auto corrupt = first.source_checkpoint;
    corrupt[corrupt.size() / 2] ^= 0x10;
    write_file(dir / "corrupt.ckpt", corrupt);
    try {
      load_container(dir / "corrupt.ckpt");
    } catch (const ChecksumError&) {
      rejected = true;
    }
  }
  std::filesystem::remove_all(dir);
  return {"AC10", "determinism and persistence", csv_equal && roundtrip && rejected,
          std::string("seed ") + std::to_string(first.seed) + " rerun CSV " + (csv_equal ? "byte-identical" : "DIFFERS") +
              " (" + std::to_string(first.eval_csv.size()) + " bytes), checkpoint roundtrip " +
              (roundtrip ? "bit-exact" : "NOT exact") + ", corrupted checkpoint " + (rejected ? "rejected" : "ACCEPTED")};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_quiet(true);
  std::vector<Verdict> verdicts;
  verdicts.push_back(gradient_oracle());
  verdicts.push_back(analytic_losses());

  std::vector<SeedResult> seeds;
  for (std::uint64_t s = 0; s < kSeeds; ++s) seeds.push_back(run_seed(s));

  {
    bool all = true;
    for (const auto& s : seeds) all = all && s.frozen_intact;
    verdicts.push_back({"AC3", "frozen-parameter invariant", all,
                        "F and C checkpoints after pretraining and adapting 5 subjects vs post-source state, " +
                            std::to_string(kSeeds) + " seeds: " + (all ? "byte-identical" : "CHANGED")});
  }
  {
    bool all = true;
    std::size_t frames = 0;
    for (const auto& s : seeds) {
      all = all && s.identity_start_equal;
      frames += s.identity_start_frames;
    }
    verdicts.push_back({"AC4", "identity-start equivalence", all,
                        std::to_string(frames) + " test frames over " + std::to_string(kSeeds) +
                            " seeds, untouched translator with zero adaptation steps: predictions " +
                            (all ? "bitwise equal to source_only" : "DIFFER from source_only")});
  }

  std::vector<double> so, pft, oracle, runtime;
  for (const auto& s : seeds) {
    so.push_back(s.report.average(Setting::source_only));
    pft.push_back(s.report.average(Setting::pft));
    oracle.push_back(s.report.average(Setting::oracle));
    runtime.push_back(s.seconds);
  }
  {
    const double gap = mean(oracle) - mean(so);
    const double recovered = (mean(pft) - mean(so)) / gap;
    const double slowest = *std::max_element(runtime.begin(), runtime.end());
    const bool pass = gap >= 15.0 && mean(pft) >= mean(so) + 0.5 * gap && mean(pft) <= mean(oracle) + 1.0 && slowest < 300.0;
    verdicts.push_back({"AC5", "gap recovery", pass,
                        "source_only " + fmt("%.2f", mean(so)) + " < pft " + fmt("%.2f", mean(pft)) + " < oracle " +
                            fmt("%.2f", mean(oracle)) + "; gap " + fmt("%.2f", gap) + " (need >= 15), recovered " +
                            fmt("%.1f%%", 100.0 * recovered) + " (need >= 50%), slowest seed " + fmt("%.1f", slowest) + " s"});
  }
  {
    std::map<std::string, std::vector<double>> by;
    for (const auto& s : seeds)
      for (const auto& [k, v] : s.pairing_pft) by[k].push_back(v);
    const double rnd = mean(by["random"]), cos = mean(by["cosine"]), lm = mean(by["landmark"]);
    const bool pass = lm - rnd >= -0.5 && cos - rnd >= -0.5;
    verdicts.push_back({"AC6", "pairing trend", pass,
                        "random " + fmt("%.2f", rnd) + ", cosine " + fmt("%.2f", cos) + " (" + fmt("%+.2f", cos - rnd) +
                            "), landmark " + fmt("%.2f", lm) + " (" + fmt("%+.2f", lm - rnd) + "); landmark " +
                            (lm >= cos ? ">=" : "<") + " cosine (reported only)"});
  }
  {
    std::map<std::size_t, std::vector<double>> by;
    for (const auto& s : seeds)
      for (const auto& [k, v] : s.dims_pft) by[k].push_back(v);
    const double a64 = mean(by[64]), a128 = mean(by[128]), a256 = mean(by[256]), a512 = mean(by[512]);
    const bool pass = a512 >= a64 - 1.0 && std::max(a256, a512) >= a64;
    const bool saturating = a256 >= a128 && a512 - a256 < a256 - a64;
    verdicts.push_back({"AC7", "dimensionality trend", pass,
                        "pft by feat_dim 64 " + fmt("%.2f", a64) + ", 128 " + fmt("%.2f", a128) + ", 256 " + fmt("%.2f", a256) +
                            ", 512 " + fmt("%.2f", a512) + "; saturation pattern " + (saturating ? "present" : "absent") +
                            " (reported only)"});
  }
  verdicts.push_back(cost_contract(seeds));
  verdicts.push_back(pairing_equivalence());
  verdicts.push_back(determinism(seeds.front()));
  {
    std::vector<double> before, after;
    for (const auto& s : seeds) {
      std::vector<double> b, a;
      for (const auto& p : s.separation) {
        b.push_back(p.source_only);
        a.push_back(p.pft);
      }
      before.push_back(mean(b));
      after.push_back(mean(a));
    }
    verdicts.push_back({"AC11", "embedding separation", mean(after) > mean(before),
                        "between/within ratio, seed-averaged: source_only " + fmt("%.3f", mean(before)) + " -> pft " +
                            fmt("%.3f", mean(after))});
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) {
    return std::stoi(a.id.substr(2)) < std::stoi(b.id.substr(2));
  });
  bool all = true;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& v : verdicts) {
    std::cout << v.id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << v.title << ": " << v.detail << '\n';
    all = all && v.pass;
    summary.push_back({{"id", v.id}, {"title", v.title}, {"pass", v.pass}, {"detail", v.detail}});
  }
  std::cout.flush();

  if (argc > 1) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& s : seeds) {
      per_seed.push_back({{"seed", s.seed},
                          {"source_only", s.report.average(Setting::source_only)},
                          {"pft", s.report.average(Setting::pft)},
                          {"oracle", s.report.average(Setting::oracle)},
                          {"seconds", s.seconds},
                          {"pairing", s.pairing_pft},
                          {"feat_dim", s.dims_pft},
                          {"adaptation_loss_first", s.adaptation_loss_first},
                          {"adaptation_loss_last", s.adaptation_loss_last}});
    }
    std::ofstream(argv[1]) << nlohmann::json{{"criteria", summary}, {"seeds", per_seed}}.dump(2) << '\n';
  }
  return all ? 0 : 1;
}
