#include "pft/pipeline/report.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "pft/error.hpp"

namespace pft {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is handled
// by exactly one worker, so results written to slot i are schedule-independent.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Tensor final_features(const Tensor& x, const FeatureExtractor& extractor, const Personalization* p) {
  NoGradGuard guard;
  const Tensor f = extractor.extract(x).final();
  if (p == nullptr) return f;
  return p->translator.translate(f, p->recolor ? &*p->recolor : nullptr).final();
}

}  // namespace

const char* setting_name(Setting s) {
  switch (s) {
    case Setting::source_only: return "source_only";
    case Setting::pft: return "pft";
    case Setting::oracle: return "oracle";
  }
  return "unknown";
}

Setting parse_setting(const std::string& name) {
  if (name == "source_only") return Setting::source_only;
  if (name == "pft") return Setting::pft;
  if (name == "oracle") return Setting::oracle;
  throw FormatError("unknown setting '" + name + "'");
}

double EvalReport::average(Setting s) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.setting != s) continue;
    sum += r.accuracy;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

bool EvalReport::has(Setting s) const {
  return std::any_of(rows.begin(), rows.end(), [s](const EvalRow& r) { return r.setting == s; });
}

CostReport adaptation_cost(const FeatureExtractor& extractor, const Classifier& classifier, const Translator& translator) {
  FeatureExtractor f = extractor.clone();
  Classifier c = classifier.clone();
  Translator t = translator.clone();
  set_frozen(f, true);
  set_frozen(c, true);
  set_frozen(t, false);
  return count_cost(f, c, &t);
}

EvalRow score_subject(Setting setting, const TargetSubject& target, const FeatureExtractor& extractor,
                      const Classifier& classifier, const Personalization* personalization) {
  const Prediction pred = predict(target.test.matrix(), extractor, classifier,
                                  setting == Setting::pft ? personalization : nullptr);
  return {target.subject_id, setting, accuracy_percent(pred.labels, target.test.labels), target.test.size()};
}

std::vector<EvalRow> evaluate(const std::vector<TargetSubject>& targets, const FeatureExtractor& extractor,
                              const Classifier& classifier, const std::vector<Personalization>& personalizations) {
  std::vector<EvalRow> rows;
  for (const auto& t : targets) {
    rows.push_back(score_subject(Setting::source_only, t, extractor, classifier));
    const auto it = std::find_if(personalizations.begin(), personalizations.end(),
                                 [&](const Personalization& p) { return p.subject_id == t.subject_id; });
    rows.push_back(score_subject(Setting::pft, t, extractor, classifier,
                                 it == personalizations.end() ? nullptr : &*it));
  }
  return rows;
}

std::vector<EmbeddingRow> embed_subject(const SampleSet& test, const FeatureExtractor& extractor,
                                        const Personalization& personalization, SeparationPoint* separation) {
  const Tensor x = test.matrix();
  const Tensor before = final_features(x, extractor, nullptr);
  const Tensor after = final_features(x, extractor, &personalization);
  const std::vector<Tensor> pooled{before, after};
  const Projection proj = fit_projection(pooled);
  const auto pb = proj.apply(before);
  const auto pa = proj.apply(after);

  std::vector<EmbeddingRow> rows;
  rows.reserve(2 * test.size());
  for (const auto& [name, pts] : {std::pair{"source_only", &pb}, std::pair{"pft", &pa}}) {
    for (std::size_t i = 0; i < test.size(); ++i) {
      rows.push_back({test.subjects[i], test.frames[i], test.labels[i], name, (*pts)[i][0], (*pts)[i][1]});
    }
  }
  if (separation != nullptr) {
    separation->subject_id = personalization.subject_id;
    separation->source_only = separation_ratio(pb, test.labels);
    separation->pft = separation_ratio(pa, test.labels);
  }
  return rows;
}

SourceData make_source_data(const Dataset& data) {
  std::vector<SubjectProfile> profiles;
  for (const auto& p : data.profiles)
    if (p.population == Population::source) profiles.push_back(p);
  return SourceData(data.source_train, data.source_val, std::move(profiles));
}

BenchmarkRun run_benchmark(const Dataset& data, const TrainConfig& cfg, const BenchmarkOptions& options) {
  const auto t0 = Clock::now();
  const SourceData src = make_source_data(data);
  SourceModel source = train_source_classifier(src, data.spec.input_dim, data.spec.classes, cfg);
  const double classifier_s = seconds_since(t0);
  BenchmarkRun run = run_from_source(data, std::move(source), cfg, options);
  run.report.timing.classifier_s = classifier_s;
  return run;
}

BenchmarkRun run_from_source(const Dataset& data, SourceModel source, const TrainConfig& cfg,
                             const BenchmarkOptions& options) {
  BenchmarkRun run;
  run.source = std::move(source);
  const FeatureExtractor& f = run.source.extractor;
  const Classifier& c = run.source.classifier;

  auto t0 = Clock::now();
  SourceData src = make_source_data(data);
  run.pretrained = pretrain_translator(src, f, c, cfg);
  src.close();
  run.report.timing.translator_s = seconds_since(t0);

  const auto& targets = data.targets;
  t0 = Clock::now();
  run.personalizations.resize(targets.size());
  parallel_for(targets.size(), options.threads, [&](std::size_t i) {
    const SubjectProfile attrs = observable_attributes(data.profile(targets[i].subject_id));
    run.personalizations[i] = adapt_target(targets[i].adaptation, &attrs, f, c, run.pretrained, src, cfg);
  });
  run.report.timing.adaptation_s = seconds_since(t0);

  t0 = Clock::now();
  run.report.rows = evaluate(targets, f, c, run.personalizations);
  run.report.timing.evaluation_s = seconds_since(t0);

  if (options.oracle) {
    t0 = Clock::now();
    std::vector<EvalRow> oracle_rows(targets.size());
    parallel_for(targets.size(), options.threads, [&](std::size_t i) {
      const auto [fo, co] = oracle_finetune(targets[i].train, f, c, cfg);
      oracle_rows[i] = score_subject(Setting::oracle, targets[i], fo, co);
    });
    run.report.rows.insert(run.report.rows.end(), oracle_rows.begin(), oracle_rows.end());
    run.report.timing.oracle_s = seconds_since(t0);
  }

  if (options.embeddings) {
    run.separation.resize(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      embed_subject(targets[i].test, f, run.personalizations[i], &run.separation[i]);
    }
  }

  run.report.cost = adaptation_cost(f, c, run.pretrained.translator);
  return run;
}

std::vector<AblationPoint> ablate_dims(const DatasetSpec& spec, const TrainConfig& cfg, const std::vector<std::size_t>& dims,
                                       const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationPoint> out;
  for (const std::uint64_t seed : seeds) {
    DatasetSpec s = spec;
    s.seed = seed;
    const Dataset data = generate_dataset(s);
    for (const std::size_t d : dims) {
      TrainConfig c = cfg;
      c.seed = seed;
      c.feat_dim = d;
      out.push_back({"feat_dim", std::to_string(d), seed, run_benchmark(data, c, {.oracle = false}).report});
    }
  }
  return out;
}

std::vector<AblationPoint> ablate_pairing(const DatasetSpec& spec, const TrainConfig& cfg,
                                          const std::vector<PairingStrategy>& strategies,
                                          const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationPoint> out;
  for (const std::uint64_t seed : seeds) {
    DatasetSpec s = spec;
    s.seed = seed;
    const Dataset data = generate_dataset(s);
    TrainConfig base = cfg;
    base.seed = seed;
    const SourceData src = make_source_data(data);
    const SourceModel source = train_source_classifier(src, s.input_dim, s.classes, base);
    for (const PairingStrategy strategy : strategies) {
      TrainConfig c = base;
      c.pairing.strategy = strategy;
      SourceModel copy{source.extractor.clone(), source.classifier.clone(), source.val_loss, source.val_accuracy,
                       source.final_val_accuracy};
      out.push_back({"pairing", strategy_name(strategy), seed, run_from_source(data, std::move(copy), c, {.oracle = false}).report});
    }
  }
  return out;
}

double mean_accuracy(const std::vector<AblationPoint>& points, const std::string& value, Setting s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : points) {
    if (p.value != value) continue;
    sum += p.report.average(s);
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

std::string dims_annotation() {
  return "published BioVid curve: 79.2% at 64 dims rising to 82.46% at 512 dims";
}

std::string pairing_annotation() {
  return "published finding: landmark-based strategy producing the most consistent improvements";
}

}  // namespace pft
