#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pft/pipeline/embedding.hpp"
#include "pft/pipeline/phases.hpp"

namespace pft {

enum class Setting { source_only, pft, oracle };

const char* setting_name(Setting s);
Setting parse_setting(const std::string& name);

struct EvalRow {
  int subject_id = 0;
  Setting setting = Setting::source_only;
  double accuracy = 0.0;  // percent
  std::size_t n_test = 0;
};

struct PhaseTiming {
  double classifier_s = 0.0;
  double translator_s = 0.0;
  double adaptation_s = 0.0;
  double oracle_s = 0.0;
  double evaluation_s = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  CostReport cost;
  PhaseTiming timing;

  /// Arithmetic mean over the rows of one setting; NaN when there are none.
  double average(Setting s) const;
  bool has(Setting s) const;
};

/// Cost of the deployed model with the translator counted as the trainable
/// part, as it is during adaptation.
CostReport adaptation_cost(const FeatureExtractor& extractor, const Classifier& classifier, const Translator& translator);

/// Test accuracy of one subject under one setting. For `pft` a missing
/// personalisation falls back to the source-only path.
EvalRow score_subject(Setting setting, const TargetSubject& target, const FeatureExtractor& extractor,
                      const Classifier& classifier, const Personalization* personalization = nullptr);

/// The source-only and pft rows of every target subject.
std::vector<EvalRow> evaluate(const std::vector<TargetSubject>& targets, const FeatureExtractor& extractor,
                              const Classifier& classifier, const std::vector<Personalization>& personalizations);

struct BenchmarkOptions {
  bool oracle = true;
  bool embeddings = false;  // also measure 2-D class separation per subject
  std::size_t threads = 1;  // workers for the per-subject phases; results do not depend on it
};

struct SeparationPoint {
  int subject_id = 0;
  double source_only = 0.0;
  double pft = 0.0;
};

/// Projects the test features of one subject before (F) and after (T_s o F)
/// adaptation with one projection fitted on both, and measures the class
/// separation of each.
std::vector<EmbeddingRow> embed_subject(const SampleSet& test, const FeatureExtractor& extractor,
                                        const Personalization& personalization, SeparationPoint* separation = nullptr);

/// Everything produced by one end-to-end run on one dataset.
struct BenchmarkRun {
  SourceModel source;
  PretrainedTranslator pretrained;
  std::vector<Personalization> personalizations;
  EvalReport report;
  std::vector<SeparationPoint> separation;
};

/// Source training, translator pretraining, source close-out, per-subject
/// adaptation, and evaluation of every setting.
BenchmarkRun run_benchmark(const Dataset& data, const TrainConfig& cfg, const BenchmarkOptions& options = {});

/// Continues a run from an already trained source model (used by the pairing
/// ablation, which keeps F and C fixed across strategies).
BenchmarkRun run_from_source(const Dataset& data, SourceModel source, const TrainConfig& cfg,
                             const BenchmarkOptions& options = {});

SourceData make_source_data(const Dataset& data);

struct AblationPoint {
  std::string variable;  // "feat_dim" or "pairing"
  std::string value;
  std::uint64_t seed = 0;
  EvalReport report;
};

/// Full pipeline per feature width and seed.
std::vector<AblationPoint> ablate_dims(const DatasetSpec& spec, const TrainConfig& cfg, const std::vector<std::size_t>& dims,
                                       const std::vector<std::uint64_t>& seeds);

/// Translator pretraining, adaptation and evaluation per pairing strategy and
/// seed; the source classifier of a seed is shared by all strategies.
std::vector<AblationPoint> ablate_pairing(const DatasetSpec& spec, const TrainConfig& cfg,
                                          const std::vector<PairingStrategy>& strategies,
                                          const std::vector<std::uint64_t>& seeds);

/// Mean pft accuracy over the points whose value matches.
double mean_accuracy(const std::vector<AblationPoint>& points, const std::string& value, Setting s = Setting::pft);

/// Published reference curves, attached to ablation outputs as annotations.
std::string dims_annotation();
std::string pairing_annotation();

}  // namespace pft
