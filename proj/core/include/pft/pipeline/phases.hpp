#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pft/models/networks.hpp"
#include "pft/pipeline/config.hpp"
#include "pft/synthdata/dataset.hpp"

namespace pft {

/// Owns the labelled source data for the phases allowed to read it. Once
/// closed, every accessor throws DataAccessError; adaptation insists on it.
class SourceData {
 public:
  SourceData(SampleSet train, SampleSet val, std::vector<SubjectProfile> profiles);

  const SampleSet& train() const;
  const SampleSet& val() const;
  const std::vector<SubjectProfile>& profiles() const;

  void close() noexcept { closed_ = true; }
  bool closed() const noexcept { return closed_; }

 private:
  void check() const;
  SampleSet train_;
  SampleSet val_;
  std::vector<SubjectProfile> profiles_;
  bool closed_ = false;
};

struct SourceModel {
  FeatureExtractor extractor;
  Classifier classifier;
  std::vector<double> val_loss;      // per epoch
  std::vector<double> val_accuracy;  // per epoch, percent
  double final_val_accuracy = 0.0;
};

/// Supervised training of F and C with Adam and a plateau schedule on the
/// validation loss. Both networks are frozen on return.
SourceModel train_source_classifier(const SourceData& source, std::size_t input_dim, std::size_t classes,
                                    const TrainConfig& cfg);

/// Neutral-expression statistics and observable attributes of one source
/// subject. Kept with the translator so adaptation never needs source frames.
struct StyleEntry {
  int subject_id = 0;
  ChannelStats neutral;
  SubjectProfile attributes;  // landmarks, pose, age, gender only
};

struct PretrainedTranslator {
  Translator translator;
  std::vector<StyleEntry> bank;
  std::vector<double> objective;  // epoch mean of the weighted pretraining loss
  std::vector<double> style_term;  // epoch mean of the style term
};

/// Copy of a profile restricted to what a deployed system could observe:
/// landmarks, head pose, age and gender.
SubjectProfile observable_attributes(const SubjectProfile& p);

std::vector<StyleEntry> build_style_bank(const SampleSet& samples, const std::vector<SubjectProfile>& profiles,
                                         const FeatureExtractor& extractor);

/// The pairing plan of the first pretraining epoch. Random pairing draws a
/// fresh plan every epoch after that; cosine and landmark plans are fixed.
std::vector<Pair> initial_pairs(const SourceData& source, const FeatureExtractor& extractor, const Classifier& classifier,
                                const TrainConfig& cfg);

/// Subject-swapping pretraining of T on frozen F, C.
PretrainedTranslator pretrain_translator(const SourceData& source, const FeatureExtractor& extractor,
                                         const Classifier& classifier, const TrainConfig& cfg);

struct Personalization {
  int subject_id = 0;
  int reference_subject = -1;
  Translator translator;
  std::optional<Recolor> recolor;
  std::vector<double> loss;  // epoch mean adaptation loss; entry 0 is before any update
};

/// Picks the source subject a target is mapped onto.
int choose_reference(PairingStrategy strategy, const ChannelStats& target_neutral, const SubjectProfile* target_attributes,
                     const std::vector<StyleEntry>& bank, const PairingConfig& cfg, Rng& rng);

/// Neutral-only personalisation of a copy of the pretrained translator. The
/// source data must already be closed.
Personalization adapt_target(const SampleSet& adaptation, const SubjectProfile* target_attributes,
                             const FeatureExtractor& extractor, const Classifier& classifier,
                             const PretrainedTranslator& pretrained, const SourceData& source, const TrainConfig& cfg);

struct Prediction {
  std::vector<int> labels;
  bool fallback = false;  // true when no personalisation was available
};

Prediction predict(const Tensor& x, const FeatureExtractor& extractor, const Classifier& classifier,
                   const Personalization* personalization);

/// Full fine-tuning of copies of F and C on labelled target frames.
std::pair<FeatureExtractor, Classifier> oracle_finetune(const SampleSet& train, const FeatureExtractor& extractor,
                                                        const Classifier& classifier, const TrainConfig& cfg);

double accuracy_percent(std::span<const int> predicted, std::span<const int> truth);

}  // namespace pft
