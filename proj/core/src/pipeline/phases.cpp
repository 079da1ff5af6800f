#include "pft/pipeline/phases.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pft/error.hpp"
#include "pft/log.hpp"
#include "pft/numerics/ops.hpp"

namespace pft {
namespace {

// RNG streams per phase; subject-specific phases add the subject id.
constexpr std::uint64_t kClassifierInit = 10;
constexpr std::uint64_t kClassifierBatches = 11;
constexpr std::uint64_t kTranslatorInit = 20;
constexpr std::uint64_t kTranslatorBatches = 21;
constexpr std::uint64_t kPairing = 22;
constexpr std::uint64_t kReference = 5000;
constexpr std::uint64_t kAdaptBatches = 6000;
constexpr std::uint64_t kOracle = 7000;

Tensor gather(const Tensor& m, std::span<const std::size_t> rows) {
  const std::size_t w = m.dim(1);
  std::vector<double> out;
  out.reserve(rows.size() * w);
  const auto v = m.values();
  for (const std::size_t r : rows) out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(r * w), v.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
  return Tensor::from({rows.size(), w}, std::move(out));
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, Rng& rng) {
  const auto perm = permutation(rng, n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i), perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  std::vector<int> out(n);
  const auto v = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * c, c);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<Tensor> concat_params(const Network& a, const Network& b) {
  auto out = a.parameters();
  auto more = b.parameters();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

void require_frozen(const Network& net, const char* what) {
  for (const auto& p : net.named_parameters()) {
    if (p.tensor.requires_grad() || p.tensor.has_grad()) {
      throw ContractError(std::string("frozen-mask violation: ") + what + " parameter " + p.name + " takes part in training");
    }
  }
}

double finite_or_throw(const Tensor& loss, const char* phase, std::size_t epoch) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericError(std::string(phase) + ": loss became non-finite", "epoch=" + std::to_string(epoch) + " value=" + std::to_string(v));
  }
  return v;
}

std::vector<Pair> draw_pairs(const SampleSet& train, const std::vector<SubjectProfile>& profiles,
                             const FeatureExtractor& extractor, const Classifier& classifier, const TrainConfig& cfg,
                             Rng& rng) {
  switch (cfg.pairing.strategy) {
    case PairingStrategy::random: return pair_random(train, rng);
    case PairingStrategy::cosine: return pair_cosine(train, extractor, classifier, cfg.pairing, rng);
    case PairingStrategy::landmark: {
      std::vector<const SubjectProfile*> ptrs;
      for (const auto& p : profiles) ptrs.push_back(&p);
      return pair_landmark(train, ptrs, cfg.pairing, rng);
    }
  }
  throw ContractError("unknown pairing strategy");
}

}  // namespace

std::vector<Pair> initial_pairs(const SourceData& source, const FeatureExtractor& extractor, const Classifier& classifier,
                                const TrainConfig& cfg) {
  Rng rng = make_rng(cfg.seed, kPairing);
  return draw_pairs(source.train(), source.profiles(), extractor, classifier, cfg, rng);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch < 2) throw ConfigError("batch must be at least 2");
  if (std::find(std::begin(kFeatureDims), std::end(kFeatureDims), feat_dim) == std::end(kFeatureDims)) {
    throw ConfigError("feat_dim must be one of 64, 128, 256, 512", "feat_dim=" + std::to_string(feat_dim));
  }
  if (hidden_dim == 0 || translator_hidden == 0) throw ConfigError("network widths must be positive");
  weights.validate();
  pairing.validate();
}

SourceData::SourceData(SampleSet train, SampleSet val, std::vector<SubjectProfile> profiles)
    : train_(std::move(train)), val_(std::move(val)), profiles_(std::move(profiles)) {}

void SourceData::check() const {
  if (closed_) throw DataAccessError("source data was closed after pretraining and may not be read");
}

const SampleSet& SourceData::train() const {
  check();
  return train_;
}

const SampleSet& SourceData::val() const {
  check();
  return val_;
}

const std::vector<SubjectProfile>& SourceData::profiles() const {
  check();
  return profiles_;
}

SourceModel train_source_classifier(const SourceData& source, std::size_t input_dim, std::size_t classes,
                                    const TrainConfig& cfg) {
  cfg.validate();
  const SampleSet& train = source.train();
  const SampleSet& val = source.val();
  if (train.size() == 0) throw ContractError("train_source_classifier: empty training split");

  Rng init = make_rng(cfg.seed, kClassifierInit);
  SourceModel m;
  m.extractor = FeatureExtractor({input_dim, cfg.hidden_dim, cfg.feat_dim, 3}, init);
  m.classifier = Classifier(cfg.feat_dim, classes, init);

  Adam opt(concat_params(m.extractor, m.classifier), {.lr = cfg.lr});
  PlateauSchedule schedule(cfg.lr, cfg.plateau);
  Rng order = make_rng(cfg.seed, kClassifierBatches);
  const Tensor x = train.matrix();

  auto validation = [&]() {
    NoGradGuard guard;
    const Tensor logits = m.classifier.classify(m.extractor.extract(val.matrix()).final());
    const double loss = cross_entropy(logits, val.labels).item();
    return std::make_pair(loss, accuracy_percent(argmax_rows(logits), val.labels));
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs_classifier; ++epoch) {
    for (const auto& rows : minibatches(train.size(), cfg.batch, order)) {
      Tape tape;
      const Tensor logits = m.classifier.classify(m.extractor.extract(gather(x, rows)).final());
      const Tensor loss = cross_entropy(logits, gather_labels(train.labels, rows));
      finite_or_throw(loss, "source training", epoch);
      backward(loss, tape);
      opt.step();
    }
    if (val.size() > 0) {
      const auto [loss, acc] = validation();
      m.val_loss.push_back(loss);
      m.val_accuracy.push_back(acc);
      opt.set_lr(schedule.step(loss));
    }
  }
  if (val.size() > 0) m.final_val_accuracy = validation().second;
  set_frozen(m.extractor, true);
  set_frozen(m.classifier, true);
  return m;
}

SubjectProfile observable_attributes(const SubjectProfile& p) {
  SubjectProfile out;
  out.subject_id = p.subject_id;
  out.population = p.population;
  out.landmarks = p.landmarks;
  out.pose = p.pose;
  out.age = p.age;
  out.gender = p.gender;
  return out;
}

std::vector<StyleEntry> build_style_bank(const SampleSet& samples, const std::vector<SubjectProfile>& profiles,
                                         const FeatureExtractor& extractor) {
  std::vector<StyleEntry> bank;
  NoGradGuard guard;
  for (const auto& p : profiles) {
    if (p.population != Population::source) continue;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples.subjects[i] == p.subject_id && samples.labels[i] == 0) rows.push_back(i);
    if (rows.size() < 2) {
      throw ContractError("style bank: subject " + std::to_string(p.subject_id) + " has fewer than two neutral frames");
    }
    StyleEntry e;
    e.subject_id = p.subject_id;
    e.neutral = channel_stats(extractor.extract(samples.rows(rows)).final());
    e.attributes = observable_attributes(p);
    bank.push_back(std::move(e));
  }
  if (bank.size() < 2) throw ContractError("style bank: need at least two source subjects");
  return bank;
}

PretrainedTranslator pretrain_translator(const SourceData& source, const FeatureExtractor& extractor,
                                         const Classifier& classifier, const TrainConfig& cfg) {
  cfg.validate();
  require_frozen(extractor, "extractor");
  require_frozen(classifier, "classifier");
  const SampleSet& train = source.train();

  Tensor features;
  {
    NoGradGuard guard;
    features = extractor.extract(train.matrix()).final();
  }

  PretrainedTranslator out;
  out.bank = build_style_bank(train, source.profiles(), extractor);
  std::map<int, const ChannelStats*> stats;
  for (const auto& e : out.bank) stats[e.subject_id] = &e.neutral;

  Rng init = make_rng(cfg.seed, kTranslatorInit);
  out.translator = Translator(cfg.feat_dim, cfg.translator_hidden, init);
  Translator& t = out.translator;

  Rng pair_rng = make_rng(cfg.seed, kPairing);
  std::vector<Pair> pairs = draw_pairs(train, source.profiles(), extractor, classifier, cfg, pair_rng);

  Adam opt(t.parameters(), {.lr = cfg.lr});
  PlateauSchedule schedule(cfg.lr, cfg.plateau);
  Rng order = make_rng(cfg.seed, kTranslatorBatches);
  const std::vector<std::size_t> style_layers{0, 1};

  for (std::size_t epoch = 0; epoch < cfg.epochs_translator; ++epoch) {
    if (epoch > 0 && cfg.pairing.strategy == PairingStrategy::random) pairs = pair_random(train, pair_rng);
    double objective = 0.0, style_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& rows : minibatches(train.size(), cfg.batch, order)) {
      std::vector<std::size_t> partner(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) partner[i] = pairs[rows[i]].identity;
      const Tensor f1 = gather(features, rows);
      const Tensor f2 = gather(features, partner);

      std::optional<Recolor> recolor;
      if (cfg.subject_statistics) {
        std::vector<const ChannelStats*> from, to;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          from.push_back(stats.at(train.subjects[rows[i]]));
          to.push_back(stats.at(train.subjects[partner[i]]));
        }
        recolor = Recolor::rows(from, to, cfg.isotropic_alignment);
      }

      LayeredFeatures reference;
      {
        NoGradGuard guard;
        reference = LayeredFeatures{{t.translate(f2).layers[0], f2}, style_layers};
      }

      Tape tape;
      const LayeredFeatures translated = t.translate(f1, recolor ? &*recolor : nullptr);
      const Tensor logits_hat = classifier.classify(translated.final());
      const Tensor logits = classifier.classify(f1);
      const Tensor ce = cross_entropy(logits_hat, gather_labels(train.labels, rows));
      const Tensor expr = kl_divergence(logits, logits_hat);
      const Tensor style = style_loss(translated, reference, style_layers);
      const Tensor total = source_total(ce, expr, style, cfg.weights);
      finite_or_throw(total, "translator pretraining", epoch);
      backward(total, tape);
      require_frozen(extractor, "extractor");
      require_frozen(classifier, "classifier");
      opt.step();
      objective += total.item();
      style_sum += style.item();
      ++batches;
    }
    out.objective.push_back(objective / static_cast<double>(batches));
    out.style_term.push_back(style_sum / static_cast<double>(batches));
    opt.set_lr(schedule.step(out.objective.back()));
  }
  set_frozen(t, true);
  return out;
}

int choose_reference(PairingStrategy strategy, const ChannelStats& target_neutral, const SubjectProfile* target_attributes,
                     const std::vector<StyleEntry>& bank, const PairingConfig& cfg, Rng& rng) {
  if (bank.empty()) throw ContractError("choose_reference: empty style bank");
  switch (strategy) {
    case PairingStrategy::random: return bank[uniform_index(rng, bank.size())].subject_id;
    case PairingStrategy::cosine: {
      const StyleEntry* best = &bank.front();
      double best_d = cosine_distance(target_neutral.mean, best->neutral.mean);
      for (const auto& e : bank) {
        const double d = cosine_distance(target_neutral.mean, e.neutral.mean);
        if (d < best_d) {
          best_d = d;
          best = &e;
        }
      }
      return best->subject_id;
    }
    case PairingStrategy::landmark: {
      if (target_attributes == nullptr) throw ContractError("choose_reference: landmark strategy needs target attributes");
      std::vector<const SubjectProfile*> candidates;
      for (const auto& e : bank) candidates.push_back(&e.attributes);
      return best_landmark_match(*target_attributes, candidates, cfg).subject_id;
    }
  }
  throw ContractError("choose_reference: unknown strategy");
}

Personalization adapt_target(const SampleSet& adaptation, const SubjectProfile* target_attributes,
                             const FeatureExtractor& extractor, const Classifier& classifier,
                             const PretrainedTranslator& pretrained, const SourceData& source, const TrainConfig& cfg) {
  cfg.validate();
  if (!source.closed()) throw ContractError("adapt_target: source data must be closed before adaptation");
  if (adaptation.size() == 0) throw ContractError("adapt_target: empty adaptation split");
  if (std::any_of(adaptation.labels.begin(), adaptation.labels.end(), [](int y) { return y != 0; })) {
    throw ContractError("adapt_target: adaptation split may only contain neutral frames");
  }
  const int subject = adaptation.subjects.front();
  if (std::any_of(adaptation.subjects.begin(), adaptation.subjects.end(), [subject](int s) { return s != subject; })) {
    throw ContractError("adapt_target: adaptation split mixes subjects");
  }
  require_frozen(extractor, "extractor");
  require_frozen(classifier, "classifier");

  Tensor ft;
  Tensor teacher;
  {
    NoGradGuard guard;
    ft = extractor.extract(adaptation.matrix()).final();
    teacher = classifier.classify(ft);
  }

  Personalization p;
  p.subject_id = subject;
  Rng ref_rng = make_rng(cfg.seed, kReference + static_cast<std::uint64_t>(subject));
  if (cfg.subject_statistics) {
    if (adaptation.size() < 2) throw ContractError("adapt_target: statistics alignment needs at least two frames");
    const ChannelStats target_stats = channel_stats(ft);
    p.reference_subject = choose_reference(cfg.reference_strategy, target_stats, target_attributes, pretrained.bank,
                                           cfg.pairing, ref_rng);
    const auto it = std::find_if(pretrained.bank.begin(), pretrained.bank.end(),
                                 [&](const StyleEntry& e) { return e.subject_id == p.reference_subject; });
    p.recolor = Recolor::between(target_stats, it->neutral, cfg.isotropic_alignment);
  }
  p.translator = pretrained.translator.clone();
  set_frozen(p.translator, false);
  const Recolor* rc = p.recolor ? &*p.recolor : nullptr;

  {
    NoGradGuard guard;
    p.loss.push_back(target_loss(teacher, classifier.classify(p.translator.translate(ft, rc).final())).item());
  }

  Adam opt(p.translator.parameters(), {.lr = cfg.lr});
  PlateauSchedule schedule(cfg.lr, cfg.plateau);
  Rng order = make_rng(cfg.seed, kAdaptBatches + static_cast<std::uint64_t>(subject));
  for (std::size_t epoch = 0; epoch < cfg.epochs_adaptation; ++epoch) {
    double sum = 0.0;
    std::size_t batches = 0;
    for (const auto& rows : minibatches(adaptation.size(), cfg.batch, order)) {
      const Tensor fb = gather(ft, rows);
      const Tensor tb = gather(teacher, rows);
      Tape tape;
      const Tensor loss = target_loss(tb, classifier.classify(p.translator.translate(fb, rc).final()));
      sum += finite_or_throw(loss, "adaptation", epoch);
      backward(loss, tape);
      require_frozen(extractor, "extractor");
      require_frozen(classifier, "classifier");
      opt.step();
      ++batches;
    }
    p.loss.push_back(sum / static_cast<double>(batches));
    opt.set_lr(schedule.step(p.loss.back()));
  }
  set_frozen(p.translator, true);
  return p;
}

Prediction predict(const Tensor& x, const FeatureExtractor& extractor, const Classifier& classifier,
                   const Personalization* personalization) {
  NoGradGuard guard;
  const Tensor f = extractor.extract(x).final();
  Prediction out;
  if (personalization == nullptr) {
    out.fallback = true;
    out.labels = argmax_rows(classifier.classify(f));
    return out;
  }
  const Recolor* rc = personalization->recolor ? &*personalization->recolor : nullptr;
  out.labels = argmax_rows(classifier.classify(personalization->translator.translate(f, rc).final()));
  return out;
}

std::pair<FeatureExtractor, Classifier> oracle_finetune(const SampleSet& train, const FeatureExtractor& extractor,
                                                        const Classifier& classifier, const TrainConfig& cfg) {
  cfg.validate();
  FeatureExtractor f = extractor.clone();
  Classifier c = classifier.clone();
  if (train.size() == 0) throw ContractError("oracle_finetune: empty training split");
  set_frozen(f, false);
  set_frozen(c, false);
  Adam opt(concat_params(f, c), {.lr = cfg.lr});
  PlateauSchedule schedule(cfg.lr, cfg.plateau);
  Rng order = make_rng(cfg.seed, kOracle + static_cast<std::uint64_t>(train.subjects.front()));
  const Tensor x = train.matrix();
  for (std::size_t epoch = 0; epoch < cfg.epochs_oracle; ++epoch) {
    double sum = 0.0;
    std::size_t batches = 0;
    for (const auto& rows : minibatches(train.size(), cfg.batch, order)) {
      Tape tape;
      const Tensor loss = cross_entropy(c.classify(f.extract(gather(x, rows)).final()), gather_labels(train.labels, rows));
      sum += finite_or_throw(loss, "oracle fine-tuning", epoch);
      backward(loss, tape);
      opt.step();
      ++batches;
    }
    opt.set_lr(schedule.step(sum / static_cast<double>(batches)));
  }
  set_frozen(f, true);
  set_frozen(c, true);
  return {std::move(f), std::move(c)};
}

double accuracy_percent(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: prediction and label counts differ");
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(truth.size());
}

}  // namespace pft
