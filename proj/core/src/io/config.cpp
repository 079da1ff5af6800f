#include "pft/io/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>

#include "pft/error.hpp"

namespace pft {
namespace {

using nlohmann::json;

// Reads the members of one JSON object into fields, rejecting unknown keys.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", path_);
  }

  template <typename T>
  ObjectReader& field(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected a boolean", at(key));
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_unsigned()) {
          throw ConfigError("expected a non-negative integer", at(key));
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("expected a number", at(key));
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid value: ") + e.what(), at(key));
    }
    return *this;
  }

  template <typename Fn>
  ObjectReader& object(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it != j_.end()) fn(*it, at(key));
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (seen_.count(key) == 0) throw ConfigError("unknown configuration key", at(key.c_str()));
    }
  }

 private:
  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_knobs(const json& j, const std::string& path, GeneratorKnobs& k) {
  ObjectReader(j, path)
      .field("prototype_separation", k.prototype_separation)
      .field("identity_rank", k.identity_rank)
      .field("gain_spread", k.gain_spread)
      .field("offset_spread", k.offset_spread)
      .field("identity_offset", k.identity_offset)
      .field("rotation_scale", k.rotation_scale)
      .field("target_gain_drop", k.target_gain_drop)
      .field("target_offset_shift", k.target_offset_shift)
      .finish();
}

void read_dataset(const json& j, const std::string& path, DatasetSpec& d) {
  ObjectReader(j, path)
      .field("n_source_subjects", d.n_source_subjects)
      .field("n_target_subjects", d.n_target_subjects)
      .field("classes", d.classes)
      .field("samples_per_class", d.samples_per_class)
      .field("input_dim", d.input_dim)
      .field("noise_scale", d.noise_scale)
      .field("shift_severity", d.shift_severity)
      .field("adaptation_frames", d.adaptation_frames)
      .object("knobs", [&](const json& k, const std::string& p) { read_knobs(k, p, d.knobs); })
      .finish();
}

void read_train(const json& j, const std::string& path, TrainConfig& t) {
  std::string reference = strategy_name(t.reference_strategy);
  ObjectReader(j, path)
      .field("lr", t.lr)
      .field("batch", t.batch)
      .field("epochs_classifier", t.epochs_classifier)
      .field("epochs_translator", t.epochs_translator)
      .field("epochs_adaptation", t.epochs_adaptation)
      .field("epochs_oracle", t.epochs_oracle)
      .field("feat_dim", t.feat_dim)
      .field("hidden_dim", t.hidden_dim)
      .field("translator_hidden", t.translator_hidden)
      .field("subject_statistics", t.subject_statistics)
      .field("isotropic_alignment", t.isotropic_alignment)
      .field("reference_strategy", reference)
      .object("weights",
              [&](const json& w, const std::string& p) {
                ObjectReader(w, p).field("expr", t.weights.expr).field("style", t.weights.style).finish();
              })
      .object("plateau",
              [&](const json& w, const std::string& p) {
                ObjectReader(w, p)
                    .field("factor", t.plateau.factor)
                    .field("patience", t.plateau.patience)
                    .field("min_lr", t.plateau.min_lr)
                    .field("threshold", t.plateau.threshold)
                    .finish();
              })
      .object("pairing",
              [&](const json& w, const std::string& p) {
                std::string strategy = strategy_name(t.pairing.strategy);
                ObjectReader(w, p)
                    .field("strategy", strategy)
                    .field("pose_weight", t.pairing.pose_weight)
                    .field("landmark_weight", t.pairing.landmark_weight)
                    .field("max_age_gap", t.pairing.max_age_gap)
                    .field("same_gender_required", t.pairing.same_gender_required)
                    .field("well_classified_threshold", t.pairing.well_classified_threshold)
                    .finish();
                t.pairing.strategy = parse_strategy(strategy);
              })
      .finish();
  t.reference_strategy = parse_strategy(reference);
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  dataset.seed = s;
  train.seed = s;
}

void RunConfig::validate() const {
  dataset.validate();
  train.validate();
  if (dataset.seed != seed || train.seed != seed) throw ConfigError("dataset, training and run seeds disagree");
}

json to_json(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& k = d.knobs;
  const auto& t = cfg.train;
  return json{
      {"seed", cfg.seed},
      {"dataset",
       {{"n_source_subjects", d.n_source_subjects},
        {"n_target_subjects", d.n_target_subjects},
        {"classes", d.classes},
        {"samples_per_class", d.samples_per_class},
        {"input_dim", d.input_dim},
        {"noise_scale", d.noise_scale},
        {"shift_severity", d.shift_severity},
        {"adaptation_frames", d.adaptation_frames},
        {"knobs",
         {{"prototype_separation", k.prototype_separation},
          {"identity_rank", k.identity_rank},
          {"gain_spread", k.gain_spread},
          {"offset_spread", k.offset_spread},
          {"identity_offset", k.identity_offset},
          {"rotation_scale", k.rotation_scale},
          {"target_gain_drop", k.target_gain_drop},
          {"target_offset_shift", k.target_offset_shift}}}}},
      {"train",
       {{"lr", t.lr},
        {"batch", t.batch},
        {"epochs_classifier", t.epochs_classifier},
        {"epochs_translator", t.epochs_translator},
        {"epochs_adaptation", t.epochs_adaptation},
        {"epochs_oracle", t.epochs_oracle},
        {"feat_dim", t.feat_dim},
        {"hidden_dim", t.hidden_dim},
        {"translator_hidden", t.translator_hidden},
        {"subject_statistics", t.subject_statistics},
        {"isotropic_alignment", t.isotropic_alignment},
        {"reference_strategy", strategy_name(t.reference_strategy)},
        {"weights", {{"expr", t.weights.expr}, {"style", t.weights.style}}},
        {"plateau",
         {{"factor", t.plateau.factor},
          {"patience", t.plateau.patience},
          {"min_lr", t.plateau.min_lr},
          {"threshold", t.plateau.threshold}}},
        {"pairing",
         {{"strategy", strategy_name(t.pairing.strategy)},
          {"pose_weight", t.pairing.pose_weight},
          {"landmark_weight", t.pairing.landmark_weight},
          {"max_age_gap", t.pairing.max_age_gap},
          {"same_gender_required", t.pairing.same_gender_required},
          {"well_classified_threshold", t.pairing.well_classified_threshold}}}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  std::uint64_t seed = 0;
  ObjectReader(j, "")
      .field("seed", seed)
      .object("dataset", [&](const json& d, const std::string& p) { read_dataset(d, p, cfg.dataset); })
      .object("train", [&](const json& t, const std::string& p) { read_train(t, p, cfg.train); })
      .finish();
  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("configuration file not found", path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what(), path.string());
  }
  return run_config_from_json(j);
}

std::string sha1_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char c = digest[i];
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 15]);
  }
  return out;
}

std::string manifest_hash(const RunConfig& cfg) {
  const std::string body = to_json(cfg).dump();
  std::string blob = "blob " + std::to_string(body.size());
  blob.push_back('\0');
  blob += body;
  return sha1_hex(blob);
}

}  // namespace pft
