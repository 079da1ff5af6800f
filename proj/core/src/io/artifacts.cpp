#include "pft/io/artifacts.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "pft/error.hpp"

namespace pft {
namespace {

using nlohmann::json;

std::string key(const std::string& prefix, std::size_t i, const char* field) {
  return prefix + "." + std::to_string(i) + "." + field;
}

void put_vector(Container& c, const std::string& name, const std::vector<double>& v) { c.put(name, {v.size()}, v); }

void put_landmarks(Container& c, const std::string& name, const Landmarks& l) {
  std::vector<double> v;
  for (const auto& p : l) v.insert(v.end(), p.begin(), p.end());
  c.put(name, {kLandmarkCount, 2}, std::move(v));
}

Landmarks get_landmarks(const Container& c, const std::string& name) {
  const Entry& e = c.get(name);
  if (e.values.size() != 2 * kLandmarkCount) throw FormatError("landmark entry '" + name + "' has the wrong size");
  Landmarks l{};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) l[i] = {e.values[2 * i], e.values[2 * i + 1]};
  return l;
}

std::array<double, 3> get_pose(const Container& c, const std::string& name) {
  const Entry& e = c.get(name);
  if (e.values.size() != 3) throw FormatError("pose entry '" + name + "' has the wrong size");
  return {e.values[0], e.values[1], e.values[2]};
}

std::size_t get_size(const Container& c, const std::string& name) {
  const double v = c.scalar(name);
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw FormatError("entry '" + name + "' is not a count");
  }
  return static_cast<std::size_t>(v);
}

void check_kind(const Container& c, const std::string& kind) {
  const std::string found = c.has("meta.kind") ? c.text("meta.kind") : "";
  if (found != kind) throw FormatError("expected a '" + kind + "' file, found '" + found + "'");
}

void check_feat_dim(std::size_t stored, std::size_t expected) {
  if (stored != expected) {
    throw DimensionError("checkpoint feature width does not match the configuration",
                         "checkpoint=" + std::to_string(stored) + " config=" + std::to_string(expected));
  }
}

void put_meta(Container& c, const std::string& kind, const std::string& manifest) {
  c.put_text("meta.kind", kind);
  c.put_text("meta.manifest", manifest);
}

void put_samples(Container& c, const std::string& split, const SampleSet& s, const std::vector<std::size_t>* positions) {
  c.put(split + ".x", {s.size(), s.dim}, s.x);
  c.put(split + ".labels", {s.size()}, std::vector<double>(s.labels.begin(), s.labels.end()));
  c.put(split + ".frames", {s.size()}, std::vector<double>(s.frames.begin(), s.frames.end()));
  if (positions != nullptr) c.put(split + ".positions", {positions->size()}, std::vector<double>(positions->begin(), positions->end()));
}

SampleSet get_samples(const Container& c, const std::string& split, int subject, std::size_t dim) {
  const Entry& x = c.get(split + ".x");
  const Entry& y = c.get(split + ".labels");
  const Entry& f = c.get(split + ".frames");
  const std::size_t n = y.values.size();
  if (x.shape.size() != 2 || x.shape[0] != n || x.shape[1] != dim || f.values.size() != n) {
    throw FormatError("sample split '" + split + "' has inconsistent shapes");
  }
  SampleSet s;
  s.dim = dim;
  s.x = x.values;
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(static_cast<int>(y.values[i]));
    s.subjects.push_back(subject);
    s.frames.push_back(static_cast<std::uint64_t>(f.values[i]));
  }
  return s;
}

// Splits a mixed-subject set into per-subject pieces, remembering where each
// row sat so the original order can be restored on read.
std::map<int, std::pair<SampleSet, std::vector<std::size_t>>> by_subject(const SampleSet& s) {
  std::map<int, std::pair<SampleSet, std::vector<std::size_t>>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& [set, pos] = out[s.subjects[i]];
    set.dim = s.dim;
    set.push(std::span<const double>(s.x).subspan(i * s.dim, s.dim), s.labels[i], s.subjects[i], s.frames[i]);
    pos.push_back(i);
  }
  return out;
}

void place(SampleSet& dst, const SampleSet& src, const std::vector<double>& positions) {
  if (positions.size() != src.size()) throw FormatError("sample positions do not match the split size");
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto p = static_cast<std::size_t>(positions[i]);
    if (p >= dst.size()) throw FormatError("sample position out of range");
    std::copy_n(src.x.begin() + static_cast<std::ptrdiff_t>(i * src.dim), src.dim, dst.x.begin() + static_cast<std::ptrdiff_t>(p * src.dim));
    dst.labels[p] = src.labels[i];
    dst.subjects[p] = src.subjects[i];
    dst.frames[p] = src.frames[i];
  }
}

SampleSet sized(std::size_t n, std::size_t dim) {
  SampleSet s;
  s.dim = dim;
  s.x.assign(n * dim, 0.0);
  s.labels.assign(n, -1);
  s.subjects.assign(n, -1);
  s.frames.assign(n, 0);
  return s;
}

std::string subject_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%04d.bin", id);
  return buf;
}

}  // namespace

void write_parameters(Container& c, const Network& net) {
  for (const auto& p : net.named_parameters()) c.put(p.name, p.tensor);
}

void read_parameters(const Container& c, Network& net) {
  for (auto& p : net.named_parameters()) {
    if (!c.has(p.name)) throw DimensionError("checkpoint lacks parameter '" + p.name + "'");
    const Entry& e = c.get(p.name);
    if (e.shape != p.tensor.shape()) {
      throw DimensionError("parameter '" + p.name + "' has a different shape in the checkpoint",
                           "checkpoint=" + shape_str(e.shape) + " model=" + shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(e.values.begin(), e.values.end(), t.mutable_values().begin());
  }
}

std::string manifest_of(const Container& c) { return c.has("meta.manifest") ? c.text("meta.manifest") : ""; }

Container load_artifact(const std::filesystem::path& path, const std::string& kind, const std::string& manifest) {
  if (!std::filesystem::exists(path)) throw DependencyError("required artifact is missing", path.string());
  Container c = load_container(path);
  check_kind(c, kind);
  if (manifest_of(c) != manifest) {
    throw ManifestError("artifact was produced by a different run configuration",
                        path.string() + ": file=" + manifest_of(c) + " run=" + manifest);
  }
  return c;
}

Container pack_source(const SourceModel& m, const std::string& manifest) {
  Container c;
  put_meta(c, "source", manifest);
  const ExtractorShape& s = m.extractor.shape();
  c.put_scalar("meta.input_dim", static_cast<double>(s.input_dim));
  c.put_scalar("meta.hidden_dim", static_cast<double>(s.hidden_dim));
  c.put_scalar("meta.feat_dim", static_cast<double>(s.feat_dim));
  c.put_scalar("meta.blocks", static_cast<double>(s.blocks));
  c.put_scalar("meta.classes", static_cast<double>(m.classifier.num_classes()));
  c.put_scalar("meta.frozen.extractor", m.extractor.frozen() ? 1.0 : 0.0);
  c.put_scalar("meta.frozen.classifier", m.classifier.frozen() ? 1.0 : 0.0);
  c.put_scalar("meta.final_val_accuracy", m.final_val_accuracy);
  put_vector(c, "meta.val_loss", m.val_loss);
  put_vector(c, "meta.val_accuracy", m.val_accuracy);
  write_parameters(c, m.extractor);
  write_parameters(c, m.classifier);
  return c;
}

SourceModel unpack_source(const Container& c, std::size_t expected_feat_dim) {
  check_kind(c, "source");
  ExtractorShape s;
  s.input_dim = get_size(c, "meta.input_dim");
  s.hidden_dim = get_size(c, "meta.hidden_dim");
  s.feat_dim = get_size(c, "meta.feat_dim");
  s.blocks = get_size(c, "meta.blocks");
  check_feat_dim(s.feat_dim, expected_feat_dim);
  Rng scratch(0);
  SourceModel m;
  m.extractor = FeatureExtractor(s, scratch);
  m.classifier = Classifier(s.feat_dim, get_size(c, "meta.classes"), scratch);
  read_parameters(c, m.extractor);
  read_parameters(c, m.classifier);
  set_frozen(m.extractor, c.scalar("meta.frozen.extractor") != 0.0);
  set_frozen(m.classifier, c.scalar("meta.frozen.classifier") != 0.0);
  m.final_val_accuracy = c.scalar("meta.final_val_accuracy");
  m.val_loss = c.get("meta.val_loss").values;
  m.val_accuracy = c.get("meta.val_accuracy").values;
  return m;
}

Container pack_translator(const PretrainedTranslator& t, const std::string& manifest) {
  Container c;
  put_meta(c, "translator", manifest);
  c.put_scalar("meta.feat_dim", static_cast<double>(t.translator.feat_dim()));
  c.put_scalar("meta.translator_hidden", static_cast<double>(t.translator.hidden_dim()));
  c.put_scalar("meta.frozen", t.translator.frozen() ? 1.0 : 0.0);
  put_vector(c, "meta.objective", t.objective);
  put_vector(c, "meta.style_term", t.style_term);
  write_parameters(c, t.translator);
  c.put_scalar("bank.size", static_cast<double>(t.bank.size()));
  for (std::size_t i = 0; i < t.bank.size(); ++i) {
    const StyleEntry& e = t.bank[i];
    c.put_scalar(key("bank", i, "subject"), e.subject_id);
    put_vector(c, key("bank", i, "mean"), e.neutral.mean);
    put_vector(c, key("bank", i, "std"), e.neutral.stddev);
    put_landmarks(c, key("bank", i, "landmarks"), e.attributes.landmarks);
    c.put(key("bank", i, "pose"), {3}, {e.attributes.pose.begin(), e.attributes.pose.end()});
    c.put_scalar(key("bank", i, "age"), e.attributes.age);
    c.put_scalar(key("bank", i, "gender"), e.attributes.gender);
  }
  return c;
}

PretrainedTranslator unpack_translator(const Container& c, std::size_t expected_feat_dim) {
  check_kind(c, "translator");
  const std::size_t feat = get_size(c, "meta.feat_dim");
  check_feat_dim(feat, expected_feat_dim);
  Rng scratch(0);
  PretrainedTranslator t;
  t.translator = Translator(feat, get_size(c, "meta.translator_hidden"), scratch);
  read_parameters(c, t.translator);
  set_frozen(t.translator, c.scalar("meta.frozen") != 0.0);
  t.objective = c.get("meta.objective").values;
  t.style_term = c.get("meta.style_term").values;
  const std::size_t n = get_size(c, "bank.size");
  for (std::size_t i = 0; i < n; ++i) {
    StyleEntry e;
    e.subject_id = static_cast<int>(c.scalar(key("bank", i, "subject")));
    e.neutral.mean = c.get(key("bank", i, "mean")).values;
    e.neutral.stddev = c.get(key("bank", i, "std")).values;
    if (e.neutral.mean.size() != feat || e.neutral.stddev.size() != feat) {
      throw DimensionError("style bank statistics do not match the translator width");
    }
    e.attributes.subject_id = e.subject_id;
    e.attributes.landmarks = get_landmarks(c, key("bank", i, "landmarks"));
    e.attributes.pose = get_pose(c, key("bank", i, "pose"));
    e.attributes.age = c.scalar(key("bank", i, "age"));
    e.attributes.gender = static_cast<int>(c.scalar(key("bank", i, "gender")));
    t.bank.push_back(std::move(e));
  }
  return t;
}

Container pack_personalizations(const std::vector<Personalization>& ps, const std::string& manifest) {
  Container c;
  put_meta(c, "personalizations", manifest);
  c.put_scalar("subjects", static_cast<double>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Personalization& p = ps[i];
    const std::string prefix = "subject." + std::to_string(i) + ".";
    c.put_scalar(prefix + "id", p.subject_id);
    c.put_scalar(prefix + "reference", p.reference_subject);
    c.put_scalar(prefix + "feat_dim", static_cast<double>(p.translator.feat_dim()));
    c.put_scalar(prefix + "hidden", static_cast<double>(p.translator.hidden_dim()));
    put_vector(c, prefix + "loss", p.loss);
    if (p.recolor) {
      c.put(prefix + "recolor.scale", p.recolor->scale);
      c.put(prefix + "recolor.shift", p.recolor->shift);
    }
    for (const auto& np : p.translator.named_parameters()) c.put(prefix + np.name, np.tensor);
  }
  return c;
}

std::vector<Personalization> unpack_personalizations(const Container& c, std::size_t expected_feat_dim) {
  check_kind(c, "personalizations");
  std::vector<Personalization> out;
  const std::size_t n = get_size(c, "subjects");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string prefix = "subject." + std::to_string(i) + ".";
    Personalization p;
    p.subject_id = static_cast<int>(c.scalar(prefix + "id"));
    p.reference_subject = static_cast<int>(c.scalar(prefix + "reference"));
    const std::size_t feat = get_size(c, prefix + "feat_dim");
    check_feat_dim(feat, expected_feat_dim);
    Rng scratch(0);
    p.translator = Translator(feat, get_size(c, prefix + "hidden"), scratch);
    // Parameters are stored under the subject prefix; strip it for loading.
    Container local;
    for (const auto& name : c.names(prefix + "translator.")) {
      const Entry& e = c.get(name);
      local.put(name.substr(prefix.size()), e.shape, e.values);
    }
    read_parameters(local, p.translator);
    set_frozen(p.translator, true);
    p.loss = c.get(prefix + "loss").values;
    if (c.has(prefix + "recolor.scale")) {
      p.recolor = Recolor{c.tensor(prefix + "recolor.scale"), c.tensor(prefix + "recolor.shift")};
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::uint8_t> parameter_bytes(const FeatureExtractor& f, const Classifier& c) {
  std::vector<std::uint8_t> out;
  for (const Network* net : {static_cast<const Network*>(&f), static_cast<const Network*>(&c)}) {
    for (const auto& p : net->named_parameters()) {
      const auto v = p.tensor.values();
      const auto* b = reinterpret_cast<const std::uint8_t*>(v.data());
      out.insert(out.end(), b, b + v.size_bytes());
    }
  }
  return out;
}

void write_dataset_dir(const Dataset& data, const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string manifest = manifest_hash(cfg);

  Container profiles;
  put_meta(profiles, "profiles", manifest);
  profiles.put_scalar("count", static_cast<double>(data.profiles.size()));
  for (std::size_t i = 0; i < data.profiles.size(); ++i) {
    const SubjectProfile& p = data.profiles[i];
    profiles.put_scalar(key("profile", i, "id"), p.subject_id);
    profiles.put_scalar(key("profile", i, "target"), p.population == Population::target ? 1.0 : 0.0);
    put_vector(profiles, key("profile", i, "gain"), p.style_gain);
    put_vector(profiles, key("profile", i, "offset"), p.style_offset);
    profiles.put(key("profile", i, "mixing"), {data.spec.input_dim, data.spec.input_dim}, p.mixing);
    put_landmarks(profiles, key("profile", i, "landmarks"), p.landmarks);
    profiles.put(key("profile", i, "pose"), {3}, {p.pose.begin(), p.pose.end()});
    profiles.put_scalar(key("profile", i, "age"), p.age);
    profiles.put_scalar(key("profile", i, "gender"), p.gender);
    put_vector(profiles, key("profile", i, "identity_code"), p.identity_code);
  }
  const auto profile_bytes = encode(profiles);
  write_file(dir / "profiles.bin", profile_bytes);

  json files = json::array();
  auto emit = [&](int id, const Container& c, const char* population) {
    const auto bytes = encode(c);
    const std::string name = subject_file(id);
    write_file(dir / name, bytes);
    files.push_back({{"subject_id", id},
                     {"population", population},
                     {"file", name},
                     {"sha1", sha1_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()})}});
  };

  const auto train = by_subject(data.source_train);
  const auto val = by_subject(data.source_val);
  for (const auto& p : data.profiles) {
    if (p.population != Population::source) continue;
    Container c;
    put_meta(c, "samples", manifest);
    c.put_scalar("subject_id", p.subject_id);
    static const std::pair<SampleSet, std::vector<std::size_t>> kEmpty{};
    const auto& tr = train.count(p.subject_id) ? train.at(p.subject_id) : kEmpty;
    const auto& va = val.count(p.subject_id) ? val.at(p.subject_id) : kEmpty;
    SampleSet tr_set = tr.first, va_set = va.first;
    tr_set.dim = va_set.dim = data.spec.input_dim;
    put_samples(c, "source_train", tr_set, &tr.second);
    put_samples(c, "source_val", va_set, &va.second);
    emit(p.subject_id, c, "source");
  }
  for (const auto& t : data.targets) {
    Container c;
    put_meta(c, "samples", manifest);
    c.put_scalar("subject_id", t.subject_id);
    put_samples(c, "adaptation", t.adaptation, nullptr);
    put_samples(c, "train", t.train, nullptr);
    put_samples(c, "test", t.test, nullptr);
    emit(t.subject_id, c, "target");
  }

  const json m{{"format", "pft-dataset"},
               {"version", 1},
               {"manifest", manifest},
               {"config", to_json(cfg)},
               {"source_train_rows", data.source_train.size()},
               {"source_val_rows", data.source_val.size()},
               {"profiles", {{"file", "profiles.bin"},
                             {"sha1", sha1_hex({reinterpret_cast<const char*>(profile_bytes.data()), profile_bytes.size()})}}},
               {"subjects", files}};
  const std::string text = m.dump(2) + "\n";
  write_file(dir / "manifest.json", {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

Dataset read_dataset_dir(const std::filesystem::path& dir, const std::string& manifest) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw DependencyError("dataset directory has no manifest.json", dir.string());
  json m;
  try {
    std::ifstream in(manifest_path);
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest is not valid JSON: ") + e.what(), manifest_path.string());
  }
  if (m.value("format", "") != "pft-dataset") throw FormatError("not a dataset manifest", manifest_path.string());
  if (m.value("manifest", "") != manifest) {
    throw ManifestError("dataset was generated under a different run configuration",
                        dir.string() + ": dataset=" + m.value("manifest", "") + " run=" + manifest);
  }
  const RunConfig cfg = run_config_from_json(m.at("config"));
  Dataset data;
  data.spec = cfg.dataset;
  const std::size_t dim = data.spec.input_dim;

  auto load_checked = [&](const std::string& name, const std::string& sha) {
    const auto bytes = read_file(dir / name);
    if (sha1_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()}) != sha) {
      throw ChecksumError("dataset file content does not match its manifest digest", (dir / name).string());
    }
    return decode(bytes);
  };

  const Container profiles = load_checked("profiles.bin", m.at("profiles").at("sha1"));
  check_kind(profiles, "profiles");
  const std::size_t count = get_size(profiles, "count");
  for (std::size_t i = 0; i < count; ++i) {
    SubjectProfile p;
    p.subject_id = static_cast<int>(profiles.scalar(key("profile", i, "id")));
    p.population = profiles.scalar(key("profile", i, "target")) != 0.0 ? Population::target : Population::source;
    p.style_gain = profiles.get(key("profile", i, "gain")).values;
    p.style_offset = profiles.get(key("profile", i, "offset")).values;
    p.mixing = profiles.get(key("profile", i, "mixing")).values;
    p.landmarks = get_landmarks(profiles, key("profile", i, "landmarks"));
    p.pose = get_pose(profiles, key("profile", i, "pose"));
    p.age = profiles.scalar(key("profile", i, "age"));
    p.gender = static_cast<int>(profiles.scalar(key("profile", i, "gender")));
    p.identity_code = profiles.get(key("profile", i, "identity_code")).values;
    data.profiles.push_back(std::move(p));
  }

  data.source_train = sized(m.at("source_train_rows").get<std::size_t>(), dim);
  data.source_val = sized(m.at("source_val_rows").get<std::size_t>(), dim);
  for (const auto& f : m.at("subjects")) {
    const Container c = load_checked(f.at("file").get<std::string>(), f.at("sha1").get<std::string>());
    check_kind(c, "samples");
    const int id = static_cast<int>(c.scalar("subject_id"));
    if (f.at("population") == "source") {
      place(data.source_train, get_samples(c, "source_train", id, dim), c.get("source_train.positions").values);
      place(data.source_val, get_samples(c, "source_val", id, dim), c.get("source_val.positions").values);
    } else {
      TargetSubject t;
      t.subject_id = id;
      t.adaptation = get_samples(c, "adaptation", id, dim);
      t.train = get_samples(c, "train", id, dim);
      t.test = get_samples(c, "test", id, dim);
      data.targets.push_back(std::move(t));
    }
  }
  for (const SampleSet* s : {&data.source_train, &data.source_val}) {
    for (const int subject : s->subjects)
      if (subject < 0) throw FormatError("dataset directory is missing source rows", dir.string());
  }
  return data;
}

}  // namespace pft
