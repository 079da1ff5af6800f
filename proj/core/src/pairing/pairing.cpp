#include "pft/pairing/pairing.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "pft/error.hpp"
#include "pft/log.hpp"
#include "pft/numerics/ops.hpp"

namespace pft {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::map<int, std::vector<std::size_t>> rows_by_subject(std::span<const int> subjects) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < subjects.size(); ++i) out[subjects[i]].push_back(i);
  return out;
}

Eigen::MatrixX2d normalise_shape(std::span<const std::array<double, 2>> p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixX2d m(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) m.row(i) << p[static_cast<std::size_t>(i)][0], p[static_cast<std::size_t>(i)][1];
  m.rowwise() -= m.colwise().mean();
  const double norm = m.norm();
  if (!(norm > 1e-12)) throw ContractError("procrustes: shape has zero spread");
  return m / norm;
}

}  // namespace

const char* strategy_name(PairingStrategy s) {
  switch (s) {
    case PairingStrategy::random: return "random";
    case PairingStrategy::cosine: return "cosine";
    case PairingStrategy::landmark: return "landmark";
  }
  return "unknown";
}

PairingStrategy parse_strategy(const std::string& name) {
  if (name == "random") return PairingStrategy::random;
  if (name == "cosine") return PairingStrategy::cosine;
  if (name == "landmark") return PairingStrategy::landmark;
  throw ConfigError("unknown pairing strategy '" + name + "'", "expected random, cosine or landmark");
}

void PairingConfig::validate() const {
  if (!(pose_weight >= 0.0) || !(landmark_weight >= 0.0)) throw ConfigError("pairing weights must be non-negative");
  if (!(max_age_gap >= 0.0)) throw ConfigError("max_age_gap must be non-negative");
  if (!(well_classified_threshold > 0.0)) throw ConfigError("well_classified_threshold must be positive");
}

std::vector<Pair> pair_random(const SampleSet& samples, Rng& rng) {
  const auto groups = rows_by_subject(samples.subjects);
  if (groups.size() < 2) throw ContractError("pair_random: need samples from at least two subjects");
  const std::size_t n = samples.size();
  std::vector<Pair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t others = n - groups.at(samples.subjects[i]).size();
    std::size_t pick = uniform_index(rng, others);
    // Walk the rows of other subjects without materialising the list.
    for (const auto& [subject, rows] : groups) {
      if (subject == samples.subjects[i]) continue;
      if (pick < rows.size()) {
        pairs.push_back({i, rows[pick], 0.0});
        break;
      }
      pick -= rows.size();
    }
  }
  return pairs;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: width mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 1.0;
  return 1.0 - ab / std::sqrt(aa * bb);
}

std::optional<std::vector<Pair>> cosine_pairs(const Tensor& features, std::span<const double> sample_loss,
                                              std::span<const int> subjects, double threshold) {
  if (features.rank() != 2 || features.dim(0) != subjects.size() || sample_loss.size() != subjects.size()) {
    throw ShapeError("cosine_pairs: features, losses and subjects disagree in length");
  }
  const std::size_t n = features.dim(0);
  const std::size_t d = features.dim(1);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i)
    if (sample_loss[i] <= threshold) pool.push_back(i);
  if (pool.empty()) return std::nullopt;

  const Eigen::Map<const RowMatrix> f(features.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  RowMatrix unit = f;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) unit.row(i) /= norm;
  }
  RowMatrix cand(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < pool.size(); ++k) cand.row(static_cast<Eigen::Index>(k)) = unit.row(static_cast<Eigen::Index>(pool[k]));

  std::vector<Pair> pairs(n);
  constexpr std::size_t kBlock = 256;
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t len = std::min(kBlock, n - start);
    const RowMatrix sim = unit.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) * cand.transpose();
    for (std::size_t r = 0; r < len; ++r) {
      const std::size_t i = start + r;
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = pool.size();
      for (std::size_t k = 0; k < pool.size(); ++k) {
        if (subjects[pool[k]] == subjects[i]) continue;
        const double dist = 1.0 - sim(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        if (dist < best) {
          best = dist;
          best_k = k;
        }
      }
      if (best_k == pool.size()) return std::nullopt;
      pairs[i] = {i, pool[best_k], best};
    }
  }
  return pairs;
}

std::vector<Pair> pair_cosine(const SampleSet& samples, const FeatureExtractor& extractor, const Classifier& classifier,
                              const PairingConfig& cfg, Rng& rng) {
  cfg.validate();
  NoGradGuard guard;
  const Tensor x = samples.matrix();
  const Tensor f = extractor.extract(x).final();
  const Tensor logp = log_softmax(classifier.classify(f));
  std::vector<double> loss(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) loss[i] = -logp.at(i, static_cast<std::size_t>(samples.labels[i]));
  auto pairs = cosine_pairs(f, loss, samples.subjects, cfg.well_classified_threshold);
  if (!pairs) {
    warn("pair_cosine: no usable well-classified candidates; falling back to random pairing");
    return pair_random(samples, rng);
  }
  return *pairs;
}

double procrustes_residual(std::span<const std::array<double, 2>> a, std::span<const std::array<double, 2>> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("procrustes: shapes need the same number (>= 2) of points");
  const Eigen::MatrixX2d na = normalise_shape(a);
  const Eigen::MatrixX2d nb = normalise_shape(b);
  const Eigen::Matrix2d m = na.transpose() * nb;
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double d = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const double trace = svd.singularValues()[0] + d * svd.singularValues()[1];
  return std::max(0.0, 1.0 - trace * trace);
}

double landmark_score(const SubjectProfile& a, const SubjectProfile& b, const PairingConfig& cfg) {
  const double residual = procrustes_residual(a.landmarks, b.landmarks);
  double cos = 0.0;
  for (std::size_t i = 0; i < 3; ++i) cos += a.pose[i] * b.pose[i];
  return cfg.landmark_weight * residual + cfg.pose_weight * (1.0 - cos);
}

SubjectMatch best_landmark_match(const SubjectProfile& query, std::span<const SubjectProfile* const> candidates,
                                 const PairingConfig& cfg) {
  cfg.validate();
  for (int relaxed = 0; relaxed <= 2; ++relaxed) {
    SubjectMatch best;
    best.score = std::numeric_limits<double>::infinity();
    for (const SubjectProfile* c : candidates) {
      if (c->subject_id == query.subject_id) continue;
      if (relaxed < 1 && std::abs(c->age - query.age) > cfg.max_age_gap) continue;
      if (relaxed < 2 && cfg.same_gender_required && c->gender != query.gender) continue;
      const double s = landmark_score(query, *c, cfg);
      if (s < best.score || (s == best.score && c->subject_id < best.subject_id)) {
        best = {c->subject_id, s, relaxed};
      }
    }
    if (best.subject_id >= 0) {
      if (relaxed > 0) {
        warn("landmark pairing: subject " + std::to_string(query.subject_id) + " has no eligible partner; relaxed " +
             (relaxed == 1 ? "the age constraint" : "the age and gender constraints"));
      }
      return best;
    }
  }
  throw ContractError("landmark pairing: subject " + std::to_string(query.subject_id) + " has no candidate at all");
}

std::vector<Pair> pair_landmark(const SampleSet& samples, std::span<const SubjectProfile* const> profiles,
                                const PairingConfig& cfg, Rng& rng) {
  const auto groups = rows_by_subject(samples.subjects);
  if (groups.size() < 2) throw ContractError("pair_landmark: need samples from at least two subjects");
  std::vector<const SubjectProfile*> present;
  for (const SubjectProfile* p : profiles)
    if (groups.count(p->subject_id) != 0) present.push_back(p);
  std::map<int, SubjectMatch> match;
  for (const auto& [subject, rows] : groups) {
    const SubjectProfile* self = nullptr;
    for (const SubjectProfile* p : present)
      if (p->subject_id == subject) self = p;
    if (self == nullptr) throw ContractError("pair_landmark: no profile for subject " + std::to_string(subject));
    match[subject] = best_landmark_match(*self, present, cfg);
  }
  std::vector<Pair> pairs;
  pairs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SubjectMatch& m = match.at(samples.subjects[i]);
    const auto& rows = groups.at(m.subject_id);
    pairs.push_back({i, rows[uniform_index(rng, rows.size())], m.score});
  }
  return pairs;
}

void write_pairs_csv(std::ostream& out, const std::vector<Pair>& pairs, const SampleSet& samples, const std::string& manifest) {
  out << "manifest,content_frame_id,identity_frame_id,score\n";
  out.precision(17);
  for (const auto& p : pairs) out << manifest << ',' << samples.frames.at(p.content) << ',' << samples.frames.at(p.identity) << ',' << p.score << '\n';
}

}  // namespace pft
