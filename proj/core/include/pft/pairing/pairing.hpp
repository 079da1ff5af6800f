#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pft/models/networks.hpp"
#include "pft/numerics/rng.hpp"
#include "pft/synthdata/dataset.hpp"

namespace pft {

enum class PairingStrategy { random, cosine, landmark };

const char* strategy_name(PairingStrategy s);
PairingStrategy parse_strategy(const std::string& name);

struct PairingConfig {
  PairingStrategy strategy = PairingStrategy::landmark;
  double pose_weight = 1.0;
  double landmark_weight = 1.0;
  double max_age_gap = 10.0;
  bool same_gender_required = true;
  double well_classified_threshold = 0.1;

  void validate() const;
};

/// Content row and identity row of one sample set; always different subjects.
struct Pair {
  std::size_t content = 0;
  std::size_t identity = 0;
  double score = 0.0;
};

/// One uniformly drawn cross-subject identity per content row.
std::vector<Pair> pair_random(const SampleSet& samples, Rng& rng);

/// For every content row, the well-classified row of another subject with the
/// smallest cosine distance between feature vectors. Rows whose per-sample
/// loss exceeds the threshold are excluded from the candidate pool. Returns
/// nullopt when the pool cannot serve some content row.
std::optional<std::vector<Pair>> cosine_pairs(const Tensor& features, std::span<const double> sample_loss,
                                              std::span<const int> subjects, double threshold);

/// cosine_pairs on extractor features and classifier losses, falling back to
/// pair_random with a warning when the candidate pool is unusable.
std::vector<Pair> pair_cosine(const SampleSet& samples, const FeatureExtractor& extractor, const Classifier& classifier,
                              const PairingConfig& cfg, Rng& rng);

double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Ordinary Procrustes residual with both shapes centred and scaled to unit
/// Frobenius norm: the squared distance left after the best rotation and
/// scale of B onto A, i.e. 1 - (s1 + d s2)^2 from the SVD of A^T B with the
/// reflection guard d. Symmetric in A and B; 0 for similar shapes.
double procrustes_residual(std::span<const std::array<double, 2>> a, std::span<const std::array<double, 2>> b);

/// Subject-level landmark score: alpha * procrustes + beta * (1 - <pose_a, pose_b>).
double landmark_score(const SubjectProfile& a, const SubjectProfile& b, const PairingConfig& cfg);

struct SubjectMatch {
  int subject_id = -1;
  double score = 0.0;
  int relaxed = 0;  // 0: all constraints, 1: age dropped, 2: age and gender dropped
};

/// Best-scoring eligible candidate for `query` (same gender, age gap within
/// bound), relaxing the age constraint and then the gender constraint when no
/// candidate qualifies. Ties resolve to the smaller subject id.
SubjectMatch best_landmark_match(const SubjectProfile& query, std::span<const SubjectProfile* const> candidates,
                                 const PairingConfig& cfg);

/// Every content row is paired with a uniformly drawn row of its subject's
/// best landmark match.
std::vector<Pair> pair_landmark(const SampleSet& samples, std::span<const SubjectProfile* const> profiles,
                                const PairingConfig& cfg, Rng& rng);

/// manifest,content_frame_id,identity_frame_id,score
void write_pairs_csv(std::ostream& out, const std::vector<Pair>& pairs, const SampleSet& samples, const std::string& manifest);

}  // namespace pft
