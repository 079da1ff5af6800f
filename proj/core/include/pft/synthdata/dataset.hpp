#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pft/numerics/rng.hpp"
#include "pft/numerics/tensor.hpp"

namespace pft {

/// Knobs of the subject-shift generator. The defaults give a separable task
/// within every subject and a clear gap between source and target subjects.
struct GeneratorKnobs {
  double prototype_separation = 1.5;  // distance of each expression prototype from neutral
  std::size_t identity_rank = 4;      // latent identity code length
  double gain_spread = 0.2;           // log-normal spread of per-channel gains
  double offset_spread = 0.3;         // idiosyncratic offset spread
  double identity_offset = 0.5;       // identity-driven offset strength
  double rotation_scale = 0.5;        // identity-driven mixing angle
  double target_gain_drop = 0.5;      // log-gain reduction per unit severity (less expressive targets)
  double target_offset_shift = 0.3;   // offset displacement per unit severity
};

struct DatasetSpec {
  std::size_t n_source_subjects = 20;
  std::size_t n_target_subjects = 5;
  std::size_t classes = 2;
  std::size_t samples_per_class = 100;
  std::size_t input_dim = 32;
  double noise_scale = 0.3;
  double shift_severity = 2.0;
  std::size_t adaptation_frames = 50;
  std::uint64_t seed = 0;
  GeneratorKnobs knobs{};

  void validate() const;
};

enum class Population { source, target };

inline constexpr std::size_t kLandmarkCount = 10;
using Landmarks = std::array<std::array<double, 2>, kLandmarkCount>;

struct SubjectProfile {
  int subject_id = 0;
  Population population = Population::source;
  std::vector<double> style_gain;    // input_dim, strictly positive
  std::vector<double> style_offset;  // input_dim
  std::vector<double> mixing;        // input_dim x input_dim, row-major orthonormal
  Landmarks landmarks{};
  std::array<double, 3> pose{};  // unit vector
  double age = 0.0;
  int gender = 0;
  std::vector<double> identity_code;  // generator latent; never read by the pipeline
};

/// Quantities shared by every subject of one dataset: expression prototypes and
/// the bases through which the identity code shapes style and geometry.
struct GeneratorBasis {
  std::size_t input_dim = 0;
  std::vector<std::vector<double>> prototypes;     // classes x input_dim, prototype 0 is the origin
  std::vector<std::vector<double>> rotation_gens;  // identity_rank skew matrices, unit Frobenius norm
  std::vector<double> offset_basis;                // input_dim x identity_rank
  Landmarks landmark_template{};
  std::vector<Landmarks> landmark_modes;  // identity_rank modes
  std::vector<double> pose_basis;         // 3 x identity_rank
  std::vector<double> age_direction;      // identity_rank, unit
  std::vector<double> gender_direction;   // identity_rank, unit
};

GeneratorBasis make_basis(const DatasetSpec& spec);

SubjectProfile make_subject(const DatasetSpec& spec, const GeneratorBasis& basis, int subject_id, Population population);

/// Style-space distance: |log g_a - log g_b| + |o_a - o_b| + |Q_a - Q_b|_F.
double style_distance(const SubjectProfile& a, const SubjectProfile& b);

/// Row-major collection of labelled frames from one or more subjects.
struct SampleSet {
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<int> labels;
  std::vector<int> subjects;
  std::vector<std::uint64_t> frames;

  std::size_t size() const noexcept { return labels.size(); }
  void append(const SampleSet& other);
  void push(std::span<const double> row, int label, int subject, std::uint64_t frame);
  SampleSet select(std::span<const std::size_t> rows) const;
  SampleSet with_label(int label) const;
  Tensor matrix() const;
  Tensor rows(std::span<const std::size_t> idx) const;
};

/// x = Q (g * (c_y + eps) + o), eps ~ N(0, noise^2 I).
void render_sample(const SubjectProfile& subject, const GeneratorBasis& basis, int label, double noise_scale, Rng& rng,
                   std::span<double> out);

SampleSet render_subject(const DatasetSpec& spec, const GeneratorBasis& basis, const SubjectProfile& subject);

struct TargetSubject {
  int subject_id = 0;
  SampleSet adaptation;  // neutral frames only
  SampleSet train;       // labelled, oracle use only
  SampleSet test;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<SubjectProfile> profiles;  // source subjects first, then targets
  SampleSet source_train;
  SampleSet source_val;
  std::vector<TargetSubject> targets;

  const SubjectProfile& profile(int subject_id) const;
  std::vector<const SubjectProfile*> source_profiles() const;
};

Dataset generate_dataset(const DatasetSpec& spec);

/// Frame ids are unique across the dataset: subject * 1e6 + index.
constexpr std::uint64_t frame_id(int subject, std::size_t index) {
  return static_cast<std::uint64_t>(subject) * 1'000'000ULL + index;
}

/// Least-squares linear classifier (one-vs-rest on one-hot targets) fitted on
/// `train`, accuracy in percent on `test`. Serves as a calibration reference.
double least_squares_accuracy(const SampleSet& train, const SampleSet& test, std::size_t classes);

}  // namespace pft
