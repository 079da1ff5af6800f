#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "pft/error.hpp"
#include "pft/log.hpp"
#include "pft/pairing/pairing.hpp"
#include "support/cases.hpp"

namespace pft {
namespace {

using testing::random_tensor;

using testing::procrustes_by_grid_search;
using testing::random_shape;

TEST(Procrustes, MatchesRotationGridSearch) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Landmarks a = random_shape(rng);
    const Landmarks b = random_shape(rng);
    EXPECT_NEAR(procrustes_residual(a, b), procrustes_by_grid_search(a, b), 1e-6) << "pair " << trial;
  }
}

TEST(Procrustes, InvariantToSimilarityTransforms) {
  Rng rng(22);
  const Landmarks a = random_shape(rng);
  Landmarks b{};
  const double t = 0.7, s = 3.5;
  for (std::size_t i = 0; i < a.size(); ++i) {
    b[i] = {s * (std::cos(t) * a[i][0] - std::sin(t) * a[i][1]) + 4.0,
            s * (std::sin(t) * a[i][0] + std::cos(t) * a[i][1]) - 2.0};
  }
  EXPECT_NEAR(procrustes_residual(a, b), 0.0, 1e-12);
}

TEST(Procrustes, SymmetricAndReflectionIsNotARotation) {
  Rng rng(23);
  const Landmarks a = random_shape(rng);
  const Landmarks b = random_shape(rng);
  EXPECT_NEAR(procrustes_residual(a, b), procrustes_residual(b, a), 1e-12);
  Landmarks mirrored = a;
  for (auto& p : mirrored) p[0] = -p[0];
  EXPECT_GT(procrustes_residual(a, mirrored), 1e-3);
}

TEST(Procrustes, RejectsDegenerateShapes) {
  Landmarks flat{};
  Rng rng(24);
  EXPECT_THROW(procrustes_residual(flat, random_shape(rng)), ContractError);
}

TEST(CosinePairs, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const std::size_t n = 60;
    const Tensor f = random_tensor(rng, {n, 8}, -1, 1);
    std::vector<double> loss(n);
    std::vector<int> subjects(n);
    for (std::size_t i = 0; i < n; ++i) {
      loss[i] = std::uniform_real_distribution<double>(0.0, 0.3)(rng);
      subjects[i] = static_cast<int>(i % 7);
    }
    const auto pairs = cosine_pairs(f, loss, subjects, 0.1);
    ASSERT_TRUE(pairs.has_value());
    const auto oracle = testing::brute_force_cosine(f, loss, subjects, 0.1);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ((*pairs)[i].identity, oracle[i]) << "seed " << seed << " row " << i;
      EXPECT_NEAR((*pairs)[i].score, cosine_distance(f.values().subspan(i * 8, 8), f.values().subspan(oracle[i] * 8, 8)), 1e-12);
    }
  }
}

TEST(CosinePairs, NoCrossSubjectCandidateYieldsNothing) {
  Rng rng(25);
  const Tensor f = random_tensor(rng, {4, 3}, -1, 1);
  const std::vector<double> loss{0.0, 0.0, 5.0, 5.0};
  const std::vector<int> subjects{0, 0, 1, 1};
  EXPECT_FALSE(cosine_pairs(f, loss, subjects, 0.1).has_value());
}

TEST(CosineDistance, ZeroVectorIsMaximallyDistantFromNothing) {
  const std::vector<double> a{0, 0}, b{1, 0}, c{2, 0}, d{-1, 0};
  EXPECT_EQ(cosine_distance(a, b), 1.0);
  EXPECT_NEAR(cosine_distance(b, c), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(b, d), 2.0, 1e-15);
}

TEST(RandomPairs, AlwaysCrossSubjectAndDeterministic) {
  DatasetSpec spec;
  spec.n_source_subjects = 5;
  spec.samples_per_class = 20;
  spec.adaptation_frames = 5;
  const Dataset d = generate_dataset(spec);
  Rng r1(7), r2(7);
  const auto a = pair_random(d.source_train, r1);
  const auto b = pair_random(d.source_train, r2);
  ASSERT_EQ(a.size(), d.source_train.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].content, i);
    EXPECT_NE(d.source_train.subjects[a[i].content], d.source_train.subjects[a[i].identity]);
    EXPECT_EQ(a[i].identity, b[i].identity);
  }
}

TEST(RandomPairs, RequireTwoSubjects) {
  const Dataset d = generate_dataset(DatasetSpec{});
  Rng rng(1);
  EXPECT_THROW(pair_random(d.targets[0].test, rng), ContractError);
}

class LandmarkMatch : public ::testing::Test {
 protected:
  void SetUp() override {
    spec.n_source_subjects = 10;
    basis = make_basis(spec);
    for (int i = 0; i < 10; ++i) profiles.push_back(make_subject(spec, basis, i, Population::source));
  }
  std::vector<const SubjectProfile*> pointers() const {
    std::vector<const SubjectProfile*> out;
    for (const auto& p : profiles) out.push_back(&p);
    return out;
  }
  DatasetSpec spec;
  GeneratorBasis basis;
  std::vector<SubjectProfile> profiles;
};

TEST_F(LandmarkMatch, MatchesExhaustiveSearch) {
  const auto cands = pointers();
  for (const bool same_gender : {true, false}) {
    PairingConfig cfg;
    cfg.same_gender_required = same_gender;
    for (const auto& q : profiles) {
      const SubjectMatch oracle = testing::exhaustive_landmark_match(q, cands, cfg);
      const SubjectMatch m = best_landmark_match(q, cands, cfg);
      EXPECT_EQ(m.subject_id, oracle.subject_id) << "query " << q.subject_id;
      EXPECT_EQ(m.relaxed, oracle.relaxed);
      EXPECT_DOUBLE_EQ(m.score, oracle.score);
    }
  }
}

TEST_F(LandmarkMatch, RelaxesAgeBeforeGender) {
  PairingConfig cfg;
  profiles[0].age = 30;
  profiles[0].gender = 0;
  profiles[1].age = 60;
  profiles[1].gender = 0;
  profiles[2].age = 31;
  profiles[2].gender = 1;
  const std::vector<const SubjectProfile*> cands{&profiles[0], &profiles[1], &profiles[2]};
  const std::size_t warnings = warning_count();
  const SubjectMatch m = best_landmark_match(profiles[0], cands, cfg);
  EXPECT_EQ(warning_count(), warnings + 1);
  EXPECT_EQ(m.subject_id, 1);
  EXPECT_EQ(m.relaxed, 1);

  profiles[1].gender = 1;
  profiles[2].age = 70;
  const SubjectMatch m2 = best_landmark_match(profiles[0], cands, cfg);
  EXPECT_EQ(m2.relaxed, 2);

  cfg.same_gender_required = false;
  profiles[2].age = 35;
  const SubjectMatch m3 = best_landmark_match(profiles[0], cands, cfg);
  EXPECT_EQ(m3.subject_id, 2);
  EXPECT_EQ(m3.relaxed, 0);
}

TEST_F(LandmarkMatch, TiesGoToTheSmallerId) {
  SubjectProfile twin_a = profiles[3];
  SubjectProfile twin_b = profiles[3];
  twin_a.subject_id = 42;
  twin_b.subject_id = 17;
  const std::vector<const SubjectProfile*> cands{&profiles[0], &twin_a, &twin_b};
  PairingConfig cfg;
  cfg.same_gender_required = false;
  cfg.max_age_gap = 1000;
  profiles[0] = profiles[3];
  profiles[0].subject_id = 0;
  EXPECT_EQ(best_landmark_match(profiles[0], cands, cfg).subject_id, 17);
}

TEST_F(LandmarkMatch, LoneSubjectHasNoCandidate) {
  const std::vector<const SubjectProfile*> cands{&profiles[0]};
  EXPECT_THROW(best_landmark_match(profiles[0], cands, PairingConfig{}), ContractError);
}

TEST(LandmarkPairs, EveryRowDrawsFromItsSubjectMatch) {
  DatasetSpec spec;
  spec.n_source_subjects = 6;
  spec.samples_per_class = 20;
  spec.adaptation_frames = 5;
  const Dataset d = generate_dataset(spec);
  const auto profiles = d.source_profiles();
  const PairingConfig cfg;
  Rng rng(3);
  const auto pairs = pair_landmark(d.source_train, profiles, cfg, rng);
  ASSERT_EQ(pairs.size(), d.source_train.size());
  for (const auto& p : pairs) {
    const int subject = d.source_train.subjects[p.content];
    const SubjectMatch m = best_landmark_match(d.profile(subject), profiles, cfg);
    EXPECT_EQ(d.source_train.subjects[p.identity], m.subject_id);
    EXPECT_EQ(p.score, m.score);
  }
}

TEST(PairingConfig, ValidatesAndParses) {
  PairingConfig cfg;
  cfg.well_classified_threshold = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_strategy("cosine"), PairingStrategy::cosine);
  EXPECT_STREQ(strategy_name(PairingStrategy::landmark), "landmark");
  EXPECT_THROW(parse_strategy("nearest"), ConfigError);
}

TEST(PairsCsv, HeaderAndFrameIds) {
  SampleSet s;
  s.dim = 1;
  const std::vector<double> row{0.0};
  s.push(row, 0, 1, frame_id(1, 0));
  s.push(row, 0, 2, frame_id(2, 5));
  std::ostringstream out;
  write_pairs_csv(out, {{0, 1, 0.25}}, s, "abc");
  EXPECT_EQ(out.str(), "manifest,content_frame_id,identity_frame_id,score\nabc,1000000,2000005,0.25\n");
}

}  // namespace
}  // namespace pft
