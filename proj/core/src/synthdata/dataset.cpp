#include "pft/synthdata/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pft/error.hpp"

namespace pft {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Stream ids for derive_seed. Subjects get their own streams so any subject can
// be regenerated in isolation.
constexpr std::uint64_t kBasisStream = 0;
constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kProfileStream = 1000;
constexpr std::uint64_t kFrameStream = 2'000'000;

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vector gaussian(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
  Vector v = gaussian(rng, n);
  v.normalize();
  return {v.data(), v.data() + v.size()};
}

double dot(const std::vector<double>& a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

void DatasetSpec::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("dataset spec: " + what); };
  if (n_source_subjects < 2) fail("need at least two source subjects");
  if (n_target_subjects < 1) fail("need at least one target subject");
  if (classes < 2) fail("need at least two classes");
  if (classes > input_dim) fail("classes may not exceed input_dim");
  if (samples_per_class < 4) fail("samples_per_class must be at least 4");
  if (input_dim < 2) fail("input_dim must be at least 2");
  if (!(noise_scale >= 0.0)) fail("noise_scale must be non-negative");
  if (!(shift_severity >= 0.0)) fail("shift_severity must be non-negative");
  if (adaptation_frames < 2 || adaptation_frames > samples_per_class / 2) {
    fail("adaptation_frames must lie in [2, samples_per_class / 2]");
  }
  if (knobs.identity_rank == 0) fail("identity_rank must be positive");
  if (knobs.prototype_separation < 4.0 * noise_scale) fail("prototype_separation must be at least 4 * noise_scale");
}

GeneratorBasis make_basis(const DatasetSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, kBasisStream);
  const std::size_t d = spec.input_dim;
  const std::size_t r = spec.knobs.identity_rank;
  GeneratorBasis b;
  b.input_dim = d;

  Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(spec.classes - 1));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const Matrix e = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(g.rows(), g.cols());
  b.prototypes.assign(spec.classes, std::vector<double>(d, 0.0));
  for (std::size_t y = 1; y < spec.classes; ++y) {
    for (std::size_t j = 0; j < d; ++j) {
      b.prototypes[y][j] = spec.knobs.prototype_separation * e(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(y - 1));
    }
  }

  for (std::size_t k = 0; k < r; ++k) {
    Matrix a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    Matrix s = a - a.transpose();
    s /= s.norm();
    b.rotation_gens.emplace_back(s.data(), s.data() + s.size());
  }

  b.offset_basis.resize(d * r);
  for (auto& v : b.offset_basis) v = normal(rng) / std::sqrt(static_cast<double>(d));

  b.landmark_template = {{{-0.35, 0.30}, {-0.15, 0.30}, {0.15, 0.30}, {0.35, 0.30}, {0.00, 0.05},
                          {0.00, -0.10}, {-0.25, -0.35}, {0.25, -0.35}, {0.00, -0.40}, {0.00, -0.70}}};
  for (std::size_t k = 0; k < r; ++k) {
    Landmarks mode{};
    double norm = 0.0;
    for (auto& p : mode) {
      p = {normal(rng), normal(rng)};
      norm += p[0] * p[0] + p[1] * p[1];
    }
    norm = std::sqrt(norm);
    for (auto& p : mode) p = {p[0] / norm, p[1] / norm};
    b.landmark_modes.push_back(mode);
  }

  b.pose_basis.resize(3 * r);
  for (auto& v : b.pose_basis) v = 0.3 * normal(rng);
  b.age_direction = unit_vector(rng, r);
  b.gender_direction = unit_vector(rng, r);
  return b;
}

SubjectProfile make_subject(const DatasetSpec& spec, const GeneratorBasis& basis, int subject_id, Population population) {
  const std::size_t d = spec.input_dim;
  const std::size_t r = spec.knobs.identity_rank;
  const auto& k = spec.knobs;
  Rng rng = make_rng(spec.seed, kProfileStream + static_cast<std::uint64_t>(subject_id));

  SubjectProfile p;
  p.subject_id = subject_id;
  p.population = population;
  const Vector z = gaussian(rng, r);
  p.identity_code.assign(z.data(), z.data() + r);

  p.style_gain.resize(d);
  for (auto& g : p.style_gain) g = std::exp(k.gain_spread * normal(rng));

  const double id_scale = k.identity_offset * std::sqrt(static_cast<double>(d) / static_cast<double>(r));
  p.style_offset.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double mz = 0.0;
    for (std::size_t c = 0; c < r; ++c) mz += basis.offset_basis[j * r + c] * z[static_cast<Eigen::Index>(c)];
    p.style_offset[j] = k.offset_spread * normal(rng) + id_scale * mz;
  }

  if (population == Population::target) {
    // Displace the offset along a direction orthogonal to every expression
    // prototype, and damp expressiveness through a global gain reduction.
    Vector u = gaussian(rng, d);
    for (std::size_t y = 1; y < basis.prototypes.size(); ++y) {
      const Eigen::Map<const Vector> c(basis.prototypes[y].data(), static_cast<Eigen::Index>(d));
      u -= (u.dot(c) / c.squaredNorm()) * c;
    }
    u.normalize();
    const double severity = spec.shift_severity;
    for (std::size_t j = 0; j < d; ++j) {
      p.style_offset[j] += severity * k.target_offset_shift * u[static_cast<Eigen::Index>(j)];
      p.style_gain[j] *= std::exp(-severity * k.target_gain_drop);
    }
  }

  // Cayley transform of a skew-symmetric generator gives an exact rotation.
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < r; ++c) {
    s += k.rotation_scale * z[static_cast<Eigen::Index>(c)] *
         Eigen::Map<const Matrix>(basis.rotation_gens[c].data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  }
  const Matrix eye = Matrix::Identity(s.rows(), s.cols());
  const Matrix q = (eye - s).partialPivLu().solve(eye + s);
  p.mixing.assign(q.data(), q.data() + q.size());

  Landmarks shape = basis.landmark_template;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t c = 0; c < r; ++c) shape[i][a] += 0.08 * z[static_cast<Eigen::Index>(c)] * basis.landmark_modes[c][i][a];
      shape[i][a] += 0.01 * normal(rng);
    }
  }
  const double angle = uniform(rng, -0.3, 0.3);
  const double scale = uniform(rng, 0.8, 1.2);
  const double tx = 0.1 * normal(rng);
  const double ty = 0.1 * normal(rng);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const double x = shape[i][0], y = shape[i][1];
    p.landmarks[i] = {scale * (std::cos(angle) * x - std::sin(angle) * y) + tx,
                      scale * (std::sin(angle) * x + std::cos(angle) * y) + ty};
  }

  std::array<double, 3> pose{0.0, 0.0, 1.0};
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t c = 0; c < r; ++c) pose[a] += basis.pose_basis[a * r + c] * z[static_cast<Eigen::Index>(c)];
  }
  const double pn = std::sqrt(pose[0] * pose[0] + pose[1] * pose[1] + pose[2] * pose[2]);
  for (auto& v : pose) v /= pn;
  p.pose = pose;

  const std::span<const double> zs(z.data(), r);
  p.age = std::clamp(41.5 + 8.0 * dot(basis.age_direction, zs) + 4.0 * normal(rng), 18.0, 65.0);
  p.gender = (dot(basis.gender_direction, zs) + 0.5 * normal(rng)) > 0.0 ? 1 : 0;
  return p;
}

double style_distance(const SubjectProfile& a, const SubjectProfile& b) {
  if (a.style_gain.size() != b.style_gain.size()) throw DimensionError("style_distance: profiles differ in input_dim");
  double lg = 0.0, off = 0.0, mix = 0.0;
  for (std::size_t j = 0; j < a.style_gain.size(); ++j) {
    const double dg = std::log(a.style_gain[j]) - std::log(b.style_gain[j]);
    const double dof = a.style_offset[j] - b.style_offset[j];
    lg += dg * dg;
    off += dof * dof;
  }
  for (std::size_t j = 0; j < a.mixing.size(); ++j) mix += (a.mixing[j] - b.mixing[j]) * (a.mixing[j] - b.mixing[j]);
  return std::sqrt(lg) + std::sqrt(off) + std::sqrt(mix);
}

void SampleSet::append(const SampleSet& other) {
  if (other.size() == 0) return;
  if (size() == 0 && x.empty()) dim = other.dim;
  if (dim != other.dim) throw DimensionError("sample set: cannot append rows of a different width");
  x.insert(x.end(), other.x.begin(), other.x.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  subjects.insert(subjects.end(), other.subjects.begin(), other.subjects.end());
  frames.insert(frames.end(), other.frames.begin(), other.frames.end());
}

void SampleSet::push(std::span<const double> row, int label, int subject, std::uint64_t frame) {
  if (row.size() != dim) throw DimensionError("sample set: row width " + std::to_string(row.size()) + " != " + std::to_string(dim));
  x.insert(x.end(), row.begin(), row.end());
  labels.push_back(label);
  subjects.push_back(subject);
  frames.push_back(frame);
}

SampleSet SampleSet::select(std::span<const std::size_t> rows) const {
  SampleSet out;
  out.dim = dim;
  for (const std::size_t r : rows) {
    if (r >= size()) throw ContractError("sample set: row index out of range");
    out.push(std::span<const double>(x.data() + r * dim, dim), labels[r], subjects[r], frames[r]);
  }
  return out;
}

SampleSet SampleSet::with_label(int label) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i)
    if (labels[i] == label) rows.push_back(i);
  return select(rows);
}

Tensor SampleSet::matrix() const { return Tensor::from({size(), dim}, x); }

Tensor SampleSet::rows(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * dim);
  for (const std::size_t r : idx) {
    if (r >= size()) throw ContractError("sample set: row index out of range");
    out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(r * dim), x.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
  }
  return Tensor::from({idx.size(), dim}, std::move(out));
}

void render_sample(const SubjectProfile& subject, const GeneratorBasis& basis, int label, double noise_scale, Rng& rng,
                   std::span<double> out) {
  const std::size_t d = basis.input_dim;
  if (label < 0 || static_cast<std::size_t>(label) >= basis.prototypes.size()) {
    throw ContractError("render_sample: label " + std::to_string(label) + " outside the class range");
  }
  if (out.size() != d) throw DimensionError("render_sample: output width mismatch");
  Vector styled(static_cast<Eigen::Index>(d));
  const auto& c = basis.prototypes[static_cast<std::size_t>(label)];
  for (std::size_t j = 0; j < d; ++j) {
    const double eps = noise_scale * normal(rng);
    styled[static_cast<Eigen::Index>(j)] = subject.style_gain[j] * (c[j] + eps) + subject.style_offset[j];
  }
  const Eigen::Map<const Matrix> q(subject.mixing.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(d)) = q * styled;
}

SampleSet render_subject(const DatasetSpec& spec, const GeneratorBasis& basis, const SubjectProfile& subject) {
  Rng rng = make_rng(spec.seed, kFrameStream + static_cast<std::uint64_t>(subject.subject_id));
  SampleSet s;
  s.dim = spec.input_dim;
  std::vector<double> row(spec.input_dim);
  for (std::size_t y = 0; y < spec.classes; ++y) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      render_sample(subject, basis, static_cast<int>(y), spec.noise_scale, rng, row);
      s.push(row, static_cast<int>(y), subject.subject_id, frame_id(subject.subject_id, y * spec.samples_per_class + i));
    }
  }
  return s;
}

const SubjectProfile& Dataset::profile(int subject_id) const {
  for (const auto& p : profiles)
    if (p.subject_id == subject_id) return p;
  throw ContractError("dataset: unknown subject " + std::to_string(subject_id));
}

std::vector<const SubjectProfile*> Dataset::source_profiles() const {
  std::vector<const SubjectProfile*> out;
  for (const auto& p : profiles)
    if (p.population == Population::source) out.push_back(&p);
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  const GeneratorBasis basis = make_basis(spec);
  Dataset ds;
  ds.spec = spec;

  SampleSet source;
  source.dim = spec.input_dim;
  for (std::size_t i = 0; i < spec.n_source_subjects; ++i) {
    ds.profiles.push_back(make_subject(spec, basis, static_cast<int>(i), Population::source));
    source.append(render_subject(spec, basis, ds.profiles.back()));
  }
  Rng split_rng = make_rng(spec.seed, kSplitStream);
  const auto perm = permutation(split_rng, source.size());
  const std::size_t n_val = source.size() / 10;
  ds.source_val = source.select(std::span(perm).first(n_val));
  ds.source_train = source.select(std::span(perm).subspan(n_val));

  const std::size_t half = spec.samples_per_class / 2;
  for (std::size_t t = 0; t < spec.n_target_subjects; ++t) {
    const int id = static_cast<int>(spec.n_source_subjects + t);
    ds.profiles.push_back(make_subject(spec, basis, id, Population::target));
    const SampleSet all = render_subject(spec, basis, ds.profiles.back());
    std::vector<std::size_t> train, test, adapt;
    for (std::size_t y = 0; y < spec.classes; ++y) {
      for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
        const std::size_t row = y * spec.samples_per_class + i;
        (i < half ? train : test).push_back(row);
        if (y == 0 && i < spec.adaptation_frames) adapt.push_back(row);
      }
    }
    ds.targets.push_back({id, all.select(adapt), all.select(train), all.select(test)});
  }
  return ds;
}

double least_squares_accuracy(const SampleSet& train, const SampleSet& test, std::size_t classes) {
  if (train.size() == 0 || test.size() == 0) throw ContractError("least_squares_accuracy: empty split");
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto d = static_cast<Eigen::Index>(train.dim);
  Matrix x(n, d + 1);
  Matrix y = Matrix::Zero(n, static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = train.x[static_cast<std::size_t>(i * d + j)];
    x(i, d) = 1.0;
    y(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;
  }
  Matrix gram = x.transpose() * x;
  gram.diagonal().array() += 1e-9;
  const Matrix w = gram.ldlt().solve(x.transpose() * y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Vector row(d + 1);
    for (Eigen::Index j = 0; j < d; ++j) row[j] = test.x[i * test.dim + static_cast<std::size_t>(j)];
    row[d] = 1.0;
    Eigen::Index best = 0;
    (w.transpose() * row).maxCoeff(&best);
    if (static_cast<int>(best) == test.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace pft
