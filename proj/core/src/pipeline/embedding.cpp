#include "pft/pipeline/embedding.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <ostream>

#include "pft/error.hpp"

namespace pft {

std::vector<std::array<double, 2>> Projection::apply(const Tensor& points) const {
  if (points.rank() != 2 || points.dim(1) != mean.size()) throw DimensionError("projection: width mismatch");
  const std::size_t n = points.dim(0);
  const std::size_t d = mean.size();
  std::vector<std::array<double, 2>> out(n);
  const auto v = points.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 2; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (v[i * d + j] - mean[j]) * axes[a][j];
      out[i][a] = s;
    }
  }
  return out;
}

Projection fit_projection(std::span<const Tensor> pooled) {
  if (pooled.empty()) throw ContractError("projection: no points");
  const std::size_t d = pooled.front().dim(1);
  std::size_t n = 0;
  for (const auto& t : pooled) {
    if (t.rank() != 2 || t.dim(1) != d) throw DimensionError("projection: inputs disagree in width");
    n += t.dim(0);
  }
  if (n < 2) throw ContractError("projection: at least two points are required", "points=" + std::to_string(n));
  if (d < 2) throw DimensionError("projection: need at least two feature channels");

  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::Index row = 0;
  for (const auto& t : pooled) {
    const auto v = t.values();
    for (std::size_t i = 0; i < t.dim(0); ++i, ++row)
      for (std::size_t j = 0; j < d; ++j) m(row, static_cast<Eigen::Index>(j)) = v[i * d + j];
  }
  const Eigen::RowVectorXd mu = m.colwise().mean();
  m.rowwise() -= mu;
  const Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  Projection p;
  p.mean.assign(mu.data(), mu.data() + d);
  for (std::size_t a = 0; a < 2; ++a) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - a);  // eigenvalues ascend
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0.0) axis = -axis;
    p.axes[a].assign(axis.data(), axis.data() + d);
    p.variance[a] = std::max(0.0, eig.eigenvalues()(col));
  }
  return p;
}

double separation_ratio(std::span<const std::array<double, 2>> points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw ShapeError("separation_ratio: points and labels differ in length");
  std::map<int, std::array<double, 3>> acc;  // sum x, sum y, count
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& a = acc[labels[i]];
    a[0] += points[i][0];
    a[1] += points[i][1];
    a[2] += 1.0;
  }
  if (acc.size() < 2) throw ContractError("separation_ratio: need at least two classes");
  std::map<int, std::array<double, 2>> centre;
  for (const auto& [y, a] : acc) centre[y] = {a[0] / a[2], a[1] / a[2]};

  double within = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& c = centre[labels[i]];
    within += std::pow(points[i][0] - c[0], 2) + std::pow(points[i][1] - c[1], 2);
  }
  within = std::sqrt(within / static_cast<double>(points.size()));

  double between = 0.0;
  std::size_t pairs = 0;
  for (auto a = centre.begin(); a != centre.end(); ++a) {
    for (auto b = std::next(a); b != centre.end(); ++b) {
      between += std::hypot(a->second[0] - b->second[0], a->second[1] - b->second[1]);
      ++pairs;
    }
  }
  between /= static_cast<double>(pairs);
  if (!(within > 0.0)) return std::numeric_limits<double>::infinity();
  return between / within;
}

void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows, const std::string& manifest) {
  out << "manifest,subject_id,frame_id,label,setting,pc1,pc2\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << manifest << ',' << r.subject_id << ',' << r.frame_id << ',' << r.label << ',' << r.setting << ',' << r.pc1 << ',' << r.pc2 << '\n';
  }
}

}  // namespace pft
