#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pft/numerics/tensor.hpp"

namespace pft {

/// Two leading principal axes of a row-major point cloud.
struct Projection {
  std::vector<double> mean;
  std::array<std::vector<double>, 2> axes;  // unit length, pc1 first
  std::array<double, 2> variance{};         // explained variance per axis, descending

  std::vector<std::array<double, 2>> apply(const Tensor& points) const;
};

/// Fits on the pooled rows of all given matrices. Each axis is signed so that
/// its largest-magnitude component is positive.
Projection fit_projection(std::span<const Tensor> pooled);

/// Distance between class centroids over the RMS distance of points to their
/// own centroid. With more than two classes the mean pairwise centroid
/// distance is used.
double separation_ratio(std::span<const std::array<double, 2>> points, std::span<const int> labels);

struct EmbeddingRow {
  int subject_id = 0;
  std::uint64_t frame_id = 0;
  int label = 0;
  std::string setting;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

/// manifest,subject_id,frame_id,label,setting,pc1,pc2
void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows, const std::string& manifest);

}  // namespace pft
