#pragma once

#include <cstddef>
#include <cstdint>

#include "pft/losses/losses.hpp"
#include "pft/numerics/optim.hpp"
#include "pft/pairing/pairing.hpp"

namespace pft {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t epochs_classifier = 30;
  std::size_t epochs_translator = 30;
  std::size_t epochs_adaptation = 20;
  std::size_t epochs_oracle = 20;
  LossWeights weights{};
  std::size_t feat_dim = 128;
  std::size_t hidden_dim = 512;          // extractor width
  std::size_t translator_hidden = 32;    // translator bottleneck width
  PairingConfig pairing{};
  PlateauOptions plateau{};
  // Align neutral channel statistics ahead of the translator layers: per
  // training pair during pretraining, target -> reference subject during
  // adaptation. Off reproduces the bare residual translator.
  bool subject_statistics = true;
  // Use one shared scale for the statistics alignment instead of one per channel.
  bool isotropic_alignment = true;
  // How adaptation picks the source subject a target is aligned onto. The
  // pairing strategy above only governs translator pretraining.
  PairingStrategy reference_strategy = PairingStrategy::cosine;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::size_t kFeatureDims[] = {64, 128, 256, 512};

}  // namespace pft
