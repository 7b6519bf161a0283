#pragma once

#include <cstdint>
#include <vector>

#include "patchfuse/core.hpp"

namespace patchfuse {

struct ForegroundMap {
  PixelGrid grid;
  std::vector<double> prob;          // grid.size(), in [0,1]; 0 when uncovered
  std::vector<std::uint8_t> covered; // inside at least one patch
};

inline constexpr std::int32_t kNoComponent = -1;

struct ComponentSet {
  int count = 0;
  std::vector<std::int32_t> membership;  // per pixel, kNoComponent or 0..count-1
  std::vector<std::int64_t> sizes;       // per component
};

// s_i = sum of local softmaxes over covering patches, renormalized;
// prob_i = 1 - s_i[background].  Uncovered pixels get prob 0.
ForegroundMap foreground_probability(const std::vector<SoftmaxPatch>& patches,
                                     const PixelGrid& grid);

// mask_i = (prob_i >= tau)
std::vector<std::uint8_t> threshold_mask(const ForegroundMap& fg, double tau);

// Standard connected-component labeling; ids in raster-scan order of each
// component's first pixel.  connectivity is 4 or 8.
ComponentSet connected_components(const std::vector<std::uint8_t>& mask,
                                  const PixelGrid& grid, int connectivity);

// A_n(l) = (1/|C_n|) * sum_{j in C_n} Q_j(l); count x kGlobalLabels.
std::vector<double> component_aggregates(const BeliefField& q,
                                         const ComponentSet& comps);

// For pixel i in C_m: msg_i(l) = w_icc * sum_{n != m} A_n(l); zero vector for
// pixels outside every component.  The cross-component sum is accumulated
// directly per component (not as total-minus-own) so it matches the naive
// double sum to full precision.
std::vector<double> icc_messages(const std::vector<double>& aggregates,
                                 const ComponentSet& comps, double w_icc,
                                 bool exclude_background = false);

}  // namespace patchfuse
