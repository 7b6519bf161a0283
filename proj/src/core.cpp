#include "patchfuse/core.hpp"

#include <cmath>

namespace patchfuse {

std::int64_t linear_index(const PixelGrid& grid, int col, int row) {
  if (!grid.valid())
    throw ValidationError("linear_index: grid has non-positive dimensions");
  if (!grid.contains(col, row))
    throw ValidationError("linear_index: pixel (" + std::to_string(col) +
                          ", " + std::to_string(row) + ") outside " +
                          std::to_string(grid.width) + "x" +
                          std::to_string(grid.height) + " grid");
  return grid.index(col, row);
}

const char* to_string(SizeClass c) {
  switch (c) {
    case SizeClass::Large: return "large";
    case SizeClass::Medium: return "medium";
    case SizeClass::Small: return "small";
  }
  return "small";
}

SizeClass parse_size_class(const std::string& s) {
  if (s == "large") return SizeClass::Large;
  if (s == "medium") return SizeClass::Medium;
  if (s == "small") return SizeClass::Small;
  throw ValidationError("unknown size class '" + s + "'");
}

InferenceConfig default_config() { return InferenceConfig{}; }

void validate_config(const InferenceConfig& config) {
  if (config.w_smo < 0 || config.w_cnn_large < 0 || config.w_cnn_medium < 0 ||
      config.w_cnn_small < 0 || config.w_icc < 0)
    throw ValidationError("config: potential weights must be non-negative");
  if (!(config.theta1 > 0) || !(config.theta2 > 0) || !(config.theta_cnn > 0))
    throw ValidationError("config: kernel bandwidths must be positive");
  if (config.t_max < 0 || config.t_max >= kLocalLabels)
    throw ValidationError("config: t_max must be in [0, " +
                          std::to_string(kLocalLabels - 1) + "]");
  if (config.iterations < 0)
    throw ValidationError("config: iterations must be non-negative");
  if (!(config.fg_threshold > 0) || !(config.fg_threshold < 1))
    throw ValidationError("config: fg_threshold must be in (0, 1)");
  if (config.connectivity != 4 && config.connectivity != 8)
    throw ValidationError("config: connectivity must be 4 or 8");
  if (config.min_region_area < 0)
    throw ValidationError("config: min_region_area must be non-negative");
}

SoftmaxPatch validate_patch(SoftmaxPatch patch, const PixelGrid& grid) {
  if (!grid.valid())
    throw ValidationError("validate_patch: grid has non-positive dimensions");
  if (patch.width <= 0 || patch.height <= 0)
    throw ValidationError("patch '" + patch.id +
                          "': non-positive window dimensions");
  if (patch.x0 < 0 || patch.y0 < 0 ||
      patch.x0 + patch.width > grid.width ||
      patch.y0 + patch.height > grid.height)
    throw ValidationError("patch '" + patch.id + "': window [" +
                          std::to_string(patch.x0) + ", " +
                          std::to_string(patch.y0) + ", " +
                          std::to_string(patch.width) + "x" +
                          std::to_string(patch.height) +
                          "] does not fit the image grid");
  const std::int64_t expected = patch.pixel_count() * kLocalLabels;
  if (static_cast<std::int64_t>(patch.probs.size()) != expected)
    throw ValidationError("patch '" + patch.id + "': expected " +
                          std::to_string(expected) + " probabilities, got " +
                          std::to_string(patch.probs.size()));

  for (std::int64_t k = 0; k < patch.pixel_count(); ++k) {
    double* row = patch.probs.data() + k * kLocalLabels;
    double sum = 0.0;
    for (int l = 0; l < kLocalLabels; ++l) {
      if (!std::isfinite(row[l]) || row[l] < 0)
        throw ValidationError("patch '" + patch.id + "': pixel " +
                              std::to_string(k) +
                              " has a negative or non-finite probability");
      sum += row[l];
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance)
      throw ValidationError("patch '" + patch.id + "': pixel " +
                            std::to_string(k) + " probabilities sum to " +
                            std::to_string(sum));
    for (int l = 0; l < kLocalLabels; ++l) row[l] /= sum;
  }
  return patch;
}

BeliefField uniform_beliefs(const PixelGrid& grid) {
  if (!grid.valid())
    throw ValidationError("uniform_beliefs: grid has non-positive dimensions");
  BeliefField field;
  field.grid = grid;
  field.q.assign(grid.size() * kGlobalLabels, 1.0 / kGlobalLabels);
  return field;
}

}  // namespace patchfuse
