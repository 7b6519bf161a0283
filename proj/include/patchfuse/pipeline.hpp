#pragma once

#include <vector>

#include "patchfuse/core.hpp"
#include "patchfuse/meanfield.hpp"

namespace patchfuse {

struct PatchSize {
  int height = 0;
  int width = 0;
  SizeClass size_class = SizeClass::Small;
};

struct PatchGridSpec {
  std::vector<PatchSize> sizes;
  double stride_fraction = 0.5;  // in (0, 1]
};

PatchGridSpec default_patch_grid_spec();

struct WindowRect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  SizeClass size_class = SizeClass::Small;
};

// Sliding windows at stride floor(stride_fraction * side) per axis, plus
// end-aligned rows/columns so the image edges are covered.  Sizes that do
// not fit the image are skipped; at least one size must fit.
std::vector<WindowRect> extract_patch_windows(const PixelGrid& grid,
                                              const PatchGridSpec& spec);

struct FusionResult {
  GlobalLabelMap labels;  // raw MAP decode, no post-processing
  BeliefField marginals;
};

// components -> mean-field run -> MAP decode.
FusionResult fuse(const std::vector<SoftmaxPatch>& patches,
                  const PixelGrid& grid, const InferenceConfig& config);

// (1) removes foreground regions smaller than min_region_area,
// (2) fills background holes enclosed by exactly one instance,
// (3) splits each label's connected components into separate instances,
// ids assigned in raster order.  Throws ValidationError when the split
// needs more than 9 instances.  Idempotent.
GlobalLabelMap post_process(const GlobalLabelMap& labels, int min_region_area,
                            int connectivity = 4);

}  // namespace patchfuse
