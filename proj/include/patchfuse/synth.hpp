#pragma once

#include <cstdint>
#include <vector>

#include "patchfuse/core.hpp"
#include "patchfuse/pipeline.hpp"

namespace patchfuse {

struct SceneRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
  int depth_rank = 0;  // 1 = nearest
};

// Axis-aligned rectangles with a strict depth order; nearer rectangles
// occlude deeper ones.  Every rectangle keeps at least one visible pixel.
struct SyntheticScene {
  PixelGrid grid;
  std::vector<SceneRect> rects;          // sorted by depth_rank
  GlobalLabelMap gt;                     // instance id = depth rank (1..K)
  std::uint64_t seed = 0;
  double noise = 0;
};

// Deterministic per seed.  K <= 9.  Depth rank follows rectangle area
// (larger = nearer).
SyntheticScene generate_scene(const PixelGrid& grid, int k, double noise,
                              std::uint64_t seed);

// Renders the per-window softmax patches: instances visible in a window are
// ranked by depth, get local ids 1.. up to 5 (deeper ones fold to
// background), and every pixel's softmax is (1-eps)*onehot + eps/6.
// Values are produced at float32 precision so a bundle round-trip through
// disk is exact.
std::vector<SoftmaxPatch> render_patches(const SyntheticScene& scene,
                                         const std::vector<WindowRect>& windows);

// generate_scene + extract_patch_windows + render_patches.
struct SynthOutput {
  SyntheticScene scene;
  std::vector<SoftmaxPatch> patches;
};
SynthOutput synth_scene(const PixelGrid& grid, int k, double noise,
                        std::uint64_t seed, const PatchGridSpec& spec);

}  // namespace patchfuse
