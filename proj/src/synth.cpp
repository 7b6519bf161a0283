#include "patchfuse/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

namespace patchfuse {

namespace {

int sample_side(std::mt19937_64& rng, int image_side, int cap_side) {
  const int lo = std::max(3, image_side / 8);
  // Rectangles are capped by the image's smaller dimension so an instance
  // stays comparable to one prediction window, matching the regime the
  // windowed predictions are designed for.
  const int hi = std::max(lo, std::min(image_side, (cap_side * 2) / 5));
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<SceneRect> sample_rects(std::mt19937_64& rng,
                                    const PixelGrid& grid, int k) {
  std::vector<SceneRect> rects(k);
  const int cap = std::min(grid.width, grid.height);
  for (SceneRect& r : rects) {
    r.width = sample_side(rng, grid.width, cap);
    r.height = sample_side(rng, grid.height, cap);
    r.x0 = std::uniform_int_distribution<int>(0, grid.width - r.width)(rng);
    r.y0 = std::uniform_int_distribution<int>(0, grid.height - r.height)(rng);
  }
  // Larger area = nearer = smaller depth rank; ties keep sampling order.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const std::int64_t aa =
        static_cast<std::int64_t>(rects[a].width) * rects[a].height;
    const std::int64_t ab =
        static_cast<std::int64_t>(rects[b].width) * rects[b].height;
    return aa > ab;
  });
  std::vector<SceneRect> by_rank(k);
  for (int r = 0; r < k; ++r) {
    by_rank[r] = rects[order[r]];
    by_rank[r].depth_rank = r + 1;
  }
  return by_rank;
}

GlobalLabelMap rasterize(const PixelGrid& grid,
                         const std::vector<SceneRect>& rects) {
  GlobalLabelMap gt;
  gt.grid = grid;
  gt.labels.assign(grid.size(), kBackgroundLabel);
  // Deepest first so nearer rectangles overwrite shared pixels.
  for (auto it = rects.rbegin(); it != rects.rend(); ++it) {
    for (int row = it->y0; row < it->y0 + it->height; ++row)
      for (int col = it->x0; col < it->x0 + it->width; ++col)
        gt.labels[grid.index(col, row)] =
            static_cast<std::uint8_t>(it->depth_rank);
  }
  return gt;
}

bool all_visible(const GlobalLabelMap& gt, int k) {
  std::vector<std::uint8_t> seen(k + 1, 0);
  for (std::uint8_t lab : gt.labels) seen[lab] = 1;
  for (int r = 1; r <= k; ++r)
    if (!seen[r]) return false;
  return true;
}

}  // namespace

SyntheticScene generate_scene(const PixelGrid& grid, int k, double noise,
                              std::uint64_t seed) {
  if (!grid.valid()) throw ValidationError("generate_scene: bad grid");
  if (k < 0 || k > kGlobalLabels - 1)
    throw ValidationError("generate_scene: instance count must be in [0, 9]");
  if (noise < 0 || noise >= 1)
    throw ValidationError("generate_scene: noise must be in [0, 1)");

  SyntheticScene scene;
  scene.grid = grid;
  scene.seed = seed;
  scene.noise = noise;

  std::mt19937_64 rng(seed);
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<SceneRect> rects = sample_rects(rng, grid, k);
    GlobalLabelMap gt = rasterize(grid, rects);
    if (!all_visible(gt, k)) continue;
    scene.rects = std::move(rects);
    scene.gt = std::move(gt);
    return scene;
  }
  throw ValidationError(
      "generate_scene: could not place all rectangles with a visible pixel");
}

std::vector<SoftmaxPatch> render_patches(
    const SyntheticScene& scene, const std::vector<WindowRect>& windows) {
  std::vector<SoftmaxPatch> patches;
  patches.reserve(windows.size());
  const double eps = scene.noise;
  // Entries at float32 precision so writing the bundle to disk is lossless.
  const double off = static_cast<double>(static_cast<float>(eps / 6.0));
  const double hit =
      static_cast<double>(static_cast<float>(1.0 - eps + eps / 6.0));

  for (std::size_t w = 0; w < windows.size(); ++w) {
    const WindowRect& win = windows[w];
    SoftmaxPatch patch;
    char id[64];
    std::snprintf(id, sizeof id, "p%03zu_%s_x%d_y%d", w,
                  to_string(win.size_class), win.x0, win.y0);
    patch.id = id;
    patch.x0 = win.x0;
    patch.y0 = win.y0;
    patch.width = win.width;
    patch.height = win.height;
    patch.size_class = win.size_class;
    patch.probs.assign(patch.pixel_count() * kLocalLabels, 0.0);

    // Instances visible inside this window, nearest first.  The global gt
    // id is the depth rank, so ascending id = ascending depth.
    std::vector<std::uint8_t> present(kGlobalLabels, 0);
    for (int row = win.y0; row < win.y0 + win.height; ++row)
      for (int col = win.x0; col < win.x0 + win.width; ++col)
        present[scene.gt.labels[scene.grid.index(col, row)]] = 1;
    std::vector<int> local_id(kGlobalLabels, 0);
    int next_local = 1;
    for (int g = 1; g < kGlobalLabels; ++g) {
      if (!present[g]) continue;
      local_id[g] = next_local < kLocalLabels ? next_local : 0;
      ++next_local;
    }

    double* dst = patch.probs.data();
    for (int row = win.y0; row < win.y0 + win.height; ++row) {
      for (int col = win.x0; col < win.x0 + win.width; ++col) {
        const int local =
            local_id[scene.gt.labels[scene.grid.index(col, row)]];
        for (int l = 0; l < kLocalLabels; ++l)
          dst[l] = l == local ? hit : off;
        dst += kLocalLabels;
      }
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

SynthOutput synth_scene(const PixelGrid& grid, int k, double noise,
                        std::uint64_t seed, const PatchGridSpec& spec) {
  SynthOutput out;
  out.scene = generate_scene(grid, k, noise, seed);
  out.patches = render_patches(out.scene, extract_patch_windows(grid, spec));
  return out;
}

}  // namespace patchfuse
