#include "patchfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace patchfuse {

namespace {

constexpr int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};

std::vector<int> axis_offsets(int image, int side, double frac) {
  const int stride = std::max(1, static_cast<int>(std::floor(frac * side)));
  std::vector<int> offs;
  for (int o = 0; o + side <= image; o += stride) offs.push_back(o);
  const int last = image - side;
  if (offs.empty() || offs.back() != last) offs.push_back(last);
  return offs;
}

// Connected components of equal-label foreground pixels, ids in raster-scan
// order of each component's first pixel.
struct LabelComponents {
  int count = 0;
  std::vector<std::int32_t> membership;  // -1 outside foreground
  std::vector<std::int64_t> sizes;
  std::vector<std::uint8_t> label;  // per component
};

LabelComponents label_components(const GlobalLabelMap& map, int connectivity) {
  const PixelGrid& grid = map.grid;
  LabelComponents out;
  out.membership.assign(grid.size(), -1);
  std::vector<std::int64_t> stack;
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const std::int64_t seed = grid.index(col, row);
      const std::uint8_t lab = map.labels[seed];
      if (lab == kBackgroundLabel || out.membership[seed] >= 0) continue;
      const std::int32_t id = out.count++;
      out.sizes.push_back(0);
      out.label.push_back(lab);
      out.membership[seed] = id;
      stack.assign(1, seed);
      while (!stack.empty()) {
        const std::int64_t p = stack.back();
        stack.pop_back();
        ++out.sizes[id];
        const int pc = static_cast<int>(p % grid.width);
        const int pr = static_cast<int>(p / grid.width);
        for (int n = 0; n < connectivity; ++n) {
          const int nc = pc + dx8[n];
          const int nr = pr + dy8[n];
          if (!grid.contains(nc, nr)) continue;
          const std::int64_t q = grid.index(nc, nr);
          if (map.labels[q] != lab || out.membership[q] >= 0) continue;
          out.membership[q] = id;
          stack.push_back(q);
        }
      }
    }
  }
  return out;
}

void remove_small_regions(GlobalLabelMap& map, int min_region_area,
                          int connectivity) {
  const LabelComponents comps = label_components(map, connectivity);
  for (std::int64_t i = 0; i < map.grid.size(); ++i) {
    const std::int32_t id = comps.membership[i];
    if (id >= 0 && comps.sizes[id] < min_region_area)
      map.labels[i] = kBackgroundLabel;
  }
}

// Background components use the complementary connectivity so a ring of
// foreground pixels and the hole it encloses cannot both be connected
// through the same diagonal.
void fill_holes(GlobalLabelMap& map, int connectivity) {
  const PixelGrid& grid = map.grid;
  const int bg_conn = connectivity == 4 ? 8 : 4;
  std::vector<std::int32_t> bg_id(grid.size(), -1);
  std::vector<std::int64_t> stack;
  std::int32_t n_bg = 0;
  std::vector<std::uint8_t> touches_border;
  std::vector<int> owner;  // -1 none yet, -2 multiple

  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const std::int64_t seed = grid.index(col, row);
      if (map.labels[seed] != kBackgroundLabel || bg_id[seed] >= 0) continue;
      const std::int32_t id = n_bg++;
      touches_border.push_back(0);
      owner.push_back(-1);
      bg_id[seed] = id;
      stack.assign(1, seed);
      while (!stack.empty()) {
        const std::int64_t p = stack.back();
        stack.pop_back();
        const int pc = static_cast<int>(p % grid.width);
        const int pr = static_cast<int>(p / grid.width);
        if (pc == 0 || pr == 0 || pc == grid.width - 1 ||
            pr == grid.height - 1)
          touches_border[id] = 1;
        for (int n = 0; n < 8; ++n) {
          const int nc = pc + dx8[n];
          const int nr = pr + dy8[n];
          if (!grid.contains(nc, nr)) continue;
          const std::int64_t q = grid.index(nc, nr);
          const std::uint8_t lab = map.labels[q];
          if (lab != kBackgroundLabel) {
            if (owner[id] == -1) owner[id] = lab;
            else if (owner[id] != lab) owner[id] = -2;
            continue;
          }
          if (n >= bg_conn || bg_id[q] >= 0) continue;
          bg_id[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const std::int32_t id = bg_id[i];
    if (id >= 0 && !touches_border[id] && owner[id] > 0)
      map.labels[i] = static_cast<std::uint8_t>(owner[id]);
  }
}

void split_instances(GlobalLabelMap& map, int connectivity) {
  const LabelComponents comps = label_components(map, connectivity);
  if (comps.count > kGlobalLabels - 1)
    throw ValidationError("post_process: splitting needs " +
                          std::to_string(comps.count) +
                          " instance ids, only 9 are available");
  for (std::int64_t i = 0; i < map.grid.size(); ++i) {
    const std::int32_t id = comps.membership[i];
    if (id >= 0) map.labels[i] = static_cast<std::uint8_t>(id + 1);
  }
}

}  // namespace

PatchGridSpec default_patch_grid_spec() {
  PatchGridSpec spec;
  spec.sizes = {{270, 432, SizeClass::Large},
                {180, 288, SizeClass::Medium},
                {120, 192, SizeClass::Small}};
  spec.stride_fraction = 0.5;
  return spec;
}

std::vector<WindowRect> extract_patch_windows(const PixelGrid& grid,
                                              const PatchGridSpec& spec) {
  if (!grid.valid()) throw ValidationError("extract_patch_windows: bad grid");
  if (spec.sizes.empty())
    throw ValidationError("extract_patch_windows: no patch sizes");
  if (!(spec.stride_fraction > 0.0) || spec.stride_fraction > 1.0)
    throw ValidationError("extract_patch_windows: stride_fraction must be in (0,1]");

  std::vector<WindowRect> windows;
  for (const PatchSize& size : spec.sizes) {
    if (size.height <= 0 || size.width <= 0)
      throw ValidationError("extract_patch_windows: non-positive patch size");
    if (size.height > grid.height || size.width > grid.width) continue;
    const std::vector<int> ys =
        axis_offsets(grid.height, size.height, spec.stride_fraction);
    const std::vector<int> xs =
        axis_offsets(grid.width, size.width, spec.stride_fraction);
    for (int y : ys)
      for (int x : xs)
        windows.push_back({x, y, size.width, size.height, size.size_class});
  }
  if (windows.empty())
    throw ValidationError("extract_patch_windows: no patch size fits a " +
                          std::to_string(grid.width) + "x" +
                          std::to_string(grid.height) + " image");
  return windows;
}

FusionResult fuse(const std::vector<SoftmaxPatch>& patches,
                  const PixelGrid& grid, const InferenceConfig& config) {
  MeanFieldEngine engine(patches, grid, config);
  engine.run();
  FusionResult result;
  result.marginals = engine.q();
  result.labels = map_labels(result.marginals);
  return result;
}

GlobalLabelMap post_process(const GlobalLabelMap& labels, int min_region_area,
                            int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw ValidationError("post_process: connectivity must be 4 or 8");
  if (min_region_area < 0)
    throw ValidationError("post_process: negative min_region_area");
  if (static_cast<std::int64_t>(labels.labels.size()) != labels.grid.size())
    throw ValidationError("post_process: label map shape mismatch");

  GlobalLabelMap out = labels;
  remove_small_regions(out, min_region_area, connectivity);
  fill_holes(out, connectivity);
  split_instances(out, connectivity);
  return out;
}

}  // namespace patchfuse
