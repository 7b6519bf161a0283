#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "patchfuse/core.hpp"
#include "patchfuse/synth.hpp"

using namespace patchfuse;

namespace {

// Seven non-overlapping 2x2 rectangles in one row, depth ranks 1..7.
SyntheticScene seven_rect_scene() {
  SyntheticScene scene;
  scene.grid = {16, 4};
  scene.gt.grid = scene.grid;
  scene.gt.labels.assign(scene.grid.size(), 0);
  for (int r = 1; r <= 7; ++r) {
    SceneRect rect;
    rect.x0 = 2 * (r - 1);
    rect.y0 = 0;
    rect.width = 2;
    rect.height = 2;
    rect.depth_rank = r;
    scene.rects.push_back(rect);
    for (int y = 0; y < 2; ++y)
      for (int x = rect.x0; x < rect.x0 + 2; ++x)
        scene.gt.labels[scene.grid.index(x, y)] =
            static_cast<std::uint8_t>(r);
  }
  return scene;
}

int spike_index(const SoftmaxPatch& p, std::int64_t k) {
  int best = 0;
  for (int l = 1; l < kLocalLabels; ++l)
    if (p.probs[k * kLocalLabels + l] > p.probs[k * kLocalLabels + best])
      best = l;
  return best;
}

}  // namespace

TEST_CASE("scene generation is deterministic") {
  const PixelGrid grid{96, 64};
  const SyntheticScene a = generate_scene(grid, 4, 0.2, 42);
  const SyntheticScene b = generate_scene(grid, 4, 0.2, 42);
  REQUIRE(a.rects.size() == b.rects.size());
  for (std::size_t i = 0; i < a.rects.size(); ++i) {
    CHECK(a.rects[i].x0 == b.rects[i].x0);
    CHECK(a.rects[i].y0 == b.rects[i].y0);
    CHECK(a.rects[i].width == b.rects[i].width);
    CHECK(a.rects[i].height == b.rects[i].height);
    CHECK(a.rects[i].depth_rank == b.rects[i].depth_rank);
  }
  CHECK(a.gt.labels == b.gt.labels);

  const SyntheticScene c = generate_scene(grid, 4, 0.2, 43);
  CHECK(a.gt.labels != c.gt.labels);
}

TEST_CASE("rendering is deterministic") {
  const PixelGrid grid{64, 32};
  PatchGridSpec spec;
  spec.sizes = {{16, 32, SizeClass::Small}};
  spec.stride_fraction = 0.5;
  const SynthOutput a = synth_scene(grid, 3, 0.15, 7, spec);
  const SynthOutput b = synth_scene(grid, 3, 0.15, 7, spec);
  REQUIRE(a.patches.size() == b.patches.size());
  for (std::size_t i = 0; i < a.patches.size(); ++i)
    CHECK(a.patches[i].probs == b.patches[i].probs);
}

TEST_CASE("an empty scene renders pure background") {
  const PixelGrid grid{24, 24};
  const SyntheticScene scene = generate_scene(grid, 0, 0.0, 5);
  CHECK(scene.rects.empty());
  for (std::uint8_t l : scene.gt.labels) CHECK(l == 0);

  const std::vector<WindowRect> windows = {{0, 0, 24, 24, SizeClass::Small}};
  const std::vector<SoftmaxPatch> patches = render_patches(scene, windows);
  REQUIRE(patches.size() == 1u);
  for (std::int64_t k = 0; k < patches[0].pixel_count(); ++k) {
    CHECK(patches[0].probs[k * kLocalLabels + 0] == 1.0);
    for (int l = 1; l < kLocalLabels; ++l)
      CHECK(patches[0].probs[k * kLocalLabels + l] == 0.0);
  }
}

TEST_CASE("a single instance renders as a one-hot rectangle") {
  const PixelGrid grid{32, 24};
  const SyntheticScene scene = generate_scene(grid, 1, 0.0, 9);
  REQUIRE(scene.rects.size() == 1u);
  const SceneRect& r = scene.rects[0];

  std::int64_t inside = 0;
  for (std::uint8_t l : scene.gt.labels)
    if (l == 1) ++inside;
  CHECK(inside == static_cast<std::int64_t>(r.width) * r.height);

  const std::vector<WindowRect> windows = {{0, 0, 32, 24, SizeClass::Small}};
  const std::vector<SoftmaxPatch> patches = render_patches(scene, windows);
  REQUIRE(patches.size() == 1u);
  const SoftmaxPatch& p = patches[0];
  for (std::int64_t k = 0; k < p.pixel_count(); ++k) {
    const int col = p.global_col(k), row = p.global_row(k);
    const bool in_rect = col >= r.x0 && col < r.x0 + r.width && row >= r.y0 &&
                         row < r.y0 + r.height;
    CHECK(p.probs[k * kLocalLabels + (in_rect ? 1 : 0)] == 1.0);
  }
}

TEST_CASE("local ids rank the visible instances nearest first") {
  const SyntheticScene scene = seven_rect_scene();
  const std::vector<WindowRect> windows = {{0, 0, 16, 4, SizeClass::Small}};
  const std::vector<SoftmaxPatch> patches = render_patches(scene, windows);
  REQUIRE(patches.size() == 1u);
  const SoftmaxPatch& p = patches[0];

  for (std::int64_t k = 0; k < p.pixel_count(); ++k) {
    const int gt = scene.gt.labels[scene.grid.index(p.global_col(k),
                                                    p.global_row(k))];
    const int want = gt >= 1 && gt <= 5 ? gt : 0;
    CHECK(spike_index(p, k) == want);
    CHECK(p.probs[k * kLocalLabels + spike_index(p, k)] == 1.0);
  }
}

TEST_CASE("local ids are assigned per window") {
  const SyntheticScene scene = seven_rect_scene();
  const std::vector<WindowRect> windows = {{4, 0, 12, 4, SizeClass::Small}};
  const std::vector<SoftmaxPatch> patches = render_patches(scene, windows);
  REQUIRE(patches.size() == 1u);
  const SoftmaxPatch& p = patches[0];

  for (std::int64_t k = 0; k < p.pixel_count(); ++k) {
    const int gt = scene.gt.labels[scene.grid.index(p.global_col(k),
                                                    p.global_row(k))];
    const int want = gt == 0 ? 0 : gt - 2;
    CHECK(spike_index(p, k) == want);
  }
}

TEST_CASE("every generated instance keeps visible pixels") {
  const PixelGrid grid{64, 48};
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const SyntheticScene scene = generate_scene(grid, 5, 0.2, seed);
    REQUIRE(scene.rects.size() == 5u);
    std::set<int> seen;
    for (std::uint8_t l : scene.gt.labels) {
      CHECK(l <= 5);
      if (l > 0) seen.insert(l);
    }
    CHECK(seen == std::set<int>{1, 2, 3, 4, 5});
    for (std::size_t i = 1; i < scene.rects.size(); ++i)
      CHECK(scene.rects[i - 1].depth_rank < scene.rects[i].depth_rank);
  }
}

TEST_CASE("generation rejects bad parameters") {
  const PixelGrid grid{32, 32};
  CHECK_THROWS_AS(generate_scene(grid, 10, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(generate_scene(grid, -1, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(generate_scene(grid, 2, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(generate_scene(grid, 2, -0.1, 1), ValidationError);
  CHECK_THROWS_AS(generate_scene({0, 32}, 2, 0.0, 1), ValidationError);
}

TEST_CASE("noise spreads mass at float precision") {
  const double eps = 0.25;
  const double off = static_cast<double>(static_cast<float>(eps / 6.0));
  const double hit =
      static_cast<double>(static_cast<float>(1.0 - eps + eps / 6.0));

  const PixelGrid grid{16, 16};
  const SyntheticScene scene = generate_scene(grid, 2, eps, 31);
  const std::vector<WindowRect> windows = {{0, 0, 16, 16, SizeClass::Small}};
  const std::vector<SoftmaxPatch> patches = render_patches(scene, windows);
  REQUIRE(patches.size() == 1u);
  const SoftmaxPatch& p = patches[0];

  for (std::int64_t k = 0; k < p.pixel_count(); ++k) {
    int hits = 0;
    double sum = 0.0;
    for (int l = 0; l < kLocalLabels; ++l) {
      const double v = p.probs[k * kLocalLabels + l];
      sum += v;
      if (v == hit)
        ++hits;
      else
        CHECK(v == off);
    }
    CHECK(hits == 1);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}
