#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "patchfuse/components.hpp"
#include "patchfuse/core.hpp"
#include "patchfuse/oracle.hpp"

using namespace patchfuse;

namespace {

SoftmaxPatch pixel_patch(int x0, int y0, int local_label) {
  SoftmaxPatch p;
  p.id = "px";
  p.x0 = x0;
  p.y0 = y0;
  p.width = 1;
  p.height = 1;
  p.probs.assign(kLocalLabels, 0.0);
  p.probs[local_label] = 1.0;
  return p;
}

std::vector<std::uint8_t> mask_from_string(const PixelGrid& grid,
                                           const char* rows) {
  std::vector<std::uint8_t> mask(grid.size(), 0);
  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c)
      mask[grid.index(c, r)] = rows[r * grid.width + c] == '1' ? 1 : 0;
  return mask;
}

BeliefField one_hot_field(const PixelGrid& grid,
                          const std::vector<int>& labels) {
  BeliefField q;
  q.grid = grid;
  q.q.assign(grid.size() * kGlobalLabels, 0.0);
  for (std::int64_t i = 0; i < grid.size(); ++i)
    q.q[i * kGlobalLabels + labels[i]] = 1.0;
  return q;
}

}  // namespace

TEST_CASE("foreground probability from patch consensus") {
  const PixelGrid grid{3, 1};
  std::vector<SoftmaxPatch> patches;
  patches.push_back(pixel_patch(0, 0, 0));
  patches.push_back(pixel_patch(1, 0, 1));
  patches.push_back(pixel_patch(1, 0, 0));
  const ForegroundMap fg = foreground_probability(patches, grid);

  CHECK(fg.prob[0] == 0.0);
  CHECK(fg.covered[0] == 1);
  CHECK(fg.prob[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fg.covered[1] == 1);
  CHECK(fg.prob[2] == 0.0);
  CHECK(fg.covered[2] == 0);
}

TEST_CASE("agreeing foreground patches give probability one") {
  const PixelGrid grid{1, 1};
  std::vector<SoftmaxPatch> patches;
  patches.push_back(pixel_patch(0, 0, 1));
  patches.push_back(pixel_patch(0, 0, 1));
  const ForegroundMap fg = foreground_probability(patches, grid);
  CHECK(fg.prob[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("threshold compares with greater-or-equal") {
  ForegroundMap fg;
  fg.grid = {3, 1};
  fg.prob = {0.6, 0.5, 0.49};
  fg.covered = {1, 1, 1};
  const std::vector<std::uint8_t> mask = threshold_mask(fg, 0.5);
  CHECK(mask[0] == 1);
  CHECK(mask[1] == 1);
  CHECK(mask[2] == 0);
}

TEST_CASE("threshold rejects degenerate cutoffs") {
  ForegroundMap fg;
  fg.grid = {1, 1};
  fg.prob = {0.5};
  fg.covered = {1};
  CHECK_THROWS_AS(threshold_mask(fg, 0.0), ValidationError);
  CHECK_THROWS_AS(threshold_mask(fg, 1.0), ValidationError);
  CHECK_THROWS_AS(threshold_mask(fg, -0.2), ValidationError);
  CHECK_THROWS_AS(threshold_mask(fg, 1.5), ValidationError);
}

TEST_CASE("connected components on two separated rectangles") {
  const PixelGrid grid{4, 4};
  const std::vector<std::uint8_t> mask = mask_from_string(grid,
                                                          "1100"
                                                          "1100"
                                                          "0000"
                                                          "0001");
  const ComponentSet comps = connected_components(mask, grid, 4);
  REQUIRE(comps.count == 2);
  CHECK(comps.membership[grid.index(0, 0)] == 0);
  CHECK(comps.membership[grid.index(1, 1)] == 0);
  CHECK(comps.membership[grid.index(3, 3)] == 1);
  CHECK(comps.membership[grid.index(2, 2)] == kNoComponent);
  REQUIRE(comps.sizes.size() == 2u);
  CHECK(comps.sizes[0] == 4);
  CHECK(comps.sizes[1] == 1);
}

TEST_CASE("diagonal touch depends on connectivity") {
  const PixelGrid grid{2, 2};
  const std::vector<std::uint8_t> mask = mask_from_string(grid,
                                                          "10"
                                                          "01");
  CHECK(connected_components(mask, grid, 4).count == 2);
  CHECK(connected_components(mask, grid, 8).count == 1);
}

TEST_CASE("component ids follow raster order of first pixels") {
  const PixelGrid grid{5, 2};
  const std::vector<std::uint8_t> mask = mask_from_string(grid,
                                                          "01010"
                                                          "01010");
  const ComponentSet comps = connected_components(mask, grid, 4);
  REQUIRE(comps.count == 2);
  CHECK(comps.membership[grid.index(1, 0)] == 0);
  CHECK(comps.membership[grid.index(3, 0)] == 1);
  CHECK(comps.sizes[0] == 2);
  CHECK(comps.sizes[1] == 2);
}

TEST_CASE("connected components validate their inputs") {
  const PixelGrid grid{2, 2};
  const std::vector<std::uint8_t> mask(4, 1);
  CHECK_THROWS_AS(connected_components(mask, grid, 5), ValidationError);
  const std::vector<std::uint8_t> short_mask(3, 1);
  CHECK_THROWS_AS(connected_components(short_mask, grid, 4), ValidationError);
}

TEST_CASE("component aggregates average the marginals") {
  const PixelGrid grid{2, 1};
  const BeliefField q = one_hot_field(grid, {3, 5});
  ComponentSet comps;
  comps.count = 1;
  comps.membership = {0, 0};
  comps.sizes = {2};
  const std::vector<double> agg = component_aggregates(q, comps);
  REQUIRE(agg.size() == static_cast<std::size_t>(kGlobalLabels));
  CHECK(agg[3] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(agg[5] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(agg[0] == 0.0);
}

TEST_CASE("aggregates of a uniform field are uniform") {
  const PixelGrid grid{3, 1};
  const BeliefField q = uniform_beliefs(grid);
  ComponentSet comps;
  comps.count = 2;
  comps.membership = {0, kNoComponent, 1};
  comps.sizes = {1, 1};
  const std::vector<double> agg = component_aggregates(q, comps);
  REQUIRE(agg.size() == 2u * kGlobalLabels);
  for (double v : agg) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("no components means no aggregates") {
  const PixelGrid grid{2, 1};
  const BeliefField q = uniform_beliefs(grid);
  ComponentSet comps;
  comps.count = 0;
  comps.membership = {kNoComponent, kNoComponent};
  const std::vector<double> agg = component_aggregates(q, comps);
  CHECK(agg.empty());
}

TEST_CASE("cross-component messages sum the other aggregates") {
  const PixelGrid grid{5, 1};
  const BeliefField q = one_hot_field(grid, {1, 0, 2, 0, 3});
  ComponentSet comps;
  comps.count = 3;
  comps.membership = {0, kNoComponent, 1, kNoComponent, 2};
  comps.sizes = {1, 1, 1};
  const std::vector<double> agg = component_aggregates(q, comps);
  const double w = 0.75;
  const std::vector<double> msg = icc_messages(agg, comps, w);
  REQUIRE(msg.size() == 5u * kGlobalLabels);

  CHECK(msg[0 * kGlobalLabels + 2] == doctest::Approx(w).epsilon(1e-12));
  CHECK(msg[0 * kGlobalLabels + 3] == doctest::Approx(w).epsilon(1e-12));
  CHECK(msg[0 * kGlobalLabels + 1] == 0.0);
  CHECK(msg[2 * kGlobalLabels + 1] == doctest::Approx(w).epsilon(1e-12));
  CHECK(msg[2 * kGlobalLabels + 3] == doctest::Approx(w).epsilon(1e-12));
  CHECK(msg[4 * kGlobalLabels + 1] == doctest::Approx(w).epsilon(1e-12));
  CHECK(msg[4 * kGlobalLabels + 2] == doctest::Approx(w).epsilon(1e-12));
  for (int l = 0; l < kGlobalLabels; ++l) {
    CHECK(msg[1 * kGlobalLabels + l] == 0.0);
    CHECK(msg[3 * kGlobalLabels + l] == 0.0);
  }
}

TEST_CASE("a single component sends no messages") {
  const PixelGrid grid{2, 1};
  const BeliefField q = one_hot_field(grid, {4, 4});
  ComponentSet comps;
  comps.count = 1;
  comps.membership = {0, 0};
  comps.sizes = {2};
  const std::vector<double> msg =
      icc_messages(component_aggregates(q, comps), comps, 1.0);
  for (double v : msg) CHECK(v == 0.0);
}

TEST_CASE("zero weight silences the messages") {
  const PixelGrid grid{2, 1};
  const BeliefField q = one_hot_field(grid, {4, 5});
  ComponentSet comps;
  comps.count = 2;
  comps.membership = {0, 1};
  comps.sizes = {1, 1};
  const std::vector<double> msg =
      icc_messages(component_aggregates(q, comps), comps, 0.0);
  for (double v : msg) CHECK(v == 0.0);
}

TEST_CASE("uniform marginals load every label equally") {
  const PixelGrid grid{2, 1};
  const BeliefField q = uniform_beliefs(grid);
  ComponentSet comps;
  comps.count = 2;
  comps.membership = {0, 1};
  comps.sizes = {1, 1};
  const std::vector<double> msg =
      icc_messages(component_aggregates(q, comps), comps, 2.0);
  for (double v : msg) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("background exclusion zeroes the background entry") {
  const PixelGrid grid{2, 1};
  const BeliefField q = one_hot_field(grid, {0, 0});
  ComponentSet comps;
  comps.count = 2;
  comps.membership = {0, 1};
  comps.sizes = {1, 1};
  const std::vector<double> agg = component_aggregates(q, comps);
  const std::vector<double> with = icc_messages(agg, comps, 1.0, false);
  const std::vector<double> without = icc_messages(agg, comps, 1.0, true);
  CHECK(with[kBackgroundLabel] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(without[kBackgroundLabel] == 0.0);
  for (int l = 1; l < kGlobalLabels; ++l)
    CHECK(with[l] == without[l]);
}

TEST_CASE("pixels of one component receive identical messages") {
  const PixelGrid grid{4, 1};
  const BeliefField q = one_hot_field(grid, {1, 1, 2, 2});
  ComponentSet comps;
  comps.count = 2;
  comps.membership = {0, 0, 1, 1};
  comps.sizes = {2, 2};
  const std::vector<double> msg =
      icc_messages(component_aggregates(q, comps), comps, 1.0);
  for (int l = 0; l < kGlobalLabels; ++l) {
    CHECK(msg[0 * kGlobalLabels + l] == msg[1 * kGlobalLabels + l]);
    CHECK(msg[2 * kGlobalLabels + l] == msg[3 * kGlobalLabels + l]);
  }
}

TEST_CASE("messages agree with the quadratic reference") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    std::uniform_int_distribution<int> side_d(8, 64);
    const PixelGrid grid{side_d(rng), side_d(rng)};
    std::uniform_int_distribution<int> count_d(2, 6);
    const int want = count_d(rng);

    std::vector<std::uint8_t> mask(grid.size(), 0);
    std::uniform_int_distribution<int> cx(0, grid.width - 1);
    std::uniform_int_distribution<int> cy(0, grid.height - 1);
    for (int r = 0; r < want; ++r) {
      const int x0 = cx(rng), y0 = cy(rng);
      const int w = std::min(grid.width - x0, 3);
      const int h = std::min(grid.height - y0, 3);
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) mask[grid.index(x, y)] = 1;
    }
    const ComponentSet comps = connected_components(mask, grid, 4);
    if (comps.count < 2) continue;

    BeliefField q;
    q.grid = grid;
    q.q.resize(grid.size() * kGlobalLabels);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::int64_t i = 0; i < grid.size(); ++i) {
      double sum = 0.0;
      for (int l = 0; l < kGlobalLabels; ++l) {
        q.q[i * kGlobalLabels + l] = u(rng);
        sum += q.q[i * kGlobalLabels + l];
      }
      for (int l = 0; l < kGlobalLabels; ++l) q.q[i * kGlobalLabels + l] /= sum;
    }

    const std::vector<double> fast =
        icc_messages(component_aggregates(q, comps), comps, 1.0);
    const std::vector<double> naive = oracle::naive_icc(q, comps, 1.0);
    REQUIRE(fast.size() == naive.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      const double scale = std::max({std::abs(fast[i]), std::abs(naive[i]), 1.0});
      CHECK(std::abs(fast[i] - naive[i]) / scale <= 1e-12);
    }
  }
}

TEST_CASE("messages are invariant to component relabeling") {
  const PixelGrid grid{6, 1};
  const BeliefField q = one_hot_field(grid, {1, 2, 3, 4, 5, 6});
  ComponentSet a;
  a.count = 3;
  a.membership = {0, 0, 1, 1, 2, 2};
  a.sizes = {2, 2, 2};
  ComponentSet b;
  b.count = 3;
  b.membership = {2, 2, 0, 0, 1, 1};
  b.sizes = {2, 2, 2};
  const std::vector<double> ma =
      icc_messages(component_aggregates(q, a), a, 1.0);
  const std::vector<double> mb =
      icc_messages(component_aggregates(q, b), b, 1.0);
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i)
    CHECK(ma[i] == doctest::Approx(mb[i]).epsilon(1e-12));
}
