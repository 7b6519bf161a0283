#include "patchfuse/components.hpp"

#include <cmath>

namespace patchfuse {

ForegroundMap foreground_probability(const std::vector<SoftmaxPatch>& patches,
                                     const PixelGrid& grid) {
  if (!grid.valid())
    throw ValidationError("foreground_probability: bad grid");
  ForegroundMap fg;
  fg.grid = grid;
  fg.prob.assign(grid.size(), 0.0);
  fg.covered.assign(grid.size(), 0);

  std::vector<double> sums(grid.size() * kLocalLabels, 0.0);
  for (const SoftmaxPatch& patch : patches) {
    for (std::int64_t k = 0; k < patch.pixel_count(); ++k) {
      const std::int64_t i =
          linear_index(grid, patch.global_col(k), patch.global_row(k));
      const double* p = patch.probs.data() + k * kLocalLabels;
      double* s = sums.data() + i * kLocalLabels;
      for (int l = 0; l < kLocalLabels; ++l) s[l] += p[l];
      fg.covered[i] = 1;
    }
  }
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    if (!fg.covered[i]) continue;
    const double* s = sums.data() + i * kLocalLabels;
    double total = 0;
    for (int l = 0; l < kLocalLabels; ++l) total += s[l];
    fg.prob[i] = total > 0 ? 1.0 - s[kBackgroundLabel] / total : 0.0;
  }
  return fg;
}

std::vector<std::uint8_t> threshold_mask(const ForegroundMap& fg, double tau) {
  if (!(tau > 0) || !(tau < 1))
    throw ValidationError("threshold_mask: tau must be in (0, 1)");
  std::vector<std::uint8_t> mask(fg.prob.size());
  for (std::size_t i = 0; i < fg.prob.size(); ++i)
    mask[i] = fg.prob[i] >= tau ? 1 : 0;
  return mask;
}

ComponentSet connected_components(const std::vector<std::uint8_t>& mask,
                                  const PixelGrid& grid, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw ValidationError("connected_components: connectivity must be 4 or 8");
  if (static_cast<std::int64_t>(mask.size()) != grid.size())
    throw ValidationError("connected_components: mask size mismatch");

  ComponentSet comps;
  comps.membership.assign(grid.size(), kNoComponent);

  static const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static const int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int n_dirs = connectivity == 4 ? 4 : 8;

  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < grid.size(); ++start) {
    if (!mask[start] || comps.membership[start] != kNoComponent) continue;
    const std::int32_t id = comps.count++;
    std::int64_t size = 0;
    stack.assign(1, start);
    comps.membership[start] = id;
    while (!stack.empty()) {
      const std::int64_t i = stack.back();
      stack.pop_back();
      ++size;
      const int col = static_cast<int>(i % grid.width);
      const int row = static_cast<int>(i / grid.width);
      for (int k = 0; k < n_dirs; ++k) {
        const int c = col + dx8[k];
        const int r = row + dy8[k];
        if (!grid.contains(c, r)) continue;
        const std::int64_t j = grid.index(c, r);
        if (!mask[j] || comps.membership[j] != kNoComponent) continue;
        comps.membership[j] = id;
        stack.push_back(j);
      }
    }
    comps.sizes.push_back(size);
  }
  return comps;
}

std::vector<double> component_aggregates(const BeliefField& q,
                                         const ComponentSet& comps) {
  if (static_cast<std::int64_t>(comps.membership.size()) != q.grid.size())
    throw ValidationError("component_aggregates: grid mismatch");
  std::vector<double> agg(static_cast<std::size_t>(comps.count) *
                              kGlobalLabels,
                          0.0);
  for (std::int64_t i = 0; i < q.grid.size(); ++i) {
    const std::int32_t m = comps.membership[i];
    if (m == kNoComponent) continue;
    const double* row = q.at(i);
    double* a = agg.data() + static_cast<std::size_t>(m) * kGlobalLabels;
    for (int l = 0; l < kGlobalLabels; ++l) a[l] += row[l];
  }
  for (int m = 0; m < comps.count; ++m) {
    double* a = agg.data() + static_cast<std::size_t>(m) * kGlobalLabels;
    for (int l = 0; l < kGlobalLabels; ++l) a[l] /= comps.sizes[m];
  }
  return agg;
}

std::vector<double> icc_messages(const std::vector<double>& aggregates,
                                 const ComponentSet& comps, double w_icc,
                                 bool exclude_background) {
  if (static_cast<int>(aggregates.size()) != comps.count * kGlobalLabels)
    throw ValidationError("icc_messages: aggregate shape mismatch");
  const std::int64_t n = comps.membership.size();
  std::vector<double> msg(n * kGlobalLabels, 0.0);
  if (comps.count < 2 || w_icc == 0.0) return msg;

  // Sum of the other components' aggregates, accumulated directly per
  // component; total-minus-own would reintroduce cancellation error.
  std::vector<double> cross(static_cast<std::size_t>(comps.count) *
                                kGlobalLabels,
                            0.0);
  for (int m = 0; m < comps.count; ++m) {
    double* c = cross.data() + static_cast<std::size_t>(m) * kGlobalLabels;
    for (int o = 0; o < comps.count; ++o) {
      if (o == m) continue;
      const double* a =
          aggregates.data() + static_cast<std::size_t>(o) * kGlobalLabels;
      for (int l = 0; l < kGlobalLabels; ++l) c[l] += a[l];
    }
    for (int l = 0; l < kGlobalLabels; ++l) c[l] *= w_icc;
    if (exclude_background) c[kBackgroundLabel] = 0.0;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t m = comps.membership[i];
    if (m == kNoComponent) continue;
    const double* c = cross.data() + static_cast<std::size_t>(m) * kGlobalLabels;
    double* out = msg.data() + i * kGlobalLabels;
    for (int l = 0; l < kGlobalLabels; ++l) out[l] = c[l];
  }
  return msg;
}

}  // namespace patchfuse
