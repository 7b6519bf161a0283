#include "patchfuse/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace patchfuse {

namespace {

std::int64_t mask_count(const PixelMask& m) {
  std::int64_t n = 0;
  for (std::uint8_t v : m) n += v != 0;
  return n;
}

std::int64_t intersection_count(const PixelMask& a, const PixelMask& b) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] && b[i]);
  return n;
}

double safe_div(double num, double den) { return den != 0 ? num / den : 0.0; }

}  // namespace

InstanceSet instances_from_labels(const GlobalLabelMap& labels) {
  InstanceSet set;
  set.grid = labels.grid;
  for (int l = 1; l < kGlobalLabels; ++l) {
    PixelMask mask(labels.labels.size(), 0);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
      if (labels.labels[i] == l) {
        mask[i] = 1;
        ++n;
      }
    if (n > 0) set.masks.push_back(std::move(mask));
  }
  return set;
}

double iou(const PixelMask& a, const PixelMask& b) {
  if (a.size() != b.size())
    throw ValidationError("iou: masks from different grids");
  const std::int64_t inter = intersection_count(a, b);
  const std::int64_t uni = mask_count(a) + mask_count(b) - inter;
  if (uni == 0) throw ValidationError("iou: both masks empty");
  return static_cast<double>(inter) / uni;
}

std::pair<double, double> coverage(const InstanceSet& gt,
                                   const InstanceSet& pred) {
  if (gt.masks.empty())
    throw ValidationError("coverage: no ground-truth instances");
  double mucov = 0, mwcov = 0;
  std::int64_t total_size = 0;
  for (const PixelMask& g : gt.masks) total_size += mask_count(g);
  for (const PixelMask& g : gt.masks) {
    double best = 0;
    for (const PixelMask& p : pred.masks) best = std::max(best, iou(g, p));
    mucov += best / gt.masks.size();
    mwcov += best * mask_count(g) / total_size;
  }
  return {mwcov, mucov};
}

std::pair<double, double> avg_pr_re(const PixelMask& gt_fg,
                                    const InstanceSet& pred,
                                    const InstanceSet& gt) {
  double pr = 0, re = 0;
  if (!pred.masks.empty()) {
    for (const PixelMask& p : pred.masks)
      pr += safe_div(intersection_count(p, gt_fg), mask_count(p));
    pr /= pred.masks.size();
  }
  if (!gt.masks.empty()) {
    PixelMask pred_fg(gt_fg.size(), 0);
    for (const PixelMask& p : pred.masks)
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i]) pred_fg[i] = 1;
    for (const PixelMask& g : gt.masks)
      re += safe_div(intersection_count(g, pred_fg), mask_count(g));
    re /= gt.masks.size();
  }
  return {pr, re};
}

std::pair<int, int> fp_fn_counts(const InstanceSet& gt,
                                 const InstanceSet& pred) {
  int fp = 0, fn = 0;
  for (const PixelMask& p : pred.masks) {
    bool overlaps = false;
    for (const PixelMask& g : gt.masks)
      if (intersection_count(p, g) > 0) {
        overlaps = true;
        break;
      }
    fp += !overlaps;
  }
  for (const PixelMask& g : gt.masks) {
    bool overlaps = false;
    for (const PixelMask& p : pred.masks)
      if (intersection_count(g, p) > 0) {
        overlaps = true;
        break;
      }
    fn += !overlaps;
  }
  return {fp, fn};
}

InstancePRF instance_prf(const InstanceSet& gt, const InstanceSet& pred) {
  struct Pair {
    double iou;
    int g, p;
  };
  std::vector<Pair> pairs;
  for (int g = 0; g < static_cast<int>(gt.masks.size()); ++g)
    for (int p = 0; p < static_cast<int>(pred.masks.size()); ++p) {
      const double v = iou(gt.masks[g], pred.masks[p]);
      if (v > 0.5) pairs.push_back({v, g, p});
    }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<char> g_used(gt.masks.size(), 0), p_used(pred.masks.size(), 0);
  int matches = 0;
  for (const Pair& pr : pairs) {
    if (g_used[pr.g] || p_used[pr.p]) continue;
    g_used[pr.g] = p_used[pr.p] = 1;
    ++matches;
  }
  InstancePRF out;
  out.matches = matches;
  out.pr = safe_div(matches, pred.masks.size());
  out.re = safe_div(matches, gt.masks.size());
  out.f1 = safe_div(2 * out.pr * out.re, out.pr + out.re);
  return out;
}

MetricsReport evaluate_dataset(
    const std::vector<std::pair<GlobalLabelMap, GlobalLabelMap>>& gt_pred) {
  if (gt_pred.empty()) throw ValidationError("evaluate_dataset: no images");

  MetricsReport r;
  int coverage_images = 0;
  std::int64_t fg_inter = 0, fg_union = 0;
  std::int64_t pooled_matches = 0, pooled_gt = 0, pooled_pred = 0;
  double pooled_pr = 0, pooled_re = 0;

  for (const auto& [gt_map, pred_map] : gt_pred) {
    if (gt_map.grid.width != pred_map.grid.width ||
        gt_map.grid.height != pred_map.grid.height)
      throw ValidationError("evaluate_dataset: image dimensions differ");
    const InstanceSet gt = instances_from_labels(gt_map);
    const InstanceSet pred = instances_from_labels(pred_map);

    if (!gt.masks.empty()) {
      const auto [mw, mu] = coverage(gt, pred);
      r.mwcov += mw;
      r.mucov += mu;
      ++coverage_images;
    }
    const auto [fp, fn] = fp_fn_counts(gt, pred);
    r.avg_fp += fp;
    r.avg_fn += fn;

    // Pool pixels for the foreground IoU and instances for pr/re.
    for (std::size_t i = 0; i < gt_map.labels.size(); ++i) {
      const bool g = gt_map.labels[i] != kBackgroundLabel;
      const bool p = pred_map.labels[i] != kBackgroundLabel;
      fg_inter += g && p;
      fg_union += g || p;
    }
    PixelMask gt_fg(gt_map.labels.size(), 0);
    for (std::size_t i = 0; i < gt_map.labels.size(); ++i)
      gt_fg[i] = gt_map.labels[i] != kBackgroundLabel;
    PixelMask pred_fg(pred_map.labels.size(), 0);
    for (std::size_t i = 0; i < pred_map.labels.size(); ++i)
      pred_fg[i] = pred_map.labels[i] != kBackgroundLabel;
    for (const PixelMask& p : pred.masks)
      pooled_pr += safe_div(intersection_count(p, gt_fg), mask_count(p));
    for (const PixelMask& g : gt.masks)
      pooled_re += safe_div(intersection_count(g, pred_fg), mask_count(g));

    pooled_matches += instance_prf(gt, pred).matches;
    pooled_gt += gt.masks.size();
    pooled_pred += pred.masks.size();
  }

  const int n = static_cast<int>(gt_pred.size());
  if (coverage_images > 0) {
    r.mwcov /= coverage_images;
    r.mucov /= coverage_images;
  }
  r.avg_fp /= n;
  r.avg_fn /= n;
  r.fiou = safe_div(fg_inter, fg_union);
  r.avg_pr = safe_div(pooled_pr, pooled_pred);
  r.avg_re = safe_div(pooled_re, pooled_gt);
  r.ins_pr = safe_div(pooled_matches, pooled_pred);
  r.ins_re = safe_div(pooled_matches, pooled_gt);
  r.ins_f1 = safe_div(2 * r.ins_pr * r.ins_re, r.ins_pr + r.ins_re);
  return r;
}

std::string format_report(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "fiou %.6f\n"
                "mwcov %.6f\n"
                "mucov %.6f\n"
                "avg_pr %.6f\n"
                "avg_re %.6f\n"
                "avg_fp %.6f\n"
                "avg_fn %.6f\n"
                "ins_pr %.6f\n"
                "ins_re %.6f\n"
                "ins_f1 %.6f\n",
                r.fiou, r.mwcov, r.mucov, r.avg_pr, r.avg_re, r.avg_fp,
                r.avg_fn, r.ins_pr, r.ins_re, r.ins_f1);
  return buf;
}

}  // namespace patchfuse
