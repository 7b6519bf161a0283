#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchfuse/core.hpp"

namespace patchfuse {

using PixelMask = std::vector<std::uint8_t>;

// Non-background labels of a map, one mask per instance; masks disjoint and
// non-empty.
struct InstanceSet {
  PixelGrid grid;
  std::vector<PixelMask> masks;
};

InstanceSet instances_from_labels(const GlobalLabelMap& labels);

struct MetricsReport {
  double fiou = 0;
  double mwcov = 0;
  double mucov = 0;
  double avg_pr = 0;
  double avg_re = 0;
  double avg_fp = 0;
  double avg_fn = 0;
  double ins_pr = 0;
  double ins_re = 0;
  double ins_f1 = 0;
};

// |a∩b| / |a∪b|; throws when both masks are empty.
double iou(const PixelMask& a, const PixelMask& b);

// Per-image coverage: for each GT instance the best IoU over predictions;
// mucov is their mean, mwcov the size-weighted mean.  Throws on empty GT.
std::pair<double, double> coverage(const InstanceSet& gt,
                                   const InstanceSet& pred);

// avg_pr: mean over predicted instances of the fraction of their pixels on
// GT foreground; avg_re: mean over GT instances of the fraction of their
// pixels on predicted foreground.  Empty sets give 0.
std::pair<double, double> avg_pr_re(const PixelMask& gt_fg,
                                    const InstanceSet& pred,
                                    const InstanceSet& gt);

// fp: predictions sharing no pixel with any GT instance; fn: GT instances
// sharing no pixel with any prediction.
std::pair<int, int> fp_fn_counts(const InstanceSet& gt,
                                 const InstanceSet& pred);

// Matching at IoU > 0.5, greedy by descending IoU, one-to-one.
struct InstancePRF {
  double pr = 0, re = 0, f1 = 0;
  int matches = 0;
};
InstancePRF instance_prf(const InstanceSet& gt, const InstanceSet& pred);

// Dataset pooling: mwcov/mucov/avg_fp/avg_fn averaged per image (images
// without GT instances are skipped for the coverage averages), fiou over
// pooled pixels, precision/recall and the instance scores over pooled
// instances.
MetricsReport evaluate_dataset(
    const std::vector<std::pair<GlobalLabelMap, GlobalLabelMap>>& gt_pred);

std::string format_report(const MetricsReport& r);

}  // namespace patchfuse
