#pragma once

#include <string>
#include <vector>

#include "patchfuse/components.hpp"
#include "patchfuse/core.hpp"
#include "patchfuse/lattice.hpp"

// Slow, direct reference implementations.  Everything here is evaluated by
// literal summation and shares only the core types with the fast paths, so
// the two sides can disagree when either is wrong.

namespace patchfuse::oracle {

// out_q(c) = sum_j exp(-|f_q - f_j|^2 / 2) * values_j(c), O(N*M) double loop
// in bandwidth-scaled space.
std::vector<double> exact_gaussian_filter(const FeatureSet& splat_feats,
                                          const std::vector<double>& values,
                                          int channels,
                                          const FeatureSet& query_feats,
                                          double bandwidth);

// Literal double sum over cross-component pixel pairs with per-component
// size normalization.
std::vector<double> naive_icc(const BeliefField& q, const ComponentSet& comps,
                              double w_icc, bool exclude_background = false);

// Direct evaluation of the full update: all pixel pairs in every patch for
// the smoothness and ordering terms, the component double sum, then the
// per-pixel softmax.  Quadratic; refuses grids over 64x64.
class ExactMeanField {
 public:
  ExactMeanField(std::vector<SoftmaxPatch> patches, const PixelGrid& grid,
                 const InferenceConfig& config);
  ~ExactMeanField();
  ExactMeanField(ExactMeanField&&) noexcept;

  const BeliefField& q() const;
  const ComponentSet& components() const;
  void step();
  void run();

  // Per-pixel message fields the next step would apply.
  std::vector<double> smoothness_messages() const;
  std::vector<double> cnn_messages() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// E_smo + E_cnn + E_icc of a discrete labeling, evaluated literally with
// raw (unnormalized) kernels.  Diagnostic only; quadratic in patch size.
double energy(const GlobalLabelMap& y, const std::vector<SoftmaxPatch>& patches,
              const ComponentSet& comps, const InferenceConfig& config);

struct CheckResult {
  std::string name;
  double mean_rel_error = 0;
  double max_rel_error = 0;
  double tolerance_mean = 0;
  double tolerance_max = 0;
  bool passed = false;
};

std::string format_check(const CheckResult& r);

}  // namespace patchfuse::oracle
