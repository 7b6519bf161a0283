#pragma once

#include <vector>

#include "patchfuse/core.hpp"
#include "patchfuse/lattice.hpp"

namespace patchfuse {

// A local softmax vector with |t| zeros prepended (t > 0) or appended
// (t < 0); length kLocalLabels + |t|.
struct ShiftedVector {
  int t = 0;
  std::vector<double> data;
};

// h_t: prepend t zeros.  t must lie in [0, t_max].
ShiftedVector shift_prepend(const std::vector<double>& p, int t, int t_max);
// h_{-t}: append t zeros.  t must lie in [0, t_max].
ShiftedVector shift_append(const std::vector<double>& p, int t, int t_max);

// Label compatibilities over the global label space.
// mu_smo penalizes disagreement, mu_icc penalizes agreement, and
// mu_cnn rewards (-1) label pairs whose order matches the sign of the
// shift: l < l' for t > 0, l > l' for t < 0, l = l' for t = 0.
int mu_smo(int l, int lp);
int mu_icc(int l, int lp);
int mu_cnn(int t, int l, int lp, int t_max);

struct CompatibilityTables {
  explicit CompatibilityTables(int t_max);

  int t_max() const { return t_max_; }
  int smo(int l, int lp) const { return smo_[l * kGlobalLabels + lp]; }
  int icc(int l, int lp) const { return icc_[l * kGlobalLabels + lp]; }
  int cnn(int t, int l, int lp) const {
    return cnn_[((t + t_max_) * kGlobalLabels + l) * kGlobalLabels + lp];
  }

 private:
  int t_max_;
  std::vector<int> smo_, icc_, cnn_;
};

// Per-pixel features [p_i/theta1 ; d_i/theta2] with d_i in global image
// coordinates (col, row); 8-D.
FeatureSet smoothness_features(const SoftmaxPatch& patch,
                               const PixelGrid& grid, double theta1,
                               double theta2);

// Shifted softmax features for one patch, divided by theta_cnn.
// prepend=true builds {h_t(p_i)} (slice side), prepend=false builds
// {h_{-t}(p_j)} (splat side); t >= 0.
FeatureSet shifted_prob_features(const SoftmaxPatch& patch, int t,
                                 double theta_cnn, bool prepend, int t_max);

// exp(-|h_t(p_i) - h_{-t}(p_j)|^2 / (2 theta^2)); negative t swaps roles.
double cnn_kernel_value(const std::vector<double>& p_i,
                        const std::vector<double>& p_j, int t,
                        double theta_cnn, int t_max);

// norm_i ~ sum_j k(f_i, f_j), the all-ones filter response (self included).
std::vector<double> kernel_normalizers(const FeatureSet& features);
// Asymmetric variant: norm at each query ~ sum over splat points.
std::vector<double> kernel_normalizers(const FeatureSet& splat_feats,
                                       const FeatureSet& query_feats);

}  // namespace patchfuse
