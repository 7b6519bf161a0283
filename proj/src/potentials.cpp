#include "patchfuse/potentials.hpp"

#include <cmath>

namespace patchfuse {

namespace {

void check_shift(const std::vector<double>& p, int t, int t_max) {
  if (static_cast<int>(p.size()) != kLocalLabels)
    throw ValidationError("shift: input must have " +
                          std::to_string(kLocalLabels) + " entries");
  if (t < 0 || t > t_max)
    throw ValidationError("shift: t = " + std::to_string(t) +
                          " outside [0, " + std::to_string(t_max) + "]");
}

}  // namespace

ShiftedVector shift_prepend(const std::vector<double>& p, int t, int t_max) {
  check_shift(p, t, t_max);
  ShiftedVector out;
  out.t = t;
  out.data.assign(t, 0.0);
  out.data.insert(out.data.end(), p.begin(), p.end());
  return out;
}

ShiftedVector shift_append(const std::vector<double>& p, int t, int t_max) {
  check_shift(p, t, t_max);
  ShiftedVector out;
  out.t = -t;
  out.data = p;
  out.data.insert(out.data.end(), t, 0.0);
  return out;
}

int mu_smo(int l, int lp) { return l != lp ? 1 : 0; }

int mu_icc(int l, int lp) { return l == lp ? 1 : 0; }

int mu_cnn(int t, int l, int lp, int t_max) {
  if (t < -t_max || t > t_max)
    throw ValidationError("mu_cnn: |t| exceeds t_max");
  if ((l < lp && t > 0) || (l > lp && t < 0) || (l == lp && t == 0)) return -1;
  return 0;
}

CompatibilityTables::CompatibilityTables(int t_max) : t_max_(t_max) {
  if (t_max < 0 || t_max >= kLocalLabels)
    throw ValidationError("CompatibilityTables: bad t_max");
  smo_.resize(kGlobalLabels * kGlobalLabels);
  icc_.resize(kGlobalLabels * kGlobalLabels);
  cnn_.resize((2 * t_max + 1) * kGlobalLabels * kGlobalLabels);
  for (int l = 0; l < kGlobalLabels; ++l)
    for (int lp = 0; lp < kGlobalLabels; ++lp) {
      smo_[l * kGlobalLabels + lp] = mu_smo(l, lp);
      icc_[l * kGlobalLabels + lp] = mu_icc(l, lp);
      for (int t = -t_max; t <= t_max; ++t)
        cnn_[((t + t_max) * kGlobalLabels + l) * kGlobalLabels + lp] =
            mu_cnn(t, l, lp, t_max);
    }
}

FeatureSet smoothness_features(const SoftmaxPatch& patch,
                               const PixelGrid& grid, double theta1,
                               double theta2) {
  if (!(theta1 > 0) || !(theta2 > 0))
    throw ValidationError("smoothness_features: thetas must be positive");
  if (patch.x0 < 0 || patch.y0 < 0 || patch.x0 + patch.width > grid.width ||
      patch.y0 + patch.height > grid.height)
    throw ValidationError("smoothness_features: patch outside the grid");
  const int d = kLocalLabels + 2;
  FeatureSet fs;
  fs.dim = d;
  fs.data.resize(patch.pixel_count() * d);
  const double inv1 = 1.0 / theta1;
  const double inv2 = 1.0 / theta2;
  for (std::int64_t k = 0; k < patch.pixel_count(); ++k) {
    double* f = fs.data.data() + k * d;
    const double* p = patch.probs.data() + k * kLocalLabels;
    for (int l = 0; l < kLocalLabels; ++l) f[l] = p[l] * inv1;
    f[kLocalLabels] = patch.global_col(k) * inv2;
    f[kLocalLabels + 1] = patch.global_row(k) * inv2;
  }
  return fs;
}

FeatureSet shifted_prob_features(const SoftmaxPatch& patch, int t,
                                 double theta_cnn, bool prepend, int t_max) {
  if (t < 0 || t > t_max)
    throw ValidationError("shifted_prob_features: t outside [0, t_max]");
  if (!(theta_cnn > 0))
    throw ValidationError("shifted_prob_features: theta_cnn must be positive");
  const int d = kLocalLabels + t;
  FeatureSet fs;
  fs.dim = d;
  fs.data.assign(patch.pixel_count() * d, 0.0);
  const double inv = 1.0 / theta_cnn;
  const int offset = prepend ? t : 0;
  for (std::int64_t k = 0; k < patch.pixel_count(); ++k) {
    double* f = fs.data.data() + k * d + offset;
    const double* p = patch.probs.data() + k * kLocalLabels;
    for (int l = 0; l < kLocalLabels; ++l) f[l] = p[l] * inv;
  }
  return fs;
}

double cnn_kernel_value(const std::vector<double>& p_i,
                        const std::vector<double>& p_j, int t,
                        double theta_cnn, int t_max) {
  if (!(theta_cnn > 0))
    throw ValidationError("cnn_kernel_value: theta_cnn must be positive");
  // k^(t)(h_t(p_i), h_{-t}(p_j)) = k^(|t|)(h_|t|(p_j), h_{-|t|}(p_i))
  const std::vector<double>& a = t >= 0 ? p_i : p_j;
  const std::vector<double>& b = t >= 0 ? p_j : p_i;
  const int s = t >= 0 ? t : -t;
  const ShiftedVector lead = shift_prepend(a, s, t_max);
  const ShiftedVector lag = shift_append(b, s, t_max);
  double d2 = 0;
  for (std::size_t k = 0; k < lead.data.size(); ++k) {
    const double diff = lead.data[k] - lag.data[k];
    d2 += diff * diff;
  }
  return std::exp(-d2 / (2.0 * theta_cnn * theta_cnn));
}

std::vector<double> kernel_normalizers(const FeatureSet& features) {
  return kernel_normalizers(features, features);
}

std::vector<double> kernel_normalizers(const FeatureSet& splat_feats,
                                       const FeatureSet& query_feats) {
  if (splat_feats.count() == 0)
    throw ValidationError("kernel_normalizers: empty feature set");
  const std::vector<double> ones(splat_feats.count(), 1.0);
  return gaussian_filter(splat_feats, ones, 1, query_feats, 1.0);
}

}  // namespace patchfuse
