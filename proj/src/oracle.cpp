#include "patchfuse/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "patchfuse/components.hpp"

// Everything in this file evaluates definitions by direct summation.  The
// shift/kernel/compatibility algebra is restated locally on purpose: these
// paths must be able to disagree with the production ones.

namespace patchfuse::oracle {

namespace {

constexpr int kL = kGlobalLabels;

// The filter being checked has compact support: a query point with no splat
// mass nearby reads back exactly zero, so pixels whose kernel row is
// negligible receive no message at all.  The exact Gaussian never reaches
// zero, and normalizing a row of ~1e-20 entries would manufacture a
// full-sized message out of numerical dust.  Pairs beyond four bandwidths
// (kernel < e^-8) are treated as out of support; for softmax-like inputs the
// in-support/out-of-support gap spans many orders of magnitude, so the
// messages are insensitive to the exact cutoff.
constexpr double kSupportCutoff = 3.354626279025119e-4;  // exp(-8)

double sq_dist(const double* a, const double* b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// exp(-|h_t(p_i) - h_{-t}(p_j)|^2 / (2 theta^2)) evaluated directly on two
// local softmax rows; t may be negative (roles swap).
double shifted_kernel(const double* pi, const double* pj, int t,
                      double theta) {
  const double* lead = pi;  // receives the prepended zeros
  const double* lag = pj;
  int s = t;
  if (t < 0) {
    lead = pj;
    lag = pi;
    s = -t;
  }
  // lead padded in front, lag padded behind; only the overlap and the two
  // pad regions contribute.
  double d2 = 0;
  for (int k = 0; k < s; ++k) d2 += lag[k] * lag[k];
  for (int k = 0; k < kLocalLabels - s; ++k) {
    const double diff = lead[k] - lag[k + s];
    d2 += diff * diff;
  }
  for (int k = kLocalLabels - s; k < kLocalLabels; ++k) d2 += lead[k] * lead[k];
  return std::exp(-d2 / (2.0 * theta * theta));
}

int order_compat(int t, int l, int lp) {
  if ((l < lp && t > 0) || (l > lp && t < 0) || (l == lp && t == 0)) return -1;
  return 0;
}

}  // namespace

std::vector<double> exact_gaussian_filter(const FeatureSet& splat_feats,
                                          const std::vector<double>& values,
                                          int channels,
                                          const FeatureSet& query_feats,
                                          double bandwidth) {
  if (splat_feats.dim != query_feats.dim)
    throw ValidationError("exact_gaussian_filter: dims differ");
  if (!(bandwidth > 0))
    throw ValidationError("exact_gaussian_filter: bandwidth must be positive");
  if (static_cast<std::int64_t>(values.size()) !=
      splat_feats.count() * channels)
    throw ValidationError("exact_gaussian_filter: values size mismatch");

  const int d = splat_feats.dim;
  const double inv_bw2 = 1.0 / (bandwidth * bandwidth);
  std::vector<double> out(query_feats.count() * channels, 0.0);
  for (std::int64_t q = 0; q < query_feats.count(); ++q) {
    const double* fq = query_feats.point(q);
    double* o = out.data() + q * channels;
    for (std::int64_t j = 0; j < splat_feats.count(); ++j) {
      const double k = std::exp(-0.5 * sq_dist(fq, splat_feats.point(j), d) *
                                inv_bw2);
      const double* v = values.data() + j * channels;
      for (int c = 0; c < channels; ++c) o[c] += k * v[c];
    }
  }
  return out;
}

std::vector<double> naive_icc(const BeliefField& q, const ComponentSet& comps,
                              double w_icc, bool exclude_background) {
  const std::int64_t n = q.grid.size();
  if (static_cast<std::int64_t>(comps.membership.size()) != n)
    throw ValidationError("naive_icc: grid mismatch");
  std::vector<double> msg(n * kL, 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t m = comps.membership[i];
    if (m == kNoComponent) continue;
    double* out = msg.data() + i * kL;
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int32_t o = comps.membership[j];
      if (o == kNoComponent || o == m) continue;
      const double scale = w_icc / comps.sizes[o];
      const double* row = q.at(j);
      // mu_icc(l, l') picks out l' = l
      for (int l = 0; l < kL; ++l) out[l] += scale * row[l];
    }
    if (exclude_background) out[kBackgroundLabel] = 0.0;
  }
  return msg;
}

struct ExactMeanField::Impl {
  PixelGrid grid;
  InferenceConfig config;
  std::vector<SoftmaxPatch> patches;
  ComponentSet comps;
  BeliefField q;
  int iteration = 0;

  // Cached per-patch kernel matrices (quadratic; the constructor refuses
  // large grids).
  struct PatchCache {
    std::vector<std::int64_t> pixels;       // patch-local -> global index
    std::vector<double> k_smo;              // n*n
    std::vector<std::vector<double>> k_cnn; // per t in [-T..T], n*n
    std::vector<double> norm_smo;           // n
    std::vector<std::vector<double>> norm_cnn;
  };
  std::vector<PatchCache> cache;

  void build_cache() {
    const int t_max = config.t_max;
    for (const SoftmaxPatch& patch : patches) {
      PatchCache pc;
      const std::int64_t n = patch.pixel_count();
      pc.pixels.resize(n);
      for (std::int64_t k = 0; k < n; ++k)
        pc.pixels[k] =
            linear_index(grid, patch.global_col(k), patch.global_row(k));

      pc.k_smo.resize(n * n);
      const double inv_t1 = 1.0 / config.theta1;
      const double inv_t2 = 1.0 / config.theta2;
      std::vector<double> feats(n * (kLocalLabels + 2));
      for (std::int64_t k = 0; k < n; ++k) {
        double* f = feats.data() + k * (kLocalLabels + 2);
        const double* p = patch.probs.data() + k * kLocalLabels;
        for (int l = 0; l < kLocalLabels; ++l) f[l] = p[l] * inv_t1;
        f[kLocalLabels] = patch.global_col(k) * inv_t2;
        f[kLocalLabels + 1] = patch.global_row(k) * inv_t2;
      }
      for (std::int64_t a = 0; a < n; ++a)
        for (std::int64_t b = 0; b < n; ++b) {
          const double k = std::exp(
              -0.5 * sq_dist(feats.data() + a * (kLocalLabels + 2),
                             feats.data() + b * (kLocalLabels + 2),
                             kLocalLabels + 2));
          pc.k_smo[a * n + b] = k < kSupportCutoff ? 0.0 : k;
        }

      pc.k_cnn.resize(2 * t_max + 1);
      for (int t = -t_max; t <= t_max; ++t) {
        std::vector<double>& kt = pc.k_cnn[t + t_max];
        kt.resize(n * n);
        for (std::int64_t a = 0; a < n; ++a)
          for (std::int64_t b = 0; b < n; ++b) {
            const double k = shifted_kernel(
                patch.probs.data() + a * kLocalLabels,
                patch.probs.data() + b * kLocalLabels, t, config.theta_cnn);
            kt[a * n + b] = k < kSupportCutoff ? 0.0 : k;
          }
      }

      pc.norm_smo.assign(n, 0.0);
      for (std::int64_t a = 0; a < n; ++a)
        for (std::int64_t b = 0; b < n; ++b)
          pc.norm_smo[a] += pc.k_smo[a * n + b];
      pc.norm_cnn.resize(2 * t_max + 1);
      for (int ti = 0; ti <= 2 * t_max; ++ti) {
        pc.norm_cnn[ti].assign(n, 0.0);
        for (std::int64_t a = 0; a < n; ++a)
          for (std::int64_t b = 0; b < n; ++b)
            pc.norm_cnn[ti][a] += pc.k_cnn[ti][a * n + b];
      }
      cache.push_back(std::move(pc));
    }
  }

  // Adds the full smoothness and ordering contributions into msg (n*10).
  void patch_messages(std::vector<double>& msg, bool want_smo,
                      bool want_cnn) const {
    const int t_max = config.t_max;
    for (std::size_t z = 0; z < patches.size(); ++z) {
      const PatchCache& pc = cache[z];
      const std::int64_t n = pc.pixels.size();
      const double w_cnn = config.w_cnn(patches[z].size_class);
      std::vector<double> filtered(kL);
      for (std::int64_t a = 0; a < n; ++a) {
        double* out = msg.data() + pc.pixels[a] * kL;

        if (want_smo && config.w_smo != 0 && pc.norm_smo[a] > 0) {
          std::fill(filtered.begin(), filtered.end(), 0.0);
          for (std::int64_t b = 0; b < n; ++b) {
            if (b == a) continue;
            const double k = pc.k_smo[a * n + b];
            const double* qb = q.at(pc.pixels[b]);
            for (int l = 0; l < kL; ++l) filtered[l] += k * qb[l];
          }
          double total = 0;
          for (int l = 0; l < kL; ++l) {
            filtered[l] /= pc.norm_smo[a];
            total += filtered[l];
          }
          for (int l = 0; l < kL; ++l)
            out[l] += config.w_smo * (total - filtered[l]);
        }

        if (want_cnn && w_cnn != 0) {
          for (int t = -t_max; t <= t_max; ++t) {
            const std::vector<double>& kt = pc.k_cnn[t + t_max];
            const double norm = pc.norm_cnn[t + t_max][a];
            if (norm <= 0) continue;
            std::fill(filtered.begin(), filtered.end(), 0.0);
            for (std::int64_t b = 0; b < n; ++b) {
              if (b == a) continue;
              const double k = kt[a * n + b];
              const double* qb = q.at(pc.pixels[b]);
              for (int l = 0; l < kL; ++l) filtered[l] += k * qb[l];
            }
            for (int l = 0; l < kL; ++l) filtered[l] /= norm;
            for (int l = 0; l < kL; ++l) {
              double contrib = 0;
              for (int lp = 0; lp < kL; ++lp)
                contrib += order_compat(t, l, lp) * filtered[lp];
              out[l] += w_cnn * contrib;
            }
          }
        }
      }
    }
  }

  std::vector<double> full_messages() const {
    std::vector<double> msg(grid.size() * kL, 0.0);
    patch_messages(msg, true, true);
    const std::vector<double> icc =
        naive_icc(q, comps, config.w_icc, config.icc_exclude_background);
    for (std::size_t i = 0; i < msg.size(); ++i) msg[i] += icc[i];
    return msg;
  }
};

ExactMeanField::ExactMeanField(std::vector<SoftmaxPatch> patches,
                               const PixelGrid& grid,
                               const InferenceConfig& config)
    : impl_(new Impl) {
  if (grid.width > 64 || grid.height > 64)
    throw ValidationError(
        "ExactMeanField: grid exceeds 64x64 (quadratic cost refused)");
  validate_config(config);
  impl_->grid = grid;
  impl_->config = config;
  impl_->patches.reserve(patches.size());
  for (SoftmaxPatch& p : patches)
    impl_->patches.push_back(validate_patch(std::move(p), grid));

  const ForegroundMap fg = foreground_probability(impl_->patches, grid);
  impl_->comps = connected_components(
      threshold_mask(fg, config.fg_threshold), grid, config.connectivity);
  impl_->q = uniform_beliefs(grid);
  impl_->build_cache();
}

ExactMeanField::~ExactMeanField() = default;
ExactMeanField::ExactMeanField(ExactMeanField&&) noexcept = default;

const BeliefField& ExactMeanField::q() const { return impl_->q; }
const ComponentSet& ExactMeanField::components() const { return impl_->comps; }

void ExactMeanField::step() {
  const std::vector<double> msg = impl_->full_messages();
  BeliefField next;
  next.grid = impl_->grid;
  next.q.resize(msg.size());
  for (std::int64_t i = 0; i < impl_->grid.size(); ++i) {
    const double* m = msg.data() + i * kL;
    double* row = next.q.data() + i * kL;
    double lo = m[0];
    for (int l = 1; l < kL; ++l) lo = std::min(lo, m[l]);
    double z = 0;
    for (int l = 0; l < kL; ++l) {
      row[l] = std::exp(-(m[l] - lo));
      z += row[l];
    }
    for (int l = 0; l < kL; ++l) {
      row[l] /= z;
      if (!std::isfinite(row[l]))
        throw InferenceError("ExactMeanField: non-finite belief");
    }
  }
  impl_->q = std::move(next);
  ++impl_->iteration;
}

void ExactMeanField::run() {
  for (int i = 0; i < impl_->config.iterations; ++i) step();
}

std::vector<double> ExactMeanField::smoothness_messages() const {
  std::vector<double> msg(impl_->grid.size() * kL, 0.0);
  impl_->patch_messages(msg, true, false);
  return msg;
}

std::vector<double> ExactMeanField::cnn_messages() const {
  std::vector<double> msg(impl_->grid.size() * kL, 0.0);
  impl_->patch_messages(msg, false, true);
  return msg;
}

double energy(const GlobalLabelMap& y, const std::vector<SoftmaxPatch>& patches,
              const ComponentSet& comps, const InferenceConfig& config) {
  if (static_cast<std::int64_t>(y.labels.size()) != y.grid.size())
    throw ValidationError("energy: label map shape mismatch");
  const int t_max = config.t_max;
  double e_smo = 0, e_cnn = 0, e_icc = 0;

  const double inv_t1 = 1.0 / config.theta1;
  const double inv_t2 = 1.0 / config.theta2;
  for (const SoftmaxPatch& patch : patches) {
    const std::int64_t n = patch.pixel_count();
    const double w_cnn = config.w_cnn(patch.size_class);
    std::vector<int> label(n);
    std::vector<double> feats(n * (kLocalLabels + 2));
    for (std::int64_t k = 0; k < n; ++k) {
      label[k] = y.labels[linear_index(y.grid, patch.global_col(k),
                                       patch.global_row(k))];
      double* f = feats.data() + k * (kLocalLabels + 2);
      const double* p = patch.probs.data() + k * kLocalLabels;
      for (int l = 0; l < kLocalLabels; ++l) f[l] = p[l] * inv_t1;
      f[kLocalLabels] = patch.global_col(k) * inv_t2;
      f[kLocalLabels + 1] = patch.global_row(k) * inv_t2;
    }
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) {
        if (label[i] != label[j])
          e_smo += config.w_smo *
                   std::exp(-0.5 * sq_dist(feats.data() + i * (kLocalLabels + 2),
                                           feats.data() + j * (kLocalLabels + 2),
                                           kLocalLabels + 2));
        for (int t = -t_max; t <= t_max; ++t) {
          const int mu = order_compat(t, label[i], label[j]);
          if (mu == 0) continue;
          e_cnn += w_cnn * mu *
                   shifted_kernel(patch.probs.data() + i * kLocalLabels,
                                  patch.probs.data() + j * kLocalLabels, t,
                                  config.theta_cnn);
        }
      }
  }

  // Literal unnormalized cross-component Potts sum.
  const std::int64_t n = y.grid.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t m = comps.membership[i];
    if (m == kNoComponent) continue;
    for (std::int64_t j = i + 1; j < n; ++j) {
      const std::int32_t o = comps.membership[j];
      if (o == kNoComponent || o == m) continue;
      if (y.labels[i] == y.labels[j]) e_icc += config.w_icc;
    }
  }
  return e_smo + e_cnn + e_icc;
}

std::string format_check(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-24s mean_rel %.6f (tol %.6f)  max_rel %.6f (tol %.6f)  %s\n",
                r.name.c_str(), r.mean_rel_error, r.tolerance_mean,
                r.max_rel_error, r.tolerance_max,
                r.passed ? "ok" : "FAIL");
  return buf;
}

}  // namespace patchfuse::oracle
