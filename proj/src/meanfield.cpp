#include "patchfuse/meanfield.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "patchfuse/lattice.hpp"
#include "patchfuse/potentials.hpp"

namespace patchfuse {

namespace {

constexpr int kL = kGlobalLabels;
// Normalizers below this are treated as dead queries (no mass in reach).
constexpr double kNormFloor = 1e-12;

int worker_count() {
  const char* env = std::getenv("PATCHFUSE_WORKERS");
  if (!env || !*env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return static_cast<int>(std::clamp(v, 1L, 64L));
}

}  // namespace

BeliefField init_uniform(const PixelGrid& grid) { return uniform_beliefs(grid); }

struct MeanFieldEngine::Impl {
  PixelGrid grid;
  InferenceConfig config;
  std::vector<SoftmaxPatch> patches;
  ComponentSet comps;
  BeliefField q_cur;
  int iteration = 0;
  int workers = 1;

  // One Gaussian term: a frozen lattice plus its pixel-wise normalizers and
  // directly evaluated self kernels.
  struct Term {
    PermutohedralLattice lattice;
    std::vector<double> norm;    // per patch pixel
    std::vector<double> k_self;  // per patch pixel
    Term(PermutohedralLattice&& lat, std::vector<double> n,
         std::vector<double> ks)
        : lattice(std::move(lat)), norm(std::move(n)), k_self(std::move(ks)) {}
  };

  struct PatchState {
    std::vector<std::int64_t> pixels;  // patch-local -> global linear index
    double w_cnn = 0;
    std::vector<Term> terms;  // [0] = smoothness, then t = -T..T
    std::vector<double> contrib;  // n * kL message contribution
  };
  std::vector<PatchState> pstates;

  struct Scratch {
    std::vector<double> q_local;   // n * kL
    std::vector<double> filtered;  // n * kL
  };

  void build_patch_terms() {
    const int t_max = config.t_max;
    pstates.reserve(patches.size());
    LatticeOptions opts;
    opts.expansion = Expansion::Ring1;

    for (const SoftmaxPatch& patch : patches) {
      PatchState ps;
      const std::int64_t n = patch.pixel_count();
      ps.w_cnn = config.w_cnn(patch.size_class);
      ps.pixels.resize(n);
      for (std::int64_t k = 0; k < n; ++k)
        ps.pixels[k] =
            linear_index(grid, patch.global_col(k), patch.global_row(k));
      ps.contrib.assign(n * kL, 0.0);

      const std::vector<double> ones(n, 1.0);

      FeatureSet smo = smoothness_features(patch, grid, config.theta1,
                                           config.theta2);
      PermutohedralLattice smo_lat(smo, opts);
      std::vector<double> smo_norm(n);
      smo_lat.filter(ones.data(), 1, smo_norm.data());
      ps.terms.emplace_back(std::move(smo_lat), std::move(smo_norm),
                            std::vector<double>(n, 1.0));

      for (int t = -t_max; t <= t_max; ++t) {
        const int s = std::abs(t);
        std::vector<double> k_self(n);
        std::vector<double> p_row(kLocalLabels);
        for (std::int64_t k = 0; k < n; ++k) {
          const double* p = patch.probs.data() + k * kLocalLabels;
          p_row.assign(p, p + kLocalLabels);
          k_self[k] =
              cnn_kernel_value(p_row, p_row, t, config.theta_cnn, t_max);
        }
        if (t == 0) {
          FeatureSet f =
              shifted_prob_features(patch, 0, config.theta_cnn, false, t_max);
          PermutohedralLattice lat(f, opts);
          std::vector<double> norm(n);
          lat.filter(ones.data(), 1, norm.data());
          ps.terms.emplace_back(std::move(lat), std::move(norm),
                                std::move(k_self));
        } else {
          // t > 0: splat at {h_{-t}(p_j)}, slice at {h_t(p_i)}.
          // t < 0 uses k^(t)(h_t(p_i), h_{-t}(p_j)) =
          //   k^(|t|)(h_|t|(p_j), h_{-|t|}(p_i)): the pad sides swap.
          FeatureSet splat = shifted_prob_features(
              patch, s, config.theta_cnn, /*prepend=*/t < 0, t_max);
          FeatureSet query = shifted_prob_features(
              patch, s, config.theta_cnn, /*prepend=*/t > 0, t_max);
          PermutohedralLattice lat(splat, query, opts);
          std::vector<double> norm(n);
          lat.filter(ones.data(), 1, norm.data());
          ps.terms.emplace_back(std::move(lat), std::move(norm),
                                std::move(k_self));
        }
      }
      pstates.push_back(std::move(ps));
    }
  }

  // Message contribution of one patch into ps.contrib, reading q_cur.
  // want: bit 0 = smoothness, bit 1 = ordering terms.
  void patch_contribution(PatchState& ps, Scratch& sc, int want) {
    const std::int64_t n = ps.pixels.size();
    const int t_max = config.t_max;
    sc.q_local.resize(n * kL);
    sc.filtered.resize(n * kL);
    std::fill(ps.contrib.begin(), ps.contrib.end(), 0.0);

    for (std::int64_t k = 0; k < n; ++k) {
      const double* src = q_cur.at(ps.pixels[k]);
      std::copy(src, src + kL, sc.q_local.data() + k * kL);
    }

    if ((want & 1) && config.w_smo != 0) {
      const Term& term = ps.terms[0];
      term.lattice.filter(sc.q_local.data(), kL, sc.filtered.data());
      for (std::int64_t k = 0; k < n; ++k) {
        const double* f = sc.filtered.data() + k * kL;
        const double* ql = sc.q_local.data() + k * kL;
        double* out = ps.contrib.data() + k * kL;
        const double norm = term.norm[k];
        double fl[kL];
        double total = 0;
        if (norm > kNormFloor) {
          for (int l = 0; l < kL; ++l) {
            fl[l] = std::max(f[l] - ql[l], 0.0) / norm;
            total += fl[l];
          }
        } else {
          std::fill(fl, fl + kL, 0.0);
        }
        for (int l = 0; l < kL; ++l)
          out[l] += config.w_smo * (total - fl[l]);
      }
    }

    if ((want & 2) && ps.w_cnn != 0) {
      for (int t = -t_max; t <= t_max; ++t) {
        const Term& term = ps.terms[1 + t + t_max];
        term.lattice.filter(sc.q_local.data(), kL, sc.filtered.data());
        for (std::int64_t k = 0; k < n; ++k) {
          const double* f = sc.filtered.data() + k * kL;
          const double* ql = sc.q_local.data() + k * kL;
          double* out = ps.contrib.data() + k * kL;
          const double norm = term.norm[k];
          double gl[kL];
          if (norm > kNormFloor) {
            const double ks = term.k_self[k];
            for (int l = 0; l < kL; ++l)
              gl[l] = std::max(f[l] - ks * ql[l], 0.0) / norm;
          } else {
            std::fill(gl, gl + kL, 0.0);
          }
          if (t > 0) {
            // mu = -1 for l' > l: subtract the suffix sum.
            double suffix = 0;
            for (int l = kL - 1; l >= 0; --l) {
              out[l] -= ps.w_cnn * suffix;
              suffix += gl[l];
            }
          } else if (t < 0) {
            double prefix = 0;
            for (int l = 0; l < kL; ++l) {
              out[l] -= ps.w_cnn * prefix;
              prefix += gl[l];
            }
          } else {
            for (int l = 0; l < kL; ++l) out[l] -= ps.w_cnn * gl[l];
          }
        }
      }
    }
  }

  // All patch contributions merged in patch order (worker-count invariant).
  void accumulate_patch_messages(std::vector<double>& msg, int want) {
    const int n_workers =
        std::min<int>(workers, static_cast<int>(pstates.size()));
    if (n_workers <= 1) {
      Scratch sc;
      for (PatchState& ps : pstates) patch_contribution(ps, sc, want);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      pool.reserve(n_workers);
      for (int w = 0; w < n_workers; ++w)
        pool.emplace_back([&] {
          Scratch sc;
          for (;;) {
            const std::size_t z = next.fetch_add(1);
            if (z >= pstates.size()) break;
            patch_contribution(pstates[z], sc, want);
          }
        });
      for (std::thread& th : pool) th.join();
    }
    for (const PatchState& ps : pstates) {
      const std::int64_t n = ps.pixels.size();
      for (std::int64_t k = 0; k < n; ++k) {
        double* dst = msg.data() + ps.pixels[k] * kL;
        const double* src = ps.contrib.data() + k * kL;
        for (int l = 0; l < kL; ++l) dst[l] += src[l];
      }
    }
  }

  void add_icc(std::vector<double>& msg) {
    if (config.w_icc == 0 || comps.count < 2) return;
    const std::vector<double> agg = component_aggregates(q_cur, comps);
    const std::vector<double> icc = icc_messages(
        agg, comps, config.w_icc, config.icc_exclude_background);
    for (std::size_t i = 0; i < msg.size(); ++i) msg[i] += icc[i];
  }
};

MeanFieldEngine::MeanFieldEngine(std::vector<SoftmaxPatch> patches,
                                 const PixelGrid& grid,
                                 const InferenceConfig& config)
    : impl_(new Impl) {
  validate_config(config);
  if (patches.empty())
    throw ValidationError("MeanFieldEngine: no patches");
  impl_->grid = grid;
  impl_->config = config;
  impl_->workers = worker_count();
  impl_->patches.reserve(patches.size());
  for (SoftmaxPatch& p : patches)
    impl_->patches.push_back(validate_patch(std::move(p), grid));

  const ForegroundMap fg = foreground_probability(impl_->patches, grid);
  impl_->comps = connected_components(
      threshold_mask(fg, config.fg_threshold), grid, config.connectivity);
  impl_->q_cur = uniform_beliefs(grid);
  impl_->build_patch_terms();
}

MeanFieldEngine::~MeanFieldEngine() = default;
MeanFieldEngine::MeanFieldEngine(MeanFieldEngine&&) noexcept = default;

const BeliefField& MeanFieldEngine::q() const { return impl_->q_cur; }
int MeanFieldEngine::iteration() const { return impl_->iteration; }
const ComponentSet& MeanFieldEngine::components() const {
  return impl_->comps;
}

void MeanFieldEngine::step() {
  std::vector<double> msg(impl_->grid.size() * kL, 0.0);
  impl_->accumulate_patch_messages(msg, 3);
  impl_->add_icc(msg);

  BeliefField next;
  next.grid = impl_->grid;
  next.q.resize(msg.size());
  const std::int64_t n = impl_->grid.size();
  for (std::int64_t i = 0; i < n; ++i) {
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
        throw InferenceError("mean-field step produced a non-finite belief");
    }
  }
  impl_->q_cur = std::move(next);
  ++impl_->iteration;
}

void MeanFieldEngine::run() {
  for (int i = 0; i < impl_->config.iterations; ++i) step();
}

MessageField MeanFieldEngine::smoothness_messages() const {
  MessageField field{impl_->grid,
                     std::vector<double>(impl_->grid.size() * kL, 0.0)};
  impl_->accumulate_patch_messages(field.msg, 1);
  return field;
}

MessageField MeanFieldEngine::cnn_messages() const {
  MessageField field{impl_->grid,
                     std::vector<double>(impl_->grid.size() * kL, 0.0)};
  impl_->accumulate_patch_messages(field.msg, 2);
  return field;
}

MessageField MeanFieldEngine::icc_message_field() const {
  MessageField field{impl_->grid,
                     std::vector<double>(impl_->grid.size() * kL, 0.0)};
  impl_->add_icc(field.msg);
  return field;
}

BeliefField run_meanfield(const std::vector<SoftmaxPatch>& patches,
                          const PixelGrid& grid,
                          const InferenceConfig& config) {
  MeanFieldEngine engine(patches, grid, config);
  engine.run();
  return engine.q();
}

GlobalLabelMap map_labels(const BeliefField& q) {
  GlobalLabelMap map;
  map.grid = q.grid;
  map.labels.resize(q.grid.size());
  for (std::int64_t i = 0; i < q.grid.size(); ++i) {
    const double* row = q.at(i);
    int best = 0;
    for (int l = 1; l < kL; ++l)
      if (row[l] > row[best]) best = l;
    map.labels[i] = static_cast<std::uint8_t>(best);
  }
  return map;
}

}  // namespace patchfuse
