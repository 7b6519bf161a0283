#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "patchfuse/core.hpp"

namespace patchfuse {

// Points in R^d, already divided by the kernel bandwidth.
struct FeatureSet {
  int dim = 0;
  std::vector<double> data;  // count() * dim, row-major

  std::int64_t count() const {
    return dim > 0 ? static_cast<std::int64_t>(data.size()) / dim : 0;
  }
  const double* point(std::int64_t i) const { return data.data() + i * dim; }
  void push(const double* f) { data.insert(data.end(), f, f + dim); }
};

// How far the vertex set is grown beyond the splatted simplices before
// blurring.  Full creates every vertex the [1,2,1] passes can reach, so no
// mass is ever dropped (cost grows combinatorially with dim; fine at low
// dim or for compact clouds).  Ring1 creates one ring of axis neighbors
// around the splatted vertices, which is what asymmetric slicing needs,
// and truncates the tiny outflow beyond that ring.
enum class Expansion { Ring1, Full };

struct LatticeOptions {
  Expansion expansion = Expansion::Full;
};

// Permutohedral lattice over the hyperplane x·1 = 0.  The structure
// (simplex records, vertex table, blur adjacency) is frozen at
// construction; filtering arbitrary value channels through it afterwards
// does no hashing.  Splat points and query points may be distinct sets:
// queries only gather from vertices that exist, so a query far from every
// splatted simplex reads zero.
class PermutohedralLattice {
 public:
  static constexpr std::uint32_t kNoVertex = 0xffffffffu;

  explicit PermutohedralLattice(const FeatureSet& splat_feats,
                                LatticeOptions opts = {});
  PermutohedralLattice(const FeatureSet& splat_feats,
                       const FeatureSet& query_feats,
                       LatticeOptions opts = {});
  ~PermutohedralLattice();
  PermutohedralLattice(PermutohedralLattice&&) noexcept;
  PermutohedralLattice& operator=(PermutohedralLattice&&) noexcept;

  int dim() const { return d_; }
  std::int64_t num_points() const { return n_points_; }
  std::int64_t num_queries() const { return n_queries_; }
  std::int64_t num_vertices() const;

  // splat -> blur -> slice in one pass over the prebuilt structure.
  // values is num_points() x channels, out is num_queries() x channels.
  // With apply_gain the output approximates the unit-variance Gaussian sum
  // out_q = Σ_j exp(-|f_q - f_j|^2 / 2) v_j; without it the raw lattice
  // convolution is returned.
  void filter(const double* values, int channels, double* out,
              bool apply_gain = true) const;

  // Stepwise protocol over an explicit vertex value table.
  void splat_values(const double* values, int channels);
  void blur_values();
  std::vector<double> slice_values() const;  // at the build-time query set
  std::vector<double> slice_values(const FeatureSet& queries) const;
  int staged_channels() const { return staged_channels_; }
  double staged_total(int channel) const;  // Σ_vertices of the value table

  // Introspection for invariant checks.
  std::vector<double> point_weights(std::int64_t i) const;  // d+1 weights
  std::vector<int> vertex_key(std::int64_t v) const;        // d+1 coords
  // Vertex ids of splat point i's enclosing simplex (kNoVertex if absent).
  std::vector<std::uint32_t> point_vertices(std::int64_t i) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int d_ = 0;
  std::int64_t n_points_ = 0;
  std::int64_t n_queries_ = 0;
  int staged_channels_ = 0;
};

// One-shot convenience wrapper: scales both point sets by the bandwidth,
// builds a Ring1 lattice and filters with the gain applied.
std::vector<double> gaussian_filter(const FeatureSet& splat_feats,
                                    const std::vector<double>& values,
                                    int channels,
                                    const FeatureSet& query_feats,
                                    double bandwidth);
std::vector<double> gaussian_filter(const FeatureSet& splat_feats,
                                    const std::vector<double>& values,
                                    int channels,
                                    const FeatureSet& query_feats,
                                    const std::vector<double>& bandwidths);

}  // namespace patchfuse
