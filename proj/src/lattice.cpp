#include "patchfuse/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>

namespace patchfuse {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit_double(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

// The raw splat/blur/slice composition reads back a position-dependent
// multiple of the exact Gaussian sum: queries near a lattice vertex gather
// more of their own blurred mass than queries near a simplex center.  The
// multiple is well predicted by the sum of squared barycentric weights s,
// so the correction applied at slice time is 1 / (c0 + c1 * s).
struct GainModel {
  double c0 = 1.0;
  double c1 = 0.0;
};

// Open-addressing hash table over fixed-length int32 keys.  Keys live in a
// contiguous arena in insertion order, so ids are stable and iteration
// order is deterministic.
class KeyTable {
 public:
  explicit KeyTable(int key_size, std::int64_t expected = 16)
      : key_size_(key_size) {
    std::size_t cap = 64;
    while (static_cast<std::int64_t>(cap) < expected * 4) cap <<= 1;
    slots_.assign(cap, 0);
  }

  std::int64_t size() const {
    return static_cast<std::int64_t>(keys_.size()) / key_size_;
  }
  const std::int32_t* key(std::int64_t id) const {
    return keys_.data() + id * key_size_;
  }

  std::uint32_t find_or_insert(const std::int32_t* key) {
    if ((size() + 1) * 2 > static_cast<std::int64_t>(slots_.size())) grow();
    const std::size_t mask = slots_.size() - 1;
    std::size_t h = hash(key) & mask;
    for (;;) {
      std::uint32_t s = slots_[h];
      if (s == 0) {
        const std::uint32_t id = static_cast<std::uint32_t>(size());
        keys_.insert(keys_.end(), key, key + key_size_);
        slots_[h] = id + 1;
        return id;
      }
      if (equals(key, s - 1)) return s - 1;
      h = (h + 1) & mask;
    }
  }

  std::uint32_t find(const std::int32_t* key) const {
    const std::size_t mask = slots_.size() - 1;
    std::size_t h = hash(key) & mask;
    for (;;) {
      std::uint32_t s = slots_[h];
      if (s == 0) return PermutohedralLattice::kNoVertex;
      if (equals(key, s - 1)) return s - 1;
      h = (h + 1) & mask;
    }
  }

 private:
  bool equals(const std::int32_t* key, std::uint32_t id) const {
    return std::memcmp(key, keys_.data() + std::size_t(id) * key_size_,
                       key_size_ * sizeof(std::int32_t)) == 0;
  }
  std::size_t hash(const std::int32_t* key) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (int i = 0; i < key_size_; ++i) {
      h ^= static_cast<std::uint32_t>(key[i]);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
  void grow() {
    std::vector<std::uint32_t> fresh(slots_.size() * 2, 0);
    slots_.swap(fresh);
    const std::size_t mask = slots_.size() - 1;
    for (std::int64_t id = 0; id < size(); ++id) {
      std::size_t h = hash(key(id)) & mask;
      while (slots_[h] != 0) h = (h + 1) & mask;
      slots_[h] = static_cast<std::uint32_t>(id) + 1;
    }
  }

  int key_size_;
  std::vector<std::int32_t> keys_;
  std::vector<std::uint32_t> slots_;
};

// Embeds one feature vector into the lattice hyperplane and locates its
// enclosing simplex: canonical rank-sorting construction.
struct Embedding {
  int d;
  std::vector<double> scale;     // d
  std::vector<double> elevated;  // d+1
  std::vector<std::int32_t> rem0;
  std::vector<int> rank;
  std::vector<double> bary;  // d+2

  explicit Embedding(int dim)
      : d(dim), scale(dim), elevated(dim + 1), rem0(dim + 1), rank(dim + 1),
        bary(dim + 2) {
    const double inv_std = std::sqrt(2.0 / 3.0) * (d + 1);
    for (int i = 0; i < d; ++i)
      scale[i] = inv_std / std::sqrt(double(i + 1) * (i + 2));
  }

  void locate(const double* f) {
    double sm = 0;
    for (int j = d; j > 0; --j) {
      const double cf = f[j - 1] * scale[j - 1];
      elevated[j] = sm - j * cf;
      sm += cf;
    }
    elevated[0] = sm;

    // Round to the nearest remainder-zero lattice point.
    int sum = 0;
    for (int i = 0; i <= d; ++i) {
      const double v = elevated[i] / (d + 1);
      const double up = std::ceil(v) * (d + 1);
      const double down = std::floor(v) * (d + 1);
      const std::int32_t r = (up - elevated[i] < elevated[i] - down)
                                 ? static_cast<std::int32_t>(up)
                                 : static_cast<std::int32_t>(down);
      rem0[i] = r;
      sum += r / (d + 1);
    }

    // Rank the differential to identify the enclosing simplex.
    std::fill(rank.begin(), rank.end(), 0);
    for (int i = 0; i < d; ++i) {
      const double di = elevated[i] - rem0[i];
      for (int j = i + 1; j <= d; ++j) {
        if (di < elevated[j] - rem0[j]) ++rank[i];
        else ++rank[j];
      }
    }

    // If the rounded point is off the hyperplane, walk it back.
    for (int i = 0; i <= d; ++i) {
      rank[i] += sum;
      if (rank[i] < 0) {
        rank[i] += d + 1;
        rem0[i] += d + 1;
      } else if (rank[i] > d) {
        rank[i] -= d + 1;
        rem0[i] -= d + 1;
      }
    }

    std::fill(bary.begin(), bary.end(), 0.0);
    for (int i = 0; i <= d; ++i) {
      const double v = (elevated[i] - rem0[i]) / (d + 1);
      bary[d - rank[i]] += v;
      bary[d - rank[i] + 1] -= v;
    }
    bary[0] += 1.0 + bary[d + 1];
    for (int r = 0; r <= d; ++r)
      if (bary[r] < 0) bary[r] = 0;  // shave fp dust
  }

  // Stored key: first d coordinates of the simplex vertex with remainder r.
  void key_for(int r, std::int32_t* key) const {
    for (int i = 0; i < d; ++i)
      key[i] = rem0[i] + (rank[i] <= d - r ? r : r - (d + 1));
  }
  double weight_for(int r) const { return bary[r]; }
};

void check_features(const FeatureSet& fs, const char* what) {
  if (fs.dim < 1)
    throw ValidationError(std::string(what) + ": feature dim must be >= 1");
  if (fs.data.size() % fs.dim != 0)
    throw ValidationError(std::string(what) +
                          ": data size is not a multiple of dim");
  for (double v : fs.data)
    if (!std::isfinite(v))
      throw ValidationError(std::string(what) +
                            ": features must be finite");
}

struct Record {
  std::uint32_t vertex;
  double weight;
};

}  // namespace

struct PermutohedralLattice::Impl {
  int d = 0;
  Expansion expansion = Expansion::Full;

  std::vector<std::uint32_t> splat_uniq;  // point -> distinct-feature id
  std::int64_t n_uniq_splat = 0;
  std::vector<Record> splat_records;  // n_uniq_splat * (d+1)

  bool shared_query = true;
  std::vector<std::uint32_t> query_uniq;
  std::int64_t n_uniq_query = 0;
  std::vector<Record> query_records;

  struct Pass {
    std::int64_t active = 0;  // vertices that scatter during this pass
    std::vector<std::uint32_t> n1, n2;
  };
  std::vector<Pass> passes;  // d+1

  KeyTable verts{1};
  std::vector<double> staged;  // num_vertices * staged_channels

  // Deduplicate feature rows by exact bit pattern; rows are hashed as raw
  // int32 words.  Returns the number of distinct rows.
  std::int64_t dedupe(const FeatureSet& fs, std::vector<std::uint32_t>& ids,
                      std::vector<double>& uniq_rows) const {
    KeyTable table(2 * d, fs.count());
    ids.resize(fs.count());
    uniq_rows.clear();
    std::vector<std::int32_t> bits(2 * d);
    for (std::int64_t i = 0; i < fs.count(); ++i) {
      const double* row = fs.point(i);
      std::memcpy(bits.data(), row, d * sizeof(double));
      const std::int64_t before = table.size();
      const std::uint32_t id = table.find_or_insert(bits.data());
      ids[i] = id;
      if (table.size() > before)
        uniq_rows.insert(uniq_rows.end(), row, row + d);
    }
    return table.size();
  }

  void embed_points(const std::vector<double>& rows, std::int64_t n,
                    std::vector<Record>& records, bool insert) {
    Embedding emb(d);
    std::vector<std::int32_t> key(d);
    records.resize(n * (d + 1));
    for (std::int64_t p = 0; p < n; ++p) {
      emb.locate(rows.data() + p * d);
      for (int r = 0; r <= d; ++r) {
        emb.key_for(r, key.data());
        const std::uint32_t v =
            insert ? verts.find_or_insert(key.data()) : verts.find(key.data());
        records[p * (d + 1) + r] = {v, emb.weight_for(r)};
      }
    }
  }

  // Neighbor keys along lattice direction j.  Keys store the first d
  // coordinates; the implicit last coordinate keeps the zero sum.
  void neighbor_keys(const std::int32_t* key, int j, std::int32_t* n1,
                     std::int32_t* n2) const {
    for (int k = 0; k < d; ++k) {
      n1[k] = key[k] - 1;
      n2[k] = key[k] + 1;
    }
    if (j < d) {
      n1[j] = key[j] + d;
      n2[j] = key[j] - d;
    }
  }

  void build_adjacency() {
    passes.resize(d + 1);
    std::vector<std::int32_t> key(d), k1(d), k2(d);
    if (expansion == Expansion::Full) {
      // Grow the vertex set pass by pass so every scatter target exists.
      for (int j = 0; j <= d; ++j) {
        const std::int64_t active = verts.size();
        Pass& pass = passes[j];
        pass.active = active;
        pass.n1.resize(active);
        pass.n2.resize(active);
        for (std::int64_t v = 0; v < active; ++v) {
          std::memcpy(key.data(), verts.key(v), d * sizeof(std::int32_t));
          neighbor_keys(key.data(), j, k1.data(), k2.data());
          pass.n1[v] = verts.find_or_insert(k1.data());
          pass.n2[v] = verts.find_or_insert(k2.data());
        }
      }
    } else {
      // One ring of axis neighbors around the splatted vertices; scatters
      // from the ring outward are dropped.
      const std::int64_t ring0 = verts.size();
      for (int j = 0; j <= d; ++j) {
        for (std::int64_t v = 0; v < ring0; ++v) {
          std::memcpy(key.data(), verts.key(v), d * sizeof(std::int32_t));
          neighbor_keys(key.data(), j, k1.data(), k2.data());
          verts.find_or_insert(k1.data());
          verts.find_or_insert(k2.data());
        }
      }
      const std::int64_t m = verts.size();
      for (int j = 0; j <= d; ++j) {
        Pass& pass = passes[j];
        pass.active = m;
        pass.n1.resize(m);
        pass.n2.resize(m);
        for (std::int64_t v = 0; v < m; ++v) {
          neighbor_keys(verts.key(v), j, k1.data(), k2.data());
          pass.n1[v] = verts.find(k1.data());
          pass.n2[v] = verts.find(k2.data());
        }
      }
    }
  }

  void splat(int channels, const double* acc_scratch,
             std::vector<double>& table) const {
    const std::int64_t m = verts.size();
    table.assign(m * channels, 0.0);
    for (std::int64_t u = 0; u < n_uniq_splat; ++u) {
      const double* src = acc_scratch + u * channels;
      for (int r = 0; r <= d; ++r) {
        const Record& rec = splat_records[u * (d + 1) + r];
        double* dst = table.data() + std::size_t(rec.vertex) * channels;
        for (int c = 0; c < channels; ++c) dst[c] += rec.weight * src[c];
      }
    }
  }

  std::vector<double> accumulate(const double* values, int channels) const {
    std::vector<double> acc(n_uniq_splat * channels, 0.0);
    const std::int64_t n = splat_uniq.size();
    for (std::int64_t i = 0; i < n; ++i) {
      double* dst = acc.data() + std::size_t(splat_uniq[i]) * channels;
      const double* src = values + i * channels;
      for (int c = 0; c < channels; ++c) dst[c] += src[c];
    }
    return acc;
  }

  void blur(std::vector<double>& table, int channels) const {
    const std::int64_t m = verts.size();
    std::vector<double> next(m * channels);
    for (int j = 0; j <= d; ++j) {
      const Pass& pass = passes[j];
      std::fill(next.begin(), next.end(), 0.0);
      for (std::int64_t v = 0; v < pass.active; ++v) {
        const double* src = table.data() + v * channels;
        double* self = next.data() + v * channels;
        for (int c = 0; c < channels; ++c) self[c] += 0.5 * src[c];
        const std::uint32_t a = pass.n1[v];
        if (a != kNoVertex) {
          double* dst = next.data() + std::size_t(a) * channels;
          for (int c = 0; c < channels; ++c) dst[c] += 0.25 * src[c];
        }
        const std::uint32_t b = pass.n2[v];
        if (b != kNoVertex) {
          double* dst = next.data() + std::size_t(b) * channels;
          for (int c = 0; c < channels; ++c) dst[c] += 0.25 * src[c];
        }
      }
      table.swap(next);
    }
  }

  // Gather at the prebuilt query records and replicate onto points.  When a
  // gain model is given, each query's gather is rescaled by the model
  // evaluated at its barycentric concentration.
  void slice(const std::vector<double>& table, int channels,
             const GainModel* gm, double* out, std::int64_t n_out) const {
    const std::vector<Record>& recs =
        shared_query ? splat_records : query_records;
    const std::vector<std::uint32_t>& ids =
        shared_query ? splat_uniq : query_uniq;
    const std::int64_t n_uniq = shared_query ? n_uniq_splat : n_uniq_query;
    std::vector<double> gathered(n_uniq * channels, 0.0);
    for (std::int64_t u = 0; u < n_uniq; ++u) {
      double* dst = gathered.data() + u * channels;
      double sumsq = 0;
      for (int r = 0; r <= d; ++r) {
        const Record& rec = recs[u * (d + 1) + r];
        sumsq += rec.weight * rec.weight;
        if (rec.vertex == kNoVertex) continue;
        const double* src = table.data() + std::size_t(rec.vertex) * channels;
        for (int c = 0; c < channels; ++c) dst[c] += rec.weight * src[c];
      }
      if (gm != nullptr) {
        const double f = 1.0 / (gm->c0 + gm->c1 * sumsq);
        for (int c = 0; c < channels; ++c) dst[c] *= f;
      }
    }
    for (std::int64_t i = 0; i < n_out; ++i) {
      const double* src = gathered.data() + std::size_t(ids[i]) * channels;
      double* dst = out + i * channels;
      for (int c = 0; c < channels; ++c) dst[c] = src[c];
    }
  }
};

PermutohedralLattice::PermutohedralLattice(const FeatureSet& splat_feats,
                                           LatticeOptions opts)
    : PermutohedralLattice(splat_feats, FeatureSet{}, opts) {}

PermutohedralLattice::PermutohedralLattice(const FeatureSet& splat_feats,
                                           const FeatureSet& query_feats,
                                           LatticeOptions opts)
    : impl_(new Impl) {
  check_features(splat_feats, "lattice splat features");
  const bool has_query = !query_feats.data.empty() || query_feats.dim > 0;
  if (has_query) {
    check_features(query_feats, "lattice query features");
    if (query_feats.dim != splat_feats.dim)
      throw ValidationError("lattice: query dim does not match splat dim");
  }
  if (splat_feats.count() == 0)
    throw ValidationError("lattice: no splat points");

  d_ = splat_feats.dim;
  n_points_ = splat_feats.count();
  impl_->d = d_;
  impl_->expansion = opts.expansion;

  std::vector<double> uniq_rows;
  impl_->n_uniq_splat = impl_->dedupe(splat_feats, impl_->splat_uniq, uniq_rows);
  impl_->verts = KeyTable(d_, impl_->n_uniq_splat);
  impl_->embed_points(uniq_rows, impl_->n_uniq_splat, impl_->splat_records,
                      /*insert=*/true);
  impl_->build_adjacency();

  if (has_query) {
    impl_->shared_query = false;
    n_queries_ = query_feats.count();
    impl_->n_uniq_query =
        impl_->dedupe(query_feats, impl_->query_uniq, uniq_rows);
    impl_->embed_points(uniq_rows, impl_->n_uniq_query, impl_->query_records,
                        /*insert=*/false);
  } else {
    impl_->shared_query = true;
    n_queries_ = n_points_;
  }
}

PermutohedralLattice::~PermutohedralLattice() = default;
PermutohedralLattice::PermutohedralLattice(PermutohedralLattice&&) noexcept =
    default;
PermutohedralLattice& PermutohedralLattice::operator=(
    PermutohedralLattice&&) noexcept = default;

std::int64_t PermutohedralLattice::num_vertices() const {
  return impl_->verts.size();
}

namespace {

// Fits the slice-time correction once per (dim, expansion) by comparing the
// raw composition against the exact Gaussian sum on a deterministic point
// cloud: least squares of raw/exact on the barycentric concentration, then
// a recentering so the worst-case band of the corrected ratio is symmetric
// (1st/99th percentiles stand in for min/max so single stray points cannot
// move the constants).
GainModel calibrated_gain(int d, Expansion expansion) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, GainModel> cache;
  std::lock_guard<std::mutex> lock(mu);

  // Full expansion above dim 4 would need a combinatorially grown vertex
  // set just for this measurement; the ring truncation it avoids is a
  // few-percent effect, so the Ring1 model is shared there.
  if (expansion == Expansion::Full && d > 4)
    expansion = Expansion::Ring1;
  const std::pair<int, int> key{d, static_cast<int>(expansion)};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const std::int64_t n = expansion == Expansion::Full ? 200 : 600;
  const double side = 1.25;
  std::uint64_t state = 0x9042 + static_cast<std::uint64_t>(d);
  FeatureSet cloud;
  cloud.dim = d;
  cloud.data.resize(n * d);
  for (double& x : cloud.data) x = side * unit_double(state);

  const std::vector<double> ones(n, 1.0);
  std::vector<double> raw(n);
  PermutohedralLattice lat(cloud, {expansion});
  lat.filter(ones.data(), 1, raw.data(), /*apply_gain=*/false);

  std::vector<double> ratio(n), conc(n);
  for (std::int64_t qi = 0; qi < n; ++qi) {
    double exact = 0;
    const double* fq = cloud.point(qi);
    for (std::int64_t j = 0; j < n; ++j) {
      const double* fj = cloud.point(j);
      double dist2 = 0;
      for (int k = 0; k < d; ++k) {
        const double diff = fq[k] - fj[k];
        dist2 += diff * diff;
      }
      exact += std::exp(-0.5 * dist2);
    }
    ratio[qi] = raw[qi] / exact;
    const std::vector<double> w = lat.point_weights(qi);
    double s = 0;
    for (double x : w) s += x * x;
    conc[qi] = s;
  }

  double sm = 0, rm = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    sm += conc[i];
    rm += ratio[i];
  }
  sm /= static_cast<double>(n);
  rm /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    sxy += (conc[i] - sm) * (ratio[i] - rm);
    sxx += (conc[i] - sm) * (conc[i] - sm);
  }
  GainModel gm;
  gm.c1 = sxx > 0 ? sxy / sxx : 0.0;
  gm.c0 = rm - gm.c1 * sm;

  std::vector<double> corrected(n);
  for (std::int64_t i = 0; i < n; ++i)
    corrected[i] = ratio[i] / (gm.c0 + gm.c1 * conc[i]);
  std::sort(corrected.begin(), corrected.end());
  const double lo = corrected[static_cast<std::size_t>(0.01 * (n - 1))];
  const double hi = corrected[static_cast<std::size_t>(0.99 * (n - 1))];
  const double center = 0.5 * (lo + hi);
  gm.c0 *= center;
  gm.c1 *= center;
  cache.emplace(key, gm);
  return gm;
}

}  // namespace

void PermutohedralLattice::filter(const double* values, int channels,
                                  double* out, bool apply_gain) const {
  if (channels < 1) throw ValidationError("lattice filter: channels < 1");
  std::vector<double> acc = impl_->accumulate(values, channels);
  std::vector<double> table;
  impl_->splat(channels, acc.data(), table);
  impl_->blur(table, channels);
  if (apply_gain) {
    const GainModel gm = calibrated_gain(d_, impl_->expansion);
    impl_->slice(table, channels, &gm, out, n_queries_);
  } else {
    impl_->slice(table, channels, nullptr, out, n_queries_);
  }
}

void PermutohedralLattice::splat_values(const double* values, int channels) {
  if (channels < 1) throw ValidationError("lattice splat: channels < 1");
  std::vector<double> acc = impl_->accumulate(values, channels);
  impl_->splat(channels, acc.data(), impl_->staged);
  staged_channels_ = channels;
}

void PermutohedralLattice::blur_values() {
  if (staged_channels_ == 0)
    throw ValidationError("lattice blur: nothing splatted");
  impl_->blur(impl_->staged, staged_channels_);
}

std::vector<double> PermutohedralLattice::slice_values() const {
  if (staged_channels_ == 0)
    throw ValidationError("lattice slice: nothing splatted");
  std::vector<double> out(n_queries_ * staged_channels_);
  impl_->slice(impl_->staged, staged_channels_, nullptr, out.data(),
               n_queries_);
  return out;
}

std::vector<double> PermutohedralLattice::slice_values(
    const FeatureSet& queries) const {
  if (staged_channels_ == 0)
    throw ValidationError("lattice slice: nothing splatted");
  check_features(queries, "lattice slice queries");
  if (queries.dim != d_)
    throw ValidationError("lattice slice: query dim does not match");
  const int channels = staged_channels_;
  std::vector<double> out(queries.count() * channels, 0.0);
  Embedding emb(d_);
  std::vector<std::int32_t> key(d_);
  for (std::int64_t i = 0; i < queries.count(); ++i) {
    emb.locate(queries.point(i));
    double* dst = out.data() + i * channels;
    for (int r = 0; r <= d_; ++r) {
      emb.key_for(r, key.data());
      const std::uint32_t v = impl_->verts.find(key.data());
      if (v == kNoVertex) continue;
      const double w = emb.weight_for(r);
      const double* src = impl_->staged.data() + std::size_t(v) * channels;
      for (int c = 0; c < channels; ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

double PermutohedralLattice::staged_total(int channel) const {
  if (channel < 0 || channel >= staged_channels_)
    throw ValidationError("lattice staged_total: bad channel");
  double total = 0;
  const std::int64_t m = impl_->verts.size();
  for (std::int64_t v = 0; v < m; ++v)
    total += impl_->staged[v * staged_channels_ + channel];
  return total;
}

std::vector<double> PermutohedralLattice::point_weights(std::int64_t i) const {
  if (i < 0 || i >= n_points_)
    throw ValidationError("lattice point_weights: index out of range");
  const std::int64_t u = impl_->splat_uniq[i];
  std::vector<double> w(d_ + 1);
  for (int r = 0; r <= d_; ++r)
    w[r] = impl_->splat_records[u * (d_ + 1) + r].weight;
  return w;
}

std::vector<std::uint32_t> PermutohedralLattice::point_vertices(
    std::int64_t i) const {
  if (i < 0 || i >= n_points_)
    throw ValidationError("lattice point_vertices: index out of range");
  const std::int64_t u = impl_->splat_uniq[i];
  std::vector<std::uint32_t> v(d_ + 1);
  for (int r = 0; r <= d_; ++r)
    v[r] = impl_->splat_records[u * (d_ + 1) + r].vertex;
  return v;
}

std::vector<int> PermutohedralLattice::vertex_key(std::int64_t v) const {
  if (v < 0 || v >= num_vertices())
    throw ValidationError("lattice vertex_key: index out of range");
  const std::int32_t* k = impl_->verts.key(v);
  std::vector<int> full(d_ + 1);
  int sum = 0;
  for (int i = 0; i < d_; ++i) {
    full[i] = k[i];
    sum += k[i];
  }
  full[d_] = -sum;
  return full;
}

namespace {

std::vector<double> run_gaussian_filter(const FeatureSet& splat_feats,
                                        const std::vector<double>& values,
                                        int channels,
                                        const FeatureSet& query_feats,
                                        const std::vector<double>& inv_bw) {
  check_features(splat_feats, "gaussian_filter splat features");
  check_features(query_feats, "gaussian_filter query features");
  if (query_feats.dim != splat_feats.dim)
    throw ValidationError("gaussian_filter: feature dims do not match");
  if (static_cast<std::int64_t>(values.size()) !=
      splat_feats.count() * channels)
    throw ValidationError("gaussian_filter: values size mismatch");

  const int d = splat_feats.dim;
  FeatureSet s{d, splat_feats.data};
  FeatureSet q{d, query_feats.data};
  for (std::int64_t i = 0; i < s.count(); ++i)
    for (int k = 0; k < d; ++k) s.data[i * d + k] *= inv_bw[k];
  for (std::int64_t i = 0; i < q.count(); ++i)
    for (int k = 0; k < d; ++k) q.data[i * d + k] *= inv_bw[k];

  LatticeOptions opts;
  opts.expansion = Expansion::Ring1;
  const bool same = splat_feats.data == query_feats.data;
  std::vector<double> out(q.count() * channels);
  if (same) {
    PermutohedralLattice lat(s, opts);
    lat.filter(values.data(), channels, out.data());
  } else {
    PermutohedralLattice lat(s, q, opts);
    lat.filter(values.data(), channels, out.data());
  }
  return out;
}

}  // namespace

std::vector<double> gaussian_filter(const FeatureSet& splat_feats,
                                    const std::vector<double>& values,
                                    int channels,
                                    const FeatureSet& query_feats,
                                    double bandwidth) {
  if (!(bandwidth > 0))
    throw ValidationError("gaussian_filter: bandwidth must be positive");
  std::vector<double> inv(std::max(splat_feats.dim, 1), 1.0 / bandwidth);
  return run_gaussian_filter(splat_feats, values, channels, query_feats, inv);
}

std::vector<double> gaussian_filter(const FeatureSet& splat_feats,
                                    const std::vector<double>& values,
                                    int channels,
                                    const FeatureSet& query_feats,
                                    const std::vector<double>& bandwidths) {
  if (static_cast<int>(bandwidths.size()) != splat_feats.dim)
    throw ValidationError(
        "gaussian_filter: need one bandwidth per feature dimension");
  std::vector<double> inv(bandwidths.size());
  for (std::size_t i = 0; i < bandwidths.size(); ++i) {
    if (!(bandwidths[i] > 0))
      throw ValidationError("gaussian_filter: bandwidth must be positive");
    inv[i] = 1.0 / bandwidths[i];
  }
  return run_gaussian_filter(splat_feats, values, channels, query_feats, inv);
}

}  // namespace patchfuse
