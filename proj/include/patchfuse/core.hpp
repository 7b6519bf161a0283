#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchfuse {

// Label space: global maps use ids 0..9, patch-local softmaxes use 0..5.
// Id 0 is background in both spaces.
inline constexpr int kGlobalLabels = 10;
inline constexpr int kLocalLabels = 6;
inline constexpr int kBackgroundLabel = 0;

// Input probability rows may be off by this much before renormalization.
inline constexpr double kProbSumTolerance = 1e-4;

// Raised on malformed inputs (bad shapes, bad manifests, bad probabilities).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when inference itself goes wrong (non-finite beliefs etc).
struct InferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PixelGrid {
  int width = 0;
  int height = 0;

  bool valid() const { return width > 0 && height > 0; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(width) * height;
  }
  bool contains(int col, int row) const {
    return col >= 0 && col < width && row >= 0 && row < height;
  }
  std::int64_t index(int col, int row) const {
    return static_cast<std::int64_t>(row) * width + col;
  }
};

// Bounds-checked row-major linearization.
std::int64_t linear_index(const PixelGrid& grid, int col, int row);

enum class SizeClass { Large, Medium, Small };

const char* to_string(SizeClass c);
SizeClass parse_size_class(const std::string& s);

// One network output window: a dense per-pixel softmax over the local
// label space, placed at (x0, y0) in the global image.  Probabilities are
// stored row-major with the channel index fastest.
struct SoftmaxPatch {
  std::string id;
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  SizeClass size_class = SizeClass::Small;
  std::vector<double> probs;  // height * width * kLocalLabels

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(width) * height;
  }
  const double* row_col(int row, int col) const {
    return probs.data() +
           (static_cast<std::int64_t>(row) * width + col) * kLocalLabels;
  }
  double* row_col(int row, int col) {
    return probs.data() +
           (static_cast<std::int64_t>(row) * width + col) * kLocalLabels;
  }
  // Global coordinates of a patch-local pixel.
  int global_col(std::int64_t k) const { return x0 + static_cast<int>(k % width); }
  int global_row(std::int64_t k) const { return y0 + static_cast<int>(k / width); }
};

// Per-pixel beliefs over the global label space, row-major, channel fastest.
struct BeliefField {
  PixelGrid grid;
  std::vector<double> q;  // grid.size() * kGlobalLabels

  double* at(std::int64_t pixel) { return q.data() + pixel * kGlobalLabels; }
  const double* at(std::int64_t pixel) const {
    return q.data() + pixel * kGlobalLabels;
  }
};

struct GlobalLabelMap {
  PixelGrid grid;
  std::vector<std::uint8_t> labels;  // grid.size(), values 0..9
};

struct InferenceConfig {
  double w_smo = 1.0;
  double w_cnn_large = 1.0;
  double w_cnn_medium = 1.0;
  double w_cnn_small = 1.0;
  double w_icc = 1.0;
  double theta1 = 0.2;   // bandwidth of the probability part of features
  double theta2 = 40.0;  // bandwidth of the position part, in pixels
  double theta_cnn = 0.2;
  int t_max = 2;
  int iterations = 50;
  double fg_threshold = 0.5;
  int connectivity = 4;  // 4 or 8
  int min_region_area = 50;
  bool icc_exclude_background = false;

  double w_cnn(SizeClass c) const {
    switch (c) {
      case SizeClass::Large: return w_cnn_large;
      case SizeClass::Medium: return w_cnn_medium;
      case SizeClass::Small: return w_cnn_small;
    }
    return w_cnn_small;
  }
};

InferenceConfig default_config();

// Throws ValidationError when the config is unusable.
void validate_config(const InferenceConfig& config);

// Checks placement and probability invariants, renormalizes every pixel row
// to sum exactly to 1, and returns the cleaned patch.  Throws
// ValidationError when the patch cannot be accepted.
SoftmaxPatch validate_patch(SoftmaxPatch patch, const PixelGrid& grid);

// Uniform beliefs over the global label space.
BeliefField uniform_beliefs(const PixelGrid& grid);

}  // namespace patchfuse
