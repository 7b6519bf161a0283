#pragma once

#include <string>
#include <vector>

#include "patchfuse/core.hpp"
#include "patchfuse/metrics.hpp"

namespace patchfuse {

// On-disk patch bundle: a JSON manifest next to raw float32 tensors.
// manifest: { "width", "height", "labels" (must be 6),
//             "patches": [ { "id", "x0", "y0", "width", "height",
//                            "size_class", "data" } ] }
// data files: height*width*6 little-endian float32, row-major,
// channel fastest.
struct Bundle {
  PixelGrid grid;
  std::vector<SoftmaxPatch> patches;
};

// Writes manifest.json and one .bin per patch into dir (created if
// missing).  Returns the manifest path.  All writes are atomic
// (temp file + rename).
std::string write_bundle(const std::string& dir, const Bundle& bundle);

// Validates shapes and byte lengths; throws ValidationError on any
// mismatch.  Patches are run through validate_patch.
Bundle read_bundle(const std::string& manifest_path);

// Binary PGM (P5, maxval 255); label values must be <= 9.
void write_label_map(const std::string& path, const GlobalLabelMap& labels);
GlobalLabelMap read_label_map(const std::string& path);

// Raw height*width*10 little-endian float32 marginals dump.
void write_marginals(const std::string& path, const BeliefField& q);

}  // namespace patchfuse
