#pragma once

#include <memory>
#include <vector>

#include "patchfuse/components.hpp"
#include "patchfuse/core.hpp"

namespace patchfuse {

struct MessageField {
  PixelGrid grid;
  std::vector<double> msg;  // grid.size() * kGlobalLabels, finite
};

BeliefField init_uniform(const PixelGrid& grid);

// Parallel mean-field updates over the fused patch model.  All lattices,
// normalizers and the component set are frozen at construction; step()
// reads q_current, writes q_next, swaps.  Worker count comes from the
// PATCHFUSE_WORKERS environment variable (default 1); results are
// worker-count invariant because each patch writes its own buffer and the
// merge runs in patch order.
class MeanFieldEngine {
 public:
  MeanFieldEngine(std::vector<SoftmaxPatch> patches, const PixelGrid& grid,
                  const InferenceConfig& config);
  ~MeanFieldEngine();
  MeanFieldEngine(MeanFieldEngine&&) noexcept;

  const BeliefField& q() const;
  int iteration() const;
  const ComponentSet& components() const;

  void step();
  void run();  // config.iterations steps from the current state

  // Message fields of the would-be next step, for diagnostics and oracles.
  MessageField smoothness_messages() const;
  MessageField cnn_messages() const;
  MessageField icc_message_field() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// init_uniform + config.iterations steps.
BeliefField run_meanfield(const std::vector<SoftmaxPatch>& patches,
                          const PixelGrid& grid,
                          const InferenceConfig& config);

// y_i = argmax_l Q_i(l), ties toward the smaller label.
GlobalLabelMap map_labels(const BeliefField& q);

}  // namespace patchfuse
