#pragma once

#include <cstdint>

#include "firn/model.hpp"

namespace firn {

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators shaped like the parameters.
struct AdamState {
  AdamOptions options;
  Parameters first;
  Parameters second;
  std::int64_t step = 0;
};

AdamState make_adam_state(const Parameters& params, const AdamOptions& options = {});

/// Bias-corrected Adam update with a constant learning rate.
void adam_step(Parameters& params, const Parameters& grad, AdamState& state);

}  // namespace firn
