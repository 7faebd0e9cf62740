#pragma once

#include "lossmix/tensor.hpp"

namespace lossmix {

/// One training example: noisy model input and its clean target, both
/// log-power spectrogram tensors (frames x bins).
struct SamplePair {
  Tensor noisy;
  Tensor clean;
};

/// lambda-mixture of two samples. Only the noisy inputs are mixed; both
/// clean targets are retained untouched.
struct VirtualSample {
  Tensor mixed;    // lam * x_j + (1 - lam) * x_k
  Tensor clean_j;
  Tensor clean_k;
  double lam = 1.0;
};

}  // namespace lossmix
