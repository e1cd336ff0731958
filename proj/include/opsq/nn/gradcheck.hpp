// Copyright 2026 The opsq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "opsq/nn/layers.hpp"

namespace opsq::nn {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-5;
/// Denominator floor of the relative error, keeping near-zero gradients from
/// turning rounding noise into large ratios.
inline constexpr double kGradcheckFloor = 1e-4;

double relative_error(double analytic, double numeric);

struct GradcheckEntry {
  std::string layer;
  double worst_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::string format() const;
};

/// Test seam: lets a fixture substitute the convolution backward pass used by
/// the conv layer check.
struct GradcheckHooks {
  std::function<ConvGrads<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&)> conv_backward;
};

/// Central-difference checks at float64 of every layer (conv, ELU, max-pool,
/// flatten, each LSTM gate, the stacked LSTM with dropout, dense, softmax
/// cross-entropy) and of the composed CNN-LSTM on a small configuration.
GradcheckReport run_gradcheck(std::uint64_t seed, const GradcheckHooks& hooks = {});

}  // namespace opsq::nn
