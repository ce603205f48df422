// SPDX-License-Identifier: Apache-2.0
// Learnable stationary (undecimated) wavelet transform.
#pragma once

#include <string>
#include <vector>

#include "npmixer/tensor.hpp"

namespace npmixer {

/// Reference taps of one wavelet family in the convolution convention used here.
struct FilterTaps {
  std::string name;
  std::vector<double> h0, h1, g0, g1;
};

/// Names accepted by init_filters, in a stable order.
const std::vector<std::string>& supported_wavelets();

/// Reference taps for a family, zero-padded to a common length.
/// Throws ConfigError listing the supported names.
FilterTaps reference_filters(const std::string& name);

template <typename T>
struct WaveletFilterBank {
  std::string init_name;
  Tensor<T> h0, h1, g0, g1;
  std::vector<double> w_init_lo, w_init_hi;

  std::size_t length() const { return h0.numel(); }
};

/// Filters set to the family's taps. learnable=false leaves requires_grad off.
template <typename T>
WaveletFilterBank<T> init_filters(const std::string& name, bool learnable = true);

template <typename T>
struct WaveletCoefficients {
  Tensor<T> approx;
  std::vector<Tensor<T>> details;  // D_1 .. D_M
  std::size_t levels() const { return details.size(); }
};

/// A_m = h0 (*) A_{m-1}, D_m = h1 (*) A_{m-1} with dilation 2^(m-1), causal circular.
template <typename T>
WaveletCoefficients<T> swt_decompose(const Tensor<T>& x, const WaveletFilterBank<T>& bank, std::size_t levels);

/// A_{m-1} = (g0 (*) A_m + g1 (*) D_m) / 2 with the anti-causal convention.
/// Throws ContractError when coeffs.levels() != levels.
template <typename T>
Tensor<T> iswt_reconstruct(const WaveletCoefficients<T>& coeffs, const WaveletFilterBank<T>& bank,
                           std::size_t levels);

}  // namespace npmixer
