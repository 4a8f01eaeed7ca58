#pragma once

#include "flipbound/types.hpp"

#include <array>

namespace flipbound {

inline constexpr Index kImageSide = 32;
inline constexpr Index kImageChannels = 3;
inline constexpr Index kPaddedChannels = 4;
inline constexpr Index kPixelCount = kImageSide * kImageSide * kImageChannels;     // 3072
inline constexpr Index kCoeffCount = kImageSide * kImageSide * kPaddedChannels;    // 4096

/// 32 x 32 RGB image with values nominally in [0, 1].
/// Flat layout: index (row * 32 + col) * 3 + channel.
struct ImageTensor {
  Vector pixels = Vector::Zero(kPixelCount);

  double& at(Index row, Index col, Index ch) { return pixels[(row * kImageSide + col) * kImageChannels + ch]; }
  double at(Index row, Index col, Index ch) const {
    return pixels[(row * kImageSide + col) * kImageChannels + ch];
  }

  /// Finite and within [-tol, 1 + tol].
  bool in_bounds(double tol = 1e-12) const;
};

/// Coefficients of the fully decomposed 32 x 32 x 4 Haar volume.
/// Flat layout: index (row * 32 + col) * 4 + channel, in the usual nested
/// subband arrangement (low-pass block in the leading corner).
struct WaveletCoeffs {
  Vector coeffs = Vector::Zero(kCoeffCount);
};

/// Zero-pads the channel axis to 4 and applies the orthonormal Haar step
/// (a, b) -> ((a + b) / sqrt 2, (a - b) / sqrt 2) along every axis whose
/// current low-pass extent is at least 2, recursing on the low-pass block
/// until it is a single coefficient.
WaveletCoeffs haar3d_forward(const ImageTensor& image);

/// Exact inverse of haar3d_forward; the padding channel is dropped and no
/// clamping is applied.
ImageTensor haar3d_inverse(const WaveletCoeffs& coeffs);

/// Forward / inverse on the raw padded volume (4096 values, same layout as
/// WaveletCoeffs). Exposed for tests and for the legitimacy check.
Vector haar3d_forward_volume(const Vector& volume);
Vector haar3d_inverse_volume(const Vector& coeffs);

}  // namespace flipbound
