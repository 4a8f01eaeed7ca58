#include "flipbound/wavelet.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace flipbound {

namespace {

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

struct Extent {
  std::array<Index, 3> size;  // row, col, channel
};

constexpr std::array<Index, 3> kStride = {kImageSide * kPaddedChannels, kPaddedChannels, 1};

// Sequence of low-pass block extents visited by the decomposition, largest first.
std::vector<Extent> schedule() {
  std::vector<Extent> levels;
  Extent e{{kImageSide, kImageSide, kPaddedChannels}};
  while (e.size[0] > 1 || e.size[1] > 1 || e.size[2] > 1) {
    levels.push_back(e);
    for (auto& s : e.size) {
      if (s > 1) s /= 2;
    }
  }
  return levels;
}

// One analysis (or synthesis) pass along `axis` over the block `e`.
void haar_axis(Vector& v, const Extent& e, int axis, bool inverse) {
  const Index n = e.size[axis];
  if (n < 2) return;
  const Index half = n / 2;
  const int a1 = (axis + 1) % 3;
  const int a2 = (axis + 2) % 3;
  std::vector<double> line(static_cast<std::size_t>(n));
  for (Index i = 0; i < e.size[a1]; ++i) {
    for (Index j = 0; j < e.size[a2]; ++j) {
      const Index base = i * kStride[a1] + j * kStride[a2];
      const Index step = kStride[axis];
      if (!inverse) {
        for (Index k = 0; k < half; ++k) {
          const double a = v[base + (2 * k) * step];
          const double b = v[base + (2 * k + 1) * step];
          line[k] = (a + b) * kInvSqrt2;
          line[k + half] = (a - b) * kInvSqrt2;
        }
      } else {
        for (Index k = 0; k < half; ++k) {
          const double lo = v[base + k * step];
          const double hi = v[base + (k + half) * step];
          line[2 * k] = (lo + hi) * kInvSqrt2;
          line[2 * k + 1] = (lo - hi) * kInvSqrt2;
        }
      }
      for (Index k = 0; k < n; ++k) v[base + k * step] = line[k];
    }
  }
}

}  // namespace

bool ImageTensor::in_bounds(double tol) const {
  if (!pixels.allFinite()) return false;
  return pixels.minCoeff() >= -tol && pixels.maxCoeff() <= 1.0 + tol;
}

Vector haar3d_forward_volume(const Vector& volume) {
  if (volume.size() != kCoeffCount) throw ShapeError("Haar volume must have 4096 entries");
  Vector v = volume;
  for (const Extent& e : schedule()) {
    for (int axis = 0; axis < 3; ++axis) haar_axis(v, e, axis, false);
  }
  return v;
}

Vector haar3d_inverse_volume(const Vector& coeffs) {
  if (coeffs.size() != kCoeffCount) throw ShapeError("Haar coefficient vector must have 4096 entries");
  Vector v = coeffs;
  const auto levels = schedule();
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    for (int axis = 2; axis >= 0; --axis) haar_axis(v, *it, axis, true);
  }
  return v;
}

WaveletCoeffs haar3d_forward(const ImageTensor& image) {
  Vector volume = Vector::Zero(kCoeffCount);
  for (Index p = 0; p < kImageSide * kImageSide; ++p) {
    for (Index ch = 0; ch < kImageChannels; ++ch) {
      volume[p * kPaddedChannels + ch] = image.pixels[p * kImageChannels + ch];
    }
  }
  return WaveletCoeffs{haar3d_forward_volume(volume)};
}

ImageTensor haar3d_inverse(const WaveletCoeffs& coeffs) {
  const Vector volume = haar3d_inverse_volume(coeffs.coeffs);
  ImageTensor image;
  for (Index p = 0; p < kImageSide * kImageSide; ++p) {
    for (Index ch = 0; ch < kImageChannels; ++ch) {
      image.pixels[p * kImageChannels + ch] = volume[p * kPaddedChannels + ch];
    }
  }
  return image;
}

}  // namespace flipbound
