#include "flipbound/surrogate.hpp"

#include "flipbound/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace flipbound {

namespace {

constexpr double kSwapRate = 0.1;

using Rgb = std::array<double, 3>;

class Canvas {
 public:
  Canvas() : px_(kImageSide * kImageSide) {}

  Rgb& at(int r, int c) { return px_[static_cast<std::size_t>(r * kImageSide + c)]; }

  void fill_rows(int r0, int r1, const Rgb& top, const Rgb& bottom) {
    for (int r = std::max(r0, 0); r < std::min<int>(r1, kImageSide); ++r) {
      const double t = r1 > r0 + 1 ? static_cast<double>(r - r0) / (r1 - r0 - 1) : 0.0;
      for (int c = 0; c < kImageSide; ++c) {
        for (int ch = 0; ch < 3; ++ch) at(r, c)[ch] = (1 - t) * top[ch] + t * bottom[ch];
      }
    }
  }

  // Filled ellipse, axes (a, b) rotated by theta.
  void ellipse(double cr, double cc, double a, double b, double theta, const Rgb& color) {
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (int r = 0; r < kImageSide; ++r) {
      for (int c = 0; c < kImageSide; ++c) {
        const double dr = r - cr;
        const double dc = c - cc;
        const double u = dc * ct + dr * st;
        const double v = -dc * st + dr * ct;
        if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) at(r, c) = color;
      }
    }
  }

  void rect(int r0, int c0, int r1, int c1, const Rgb& color) {
    for (int r = std::max(r0, 0); r < std::min<int>(r1, kImageSide); ++r) {
      for (int c = std::max(c0, 0); c < std::min<int>(c1, kImageSide); ++c) at(r, c) = color;
    }
  }

  // CIFAR record body: R plane, G plane, B plane.
  void emit(std::vector<std::uint8_t>& out, std::mt19937_64& rng, double noise) const {
    std::normal_distribution<double> n(0.0, noise);
    std::array<std::vector<std::uint8_t>, 3> planes;
    for (auto& p : planes) p.resize(px_.size());
    for (std::size_t i = 0; i < px_.size(); ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(px_[i][static_cast<std::size_t>(ch)] + n(rng), 0.0, 1.0);
        planes[static_cast<std::size_t>(ch)][i] = static_cast<std::uint8_t>(std::lround(20.0 + 215.0 * v));
      }
    }
    for (const auto& p : planes) out.insert(out.end(), p.begin(), p.end());
  }

 private:
  std::vector<Rgb> px_;
};

Rgb jitter(const Rgb& base, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  Rgb out;
  for (std::size_t ch = 0; ch < 3; ++ch) out[ch] = std::clamp(base[ch] + u(rng), 0.0, 1.0);
  return out;
}

void clutter(Canvas& canvas, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int blobs = static_cast<int>(u(rng) * 3);
  for (int k = 0; k < blobs; ++k) {
    canvas.ellipse(u(rng) * 32, u(rng) * 32, 1 + 3 * u(rng), 1 + 3 * u(rng), u(rng) * 3.14159,
                   jitter({0.5, 0.5, 0.5}, 0.45, rng));
  }
}

void plane_scene(Canvas& canvas, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  canvas.fill_rows(0, 32, jitter({0.45, 0.6, 0.85}, 0.2, rng), jitter({0.7, 0.78, 0.9}, 0.2, rng));
  if (u(rng) < 0.4) {  // low-altitude shots with ground or sea in view
    const int horizon = 20 + static_cast<int>(u(rng) * 8);
    canvas.fill_rows(horizon, 32, jitter({0.35, 0.4, 0.45}, 0.2, rng), jitter({0.25, 0.3, 0.4}, 0.2, rng));
  }
  clutter(canvas, rng);
  const double cr = 8 + 16 * u(rng);
  const double cc = 8 + 16 * u(rng);
  const double len = 5 + 5 * u(rng);
  const double theta = (u(rng) - 0.5) * 1.2;
  const Rgb body = jitter({0.8, 0.8, 0.82}, 0.2, rng);
  canvas.ellipse(cr, cc, len, 1.2 + u(rng), theta, body);
  canvas.ellipse(cr, cc, 1.0 + 0.5 * u(rng), 0.6 * len + 2 * u(rng), theta, body);
}

void ship_scene(Canvas& canvas, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int horizon = 10 + static_cast<int>(u(rng) * 12);
  canvas.fill_rows(0, horizon, jitter({0.5, 0.62, 0.82}, 0.2, rng), jitter({0.7, 0.76, 0.85}, 0.2, rng));
  canvas.fill_rows(horizon, 32, jitter({0.2, 0.35, 0.55}, 0.2, rng), jitter({0.12, 0.25, 0.42}, 0.15, rng));
  clutter(canvas, rng);
  const int width = 10 + static_cast<int>(u(rng) * 14);
  const int height = 3 + static_cast<int>(u(rng) * 4);
  const int c0 = static_cast<int>(u(rng) * (32 - width));
  const int top = horizon - height / 2;
  const Rgb hull = jitter({0.35, 0.33, 0.33}, 0.25, rng);
  canvas.rect(top, c0, top + height, c0 + width, hull);
  const int deck = 3 + static_cast<int>(u(rng) * 5);
  canvas.rect(top - deck, c0 + width / 4, top, c0 + width / 4 + std::max(3, width / 3),
              jitter({0.75, 0.75, 0.75}, 0.2, rng));
}

}  // namespace

std::vector<std::uint8_t> synthesize_cifar_records(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> out;
  out.reserve(count * kCifarRecordBytes);
  for (std::size_t i = 0; i < count; ++i) {
    // Mostly alternating planes and ships, with one distractor in ten.
    const int label = i % 10 == 9 ? 3 : (i % 2 == 0 ? kCifarPlane : kCifarShip);
    out.push_back(static_cast<std::uint8_t>(label));
    Canvas canvas;
    // A share of records shows the other class's scene, like the ambiguous
    // and mislabeled images of the real set.
    const bool swapped = u(rng) < kSwapRate;
    if (label == kCifarShip) {
      swapped ? plane_scene(canvas, rng) : ship_scene(canvas, rng);
    } else if (label == kCifarPlane) {
      swapped ? ship_scene(canvas, rng) : plane_scene(canvas, rng);
    } else {
      canvas.fill_rows(0, 32, jitter({0.5, 0.4, 0.3}, 0.3, rng), jitter({0.4, 0.5, 0.3}, 0.3, rng));
      clutter(canvas, rng);
    }
    canvas.emit(out, rng, 0.04);
  }
  return out;
}

void write_surrogate_cifar(const std::filesystem::path& dir, std::size_t records_per_batch, std::size_t test_records,
                           std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, std::size_t count, std::uint64_t s) {
    const auto bytes = synthesize_cifar_records(count, s);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  };
  for (int b = 1; b <= 5; ++b) {
    write("data_batch_" + std::to_string(b) + ".bin", records_per_batch, seed * 7919 + static_cast<std::uint64_t>(b));
  }
  write("test_batch.bin", test_records, seed * 7919 + 1000);
}

}  // namespace flipbound
