#pragma once

#include "flipbound/qr.hpp"
#include "flipbound/wavelet.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flipbound {

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kCifarPlane = 0;
inline constexpr int kCifarShip = 8;

/// Images kept from one CIFAR-10 batch. Labels are binary: 0 for the first
/// kept class, 1 for the second. `records` holds each image's record number
/// within the batch.
struct LabeledImages {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::vector<std::size_t> records;
};

/// Parses CIFAR-10 binary records (1 label byte, then 1024 R, 1024 G and
/// 1024 B bytes, each plane row-major) and keeps those whose label is one of
/// `keep_classes`. Pixels are scaled by 1/255.
LabeledImages load_cifar_batch(std::span<const std::uint8_t> raw, std::pair<int, int> keep_classes);

/// Reads a batch file; format errors carry the file name and byte offset.
LabeledImages load_cifar_file(const std::string& path, std::pair<int, int> keep_classes);

/// Forward transform, zero every coefficient outside `sel`, inverse transform.
ImageTensor reconstruct_from_subset(const ImageTensor& image, const CoefficientSelector& sel);

/// Rows are the Haar coefficients of each image.
Matrix coefficient_matrix(const std::vector<ImageTensor>& images);

/// Feature-space dataset: one row of selected wavelet coefficients per sample.
struct Dataset {
  Matrix features;  // n x k
  std::vector<int> labels;
  std::array<std::string, 2> class_names{"class0", "class1"};
  std::vector<std::string> provenance;  // "<file>:<record>" per row, may be empty

  Index size() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  Vector row(Index i) const { return features.row(i).transpose(); }
  /// Row count matches labels, labels binary, provenance empty or complete.
  void validate() const;
};

/// Applies the selector to every image's coefficients.
Dataset make_dataset(const std::vector<ImageTensor>& images, const std::vector<int>& labels,
                     const CoefficientSelector& sel);

/// CSV with header `source,label,f0,...`; values at 17 significant digits.
void save_dataset_csv(const Dataset& data, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

}  // namespace flipbound
