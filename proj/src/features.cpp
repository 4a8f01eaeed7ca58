#include "flipbound/features.hpp"

#include "flipbound/csv.hpp"

#include <fstream>
#include <iterator>

namespace flipbound {

LabeledImages load_cifar_batch(std::span<const std::uint8_t> raw, std::pair<int, int> keep_classes) {
  for (int c : {keep_classes.first, keep_classes.second}) {
    if (c < 0 || c > 9) throw InvalidParameter("CIFAR-10 label " + std::to_string(c) + " does not exist");
  }
  if (keep_classes.first == keep_classes.second) throw InvalidParameter("the two kept classes must differ");
  if (raw.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = raw.size() - raw.size() % kCifarRecordBytes;
    throw FormatError("truncated CIFAR record starting at byte offset " + std::to_string(offset));
  }

  LabeledImages out;
  constexpr std::size_t plane = kImageSide * kImageSide;
  const std::size_t count = raw.size() / kCifarRecordBytes;
  for (std::size_t rec = 0; rec < count; ++rec) {
    const auto record = raw.subspan(rec * kCifarRecordBytes, kCifarRecordBytes);
    const int label = record[0];
    if (label > 9) {
      throw FormatError("invalid CIFAR label " + std::to_string(label) + " at byte offset " +
                        std::to_string(rec * kCifarRecordBytes));
    }
    if (label != keep_classes.first && label != keep_classes.second) continue;
    ImageTensor image;
    for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) {
        image.pixels[static_cast<Index>(p * kImageChannels + ch)] = record[1 + ch * plane + p] / 255.0;
      }
    }
    out.images.push_back(std::move(image));
    out.labels.push_back(label == keep_classes.first ? 0 : 1);
    out.records.push_back(rec);
  }
  return out;
}

LabeledImages load_cifar_file(const std::string& path, std::pair<int, int> keep_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR batch " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return load_cifar_batch(bytes, keep_classes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

ImageTensor reconstruct_from_subset(const ImageTensor& image, const CoefficientSelector& sel) {
  sel.validate(kCoeffCount);
  const WaveletCoeffs full = haar3d_forward(image);
  WaveletCoeffs kept;
  for (Index idx : sel.indices) kept.coeffs[idx] = full.coeffs[idx];
  return haar3d_inverse(kept);
}

Matrix coefficient_matrix(const std::vector<ImageTensor>& images) {
  Matrix m(static_cast<Index>(images.size()), kCoeffCount);
  for (std::size_t i = 0; i < images.size(); ++i) {
    m.row(static_cast<Index>(i)) = haar3d_forward(images[i]).coeffs.transpose();
  }
  return m;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(features.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int label : labels) {
    if (label != 0 && label != 1) throw InvalidInput("dataset labels must be 0 or 1");
  }
  if (!provenance.empty() && provenance.size() != labels.size()) {
    throw ShapeError("dataset provenance does not cover every row");
  }
}

Dataset make_dataset(const std::vector<ImageTensor>& images, const std::vector<int>& labels,
                     const CoefficientSelector& sel) {
  sel.validate(kCoeffCount);
  Dataset data;
  data.features.resize(static_cast<Index>(images.size()), static_cast<Index>(sel.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    data.features.row(static_cast<Index>(i)) = apply_selector(haar3d_forward(images[i]).coeffs, sel).transpose();
  }
  data.labels = labels;
  data.validate();
  return data;
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# classes=" << data.class_names[0] << ',' << data.class_names[1] << '\n';
  out << "source,label";
  for (Index c = 0; c < data.feature_dim(); ++c) out << ",f" << c;
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    out << (data.provenance.empty() ? std::to_string(i) : data.provenance[static_cast<std::size_t>(i)]) << ','
        << data.labels[static_cast<std::size_t>(i)];
    for (Index c = 0; c < data.feature_dim(); ++c) out << ',' << format_double(data.features(i, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path);
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw FormatError(path + ":" + std::to_string(lineno) + ": " + what);
  };

  if (!std::getline(in, line)) fail("empty file");
  ++lineno;
  constexpr std::string_view kClassTag = "# classes=";
  if (line.rfind(kClassTag, 0) != 0) fail("missing class header");
  const auto names = split_csv_line(std::string_view(line).substr(kClassTag.size()));
  if (names.size() != 2) fail("expected two class names");
  data.class_names = {names[0], names[1]};

  if (!std::getline(in, line)) fail("missing column header");
  ++lineno;
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "source" || header[1] != "label") fail("bad column header");
  const std::size_t k = header.size() - 2;

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != k + 2) fail("expected " + std::to_string(k + 2) + " fields");
    data.provenance.push_back(fields[0]);
    try {
      data.labels.push_back(static_cast<int>(parse_double(fields[1])));
      std::vector<double> row(k);
      for (std::size_t c = 0; c < k; ++c) row[c] = parse_double(fields[c + 2]);
      rows.push_back(std::move(row));
    } catch (const FormatError& e) {
      fail(e.what());
    }
  }
  data.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(k));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) data.features(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
  }
  try {
    data.validate();
  } catch (const std::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return data;
}

}  // namespace flipbound
