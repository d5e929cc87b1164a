#pragma once

// File-backed datasets: IDX image/label pairs (big-endian, as distributed for
// the classic digit benchmarks) and labeled CSV. Loader errors carry the byte
// offset (IDX) or line number (CSV) of the first problem found.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/core.hpp"
#include "fedsim/data.hpp"

namespace fedsim {

namespace detail {

class ByteReader {
 public:
  ByteReader(const std::string& path, const char* what) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw FormatError(std::string(what) + ": cannot open " + path);
    bytes_.assign(std::istreambuf_iterator<char>(in),
                  std::istreambuf_iterator<char>());
  }

  std::uint32_t read_u32be(std::size_t offset, const char* field) const {
    if (offset + 4 > bytes_.size())
      throw FormatError(path_ + ": unexpected end of file at byte " +
                        std::to_string(bytes_.size()) + " while reading " + field);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + offset;
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
  }

  unsigned char byte_at(std::size_t offset) const {
    return static_cast<unsigned char>(bytes_[offset]);
  }

  void require_size(std::size_t needed, const char* what) const {
    if (bytes_.size() < needed)
      throw FormatError(path_ + ": " + what + " truncated, expected " +
                        std::to_string(needed) + " bytes but file has " +
                        std::to_string(bytes_.size()));
  }

  std::size_t size() const { return bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string bytes_;
};

}  // namespace detail

// IDX pair: images magic 0x00000803 (u8 cube), labels magic 0x00000801.
// Pixels are scaled to [0, 1].
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path) {
  detail::ByteReader img(images_path, "load_idx");
  detail::ByteReader lab(labels_path, "load_idx");

  const std::uint32_t img_magic = img.read_u32be(0, "image magic");
  if (img_magic != 0x00000803u)
    throw FormatError(images_path + ": bad image magic at byte 0 (got 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08X", img_magic); return std::string(b); }() +
                      ", want 0x00000803)");
  const std::uint32_t n_images = img.read_u32be(4, "image count");
  const std::uint32_t rows = img.read_u32be(8, "row count");
  const std::uint32_t cols = img.read_u32be(12, "column count");
  if (rows == 0 || cols == 0)
    throw FormatError(images_path + ": zero image dimensions at byte 8");
  const std::size_t pixels = std::size_t(rows) * cols;
  img.require_size(16 + pixels * n_images, "image data");

  const std::uint32_t lab_magic = lab.read_u32be(0, "label magic");
  if (lab_magic != 0x00000801u)
    throw FormatError(labels_path + ": bad label magic at byte 0 (got 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08X", lab_magic); return std::string(b); }() +
                      ", want 0x00000801)");
  const std::uint32_t n_labels = lab.read_u32be(4, "label count");
  if (n_labels != n_images)
    throw FormatError(labels_path + ": label count " + std::to_string(n_labels) +
                      " does not match image count " + std::to_string(n_images));
  lab.require_size(8 + n_labels, "label data");
  require(n_images > 0, "load_idx: dataset is empty");

  LabeledDataset ds;
  ds.input_dim = static_cast<int>(pixels);
  ds.labels.resize(n_images);
  ds.features.resize(pixels * n_images);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    const int y = lab.byte_at(8 + i);
    ds.labels[i] = y;
    max_label = std::max(max_label, y);
  }
  ds.num_classes = max_label + 1;
  if (ds.num_classes < 2)
    throw FormatError(labels_path + ": all labels identical, need >= 2 classes");
  for (std::size_t i = 0; i < pixels * n_images; ++i)
    ds.features[i] = img.byte_at(16 + i) / 255.0;
  ds.validate();
  return ds;
}

// CSV with the label in the first column and features after it. All rows must
// have the same width; labels must be non-negative integers.
inline LabeledDataset load_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_csv: cannot open " + path);

  LabeledDataset ds;
  std::string line;
  long long line_no = 0;
  int n_cols = -1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && has_header) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw FormatError(path + ": line " + std::to_string(line_no) +
                          ": not a number: '" + cell + "'");
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      if (used != cell.size())
        throw FormatError(path + ": line " + std::to_string(line_no) +
                          ": trailing junk in cell '" + cell + "'");
      values.push_back(v);
    }
    if (values.size() < 2)
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": need a label and at least one feature");
    if (n_cols < 0)
      n_cols = static_cast<int>(values.size());
    else if (static_cast<int>(values.size()) != n_cols)
      throw FormatError(path + ": line " + std::to_string(line_no) + ": expected " +
                        std::to_string(n_cols) + " columns, got " +
                        std::to_string(values.size()));
    const double raw_label = values[0];
    const int y = static_cast<int>(raw_label);
    if (raw_label != y || y < 0)
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": label must be a non-negative integer, got '" +
                        std::to_string(raw_label) + "'");
    max_label = std::max(max_label, y);
    ds.labels.push_back(y);
    ds.features.insert(ds.features.end(), values.begin() + 1, values.end());
  }
  if (ds.labels.empty()) throw FormatError(path + ": no data rows");
  ds.input_dim = n_cols - 1;
  ds.num_classes = max_label + 1;
  if (ds.num_classes < 2)
    throw FormatError(path + ": all labels identical, need >= 2 classes");
  ds.validate();
  return ds;
}

}  // namespace fedsim
