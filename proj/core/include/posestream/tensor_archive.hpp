#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace posestream {

enum class DType { kFloat32, kFloat64 };

struct TensorEntry {
  std::string name;
  DType dtype = DType::kFloat64;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;  // bytes from the start of the data file

  std::int64_t element_count() const;
};

/// Appends tensors to a flat little-endian data file; `finish` writes the
/// JSON manifest listing names, dtypes, shapes and byte offsets.
class TensorArchiveWriter {
 public:
  explicit TensorArchiveWriter(std::filesystem::path data_path);

  void add(const std::string& name, std::span<const double> values,
           std::vector<std::int64_t> shape);
  void add(const std::string& name, std::span<const float> values,
           std::vector<std::int64_t> shape);
  /// Writes the manifest; the data file is referenced relative to it.
  void finish(const std::filesystem::path& manifest_path);

 private:
  void append(const std::string& name, const void* bytes, std::size_t size, DType dtype,
              std::vector<std::int64_t> shape, std::size_t count);

  std::filesystem::path data_path_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
  std::vector<TensorEntry> entries_;
};

class TensorArchive {
 public:
  /// Throws DataError on a malformed manifest or missing data file.
  static TensorArchive open(const std::filesystem::path& manifest_path);

  const std::vector<TensorEntry>& entries() const { return entries_; }
  const TensorEntry& entry(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Reads a tensor, converting to the requested precision.
  std::vector<double> read_f64(const std::string& name) const;
  std::vector<float> read_f32(const std::string& name) const;

 private:
  std::filesystem::path data_path_;
  std::vector<TensorEntry> entries_;
};

}  // namespace posestream
