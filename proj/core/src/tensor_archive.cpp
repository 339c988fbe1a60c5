#include "posestream/tensor_archive.hpp"

#include <algorithm>
#include <bit>

#include <nlohmann/json.hpp>

#include "posestream/errors.hpp"

namespace posestream {

static_assert(std::endian::native == std::endian::little,
              "tensor archives are written in host order, which must be little-endian");

namespace {

const char* dtype_name(DType d) { return d == DType::kFloat32 ? "float32" : "float64"; }

std::size_t dtype_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

DType parse_dtype(const std::string& s) {
  if (s == "float32") return DType::kFloat32;
  if (s == "float64") return DType::kFloat64;
  throw DataError("tensor archive: unknown dtype '" + s + "'");
}

}  // namespace

std::int64_t TensorEntry::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

TensorArchiveWriter::TensorArchiveWriter(std::filesystem::path data_path)
    : data_path_(std::move(data_path)), out_(data_path_, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("tensor archive: cannot write " + data_path_.string());
}

void TensorArchiveWriter::append(const std::string& name, const void* bytes, std::size_t size,
                                 DType dtype, std::vector<std::int64_t> shape, std::size_t count) {
  TensorEntry e{name, dtype, std::move(shape), offset_};
  if (e.element_count() != static_cast<std::int64_t>(count)) {
    throw InvalidArgument("tensor archive: shape of '" + name + "' does not match its data");
  }
  out_.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(size));
  offset_ += size;
  entries_.push_back(std::move(e));
}

void TensorArchiveWriter::add(const std::string& name, std::span<const double> values,
                              std::vector<std::int64_t> shape) {
  append(name, values.data(), values.size_bytes(), DType::kFloat64, std::move(shape), values.size());
}

void TensorArchiveWriter::add(const std::string& name, std::span<const float> values,
                              std::vector<std::int64_t> shape) {
  append(name, values.data(), values.size_bytes(), DType::kFloat32, std::move(shape), values.size());
}

void TensorArchiveWriter::finish(const std::filesystem::path& manifest_path) {
  out_.flush();
  if (!out_) throw DataError("tensor archive: write failed for " + data_path_.string());
  out_.close();

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries_) {
    tensors.push_back({{"name", e.name},
                       {"dtype", dtype_name(e.dtype)},
                       {"shape", e.shape},
                       {"offset", e.offset}});
  }
  const nlohmann::json manifest = {{"format", "posestream-tensors"},
                                   {"version", 1},
                                   {"byte_order", "little"},
                                   {"data", data_path_.filename().string()},
                                   {"tensors", tensors}};
  std::ofstream m(manifest_path, std::ios::trunc);
  if (!m) throw DataError("tensor archive: cannot write " + manifest_path.string());
  m << manifest.dump(1) << '\n';
}

TensorArchive TensorArchive::open(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("tensor archive: cannot open " + manifest_path.string());
  TensorArchive a;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "posestream-tensors") {
      throw DataError("tensor archive: unexpected format in " + manifest_path.string());
    }
    a.data_path_ = manifest_path.parent_path() / j.at("data").get<std::string>();
    for (const auto& t : j.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.shape = t.at("shape").get<std::vector<std::int64_t>>();
      e.offset = t.at("offset").get<std::uint64_t>();
      a.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("tensor archive: malformed manifest " + manifest_path.string() + ": " +
                    ex.what());
  }
  if (!std::filesystem::exists(a.data_path_)) {
    throw DataError("tensor archive: missing data file " + a.data_path_.string());
  }
  return a;
}

bool TensorArchive::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const TensorEntry& e) { return e.name == name; });
}

const TensorEntry& TensorArchive::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw DataError("tensor archive: no tensor named '" + name + "'");
}

namespace {

template <typename Out>
std::vector<Out> read_as(const std::filesystem::path& path, const TensorEntry& e) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tensor archive: cannot open " + path.string());
  in.seekg(static_cast<std::streamoff>(e.offset));
  const auto n = static_cast<std::size_t>(e.element_count());
  std::vector<Out> out(n);
  if (e.dtype == DType::kFloat64) {
    std::vector<double> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * dtype_size(e.dtype)));
    std::copy(raw.begin(), raw.end(), out.begin());
  } else {
    std::vector<float> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * dtype_size(e.dtype)));
    std::copy(raw.begin(), raw.end(), out.begin());
  }
  if (!in) throw DataError("tensor archive: truncated data for '" + e.name + "'");
  return out;
}

}  // namespace

std::vector<double> TensorArchive::read_f64(const std::string& name) const {
  return read_as<double>(data_path_, entry(name));
}

std::vector<float> TensorArchive::read_f32(const std::string& name) const {
  return read_as<float>(data_path_, entry(name));
}

}  // namespace posestream
