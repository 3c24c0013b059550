#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "idprobe/error.hpp"

namespace idprobe {

enum class Dtype { f32, f64 };

inline std::string_view to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

// Row-major n x D matrix of f64 values. Sources stored in f32 are widened on
// load and remember their origin so they can be written back bit-exactly.
class PointCloud {
 public:
  PointCloud(std::size_t rows, std::size_t cols, std::vector<double> data,
             Dtype dtype_origin = Dtype::f64, std::string label = {})
      : rows_(rows), cols_(cols), data_(std::move(data)),
        dtype_(dtype_origin), label_(std::move(label)) {
    if (cols_ < 1) throw input_error("point cloud '" + label_ + "' has no columns");
    if (data_.size() != rows_ * cols_)
      throw input_error("point cloud '" + label_ + "': payload holds " +
                        std::to_string(data_.size()) + " values, shape needs " +
                        std::to_string(rows_ * cols_));
    if (rows_ < 3)
      throw input_error("point cloud '" + label_ + "' has " + std::to_string(rows_) +
                        " points; at least 3 are required");
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]))
        throw input_error("point cloud '" + label_ + "': non-finite value in row " +
                          std::to_string(i / cols_));
  }

  std::size_t size() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return cols_; }
  Dtype dtype_origin() const noexcept { return dtype_; }
  const std::string& label() const noexcept { return label_; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  double operator()(std::size_t i, std::size_t k) const noexcept { return data_[i * cols_ + k]; }

  // Rows picked by `indices`, in the given order.
  PointCloud select(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * cols_);
    for (std::size_t i : indices) {
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return PointCloud(indices.size(), cols_, std::move(out), dtype_, label_);
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
  Dtype dtype_;
  std::string label_;
};

struct LayerDump {
  std::string layer_name;
  int layer_index = 0;
  PointCloud cloud;
};

enum class CloudFormat { idac, csv };

namespace detail {

inline constexpr std::array<char, 8> idac_magic = {'I', 'D', 'A', 'C', '0', '0', '0', '1'};

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = bytes - 1; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw io_error("write to '" + path.string() + "' failed");
}

struct IdacHeader {
  Dtype dtype = Dtype::f64;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string layer_name;
  int layer_index = 0;
  std::size_t payload_offset = 0;
};

inline IdacHeader parse_idac_header(std::string_view bytes, const std::string& where) {
  auto fail = [&](const std::string& msg) { return input_error(where + ": " + msg); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), idac_magic.data(), 8) != 0)
    throw fail("not an IDAC file (bad magic)");
  const auto header_len = static_cast<std::size_t>(
      get_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 8, 4));
  if (bytes.size() < 12 + header_len) throw fail("truncated header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header JSON: ") + e.what());
  }
  IdacHeader h;
  h.payload_offset = 12 + header_len;
  try {
    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype == "f32") h.dtype = Dtype::f32;
    else if (dtype == "f64") h.dtype = Dtype::f64;
    else throw fail("unsupported dtype '" + dtype + "'");
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 2) throw fail("shape must be [n, D]");
    const auto rows = shape[0].get<std::int64_t>();
    const auto cols = shape[1].get<std::int64_t>();
    if (rows < 0 || cols < 0) throw fail("negative shape");
    h.rows = static_cast<std::size_t>(rows);
    h.cols = static_cast<std::size_t>(cols);
    if (j.contains("order") && j["order"] != "row-major") throw fail("only row-major order is supported");
    h.layer_name = j.value("layer_name", std::string{});
    h.layer_index = j.value("layer_index", 0);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  return h;
}

inline LayerDump decode_idac(std::string_view bytes, const std::string& where) {
  const IdacHeader h = parse_idac_header(bytes, where);
  const std::size_t width = dtype_size(h.dtype);
  const std::size_t expected = h.rows * h.cols * width;
  const std::size_t actual = bytes.size() - h.payload_offset;
  if (actual != expected)
    throw input_error(where + ": shape [" + std::to_string(h.rows) + "," + std::to_string(h.cols) +
                      "] needs " + std::to_string(expected) + " payload bytes, found " +
                      std::to_string(actual));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
  std::vector<double> values(h.rows * h.cols);
  for (std::size_t i = 0; i < values.size(); ++i, p += width) {
    if (h.dtype == Dtype::f32)
      values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4)));
    else
      values[i] = std::bit_cast<double>(get_le(p, 8));
  }
  std::string label = h.layer_name.empty() ? std::filesystem::path(where).stem().string() : h.layer_name;
  return LayerDump{h.layer_name, h.layer_index,
                   PointCloud(h.rows, h.cols, std::move(values), h.dtype, std::move(label))};
}

inline PointCloud decode_csv(std::string_view text, const std::string& where) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0, line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::size_t fields = 0;
    for (;;) {
      const auto comma = line.find(',');
      std::string_view field = line.substr(0, comma);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
        throw input_error(where + ":" + std::to_string(line_no) + ": cannot parse '" +
                          std::string(field) + "' as a number");
      values.push_back(v);
      ++fields;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (rows == 0) cols = fields;
    else if (fields != cols)
      throw input_error(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " columns, found " + std::to_string(fields));
    ++rows;
  }
  return PointCloud(rows, cols, std::move(values), Dtype::f64,
                    std::filesystem::path(where).stem().string());
}

}  // namespace detail

/// Serializes a cloud as an IDAC file image. Values are narrowed to the
/// cloud's origin dtype, which is lossless for clouds loaded from f32.
inline std::string encode_idac(const PointCloud& cloud, std::string_view layer_name, int layer_index) {
  nlohmann::ordered_json header;
  header["dtype"] = std::string(to_string(cloud.dtype_origin()));
  header["shape"] = {cloud.size(), cloud.dims()};
  header["layer_name"] = std::string(layer_name);
  header["layer_index"] = layer_index;
  header["order"] = "row-major";
  const std::string header_text = header.dump();

  std::string out(detail::idac_magic.begin(), detail::idac_magic.end());
  detail::put_le(out, header_text.size(), 4);
  out += header_text;
  out.reserve(out.size() + cloud.data().size() * dtype_size(cloud.dtype_origin()));
  for (double v : cloud.data()) {
    if (cloud.dtype_origin() == Dtype::f32)
      detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    else
      detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  detail::write_file(path, encode_idac(cloud, cloud.label(), 0));
}

inline void save_layer(const LayerDump& layer, const std::filesystem::path& path) {
  detail::write_file(path, encode_idac(layer.cloud, layer.layer_name, layer.layer_index));
}

inline LayerDump load_layer(const std::filesystem::path& path) {
  return detail::decode_idac(detail::read_file(path), path.string());
}

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format = CloudFormat::idac) {
  if (!std::filesystem::is_regular_file(path))
    throw io_error("no such file '" + path.string() + "'");
  const std::string bytes = detail::read_file(path);
  if (format == CloudFormat::csv) return detail::decode_csv(bytes, path.string());
  return detail::decode_idac(bytes, path.string()).cloud;
}

// ---------------------------------------------------------------------------
// Run manifests

enum class RegularizerKind { none, weight_decay, dropout };

inline std::string_view to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::weight_decay: return "weight_decay";
    case RegularizerKind::dropout: return "dropout";
    default: return "none";
  }
}

struct RunMetadata {
  RegularizerKind regularizer_kind = RegularizerKind::none;
  double regularizer_strength = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double data_fraction = 1.0;
  std::int64_t seed = 0;
  // Any further keys the exporter recorded (flags, grid coordinates, ...).
  nlohmann::json extra = nlohmann::json::object();
};

struct LayerRef {
  std::string layer_name;
  int layer_index = 0;
  std::filesystem::path path;  // absolute, resolved against the run directory
};

struct RunManifest {
  std::string run_id;
  std::int64_t step = 0;
  std::vector<LayerRef> layers;  // ordered by layer_index
  RunMetadata metadata;
  std::filesystem::path dir;

  LayerDump load_layer(std::size_t i) const {
    LayerDump dump = idprobe::load_layer(layers.at(i).path);
    dump.layer_name = layers[i].layer_name;
    dump.layer_index = layers[i].layer_index;
    return dump;
  }
};

inline constexpr std::string_view manifest_filename = "manifest.json";

namespace detail {

inline RunMetadata parse_metadata(const nlohmann::json& m, const std::string& where) {
  auto fail = [&](const std::string& msg) { return input_error(where + ": metadata " + msg); };
  if (!m.is_object()) throw fail("must be an object");
  for (const char* key : {"regularizer_kind", "regularizer_strength", "train_accuracy",
                          "val_accuracy", "data_fraction", "seed"})
    if (!m.contains(key)) throw fail(std::string("is missing '") + key + "'");
  RunMetadata md;
  try {
    const auto kind = m["regularizer_kind"].get<std::string>();
    if (kind == "none") md.regularizer_kind = RegularizerKind::none;
    else if (kind == "weight_decay") md.regularizer_kind = RegularizerKind::weight_decay;
    else if (kind == "dropout") md.regularizer_kind = RegularizerKind::dropout;
    else throw fail("has unknown regularizer_kind '" + kind + "'");
    md.regularizer_strength = m["regularizer_strength"].get<double>();
    md.train_accuracy = m["train_accuracy"].get<double>();
    md.val_accuracy = m["val_accuracy"].get<double>();
    md.data_fraction = m["data_fraction"].get<double>();
    md.seed = m["seed"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("has a mistyped field: ") + e.what());
  }
  if (!(md.regularizer_strength >= 0.0) || !std::isfinite(md.regularizer_strength))
    throw fail("regularizer_strength must be >= 0");
  if (!(md.train_accuracy >= 0.0 && md.train_accuracy <= 1.0)) throw fail("train_accuracy outside [0,1]");
  if (!(md.val_accuracy >= 0.0 && md.val_accuracy <= 1.0)) throw fail("val_accuracy outside [0,1]");
  if (!(md.data_fraction > 0.0 && md.data_fraction <= 1.0)) throw fail("data_fraction outside (0,1]");
  for (auto it = m.begin(); it != m.end(); ++it) {
    static const std::array<std::string_view, 6> known = {
        "regularizer_kind", "regularizer_strength", "train_accuracy",
        "val_accuracy", "data_fraction", "seed"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) md.extra[it.key()] = it.value();
  }
  return md;
}

}  // namespace detail

/// Reads `dir/manifest.json`. Layer headers are read eagerly for names and
/// indices; payloads load on demand through RunManifest::load_layer.
inline RunManifest load_run(const std::filesystem::path& dir) {
  const auto manifest_path = dir / manifest_filename;
  if (!std::filesystem::is_regular_file(manifest_path))
    throw input_error("missing manifest '" + manifest_path.string() + "'");
  const std::string where = manifest_path.string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw input_error(where + ": malformed JSON: " + e.what());
  }

  RunManifest run;
  run.dir = dir;
  try {
    run.run_id = j.at("run_id").get<std::string>();
    run.step = j.value("step", std::int64_t{0});
    run.metadata = detail::parse_metadata(j.at("metadata"), where);
  } catch (const nlohmann::json::exception& e) {
    throw input_error(where + ": " + e.what());
  }
  if (run.step < 0) throw input_error(where + ": step must be non-negative");
  if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
    throw input_error(where + ": layers must be a nonempty list");

  for (const auto& entry : j["layers"]) {
    std::string rel;
    if (entry.is_string()) rel = entry.get<std::string>();
    else if (entry.is_object() && entry.contains("path") && entry["path"].is_string())
      rel = entry["path"].get<std::string>();
    else throw input_error(where + ": layer entries must be relative paths");
    const auto path = dir / rel;
    if (!std::filesystem::is_regular_file(path))
      throw input_error(where + ": dangling layer reference '" + rel + "'");
    // Header only; the payload is not touched here.
    std::string head;
    {
      std::ifstream in(path, std::ios::binary);
      std::array<char, 12> prefix{};
      in.read(prefix.data(), prefix.size());
      if (in.gcount() != 12) throw input_error(path.string() + ": not an IDAC file (too short)");
      const auto len = detail::get_le(reinterpret_cast<const unsigned char*>(prefix.data()) + 8, 4);
      head.assign(prefix.begin(), prefix.end());
      head.resize(12 + len);
      in.read(head.data() + 12, static_cast<std::streamsize>(len));
      if (static_cast<std::uint64_t>(in.gcount()) != len)
        throw input_error(path.string() + ": truncated header");
    }
    const auto h = detail::parse_idac_header(head, path.string());
    run.layers.push_back(LayerRef{h.layer_name.empty() ? path.stem().string() : h.layer_name,
                                  h.layer_index, path});
  }

  std::stable_sort(run.layers.begin(), run.layers.end(),
                   [](const LayerRef& a, const LayerRef& b) { return a.layer_index < b.layer_index; });
  for (std::size_t i = 0; i < run.layers.size(); ++i) {
    if (i > 0 && run.layers[i].layer_index == run.layers[i - 1].layer_index)
      throw input_error(where + ": duplicate layer_index " + std::to_string(run.layers[i].layer_index) +
                        " ('" + run.layers[i - 1].path.filename().string() + "' and '" +
                        run.layers[i].path.filename().string() + "')");
    if (run.layers[i].layer_index != static_cast<int>(i) + 1)
      throw input_error(where + ": layer indices must be contiguous from 1; found " +
                        std::to_string(run.layers[i].layer_index) + " at position " + std::to_string(i + 1));
  }
  return run;
}

/// Writes `dir/manifest.json` plus one IDAC file per layer (`layer_<index>.idac`).
inline void save_run(const std::filesystem::path& dir, const std::string& run_id, std::int64_t step,
                     const RunMetadata& metadata, std::span<const LayerDump> layers) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create '" + dir.string() + "': " + ec.message());
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["step"] = step;
  nlohmann::ordered_json md;
  md["regularizer_kind"] = std::string(to_string(metadata.regularizer_kind));
  md["regularizer_strength"] = metadata.regularizer_strength;
  md["train_accuracy"] = metadata.train_accuracy;
  md["val_accuracy"] = metadata.val_accuracy;
  md["data_fraction"] = metadata.data_fraction;
  md["seed"] = metadata.seed;
  for (auto it = metadata.extra.begin(); it != metadata.extra.end(); ++it) md[it.key()] = it.value();
  j["metadata"] = md;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : layers) {
    const std::string file = "layer_" + std::to_string(layer.layer_index) + ".idac";
    save_layer(layer, dir / file);
    j["layers"].push_back(file);
  }
  detail::write_file(dir / manifest_filename, j.dump(2) + "\n");
}

/// A run observed at one or more training steps. A directory holding a
/// manifest is a single snapshot; otherwise each immediate subdirectory with
/// a manifest is a snapshot of the same run.
struct RunSeries {
  std::string run_id;
  std::vector<RunManifest> snapshots;  // strictly increasing step
};

inline RunSeries load_series(const std::filesystem::path& dir) {
  RunSeries series;
  if (std::filesystem::is_regular_file(dir / manifest_filename)) {
    series.snapshots.push_back(load_run(dir));
  } else {
    if (!std::filesystem::is_directory(dir)) throw input_error("no such run directory '" + dir.string() + "'");
    std::vector<std::filesystem::path> subdirs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_directory() && std::filesystem::is_regular_file(e.path() / manifest_filename))
        subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) throw input_error("missing manifest under '" + dir.string() + "'");
    for (const auto& s : subdirs) series.snapshots.push_back(load_run(s));
    std::stable_sort(series.snapshots.begin(), series.snapshots.end(),
                     [](const RunManifest& a, const RunManifest& b) { return a.step < b.step; });
  }
  series.run_id = series.snapshots.front().run_id;
  for (std::size_t i = 0; i < series.snapshots.size(); ++i) {
    const auto& s = series.snapshots[i];
    if (s.run_id != series.run_id)
      throw input_error("run '" + dir.string() + "' mixes run ids '" + series.run_id + "' and '" + s.run_id + "'");
    if (i > 0 && s.step == series.snapshots[i - 1].step)
      throw input_error("run '" + series.run_id + "' has two snapshots at step " + std::to_string(s.step));
  }
  return series;
}

}  // namespace idprobe
