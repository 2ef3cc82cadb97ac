#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpgap/network.hpp"

namespace fpgap {

// Container format: a manifest text file headed by the magic line
// "FPGAP-MODEL-v1" followed by a JSON body, next to a binary blob of
// little-endian IEEE-754 single-precision values in declaration order
// (conv weights in (out_ch, in_ch, kh, kw) order then bias; dense weights
// row-major then bias). Datasets and image sets reuse the same container
// with a "dataset" section instead of "layers".

inline constexpr const char* kModelMagic = "FPGAP-MODEL-v1";

namespace detail {

inline void append_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  out.push_back(char(bits & 0xff));
  out.push_back(char((bits >> 8) & 0xff));
  out.push_back(char((bits >> 16) & 0xff));
  out.push_back(char((bits >> 24) & 0xff));
}

inline float read_f32_le(const std::string& buf, size_t off) {
  std::uint32_t bits = (std::uint32_t(std::uint8_t(buf[off]))) |
                       (std::uint32_t(std::uint8_t(buf[off + 1])) << 8) |
                       (std::uint32_t(std::uint8_t(buf[off + 2])) << 16) |
                       (std::uint32_t(std::uint8_t(buf[off + 3])) << 24);
  return std::bit_cast<float>(bits);
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Container {
  nlohmann::json body;
  std::vector<float> blob;
};

inline void save_container(const std::filesystem::path& path, const nlohmann::json& body,
                           const std::vector<float>& blob) {
  std::filesystem::path blob_path = path;
  blob_path += ".bin";
  nlohmann::json full = body;
  full["blob"] = blob_path.filename().string();
  std::string manifest = std::string(kModelMagic) + "\n" + full.dump(2) + "\n";
  write_file(path, manifest);
  std::string bytes;
  bytes.reserve(blob.size() * 4);
  for (float v : blob) append_f32_le(bytes, v);
  write_file(blob_path, bytes);
}

inline Container load_container(const std::filesystem::path& path) {
  std::string manifest = read_file(path);
  size_t nl = manifest.find('\n');
  if (nl == std::string::npos || manifest.substr(0, nl) != kModelMagic)
    throw IoError("bad magic in " + path.string());
  Container c;
  try {
    c.body = nlohmann::json::parse(manifest.substr(nl + 1));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest in " + path.string() + ": " + e.what());
  }
  if (!c.body.contains("blob") || !c.body["blob"].is_string())
    throw IoError("manifest missing blob reference: " + path.string());
  std::filesystem::path blob_path =
      path.parent_path() / c.body["blob"].get<std::string>();
  std::string bytes = read_file(blob_path);
  if (bytes.size() % 4 != 0) throw IoError("blob not a multiple of 4 bytes: " + blob_path.string());
  c.blob.resize(bytes.size() / 4);
  for (size_t i = 0; i < c.blob.size(); ++i) c.blob[i] = read_f32_le(bytes, i * 4);
  return c;
}

}  // namespace detail

inline void save_model(const Network& net, const std::filesystem::path& path,
                       const nlohmann::json& meta = nlohmann::json::object()) {
  net.validate();
  nlohmann::json body;
  body["input"] = {{"h", net.input.h}, {"w", net.input.w}, {"c", net.input.c}};
  nlohmann::json layers = nlohmann::json::array();
  std::vector<float> blob;
  for (const Layer& l : net.layers) {
    if (const auto* cv = std::get_if<Conv2d>(&l)) {
      layers.push_back({{"type", "conv2d"},
                        {"out_ch", cv->out_ch},
                        {"in_ch", cv->in_ch},
                        {"kh", cv->kh},
                        {"kw", cv->kw},
                        {"pad", cv->pad}});
      blob.insert(blob.end(), cv->weights.begin(), cv->weights.end());
      blob.insert(blob.end(), cv->bias.begin(), cv->bias.end());
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      layers.push_back({{"type", "dense"}, {"rows", d->rows}, {"cols", d->cols}});
      blob.insert(blob.end(), d->weights.begin(), d->weights.end());
      blob.insert(blob.end(), d->bias.begin(), d->bias.end());
    } else if (std::holds_alternative<ReLU>(l)) {
      layers.push_back({{"type", "relu"}});
    } else {
      layers.push_back({{"type", "flatten"}});
    }
  }
  body["layers"] = layers;
  if (!meta.empty()) body["meta"] = meta;
  detail::save_container(path, body, blob);
}

/// Load a model; round-trip with save_model is bit-exact on every weight.
inline Network load_model(const std::filesystem::path& path) {
  detail::Container c = detail::load_container(path);
  if (!c.body.contains("layers") || !c.body.contains("input"))
    throw IoError("not a model container: " + path.string());
  Network net;
  try {
    net.input = Shape{c.body["input"]["h"].get<int>(), c.body["input"]["w"].get<int>(),
                      c.body["input"]["c"].get<int>()};
    size_t off = 0;
    auto take = [&](size_t n) {
      if (off + n > c.blob.size()) throw IoError("truncated weight blob: " + path.string());
      std::vector<float> out(c.blob.begin() + off, c.blob.begin() + off + n);
      off += n;
      return out;
    };
    for (const auto& jl : c.body["layers"]) {
      std::string type = jl["type"].get<std::string>();
      if (type == "conv2d") {
        Conv2d cv;
        cv.out_ch = jl["out_ch"].get<int>();
        cv.in_ch = jl["in_ch"].get<int>();
        cv.kh = jl["kh"].get<int>();
        cv.kw = jl["kw"].get<int>();
        cv.pad = jl["pad"].get<int>();
        cv.weights = take(size_t(cv.out_ch) * cv.in_ch * cv.kh * cv.kw);
        cv.bias = take(size_t(cv.out_ch));
        net.layers.emplace_back(std::move(cv));
      } else if (type == "dense") {
        Dense d;
        d.rows = jl["rows"].get<int>();
        d.cols = jl["cols"].get<int>();
        d.weights = take(size_t(d.rows) * d.cols);
        d.bias = take(size_t(d.rows));
        net.layers.emplace_back(std::move(d));
      } else if (type == "relu") {
        net.layers.emplace_back(ReLU{});
      } else if (type == "flatten") {
        net.layers.emplace_back(Flatten{});
      } else {
        throw IoError("unknown layer type '" + type + "' in " + path.string());
      }
    }
    if (off != c.blob.size()) throw IoError("trailing bytes in weight blob: " + path.string());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad model manifest " + path.string() + ": " + e.what());
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError("invalid model in " + path.string() + ": " + e.what());
  }
  return net;
}

struct ImageSet {
  Shape shape;
  std::vector<ImageF> images;
  std::vector<int> labels;
  nlohmann::json meta;
};

inline void save_images(const ImageSet& set, const std::filesystem::path& path) {
  nlohmann::json body;
  body["dataset"] = {{"count", set.images.size()},
                     {"h", set.shape.h},
                     {"w", set.shape.w},
                     {"c", set.shape.c},
                     {"labels", set.labels}};
  if (!set.meta.empty()) body["meta"] = set.meta;
  std::vector<float> blob;
  for (const ImageF& img : set.images) {
    require(img.shape() == set.shape, "save_images: inconsistent image shape");
    blob.insert(blob.end(), img.data().begin(), img.data().end());
  }
  detail::save_container(path, body, blob);
}

inline ImageSet load_images(const std::filesystem::path& path) {
  detail::Container c = detail::load_container(path);
  if (!c.body.contains("dataset")) throw IoError("not an image container: " + path.string());
  ImageSet set;
  try {
    const auto& d = c.body["dataset"];
    set.shape = Shape{d["h"].get<int>(), d["w"].get<int>(), d["c"].get<int>()};
    size_t count = d["count"].get<size_t>();
    set.labels = d["labels"].get<std::vector<int>>();
    if (set.labels.size() != count) throw IoError("label count mismatch: " + path.string());
    size_t per = size_t(set.shape.size());
    if (c.blob.size() != count * per) throw IoError("truncated image blob: " + path.string());
    for (size_t i = 0; i < count; ++i) {
      std::vector<float> data(c.blob.begin() + i * per, c.blob.begin() + (i + 1) * per);
      set.images.emplace_back(set.shape, std::move(data));
      if (!all_finite(set.images.back()) || !in_unit_range(set.images.back()))
        throw IoError("image outside [0,1] in " + path.string());
    }
    if (c.body.contains("meta")) set.meta = c.body["meta"];
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad image manifest " + path.string() + ": " + e.what());
  }
  return set;
}

}  // namespace fpgap
