// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "t1moco/types.hpp"

// On-disk containers are raw little-endian float32 payloads described by a
// JSON sidecar. Values are narrowed from the in-memory doubles to f32 on
// save; a saved file reloads and re-saves byte-identically.

namespace t1moco::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline void write_f32(const fs::path &path, const std::vector<double> &values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<float> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  out.write(reinterpret_cast<const char *>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline std::vector<double> read_f32(const fs::path &path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("missing data file " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(float))
    throw std::runtime_error("size mismatch in " + path.string() + ": expected " +
                             std::to_string(expected * sizeof(float)) + " bytes, found " +
                             std::to_string(bytes));
  in.seekg(0);
  std::vector<float> buf(expected);
  in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("short read from " + path.string());
  std::vector<double> values(expected);
  for (std::size_t i = 0; i < expected; ++i) values[i] = buf[i];
  return values;
}

inline json load_sidecar(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing sidecar " + path.string());
  json j;
  in >> j;
  return j;
}

inline void save_sidecar(const fs::path &path, const json &j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Image series

/// Writes `series` as <stem>.json + <stem>.raw next to each other.
inline void save_series(const ImageSeries &series, const fs::path &sidecar_path) {
  const fs::path data_path = fs::path(sidecar_path).replace_extension(".raw");
  std::vector<double> flat;
  flat.reserve(series.images.size() * series.images[0].size());
  for (const Grid &img : series.images) flat.insert(flat.end(), img.data.begin(), img.data.end());
  detail::write_f32(data_path, flat);

  json j;
  j["width"] = series.width;
  j["height"] = series.height;
  j["count"] = series.count();
  j["dtype"] = "f32le";
  j["inversion_times_ms"] = series.inversion_times_ms;
  j["data_file"] = data_path.filename().string();
  j["spacing_mm"] = series.spacing_mm;  // provenance only
  detail::save_sidecar(sidecar_path, j);
}

/// Loads a series described by a JSON sidecar; images are re-sorted by
/// inversion time if the sidecar lists them unsorted.
inline ImageSeries load_series(const fs::path &sidecar_path) {
  const json j = detail::load_sidecar(sidecar_path);
  ImageSeries s;
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  const int n = j.at("count").get<int>();
  if (j.at("dtype").get<std::string>() != "f32le")
    throw std::runtime_error("unsupported dtype in " + sidecar_path.string());
  s.inversion_times_ms = j.at("inversion_times_ms").get<std::vector<double>>();
  if (static_cast<int>(s.inversion_times_ms.size()) != n)
    throw std::runtime_error("sidecar inversion_times_ms length != count");
  s.spacing_mm = j.value("spacing_mm", 1.0);

  const fs::path data_path = sidecar_path.parent_path() / j.at("data_file").get<std::string>();
  const std::size_t per_image = static_cast<std::size_t>(s.width) * s.height;
  const std::vector<double> flat = detail::read_f32(data_path, per_image * n);
  s.images.reserve(n);
  for (int i = 0; i < n; ++i) {
    Grid img(s.width, s.height);
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * per_image), per_image, img.data.begin());
    s.images.push_back(std::move(img));
  }
  finalize_series(s);
  return s;
}

// ---------------------------------------------------------------------------
// PGM previews

/// Binary P5 PGM, maxval 255.
inline void write_pgm(const fs::path &path, const ByteGrid &img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char *>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

/// Min-max windowed 8-bit render of `map`, computed over pixels where
/// `select` is true. No selected pixels (or a flat window) renders black.
inline ByteGrid window_to_bytes(const Grid &map, const ByteGrid &select) {
  ByteGrid out(map.width, map.height, 0);
  double lo = 0, hi = 0;
  bool any = false;
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    if (!select.data[i]) continue;
    const double v = map.data[i];
    if (!any) {
      lo = hi = v;
      any = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!any || hi <= lo) return out;
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    if (!select.data[i]) continue;
    const double t = (map.data[i] - lo) / (hi - lo);
    out.data[i] = static_cast<std::uint8_t>(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter maps

/// Writes the five float maps as raw f32 + one JSON sidecar + PGM previews,
/// plus the converged mask as raw u8. Layout: <dir>/<name>.json,
/// <dir>/<name>_<map>.raw, <dir>/<name>_<map>.pgm.
inline void save_maps(const ParameterMaps &maps, const fs::path &dir, const std::string &name = "maps") {
  fs::create_directories(dir);
  const char *channels[5] = {"c", "k", "t1star_ms", "t1_ms", "sd_t1_ms"};
  const Grid *grids[5] = {&maps.c, &maps.k, &maps.t1star_ms, &maps.t1_ms, &maps.sd_t1_ms};

  json j;
  j["width"] = maps.width();
  j["height"] = maps.height();
  j["dtype"] = "f32le";
  j["converged_fraction"] = maps.converged_fraction();
  json files;
  for (int m = 0; m < 5; ++m) {
    const std::string stem = name + "_" + channels[m];
    detail::write_f32(dir / (stem + ".raw"), grids[m]->data);
    write_pgm(dir / (stem + ".pgm"), window_to_bytes(*grids[m], maps.converged));
    files[channels[m]] = stem + ".raw";
  }
  {
    const std::string stem = name + "_converged";
    std::ofstream out(dir / (stem + ".raw"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write converged mask");
    out.write(reinterpret_cast<const char *>(maps.converged.data.data()),
              static_cast<std::streamsize>(maps.converged.data.size()));
    files["converged"] = stem + ".raw";
  }
  j["files"] = files;
  detail::save_sidecar(dir / (name + ".json"), j);
}

inline ParameterMaps load_maps(const fs::path &dir, const std::string &name = "maps") {
  const json j = detail::load_sidecar(dir / (name + ".json"));
  const int w = j.at("width").get<int>();
  const int h = j.at("height").get<int>();
  const std::size_t px = static_cast<std::size_t>(w) * h;
  ParameterMaps maps(w, h);
  const auto &files = j.at("files");
  auto read_grid = [&](const char *key, Grid &g) {
    g.data = detail::read_f32(dir / files.at(key).get<std::string>(), px);
  };
  read_grid("c", maps.c);
  read_grid("k", maps.k);
  read_grid("t1star_ms", maps.t1star_ms);
  read_grid("t1_ms", maps.t1_ms);
  read_grid("sd_t1_ms", maps.sd_t1_ms);
  {
    std::ifstream in(dir / files.at("converged").get<std::string>(), std::ios::binary);
    if (!in) throw std::runtime_error("missing converged mask");
    in.read(reinterpret_cast<char *>(maps.converged.data.data()), static_cast<std::streamsize>(px));
    if (!in) throw std::runtime_error("short read on converged mask");
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Deformation sets

/// Per image: dx plane then dy plane, row-major f32le.
inline void save_defs(const DeformationSet &defs, const fs::path &sidecar_path) {
  const fs::path data_path = fs::path(sidecar_path).replace_extension(".raw");
  std::vector<double> flat;
  flat.reserve(defs.count() * 2 * defs.fields[0].dx.size());
  for (const VecField &f : defs.fields) {
    flat.insert(flat.end(), f.dx.data.begin(), f.dx.data.end());
    flat.insert(flat.end(), f.dy.data.begin(), f.dy.data.end());
  }
  detail::write_f32(data_path, flat);

  json j;
  j["width"] = defs.width();
  j["height"] = defs.height();
  j["count"] = defs.count();
  j["components"] = 2;
  j["dtype"] = "f32le";
  j["data_file"] = data_path.filename().string();
  detail::save_sidecar(sidecar_path, j);
}

inline DeformationSet load_defs(const fs::path &sidecar_path) {
  const json j = detail::load_sidecar(sidecar_path);
  const int w = j.at("width").get<int>();
  const int h = j.at("height").get<int>();
  const int n = j.at("count").get<int>();
  if (j.at("components").get<int>() != 2) throw std::runtime_error("defs: expected 2 components");
  const std::size_t px = static_cast<std::size_t>(w) * h;
  const fs::path data_path = sidecar_path.parent_path() / j.at("data_file").get<std::string>();
  const std::vector<double> flat = detail::read_f32(data_path, px * 2 * n);

  DeformationSet defs(n, w, h);
  std::size_t off = 0;
  for (VecField &f : defs.fields) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), px, f.dx.data.begin());
    off += px;
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), px, f.dy.data.begin());
    off += px;
  }
  for (const VecField &f : defs.fields)
    if (!all_finite(f.dx) || !all_finite(f.dy)) throw std::runtime_error("defs: non-finite displacement");
  return defs;
}

// ---------------------------------------------------------------------------
// Masks

inline void save_mask(const Mask &mask, const fs::path &sidecar_path) {
  const fs::path data_path = fs::path(sidecar_path).replace_extension(".raw");
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + data_path.string());
  out.write(reinterpret_cast<const char *>(mask.grid.data.data()),
            static_cast<std::streamsize>(mask.grid.data.size()));

  json j;
  j["width"] = mask.grid.width;
  j["height"] = mask.grid.height;
  j["dtype"] = "u8";
  j["role"] = mask.role;
  j["data_file"] = data_path.filename().string();
  detail::save_sidecar(sidecar_path, j);
}

inline Mask load_mask(const fs::path &sidecar_path) {
  const json j = detail::load_sidecar(sidecar_path);
  Mask mask;
  mask.grid = ByteGrid(j.at("width").get<int>(), j.at("height").get<int>());
  mask.role = j.at("role").get<std::string>();
  const fs::path data_path = sidecar_path.parent_path() / j.at("data_file").get<std::string>();
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw std::runtime_error("missing mask data " + data_path.string());
  in.read(reinterpret_cast<char *>(mask.grid.data.data()),
          static_cast<std::streamsize>(mask.grid.data.size()));
  if (!in) throw std::runtime_error("short read on mask data");
  return mask;
}

}  // namespace t1moco::io
