#pragma once

// File formats: CSV tables with fixed number formatting, 16-bit binary PGM
// frames with a JSON sidecar, and FNV-1a content hashes for manifests.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "attobeat/analysis.hpp"
#include "attobeat/error.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/vmi.hpp"

namespace attobeat {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) { return fmt::format("{:016x}", h); }

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput(fmt::format("cannot write {}", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InvalidInput(fmt::format("write failed for {}", path.string()));
}

/// Shortest round-trip-stable text for CSV cells; NaN/inf are spelled out.
inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  return fmt::format("{:.12g}", x);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : cols_(header.size()) { line(header); }

  void row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(num(v));
    line(cells);
  }

  void row(const std::vector<std::string>& cells) { line(cells); }

  const std::string& str() const { return text_; }
  void save(const fs::path& path) const { write_file(path, text_); }

 private:
  void line(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw InvalidInput("csv: row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t cols_;
  std::string text_;
};

/// Matrix with a leading label column: header "<row_name>,<col values...>".
inline std::string matrix_csv(const Eigen::MatrixXd& m, const std::string& row_name, std::span<const double> row_axis,
                              std::span<const double> col_axis) {
  if (static_cast<Eigen::Index>(row_axis.size()) != m.rows() || static_cast<Eigen::Index>(col_axis.size()) != m.cols())
    throw InvalidInput("matrix_csv: axis length mismatch");
  std::string out = row_name;
  for (double c : col_axis) out += ',' + num(c);
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += num(row_axis[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + num(m(i, j));
    out += '\n';
  }
  return out;
}

inline std::string levels_csv(const VibrationalLevels& lv) {
  CsvTable t({"v", "energy_cm1", "population", "probe_weight"});
  for (const auto& l : lv.levels()) t.row(std::vector<double>{double(l.v), l.energy, l.population, l.probe_weight});
  return t.str();
}

/// r, a0, a2, ... and, when available, their 1σ uncertainties.
inline std::string coefficients_csv(const InversionResult& res) {
  std::vector<std::string> header{"r"};
  for (int l = 0; l <= res.a.l_max; l += 2) header.push_back(fmt::format("a{}", l));
  const bool sig = res.a_sigma.size() > 0;
  if (sig)
    for (int l = 0; l <= res.a.l_max; l += 2) header.push_back(fmt::format("sigma_a{}", l));
  header.insert(header.end(), {"beta2", "beta4", "p_v", "p_e"});
  CsvTable t(header);
  for (int r = 1; r <= res.a.r_max; ++r) {
    const auto i = static_cast<std::size_t>(r - 1);
    std::vector<double> row{double(r)};
    for (int l = 0; l <= res.a.l_max; l += 2) row.push_back(res.a.at(r, l));
    if (sig)
      for (int c = 0; c < res.a.orders(); ++c) row.push_back(res.a_sigma(r - 1, c));
    row.insert(row.end(), {res.beta2[i], res.beta4[i], res.p_v[i], res.p_e[i]});
    t.row(row);
  }
  return t.str();
}

inline Json estimate_json(const Estimate& e) {
  Json j;
  j["ok"] = e.ok;
  j["value"] = e.ok ? Json(e.value) : Json(nullptr);
  j["sigma"] = e.ok ? Json(e.sigma) : Json(nullptr);
  return j;
}

inline Json table1_json(const Table1Report& rep) {
  Json j;
  j["tolerance_col2_cm1"] = rep.tol_col2;
  j["tolerance_col3_cm1"] = rep.tol_col3;
  j["all_pass"] = rep.all_pass();
  j["rows"] = Json::array();
  for (const auto& r : rep.rows) {
    Json row;
    row["label"] = r.label;
    row["assignment"] = {r.pair.first, r.pair.second};
    row["col2_fft_cm1"] = estimate_json(r.col2);
    row["col3_oscillation_cm1"] = estimate_json(r.col3);
    row["literature_cm1"] = r.literature;
    row["pass_col2"] = r.pass_col2;
    row["pass_col3"] = r.pass_col3;
    j["rows"].push_back(row);
  }
  return j;
}

inline std::string table1_csv(const Table1Report& rep) {
  CsvTable t({"label", "v", "vp", "col2_cm1", "col2_sigma", "col3_cm1", "col3_sigma", "literature_cm1", "pass_col2",
              "pass_col3"});
  for (const auto& r : rep.rows)
    t.row(std::vector<std::string>{r.label, std::to_string(r.pair.first), std::to_string(r.pair.second),
                                   r.col2.ok ? num(r.col2.value) : "nan", r.col2.ok ? num(r.col2.sigma) : "nan",
                                   r.col3.ok ? num(r.col3.value) : "nan", r.col3.ok ? num(r.col3.sigma) : "nan",
                                   num(r.literature), r.pass_col2 ? "true" : "false", r.pass_col3 ? "true" : "false"});
  return t.str();
}

// ---------------------------------------------------------------------------
// PGM frames

inline fs::path sidecar_path(const fs::path& pgm) { return fs::path(pgm.string() + ".json"); }

/// Writes counts as 16-bit big-endian P5 plus a sidecar with center and scale.
inline void write_frame(const fs::path& path, const VMIImage& img) {
  std::string data = fmt::format("P5\n{} {}\n65535\n", img.width(), img.height());
  data.reserve(data.size() + 2 * static_cast<std::size_t>(img.pixels.size()));
  for (int row = 0; row < img.height(); ++row)
    for (int col = 0; col < img.width(); ++col) {
      const double v = std::round(img.pixels(row, col));
      if (!(v >= 0.0) || v > 65535.0)
        throw InvalidInput(fmt::format("pixel ({}, {}) = {} does not fit a 16-bit PGM", row, col, v));
      const auto u = static_cast<std::uint16_t>(v);
      data += static_cast<char>(u >> 8);
      data += static_cast<char>(u & 0xff);
    }
  write_file(path, data);
  Json side;
  side["center_x"] = img.center_x;
  side["center_y"] = img.center_y;
  side["exposure"] = img.exposure;
  side["counts_per_unit"] = img.counts_per_unit;
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

namespace detail {

inline void skip_pgm_space(const std::string& s, std::size_t& i) {
  for (;;) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i < s.size() && s[i] == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
      continue;
    }
    return;
  }
}

inline long read_pgm_int(const std::string& s, std::size_t& i, const std::string& name) {
  skip_pgm_space(s, i);
  const std::size_t start = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == start || i - start > 9) throw InvalidInput(fmt::format("{}: malformed PGM header", name));
  return std::stol(s.substr(start, i - start));
}

}  // namespace detail

/// Reads a binary PGM (8- or 16-bit). Center and scale come from the sidecar
/// when present; otherwise the geometric center and counts_per_unit = 1.
inline VMIImage read_frame(const fs::path& path) {
  const std::string name = path.string();
  const std::string s = read_file(path);
  if (s.size() < 2 || s[0] != 'P' || s[1] != '5') throw InvalidInput(fmt::format("{}: not a binary PGM (P5)", name));
  std::size_t i = 2;
  const long w = detail::read_pgm_int(s, i, name);
  const long h = detail::read_pgm_int(s, i, name);
  const long maxval = detail::read_pgm_int(s, i, name);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw InvalidInput(fmt::format("{}: invalid PGM dimensions", name));
  if (i >= s.size() || !std::isspace(static_cast<unsigned char>(s[i])))
    throw InvalidInput(fmt::format("{}: malformed PGM header", name));
  ++i;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * bpp;
  if (s.size() - i < need) throw InvalidInput(fmt::format("{}: truncated PGM data", name));
  VMIImage img;
  img.pixels.resize(h, w);
  for (long row = 0; row < h; ++row)
    for (long col = 0; col < w; ++col) {
      const std::size_t k = i + (static_cast<std::size_t>(row) * static_cast<std::size_t>(w) + static_cast<std::size_t>(col)) * bpp;
      const unsigned hi = static_cast<unsigned char>(s[k]);
      const unsigned v = bpp == 2 ? (hi << 8) | static_cast<unsigned char>(s[k + 1]) : hi;
      img.pixels(row, col) = v;
    }
  img.center_x = (w - 1) / 2.0;
  img.center_y = (h - 1) / 2.0;
  img.exposure = img.pixels.sum();
  const fs::path side = sidecar_path(path);
  if (fs::exists(side)) {
    try {
      const auto j = Json::parse(read_file(side));
      img.center_x = j.at("center_x").get<double>();
      img.center_y = j.at("center_y").get<double>();
      img.exposure = j.value("exposure", img.exposure);
      img.counts_per_unit = j.value("counts_per_unit", 1.0);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(fmt::format("{}: bad sidecar: {}", side.string(), e.what()));
    }
  }
  return img;
}

}  // namespace attobeat
