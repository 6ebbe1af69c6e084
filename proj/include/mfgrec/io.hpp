#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgrec/forward.hpp"
#include "mfgrec/grid.hpp"
#include "mfgrec/optimizer.hpp"

/// On-disk formats: datasets as a manifest plus per-field CSV files (one
/// time level per file, row-major), run reports as CSV + JSON summary.
/// Numbers are written with 17 significant digits so readback round-trips
/// exactly.
namespace mfgrec {

namespace io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// -------------------------------------------------------------------------
// SHA-256 (compact single-purpose implementation for manifest content hashes)
// -------------------------------------------------------------------------

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    buffer_.clear();
    total_ = 0;
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    buffer_.insert(buffer_.end(), p, p + len);
    std::size_t off = 0;
    while (buffer_.size() - off >= 64) {
      process(buffer_.data() + off);
      off += 64;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + off);
  }

  void update(const std::string& s) { update(s.data(), s.size()); }
  void update(const std::vector<double>& v) {
    update(v.data(), v.size() * sizeof(double));
  }

  std::string hex_digest() {
    std::vector<unsigned char> pad = buffer_;
    const std::uint64_t bits = total_ * 8;
    pad.push_back(0x80);
    while (pad.size() % 64 != 56) pad.push_back(0x00);
    for (int i = 7; i >= 0; --i)
      pad.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    auto st = state_;
    for (std::size_t off = 0; off < pad.size(); off += 64) process_block(pad.data() + off, st);
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (auto v : st) out << std::setw(8) << v;
    return out.str();
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void process(const unsigned char* block) { process_block(block, state_); }

  static void process_block(const unsigned char* block,
                            std::array<std::uint32_t, 8>& st) {
    static constexpr std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
        0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
        0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
        0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
        0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
        0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(block[4 * i]) << 24) |
             (std::uint32_t(block[4 * i + 1]) << 16) |
             (std::uint32_t(block[4 * i + 2]) << 8) |
             std::uint32_t(block[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, h] = st;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    st[0] += a; st[1] += b; st[2] += c; st[3] += d;
    st[4] += e; st[5] += f; st[6] += g; st[7] += h;
  }

  std::array<std::uint32_t, 8> state_{};
  std::vector<unsigned char> buffer_;
  std::uint64_t total_ = 0;
};

// -------------------------------------------------------------------------
// CSV helpers
// -------------------------------------------------------------------------

inline void write_level_csv(const std::filesystem::path& path,
                            const GridSpec& g, const double* level) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) out << ',';
      out << format_double(level[g.space_index(j, i)]);
    }
    out << '\n';
  }
}

inline void read_level_csv(const std::filesystem::path& path, const GridSpec& g,
                           double* level) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  for (int j = 0; j < g.ny; ++j) {
    if (!std::getline(in, line))
      throw std::runtime_error("truncated csv " + path.string());
    std::istringstream row(line);
    std::string cell;
    for (int i = 0; i < g.nx; ++i) {
      if (!std::getline(row, cell, ','))
        throw std::runtime_error("short row in " + path.string());
      level[g.space_index(j, i)] = std::stod(cell);
    }
  }
}

inline void save_spatial(const std::filesystem::path& path,
                         const SpatialField& f) {
  write_level_csv(path, f.grid, f.values.data());
}

inline SpatialField load_spatial(const std::filesystem::path& path,
                                 const GridSpec& g) {
  SpatialField f(g);
  read_level_csv(path, g, f.values.data());
  return f;
}

inline std::string level_file_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "t%04d.csv", k);
  return buf;
}

inline void save_field(const std::filesystem::path& dir, const Field& f) {
  std::filesystem::create_directories(dir);
  for (int k = 0; k < f.grid.nt; ++k)
    write_level_csv(dir / level_file_name(k), f.grid, f.level(k));
}

inline Field load_field(const std::filesystem::path& dir, const GridSpec& g) {
  Field f(g);
  for (int k = 0; k < g.nt; ++k)
    read_level_csv(dir / level_file_name(k), g, f.level(k));
  return f;
}

// -------------------------------------------------------------------------
// GridSpec <-> JSON
// -------------------------------------------------------------------------

inline nlohmann::json grid_to_json(const GridSpec& g) {
  return {{"dim", g.dim}, {"nx", g.nx},     {"ny", g.ny},
          {"nt", g.nt},   {"lx", g.lx},     {"ly", g.ly},
          {"T", g.horizon}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.dim = j.at("dim").get<int>();
  g.nx = j.at("nx").get<int>();
  g.ny = j.at("ny").get<int>();
  g.nt = j.at("nt").get<int>();
  g.lx = j.at("lx").get<double>();
  g.ly = j.at("ly").get<double>();
  g.horizon = j.at("T").get<double>();
  g.validate();
  return g;
}

// -------------------------------------------------------------------------
// Dataset directory
// -------------------------------------------------------------------------

inline std::string dataset_content_hash(const Dataset& ds) {
  Sha256 h;
  h.update(ds.uT.values);
  h.update(ds.p0.values);
  h.update(ds.pT.values);
  h.update(ds.coeffs.F1.values);
  h.update(ds.coeffs.s.values);
  h.update(ds.coeffs.f.values);
  const double beta = ds.coeffs.beta;
  h.update(&beta, sizeof(beta));
  return h.hex_digest();
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const GridSpec& g = ds.grid();

  nlohmann::json manifest;
  manifest["grid"] = grid_to_json(g);
  manifest["beta"] = ds.coeffs.beta;
  manifest["has_truth"] = ds.has_truth;
  switch (ds.coeffs.kernel.type()) {
    case Kernel::Type::Constant:
      manifest["kernel"] = {{"type", "constant"},
                            {"value", ds.coeffs.kernel.constant_value()}};
      break;
    case Kernel::Type::Separable:
      manifest["kernel"] = {{"type", "separable"}};
      save_spatial(dir / "kernel_a.csv", ds.coeffs.kernel.factor_x());
      save_spatial(dir / "kernel_b.csv", ds.coeffs.kernel.factor_y());
      break;
    case Kernel::Type::Dense: {
      manifest["kernel"] = {{"type", "dense"}};
      std::ofstream out(dir / "kernel.csv");
      const int ns = g.n_space();
      const auto& tab = ds.coeffs.kernel.table();
      for (int x = 0; x < ns; ++x) {
        for (int y = 0; y < ns; ++y) {
          if (y) out << ',';
          out << format_double(tab[static_cast<std::size_t>(x) * ns + y]);
        }
        out << '\n';
      }
      break;
    }
  }

  save_spatial(dir / "uT.csv", ds.uT);
  save_spatial(dir / "p0.csv", ds.p0);
  save_spatial(dir / "pT.csv", ds.pT);
  save_field(dir / "F1", ds.coeffs.F1);
  save_field(dir / "F2", ds.coeffs.F2);
  save_field(dir / "s", ds.coeffs.s);
  save_field(dir / "f", ds.coeffs.f);
  if (ds.has_truth) {
    save_field(dir / "truth_u", ds.truth_u);
    save_field(dir / "truth_p", ds.truth_p);
  }
  manifest["content_hash"] = dataset_content_hash(ds);
  std::ofstream mout(dir / "manifest.json");
  mout << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream min(dir / "manifest.json");
  if (!min)
    throw std::runtime_error("missing manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(min);
  const GridSpec g = grid_from_json(manifest.at("grid"));

  Dataset ds;
  ds.uT = load_spatial(dir / "uT.csv", g);
  ds.p0 = load_spatial(dir / "p0.csv", g);
  ds.pT = load_spatial(dir / "pT.csv", g);

  MfgCoefficients c;
  c.beta = manifest.at("beta").get<double>();
  c.s = load_field(dir / "s", g);
  c.f = load_field(dir / "f", g);
  c.F1 = load_field(dir / "F1", g);
  c.F2 = load_field(dir / "F2", g);
  const auto& kj = manifest.at("kernel");
  const std::string ktype = kj.at("type").get<std::string>();
  if (ktype == "constant") {
    c.kernel = Kernel::constant(kj.at("value").get<double>());
  } else if (ktype == "separable") {
    c.kernel = Kernel::separable(load_spatial(dir / "kernel_a.csv", g),
                                 load_spatial(dir / "kernel_b.csv", g));
  } else if (ktype == "dense") {
    const int ns = g.n_space();
    std::vector<double> tab(static_cast<std::size_t>(ns) * ns);
    std::ifstream in(dir / "kernel.csv");
    std::string line;
    for (int x = 0; x < ns; ++x) {
      std::getline(in, line);
      std::istringstream row(line);
      std::string cell;
      for (int y = 0; y < ns; ++y) {
        std::getline(row, cell, ',');
        tab[static_cast<std::size_t>(x) * ns + y] = std::stod(cell);
      }
    }
    c.kernel = Kernel::dense(g, std::move(tab));
  } else {
    throw std::runtime_error("unknown kernel type " + ktype);
  }
  ds.coeffs = std::move(c);

  ds.has_truth = manifest.value("has_truth", false);
  if (ds.has_truth) {
    ds.truth_u = load_field(dir / "truth_u", g);
    ds.truth_p = load_field(dir / "truth_p", g);
  } else {
    ds.truth_u = Field(g);
    ds.truth_p = Field(g);
  }
  return ds;
}

// -------------------------------------------------------------------------
// Run report
// -------------------------------------------------------------------------

inline void save_iterations_csv(const std::filesystem::path& path,
                                const RunReport& report) {
  std::ofstream out(path);
  out << "iter,J,J1,J2,J3,grad_norm,step,u_E,p_E,constraint_violation,"
         "monitor_norm,inside_ball\n";
  for (const auto& r : report.history) {
    out << r.iter << ',' << format_double(r.j_total) << ','
        << format_double(r.j1) << ',' << format_double(r.j2) << ','
        << format_double(r.j3) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.step) << ',' << format_double(r.u_err) << ','
        << format_double(r.p_err) << ','
        << format_double(r.constraint_violation) << ','
        << format_double(r.monitor_norm) << ',' << (r.inside_ball ? 1 : 0)
        << '\n';
  }
}

inline nlohmann::json report_summary_json(const RunReport& report) {
  nlohmann::json j;
  j["status"] = to_string(report.status);
  j["iterations"] = report.history.empty() ? 0 : report.history.back().iter;
  j["n_evals"] = report.n_evals;
  j["n_grads"] = report.n_grads;
  if (!report.history.empty()) {
    const auto& last = report.history.back();
    j["final_J"] = last.j_total;
    j["final_grad_norm"] = last.grad_norm;
    j["final_u_E"] = last.u_err;
    j["final_p_E"] = last.p_err;
  }
  return j;
}

}  // namespace io

}  // namespace mfgrec
