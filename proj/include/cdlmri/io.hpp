#ifndef CDLMRI_IO_HPP
#define CDLMRI_IO_HPP

// File formats:
//   images        portable graymap, P5 16-bit (or P2 plain) on write; P2/P5
//                 with any maxval on read, rescaled to [0,1]
//   masks,        versioned little-endian binary containers:
//   measurements,   8-byte magic, uint32 version, uint64 dims, payload
//   dictionaries
//   traces        CSV, one row per cycle
//   configs       flat key=value text, '#' starts a comment

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdlmri/cdl.hpp"
#include "cdlmri/image.hpp"
#include "cdlmri/recon.hpp"
#include "cdlmri/transforms.hpp"

namespace cdlmri {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

/// Raised for unreadable, unwritable or malformed files.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kContainerVersion = 1;

// ---------------------------------------------------------------- PGM ----

inline void write_pgm(const std::string& path, const ContrastImage& img, bool plain = false) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  auto level = [](double v) {
    return static_cast<unsigned>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 65535.0));
  };
  os << (plain ? "P2" : "P5") << '\n' << img.cols() << ' ' << img.rows() << "\n65535\n";
  if (plain) {
    for (std::size_t r = 0; r < img.rows(); ++r) {
      for (std::size_t c = 0; c < img.cols(); ++c) os << (c ? " " : "") << level(img(r, c));
      os << '\n';
    }
  } else {
    std::vector<unsigned char> buf(img.size() * 2);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const unsigned v = level(img.values()[i]);
      buf[2 * i] = static_cast<unsigned char>(v >> 8);  // big-endian per the PGM format
      buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline ContrastImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  auto token = [&]() {
    std::string t;
    while (is) {
      const int ch = is.get();
      if (ch == EOF) break;
      if (ch == '#') {
        std::string skip;
        std::getline(is, skip);
        if (!t.empty()) break;
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P5") throw IoError("'" + path + "' is not a PGM file");
  std::size_t cols = 0, rows = 0;
  unsigned long maxval = 0;
  try {
    cols = std::stoul(token());
    rows = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw IoError("'" + path + "': malformed PGM header");
  }
  if (cols == 0 || rows == 0 || maxval == 0 || maxval > 65535) throw IoError("'" + path + "': invalid PGM header");

  ContrastImage img(rows, cols);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (auto& v : img.values()) {
      const std::string t = token();
      if (t.empty()) throw IoError("'" + path + "': truncated pixel data");
      v = std::stod(t) * scale;
    }
  } else {
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(img.size() * bytes);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw IoError("'" + path + "': truncated pixel data");
    for (std::size_t i = 0; i < img.size(); ++i) {
      const unsigned v = bytes == 2 ? (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
      img.values()[i] = v * scale;
    }
  }
  return img;
}

// ---------------------------------------------------------- containers ----

namespace detail {

class BinaryWriter {
public:
  BinaryWriter(const std::string& path, const char (&magic)[9]) : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw IoError("cannot open '" + path + "' for writing");
    os_.write(magic, 8);
    put<std::uint32_t>(kContainerVersion);
  }
  template <typename T>
  void put(const T& v) { os_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void put_doubles(const double* p, std::size_t count) {
    os_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  }
  void bytes(const std::uint8_t* p, std::size_t count) {
    os_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count));
  }
  void finish() {
    os_.flush();
    if (!os_) throw IoError("failed writing '" + path_ + "'");
  }

private:
  std::string path_;
  std::ofstream os_;
};

class BinaryReader {
public:
  BinaryReader(const std::string& path, const char (&magic)[9]) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw IoError("cannot open '" + path + "'");
    char m[8];
    is_.read(m, 8);
    if (!is_ || std::memcmp(m, magic, 8) != 0) throw IoError("'" + path + "' has the wrong file type");
    if (get<std::uint32_t>() != kContainerVersion) throw IoError("'" + path + "' has an unsupported version");
  }
  template <typename T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw IoError("'" + path_ + "' is truncated");
    return v;
  }
  void get_doubles(double* p, std::size_t count) {
    is_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is_) throw IoError("'" + path_ + "' is truncated");
  }
  void bytes(std::uint8_t* p, std::size_t count) {
    is_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count));
    if (!is_) throw IoError("'" + path_ + "' is truncated");
  }
  void expect_end() {
    if (is_.peek() != EOF) throw IoError("'" + path_ + "' has trailing data");
  }
  std::uint64_t dim(std::uint64_t limit = 1ULL << 32) {
    const auto v = get<std::uint64_t>();
    if (v == 0 || v > limit) throw IoError("'" + path_ + "' has an invalid dimension");
    return v;
  }

private:
  std::string path_;
  std::ifstream is_;
};

inline void put_mask(BinaryWriter& w, const SamplingMask& m) {
  w.put<std::uint64_t>(m.rows);
  w.put<std::uint64_t>(m.cols);
  w.put<std::uint8_t>(m.kind == MaskKind::cartesian1d ? 0 : 1);
  w.bytes(m.sampled.data(), m.sampled.size());
}

inline SamplingMask get_mask(BinaryReader& r) {
  SamplingMask m;
  m.rows = r.dim(1ULL << 16);
  m.cols = r.dim(1ULL << 16);
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw IoError("mask has an unknown kind");
  m.kind = kind == 0 ? MaskKind::cartesian1d : MaskKind::random2d;
  m.sampled.resize(m.rows * m.cols);
  r.bytes(m.sampled.data(), m.sampled.size());
  for (auto v : m.sampled)
    if (v > 1) throw IoError("mask has non-binary entries");
  return m;
}

}  // namespace detail

inline void save_mask(const std::string& path, const SamplingMask& m) {
  detail::BinaryWriter w(path, "CDLMMASK");
  detail::put_mask(w, m);
  w.finish();
}

inline SamplingMask load_mask(const std::string& path) {
  detail::BinaryReader r(path, "CDLMMASK");
  SamplingMask m = detail::get_mask(r);
  r.expect_end();
  return m;
}

/// Mask followed by |Omega| complex samples (re, im) in mask order.
inline void save_measurements(const std::string& path, const Measurements& y) {
  if (y.values.size() != y.mask.count()) throw std::invalid_argument("save_measurements: count does not match mask");
  detail::BinaryWriter w(path, "CDLMMEAS");
  detail::put_mask(w, y.mask);
  w.put<std::uint64_t>(y.values.size());
  w.put_doubles(reinterpret_cast<const double*>(y.values.data()), 2 * y.values.size());
  w.finish();
}

inline Measurements load_measurements(const std::string& path) {
  detail::BinaryReader r(path, "CDLMMEAS");
  Measurements y;
  y.mask = detail::get_mask(r);
  const auto count = r.get<std::uint64_t>();
  if (count != y.mask.count()) throw IoError("'" + path + "': sample count does not match its mask");
  y.values.resize(count);
  r.get_doubles(reinterpret_cast<double*>(y.values.data()), 2 * count);
  r.expect_end();
  return y;
}

/// (n, K) then psi_c, phi_c, psi, phi, each column-major.
inline void save_dictionary(const std::string& path, const CoupledDictionary& d) {
  if (!d.shapes_consistent()) throw std::invalid_argument("save_dictionary: inconsistent shapes");
  detail::BinaryWriter w(path, "CDLMDICT");
  w.put<std::uint64_t>(static_cast<std::uint64_t>(d.n()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(d.K()));
  for (const Eigen::MatrixXd* m : {&d.psi_c, &d.phi_c, &d.psi, &d.phi})
    w.put_doubles(m->data(), static_cast<std::size_t>(m->size()));
  w.finish();
}

inline CoupledDictionary load_dictionary(const std::string& path) {
  detail::BinaryReader r(path, "CDLMDICT");
  const auto n = static_cast<Eigen::Index>(r.dim(1ULL << 20));
  const auto K = static_cast<Eigen::Index>(r.dim(1ULL << 24));
  CoupledDictionary d;
  for (Eigen::MatrixXd* m : {&d.psi_c, &d.phi_c, &d.psi, &d.phi}) {
    m->resize(n, K);
    r.get_doubles(m->data(), static_cast<std::size_t>(m->size()));
  }
  r.expect_end();
  return d;
}

// -------------------------------------------------------------- traces ----

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns: cycle, eps_c, eps_1, psnr, residual, millis. With
/// include_timing false the millis column is written as 0 so that runs can
/// be compared byte for byte.
inline void write_trace_csv(std::ostream& os, const ReconTrace& trace, bool include_timing = true) {
  os << "cycle,eps_c,eps_1,psnr,residual,millis\n";
  for (const auto& r : trace)
    os << r.cycle << ',' << format_double(r.eps_c) << ',' << format_double(r.eps_1) << ','
       << format_double(r.psnr) << ',' << format_double(r.residual) << ','
       << (include_timing ? format_double(r.millis) : std::string("0")) << '\n';
}

inline void write_trace_csv(const std::string& path, const ReconTrace& trace, bool include_timing = true) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_trace_csv(os, trace, include_timing);
  if (!os) throw IoError("failed writing '" + path + "'");
}

// ------------------------------------------------------------- configs ----

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a number");
  }
  if (used != v.size()) throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a number");
  return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not an integer");
  }
  if (used != v.size()) throw std::invalid_argument("config key '" + key + "': '" + v + "' is not an integer");
  return i;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace detail

inline KeyValues to_key_values(const ReconConfig& c) {
  return {
      {"patch_side", std::to_string(c.patch_side)},
      {"K", std::to_string(c.K)},
      {"s_c", std::to_string(c.s_c)},
      {"s_1", std::to_string(c.s_1)},
      {"s_2", std::to_string(c.s_2)},
      {"L", std::to_string(c.L)},
      {"T", std::to_string(c.T)},
      {"stride", std::to_string(c.stride)},
      {"nu1", format_double(c.nu1)},
      {"eps_c_start", format_double(c.eps_c.start)},
      {"eps_c_end", format_double(c.eps_c.end)},
      {"eps_1_start", format_double(c.eps_1.start)},
      {"eps_1_end", format_double(c.eps_1.end)},
      {"training_subset", std::to_string(c.training_subset)},
      {"seed", std::to_string(c.seed)},
      {"omp_mode", to_string(c.omp_mode)},
      {"warm_start", c.warm_start ? "true" : "false"},
      {"single_sparsity", std::to_string(c.single_sparsity)},
  };
}

/// Applies every recognised key to `c`; returns the keys it did not use.
inline KeyValues apply_key_values(ReconConfig& c, const KeyValues& kv) {
  KeyValues rest;
  for (const auto& [k, v] : kv) {
    using namespace detail;
    if (k == "patch_side") c.patch_side = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "K") c.K = static_cast<Eigen::Index>(parse_int(k, v));
    else if (k == "s_c") c.s_c = static_cast<int>(parse_int(k, v));
    else if (k == "s_1") c.s_1 = static_cast<int>(parse_int(k, v));
    else if (k == "s_2") c.s_2 = static_cast<int>(parse_int(k, v));
    else if (k == "L") c.L = static_cast<int>(parse_int(k, v));
    else if (k == "T") c.T = static_cast<int>(parse_int(k, v));
    else if (k == "stride") c.stride = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "nu1") c.nu1 = parse_real(k, v);
    else if (k == "eps_c_start") c.eps_c.start = parse_real(k, v);
    else if (k == "eps_c_end") c.eps_c.end = parse_real(k, v);
    else if (k == "eps_1_start") c.eps_1.start = parse_real(k, v);
    else if (k == "eps_1_end") c.eps_1.end = parse_real(k, v);
    else if (k == "training_subset") c.training_subset = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(k, v));
    else if (k == "omp_mode") c.omp_mode = parse_omp_mode(v);
    else if (k == "warm_start") c.warm_start = parse_bool(k, v);
    else if (k == "single_sparsity") c.single_sparsity = static_cast<int>(parse_int(k, v));
    else rest.emplace(k, v);
  }
  return rest;
}

inline void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

}  // namespace cdlmri

#endif  // CDLMRI_IO_HPP
