#ifndef CDLMRI_COMMANDS_HPP
#define CDLMRI_COMMANDS_HPP

// The simulate / reconstruct / evaluate workflow behind the command-line
// tool. Every command reads an ExperimentConfig, writes its files under the
// output directory and reports through the given streams. run_command maps
// failures onto exit codes.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cdlmri/cdl.hpp"
#include "cdlmri/eval.hpp"
#include "cdlmri/image.hpp"
#include "cdlmri/io.hpp"
#include "cdlmri/parallel.hpp"
#include "cdlmri/recon.hpp"
#include "cdlmri/transforms.hpp"

namespace cdlmri {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2, kExitNumeric = 3 };

/// Non-finite values found in an input or a result.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  ReconConfig recon;

  std::string target;        // ground-truth target image (PGM)
  std::string guidance;      // fully sampled guidance image (PGM)
  std::string estimate;      // image to score (evaluate)
  std::string mask_file;     // existing mask; overrides the mask settings below
  std::string measurements;  // existing measurements (reconstruct)
  std::string dictionary;    // dictionary file (gallery)

  MaskKind mask_kind = MaskKind::cartesian1d;
  double fold = 4.0;
  std::uint64_t mask_seed = 0;
  DensityProfile density;

  std::size_t rows = 256;  // mask-gen, phantom-gen
  std::size_t cols = 256;
  std::uint64_t phantom_seed = 0;

  std::string output_dir = "cdlmri_out";
  bool single_contrast = false;  // ablation: ignore the guidance
  bool gallery = false;          // also render the learned atoms
  bool trace_timing = true;      // write wall-clock times into the trace
  int threads = 0;               // 0 = OpenMP default

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline KeyValues to_key_values(const ExperimentConfig& e) {
  KeyValues kv = to_key_values(e.recon);
  kv.insert({
      {"target", e.target},
      {"guidance", e.guidance},
      {"estimate", e.estimate},
      {"mask_file", e.mask_file},
      {"measurements", e.measurements},
      {"dictionary", e.dictionary},
      {"mask_kind", to_string(e.mask_kind)},
      {"fold", format_double(e.fold)},
      {"mask_seed", std::to_string(e.mask_seed)},
      {"density_power", format_double(e.density.power)},
      {"center_fraction", format_double(e.density.center_fraction)},
      {"rows", std::to_string(e.rows)},
      {"cols", std::to_string(e.cols)},
      {"phantom_seed", std::to_string(e.phantom_seed)},
      {"output_dir", e.output_dir},
      {"single_contrast", e.single_contrast ? "true" : "false"},
      {"gallery", e.gallery ? "true" : "false"},
      {"trace_timing", e.trace_timing ? "true" : "false"},
      {"threads", std::to_string(e.threads)},
  });
  return kv;
}

/// Applies every recognised key; returns the rest.
inline KeyValues apply_key_values(ExperimentConfig& e, const KeyValues& kv) {
  KeyValues rest;
  for (const auto& [k, v] : apply_key_values(e.recon, kv)) {
    using namespace detail;
    if (k == "target") e.target = v;
    else if (k == "guidance") e.guidance = v;
    else if (k == "estimate") e.estimate = v;
    else if (k == "mask_file") e.mask_file = v;
    else if (k == "measurements") e.measurements = v;
    else if (k == "dictionary") e.dictionary = v;
    else if (k == "mask_kind") e.mask_kind = parse_mask_kind(v);
    else if (k == "fold") e.fold = parse_real(k, v);
    else if (k == "mask_seed") e.mask_seed = static_cast<std::uint64_t>(parse_int(k, v));
    else if (k == "density_power") e.density.power = parse_real(k, v);
    else if (k == "center_fraction") e.density.center_fraction = parse_real(k, v);
    else if (k == "rows") e.rows = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "cols") e.cols = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "phantom_seed") e.phantom_seed = static_cast<std::uint64_t>(parse_int(k, v));
    else if (k == "output_dir") e.output_dir = v;
    else if (k == "single_contrast") e.single_contrast = parse_bool(k, v);
    else if (k == "gallery") e.gallery = parse_bool(k, v);
    else if (k == "trace_timing") e.trace_timing = parse_bool(k, v);
    else if (k == "threads") e.threads = static_cast<int>(parse_int(k, v));
    else rest.emplace(k, v);
  }
  return rest;
}

/// Reads a key=value file; unknown keys are a validation error.
inline void load_config_file(ExperimentConfig& e, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  const KeyValues rest = apply_key_values(e, parse_key_values(is));
  if (!rest.empty()) throw std::invalid_argument("config '" + path + "': unknown key '" + rest.begin()->first + "'");
}

inline void write_config_file(const ExperimentConfig& e, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_key_values(os, to_key_values(e));
  if (!os) throw IoError("failed writing '" + path + "'");
}

// ------------------------------------------------------------- gallery ----

/// Atom grids of the four dictionaries, 2x2: psi_c | psi over phi_c | phi.
/// Each panel holds ceil(sqrt(K)) x ceil(sqrt(K)) cells of sqrt(n) x sqrt(n)
/// atoms separated by one-pixel black lines. Atoms are min-max normalised
/// one at a time; a constant atom is drawn mid-gray.
inline ContrastImage render_gallery(const CoupledDictionary& d) {
  if (!d.shapes_consistent() || d.K() == 0) throw std::invalid_argument("render_gallery: inconsistent dictionary");
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d.n()))));
  if (side * side != static_cast<std::size_t>(d.n()))
    throw std::invalid_argument("render_gallery: atom length is not a square");
  const auto K = static_cast<std::size_t>(d.K());
  std::size_t grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(K))));
  while (grid * grid < K) ++grid;
  const std::size_t cell = side + 1, panel = grid * cell + 1;

  ContrastImage out(2 * panel, 2 * panel);
  const Eigen::MatrixXd* panels[4] = {&d.psi_c, &d.psi, &d.phi_c, &d.phi};
  for (std::size_t pi = 0; pi < 4; ++pi) {
    const std::size_t r_off = (pi / 2) * panel, c_off = (pi % 2) * panel;
    const Eigen::MatrixXd& m = *panels[pi];
    for (std::size_t k = 0; k < K; ++k) {
      const auto atom = m.col(static_cast<Eigen::Index>(k));
      const double lo = atom.minCoeff(), hi = atom.maxCoeff();
      const std::size_t r0 = r_off + 1 + (k / grid) * cell, c0 = c_off + 1 + (k % grid) * cell;
      for (std::size_t dr = 0; dr < side; ++dr)
        for (std::size_t dc = 0; dc < side; ++dc) {
          const double v = atom(static_cast<Eigen::Index>(dr * side + dc));
          out(r0 + dr, c0 + dc) = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        }
    }
  }
  return out;
}

// ------------------------------------------------------------ helpers ----

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw std::invalid_argument(std::string("missing ") + what + " path");
  if (!std::filesystem::is_regular_file(path))
    throw std::invalid_argument(std::string(what) + " '" + path + "' does not exist");
}

inline std::filesystem::path prepare_output_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("missing output directory");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  const auto probe = std::filesystem::path(dir) / ".cdlmri_write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw IoError("output directory '" + dir + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
  return dir;
}

inline void require_finite(const ContrastImage& img, const std::string& what) {
  for (double v : img.values())
    if (!std::isfinite(v)) throw NumericError(what + " contains non-finite values");
}

inline void require_finite(const Measurements& y, const std::string& what) {
  for (const auto& v : y.values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw NumericError(what + " contains non-finite values");
}

inline void apply_threads(const ExperimentConfig& e) {
  if (e.threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (e.threads > 0) set_thread_count(e.threads);
}

inline ContrastImage load_image(const std::string& path, const char* what) {
  require_file(path, what);
  ContrastImage img = read_pgm(path);
  require_finite(img, what);
  return normalize(img);
}

inline SamplingMask mask_for(const ExperimentConfig& e, std::size_t rows, std::size_t cols) {
  if (!e.mask_file.empty()) {
    require_file(e.mask_file, "mask");
    SamplingMask m = load_mask(e.mask_file);
    if (m.rows != rows || m.cols != cols) throw std::invalid_argument("mask shape does not match the image");
    return m;
  }
  if (!(e.fold >= 1.0)) throw std::invalid_argument("fold must be >= 1");
  return make_mask(e.mask_kind, rows, cols, e.fold, e.mask_seed, e.density);
}

// PSNR as reported by the tool: computed on the image as stored (16-bit
// PGM), so `evaluate` on the written files prints the same number.
inline double stored_psnr(const ContrastImage& truth, const ContrastImage& img) {
  ContrastImage q = img;
  for (auto& v : q.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0;
  return psnr(truth, q);
}

inline std::string format_db(double db) {
  if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << db;
  return ss.str();
}

}  // namespace detail

// ----------------------------------------------------------- commands ----

/// Undersamples the target: writes mask.bin, measurements.bin and the
/// zero-filled baseline, and prints its PSNR.
inline void cmd_simulate(const ExperimentConfig& e, std::ostream& out) {
  detail::apply_threads(e);
  const ContrastImage truth = detail::load_image(e.target, "target");
  const auto dir = detail::prepare_output_dir(e.output_dir);
  const SamplingMask mask = detail::mask_for(e, truth.rows(), truth.cols());
  const Measurements y = undersample(dft2(truth), mask);
  const ContrastImage zf = zero_filled_recon(y);
  detail::require_finite(zf, "zero-filled image");

  save_mask((dir / "mask.bin").string(), mask);
  save_measurements((dir / "measurements.bin").string(), y);
  write_pgm((dir / "zero_filled.pgm").string(), zf);
  out << "sampled " << mask.count() << " of " << mask.rows * mask.cols << " k-space locations ("
      << (mask.kind == MaskKind::cartesian1d ? mask.count() / mask.cols : mask.count())
      << (mask.kind == MaskKind::cartesian1d ? " lines" : " points") << ")\n";
  out << "zero-filled PSNR " << detail::format_db(detail::stored_psnr(truth, zf)) << " dB\n";
}

/// Guided (or, with single_contrast, guidance-free) reconstruction. Uses the
/// measurements file when given, otherwise simulates from the target.
/// Writes reconstruction.pgm, trace.csv, config.txt, and when a target is
/// available residual.pgm; guided runs also write dictionary.bin and, on
/// request, gallery.pgm.
inline void cmd_reconstruct(const ExperimentConfig& e, std::ostream& out) {
  detail::apply_threads(e);
  e.recon.validate();
  std::optional<ContrastImage> truth;
  if (!e.target.empty()) truth = detail::load_image(e.target, "target");

  Measurements y;
  if (!e.measurements.empty()) {
    detail::require_file(e.measurements, "measurements");
    y = load_measurements(e.measurements);
    if (truth && (truth->rows() != y.mask.rows || truth->cols() != y.mask.cols))
      throw std::invalid_argument("target and measurements differ in shape");
  } else {
    if (!truth) throw std::invalid_argument("reconstruct needs measurements or a target to simulate from");
    y = undersample(dft2(*truth), detail::mask_for(e, truth->rows(), truth->cols()));
  }
  detail::require_finite(y, "measurements");

  std::optional<ContrastImage> guidance;
  if (!e.single_contrast) {
    guidance = detail::load_image(e.guidance, "guidance");
    if (guidance->rows() != y.mask.rows || guidance->cols() != y.mask.cols)
      throw std::invalid_argument("guidance and measurements differ in shape");
  }
  const auto dir = detail::prepare_output_dir(e.output_dir);

  const ContrastImage* gt = truth ? &*truth : nullptr;
  const ReconResult r = e.single_contrast ? reconstruct_single_contrast(y, e.recon, gt)
                                          : reconstruct(y, *guidance, e.recon, gt);
  detail::require_finite(r.image, "reconstruction");

  write_pgm((dir / "reconstruction.pgm").string(), r.image);
  write_trace_csv((dir / "trace.csv").string(), r.trace, e.trace_timing);
  write_config_file(e, (dir / "config.txt").string());
  if (!e.single_contrast) {
    save_dictionary((dir / "dictionary.bin").string(), r.dictionary);
    if (e.gallery) write_pgm((dir / "gallery.pgm").string(), render_gallery(r.dictionary));
  }
  out << (e.single_contrast ? "single-contrast" : "guided") << " reconstruction, " << r.trace.size() << " cycles\n";
  if (truth) {
    write_pgm((dir / "residual.pgm").string(), residual_map(*truth, r.image).display);
    out << "PSNR " << detail::format_db(detail::stored_psnr(*truth, r.image)) << " dB\n";
  }
}

/// Scores `estimate` against `target`; writes residual.pgm.
inline void cmd_evaluate(const ExperimentConfig& e, std::ostream& out) {
  detail::require_file(e.target, "target");
  detail::require_file(e.estimate, "estimate");
  const ContrastImage truth = detail::load_image(e.target, "target");
  ContrastImage est = read_pgm(e.estimate);
  detail::require_finite(est, "estimate");
  require_same_shape(truth, est, "evaluate");
  const auto dir = detail::prepare_output_dir(e.output_dir);
  const ResidualMap res = residual_map(truth, est);
  write_pgm((dir / "residual.pgm").string(), res.display);
  out << "PSNR " << detail::format_db(psnr(truth, est)) << " dB\n";
  out << "max abs error " << format_double(*std::max_element(res.absolute.values().begin(), res.absolute.values().end()))
      << '\n';
}

/// Writes mask.bin and a viewable mask.pgm of size rows x cols.
inline void cmd_mask_gen(const ExperimentConfig& e, std::ostream& out) {
  if (e.rows == 0 || e.cols == 0) throw std::invalid_argument("rows and cols must be positive");
  const auto dir = detail::prepare_output_dir(e.output_dir);
  const SamplingMask m = detail::mask_for(e, e.rows, e.cols);
  save_mask((dir / "mask.bin").string(), m);
  ContrastImage view(m.rows, m.cols);
  for (std::size_t i = 0; i < m.sampled.size(); ++i) view.values()[i] = m.sampled[i];
  write_pgm((dir / "mask.pgm").string(), view);
  out << "sampled " << m.count() << " of " << m.rows * m.cols << " k-space locations, fold "
      << detail::format_db(m.fold()) << '\n';
}

/// Writes target.pgm and guidance.pgm of the synthetic coupled phantom.
inline void cmd_phantom_gen(const ExperimentConfig& e, std::ostream& out) {
  const PhantomPair p = make_phantom_pair(e.rows, e.cols, e.phantom_seed);
  const auto dir = detail::prepare_output_dir(e.output_dir);
  write_pgm((dir / "target.pgm").string(), p.target);
  write_pgm((dir / "guidance.pgm").string(), p.guidance);
  out << p.description << ", " << p.target.rows() << "x" << p.target.cols() << ", seed " << p.seed << '\n';
}

/// Renders dictionary.bin into gallery.pgm.
inline void cmd_gallery(const ExperimentConfig& e, std::ostream& out) {
  detail::require_file(e.dictionary, "dictionary");
  const CoupledDictionary d = load_dictionary(e.dictionary);
  for (const Eigen::MatrixXd* m : {&d.psi_c, &d.phi_c, &d.psi, &d.phi})
    if (!m->allFinite()) throw NumericError("dictionary contains non-finite values");
  const auto dir = detail::prepare_output_dir(e.output_dir);
  write_pgm((dir / "gallery.pgm").string(), render_gallery(d));
  out << "rendered " << d.K() << " atoms per dictionary\n";
}

/// Runs `body` and maps its failure onto an exit code, reporting to `err`.
inline int run_command(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const NumericError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  }
}

}  // namespace cdlmri

#endif  // CDLMRI_COMMANDS_HPP
