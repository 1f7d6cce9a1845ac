#ifndef CDLMRI_IMAGE_HPP
#define CDLMRI_IMAGE_HPP

// Real-valued contrast images and the wrap-around patch operators.
//
// Patches are read periodically: a patch whose top-left corner is near
// the bottom/right edge continues from the opposite edge. With a stride
// that divides the patch side, every pixel is then covered by exactly
// (side/stride)^2 patches, which is what makes the k-space consistency
// system diagonal.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cdlmri {

/// Row-major 2D grid of real intensities.
class ContrastImage {
public:
  ContrastImage() = default;

  ContrastImage(std::size_t rows, std::size_t cols, double fill = 0.0)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("ContrastImage: dimensions must be positive");
  }

  ContrastImage(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("ContrastImage: dimensions must be positive");
    if (values_.size() != rows * cols)
      throw std::invalid_argument("ContrastImage: value count does not match rows*cols");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  Eigen::Map<Eigen::VectorXd> vec() {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

  bool same_shape(const ContrastImage& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const ContrastImage&, const ContrastImage&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline void require_same_shape(const ContrastImage& a, const ContrastImage& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

/// Affine rescale to [0,1]. A constant image maps to all zeros.
inline ContrastImage normalize(const ContrastImage& img) {
  if (img.empty())
    throw std::invalid_argument("normalize: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.values().begin(), img.values().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  ContrastImage out(img.rows(), img.cols());
  if (span <= 0.0)
    return out;
  for (std::size_t i = 0; i < img.size(); ++i)
    out.values()[i] = (img.values()[i] - lo) / span;
  return out;
}

/// Number of wrap-around patches covering each pixel (beta).
inline std::size_t overlap_count(std::size_t patch_side, std::size_t stride) {
  if (patch_side == 0 || stride == 0)
    throw std::invalid_argument("overlap_count: patch side and stride must be positive");
  if (patch_side % stride != 0)
    throw std::invalid_argument("overlap_count: stride must divide the patch side");
  const std::size_t per_axis = patch_side / stride;
  return per_axis * per_axis;
}

/// Patches stored as columns; column order is row-major over top-left corners.
struct PatchMatrix {
  std::size_t patch_side = 0;
  std::size_t stride = 0;
  std::size_t source_rows = 0;
  std::size_t source_cols = 0;
  Eigen::MatrixXd columns;  // n x P

  std::size_t count() const { return static_cast<std::size_t>(columns.cols()); }
  std::size_t patch_length() const { return patch_side * patch_side; }
  std::size_t corners_per_row() const { return source_cols / stride; }

  /// Top-left corner (row, col) of patch index p.
  std::pair<std::size_t, std::size_t> corner(std::size_t p) const {
    return {(p / corners_per_row()) * stride, (p % corners_per_row()) * stride};
  }
};

namespace detail {

inline void check_patch_geometry(std::size_t rows, std::size_t cols, std::size_t side, std::size_t stride) {
  if (side == 0 || stride == 0)
    throw std::invalid_argument("patch side and stride must be positive");
  if (rows % stride != 0 || cols % stride != 0)
    throw std::invalid_argument("stride must divide both image dimensions");
  if (side > rows || side > cols)
    throw std::invalid_argument("patch side exceeds image dimensions");
}

}  // namespace detail

/// Copy the wrap-around patch with top-left corner (r0, c0) into `out`.
template <typename Out>
void read_patch(const ContrastImage& img, std::size_t r0, std::size_t c0, std::size_t side, Out&& out) {
  const std::size_t rows = img.rows(), cols = img.cols();
  Eigen::Index k = 0;
  for (std::size_t dr = 0; dr < side; ++dr) {
    const std::size_t r = (r0 + dr) % rows;
    for (std::size_t dc = 0; dc < side; ++dc)
      out(k++) = img(r, (c0 + dc) % cols);
  }
}

inline PatchMatrix extract_patches(const ContrastImage& img, std::size_t patch_side, std::size_t stride) {
  detail::check_patch_geometry(img.rows(), img.cols(), patch_side, stride);
  PatchMatrix pm;
  pm.patch_side = patch_side;
  pm.stride = stride;
  pm.source_rows = img.rows();
  pm.source_cols = img.cols();
  const std::size_t count = (img.rows() / stride) * (img.cols() / stride);
  pm.columns.resize(static_cast<Eigen::Index>(patch_side * patch_side), static_cast<Eigen::Index>(count));
  for (std::size_t p = 0; p < count; ++p) {
    const auto [r0, c0] = pm.corner(p);
    read_patch(img, r0, c0, patch_side, pm.columns.col(static_cast<Eigen::Index>(p)));
  }
  return pm;
}

/// Adjoint of extraction divided by the per-pixel coverage: the mean of all
/// overlapping patch entries at each pixel.
inline ContrastImage aggregate_patches(const PatchMatrix& pm) {
  detail::check_patch_geometry(pm.source_rows, pm.source_cols, pm.patch_side, pm.stride);
  const std::size_t expected = (pm.source_rows / pm.stride) * (pm.source_cols / pm.stride);
  if (pm.count() != expected || static_cast<std::size_t>(pm.columns.rows()) != pm.patch_length())
    throw std::invalid_argument("aggregate_patches: patch matrix shape is inconsistent");

  ContrastImage sum(pm.source_rows, pm.source_cols);
  std::vector<unsigned> hits(sum.size(), 0);
  const std::size_t side = pm.patch_side;
  for (std::size_t p = 0; p < pm.count(); ++p) {
    const auto [r0, c0] = pm.corner(p);
    const auto col = pm.columns.col(static_cast<Eigen::Index>(p));
    Eigen::Index k = 0;
    for (std::size_t dr = 0; dr < side; ++dr) {
      const std::size_t r = (r0 + dr) % pm.source_rows;
      for (std::size_t dc = 0; dc < side; ++dc) {
        const std::size_t c = (c0 + dc) % pm.source_cols;
        sum(r, c) += col(k++);
        ++hits[r * pm.source_cols + c];
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum.values()[i] /= static_cast<double>(hits[i]);
  return sum;
}

}  // namespace cdlmri

#endif  // CDLMRI_IMAGE_HPP
