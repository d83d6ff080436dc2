#pragma once

#include <atomic>
#include <cstdint>
#include <utility>

#include <Eigen/Core>

namespace embalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Metric { kCosine, kCsls };

// Linear transform from source coordinates (d1) into target coordinates (d2),
// stored as a d2 x d1 matrix. Every construction or mutation bumps a version
// stamp so caches derived from a map (e.g. CSLS neighborhood means) can detect
// staleness.
class LinearMap {
 public:
  LinearMap() : version_(next_version()) {}
  explicit LinearMap(Matrix m) : matrix_(std::move(m)), version_(next_version()) {}

  const Matrix& matrix() const { return matrix_; }
  std::uint64_t version() const { return version_; }

  Eigen::Index output_dim() const { return matrix_.rows(); }
  Eigen::Index input_dim() const { return matrix_.cols(); }

  void set_matrix(Matrix m) {
    matrix_ = std::move(m);
    version_ = next_version();
  }

  // In-place update for training loops; stamps a new version.
  template <typename Fn>
  void update(Fn&& fn) {
    fn(matrix_);
    version_ = next_version();
  }

 private:
  static std::uint64_t next_version() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  Matrix matrix_;
  std::uint64_t version_;
};

}  // namespace embalign
