#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace flowlab {

/// Largest state / noise dimension supported. Vectors and matrices use
/// Eigen's fixed-capacity dynamic storage so the inner integration loop
/// never touches the heap.
inline constexpr int kMaxDim = 4;
inline constexpr int kMaxNoise = 4;
inline constexpr int kMaxFields = kMaxNoise + 1;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using NoiseVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxNoise, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// d x (m+1) matrix; column k holds X_k(x), column 0 is the drift.
using FieldMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxFields>;

/// DX_0(x) ... DX_m(x).
struct JacobianSet {
  std::array<Mat, kMaxFields> j;
  int count = 0;

  void resize(int d, int fields) {
    count = fields;
    for (int k = 0; k < fields; ++k) j[k].resize(d, d);
  }
  Mat& operator[](int k) { return j[k]; }
  const Mat& operator[](int k) const { return j[k]; }
};

enum class JacobianKind { analytic, finite_difference };

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline Vec unit_vec(int d, int i) {
  Vec v = Vec::Zero(d);
  v(i) = 1.0;
  return v;
}

inline std::string to_string(const Vec& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

// Error hierarchy. Everything thrown by the library derives from Error.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation requested inside a declared singular set.
class SingularPointError : public Error {
 public:
  SingularPointError(const std::string& what, Vec point) : Error(what), point_(std::move(point)) {}
  const Vec& point() const noexcept { return point_; }

 private:
  Vec point_;
};

/// Diffusion matrix too close to singular for a reliable inverse.
class NearSingularDiffusionError : public Error {
 public:
  NearSingularDiffusionError(double smallest, double condition, const Vec& x)
      : Error("near-singular diffusion at " + to_string(x) + ": smallest eigenvalue " +
              std::to_string(smallest) + ", condition " + std::to_string(condition)),
        smallest_(smallest),
        condition_(condition) {}
  double smallest_eigenvalue() const noexcept { return smallest_; }
  double condition_number() const noexcept { return condition_; }

 private:
  double smallest_;
  double condition_;
};

/// A parameter violates a documented constraint. The message names the
/// violated inequality.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, std::size_t step, Vec point)
      : Error(what + " at step " + std::to_string(step) + ", x = " + to_string(point)),
        step_(step),
        point_(std::move(point)) {}
  std::size_t step() const noexcept { return step_; }
  const Vec& point() const noexcept { return point_; }

 private:
  std::size_t step_;
  Vec point_;
};

}  // namespace flowlab
