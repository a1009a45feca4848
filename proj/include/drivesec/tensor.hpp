#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "drivesec/common.hpp"

namespace drivesec {

// Dense row-major tensor of doubles. Ranks 1..3 cover everything the
// classifiers and the generator need.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), fill);
  }

  static Tensor from(std::vector<int> s, std::vector<double> v) {
    Tensor t;
    t.shape = std::move(s);
    require(static_cast<long>(v.size()) == count(t.shape),
            "tensor data length does not match shape");
    t.data = std::move(v);
    return t;
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      require(d >= 0, "negative tensor dimension");
      n *= d;
    }
    return n;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  long size() const { return static_cast<long>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](long i) { return data[static_cast<size_t>(i)]; }
  double operator[](long i) const { return data[static_cast<size_t>(i)]; }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }

  double& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    if (!all_finite()) fail("non-finite values in " + what);
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

inline void check_shape(const Tensor& t, const std::vector<int>& want,
                        const std::string& what) {
  if (t.shape != want) {
    Tensor w;
    w.shape = want;
    fail("shape mismatch in " + what + ": got " + shape_str(t) + ", want " +
         shape_str(w));
  }
}

}  // namespace drivesec
