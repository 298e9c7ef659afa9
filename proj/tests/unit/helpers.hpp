#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "blgcn/autograd.hpp"
#include "blgcn/matrix.hpp"
#include "blgcn/rng.hpp"

namespace blgcn::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Largest relative error between backprop gradients and central differences
// of `loss` over every entry of every parameter.
inline double max_gradient_error(std::vector<Var> params, const std::function<Var()>& loss,
                                 double step = 1e-5, double floor = 1e-3) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<Matrix> analytic;
  for (auto& p : params)
    analytic.push_back(p.grad().empty() ? Matrix(p.value().rows(), p.value().cols()) : p.grad());

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = params[k].mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + step;
      const double up = loss().item();
      w[i] = orig - step;
      const double down = loss().item();
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[k][i], numeric, floor));
    }
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("blgcn_" + tag + "_" + std::to_string(std::random_device{}()) + "_" +
             std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace blgcn::test
