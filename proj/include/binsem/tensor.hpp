#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "binsem/common.hpp"

namespace binsem {

// Row-major keeps the on-disk layout and the scalar-loop oracles obvious.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named trainable tensor with its gradient buffer. Biases and
// layer-norm parameters opt out of weight decay.
struct Tensor {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;

  void init_zero(Eigen::Index rows, Eigen::Index cols) {
    value = Mat::Zero(rows, cols);
    grad = Mat::Zero(rows, cols);
  }

  void init_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    value.resize(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) value(i, j) = dist(rng);
    grad = Mat::Zero(rows, cols);
  }

  void init_const(Eigen::Index rows, Eigen::Index cols, double x) {
    value = Mat::Constant(rows, cols, x);
    grad = Mat::Zero(rows, cols);
  }

  size_t count() const { return static_cast<size_t>(value.size()); }
};

// Row-wise softmax with an optional key mask; masked columns get zero
// probability. Numerically stabilized by the row max.
inline Mat softmax_rows(const Mat& scores, const std::vector<uint8_t>* key_keep = nullptr) {
  Mat out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (key_keep && !(*key_keep)[static_cast<size_t>(j)]) continue;
      mx = std::max(mx, scores(i, j));
    }
    double sum = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (key_keep && !(*key_keep)[static_cast<size_t>(j)]) {
        out(i, j) = 0;
        continue;
      }
      out(i, j) = std::exp(scores(i, j) - mx);
      sum += out(i, j);
    }
    out.row(i) /= sum;
  }
  return out;
}

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

// Inverted dropout; the mask already carries the 1/(1-p) scale.
inline Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  Mat m(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng) < p ? 0.0 : scale;
  return m;
}

}  // namespace binsem
