/*
 * Copyright 2026 The fedbea Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDBEA_MODELS_HPP_
#define FEDBEA_MODELS_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fedbea/dataset.hpp"
#include "fedbea/types.hpp"

namespace fedbea::models {

enum class ObjectiveKind { kQuadratic, kSoftmaxLinear, kSmoothMlp };

std::string_view to_string(ObjectiveKind kind);

// The loss of one mini-batch as a smooth function of the parameters.
//
// Public entry points validate dimensions and throw ConfigError on mismatch;
// implementations override the do_* hooks. Instances are immutable and safe
// to share across threads.
class BatchLoss {
 public:
  virtual ~BatchLoss() = default;

  virtual Eigen::Index dimension() const noexcept = 0;
  virtual ObjectiveKind kind() const noexcept = 0;

  double loss(const ParamVector& w) const;
  ParamVector grad(const ParamVector& w) const;
  ParamVector hvp(const ParamVector& w, const ParamVector& v) const;

  // Dense Hessian, only for dimension() <= kMaxDenseDimension
  // (CapabilityError otherwise). Symmetric by construction.
  Matrix full_hessian(const ParamVector& w) const;

  // grad(w + u) - grad(w). Objectives with affine gradients evaluate this
  // without cancellation.
  ParamVector gradient_increment(const ParamVector& w, const ParamVector& u) const;

 protected:
  virtual double do_loss(const ParamVector& w) const = 0;
  virtual ParamVector do_grad(const ParamVector& w) const = 0;
  virtual ParamVector do_hvp(const ParamVector& w, const ParamVector& v) const = 0;
  virtual Matrix do_full_hessian(const ParamVector& w) const;
  virtual ParamVector do_gradient_increment(const ParamVector& w,
                                            const ParamVector& u) const;

 private:
  void check_dimension(const ParamVector& v, const char* what) const;
};

using BatchPtr = std::shared_ptr<const BatchLoss>;

// Free-function spellings of the per-batch operations.
inline double loss(const BatchLoss& b, const ParamVector& w) { return b.loss(w); }
inline ParamVector grad(const BatchLoss& b, const ParamVector& w) { return b.grad(w); }
inline ParamVector hvp(const BatchLoss& b, const ParamVector& w, const ParamVector& v) {
  return b.hvp(w, v);
}
inline Matrix full_hessian(const BatchLoss& b, const ParamVector& w) {
  return b.full_hessian(w);
}

// Finite-difference surrogate for the gradient of 0.5 * ||grad L||^2:
//   (grad(w + eps * grad(w)) - grad(w)) / eps.
// Throws DomainError unless eps > 0.
ParamVector grad_norm_penalty_gradient(const BatchLoss& b, const ParamVector& w, double eps);

// 0.5 (w - center)^T A (w - center) with A symmetric positive semidefinite.
class QuadraticBatch final : public BatchLoss {
 public:
  // Throws ConfigError if A is not square, not symmetric (1e-12) or has an
  // eigenvalue below -1e-12, or if center has the wrong size.
  QuadraticBatch(Matrix curvature, ParamVector center);

  Eigen::Index dimension() const noexcept override { return center_.size(); }
  ObjectiveKind kind() const noexcept override { return ObjectiveKind::kQuadratic; }

  const Matrix& curvature() const noexcept { return curvature_; }
  const ParamVector& center() const noexcept { return center_; }

 protected:
  double do_loss(const ParamVector& w) const override;
  ParamVector do_grad(const ParamVector& w) const override;
  ParamVector do_hvp(const ParamVector& w, const ParamVector& v) const override;
  Matrix do_full_hessian(const ParamVector& w) const override;
  ParamVector do_gradient_increment(const ParamVector& w,
                                    const ParamVector& u) const override;

 private:
  Matrix curvature_;
  ParamVector center_;
};

std::shared_ptr<const QuadraticBatch> make_quadratic(Matrix curvature, ParamVector center);

// A classifier whose loss on a batch is mean cross-entropy.
class ClassifierModel : public std::enable_shared_from_this<ClassifierModel> {
 public:
  virtual ~ClassifierModel() = default;

  virtual Eigen::Index dimension() const noexcept = 0;
  virtual ObjectiveKind kind() const noexcept = 0;
  int num_classes() const noexcept { return classes_; }
  Eigen::Index num_features() const noexcept { return features_; }

  // Deterministic initial parameters.
  virtual ParamVector initial_parameters(std::uint64_t seed) const = 0;

  // Binds the model to a mini-batch. Throws ConfigError on empty batches,
  // out-of-range indices or a feature-count mismatch.
  BatchPtr bind(const MiniBatch& batch) const;

  // Row i is the gradient of example i's loss (b x d).
  Matrix per_example_gradients(const RowMatrix& x, std::span<const int> y,
                               const ParamVector& w) const;

  // Logits for each row of x (b x C).
  virtual RowMatrix logits(const RowMatrix& x, const ParamVector& w) const = 0;

  // Mean loss / gradient / Hessian-vector product on gathered examples.
  virtual double batch_loss(const RowMatrix& x, std::span<const int> y,
                            const ParamVector& w) const = 0;
  virtual ParamVector batch_grad(const RowMatrix& x, std::span<const int> y,
                                 const ParamVector& w) const = 0;
  virtual ParamVector batch_hvp(const RowMatrix& x, std::span<const int> y,
                                const ParamVector& w, const ParamVector& v) const = 0;

 protected:
  ClassifierModel(int classes, Eigen::Index features);
  virtual void example_gradients(const RowMatrix& x, std::span<const int> y,
                                 const ParamVector& w, Matrix& out) const = 0;

 private:
  int classes_;
  Eigen::Index features_;
};

using ModelPtr = std::shared_ptr<const ClassifierModel>;

// Linear softmax regression; parameters are the C x p weight matrix in
// row-major order (no bias).
class SoftmaxLinearModel final : public ClassifierModel {
 public:
  SoftmaxLinearModel(int classes, Eigen::Index features);

  Eigen::Index dimension() const noexcept override;
  ObjectiveKind kind() const noexcept override { return ObjectiveKind::kSoftmaxLinear; }
  ParamVector initial_parameters(std::uint64_t seed) const override;

  RowMatrix logits(const RowMatrix& x, const ParamVector& w) const override;
  double batch_loss(const RowMatrix& x, std::span<const int> y,
                    const ParamVector& w) const override;
  ParamVector batch_grad(const RowMatrix& x, std::span<const int> y,
                         const ParamVector& w) const override;
  ParamVector batch_hvp(const RowMatrix& x, std::span<const int> y, const ParamVector& w,
                        const ParamVector& v) const override;

 protected:
  void example_gradients(const RowMatrix& x, std::span<const int> y, const ParamVector& w,
                         Matrix& out) const override;
};

// One tanh hidden layer of width h followed by a softmax head. Parameter
// layout: W1 (h x p), b1 (h), W2 (C x h), b2 (C), matrices row-major.
class SmoothMlpModel final : public ClassifierModel {
 public:
  SmoothMlpModel(int classes, Eigen::Index features, Eigen::Index hidden);

  Eigen::Index hidden() const noexcept { return hidden_; }
  Eigen::Index dimension() const noexcept override;
  ObjectiveKind kind() const noexcept override { return ObjectiveKind::kSmoothMlp; }
  ParamVector initial_parameters(std::uint64_t seed) const override;

  RowMatrix logits(const RowMatrix& x, const ParamVector& w) const override;
  double batch_loss(const RowMatrix& x, std::span<const int> y,
                    const ParamVector& w) const override;
  ParamVector batch_grad(const RowMatrix& x, std::span<const int> y,
                         const ParamVector& w) const override;
  ParamVector batch_hvp(const RowMatrix& x, std::span<const int> y, const ParamVector& w,
                        const ParamVector& v) const override;

 protected:
  void example_gradients(const RowMatrix& x, std::span<const int> y, const ParamVector& w,
                         Matrix& out) const override;

 private:
  Eigen::Index hidden_;
};

// Fraction of rows of ds whose argmax logit equals the label.
double accuracy(const ClassifierModel& model, const Dataset& ds, const ParamVector& w);

// Mean loss over a batch list (each batch weighted equally).
double mean_loss(std::span<const BatchPtr> batches, const ParamVector& w);
ParamVector mean_grad(std::span<const BatchPtr> batches, const ParamVector& w);
ParamVector mean_hvp(std::span<const BatchPtr> batches, const ParamVector& w,
                     const ParamVector& v);

// Running mean x_1, ..., x_n in index order. Returns x exactly when all
// inputs are bitwise equal.
class RunningMean {
 public:
  explicit RunningMean(Eigen::Index dim) : mean_(ParamVector::Zero(dim)) {}
  void add(const ParamVector& x);
  const ParamVector& value() const noexcept { return mean_; }
  std::size_t count() const noexcept { return n_; }

 private:
  ParamVector mean_;
  std::size_t n_ = 0;
};

}  // namespace fedbea::models

#endif  // FEDBEA_MODELS_HPP_
