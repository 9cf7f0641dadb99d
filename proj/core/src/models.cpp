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

#include "fedbea/models.hpp"

#include <Eigen/Eigenvalues>
#include <string>

#include "fedbea/errors.hpp"

namespace fedbea {

void validate(const Dataset& ds) {
  if (ds.size() == 0) throw ConfigError("dataset is empty");
  if (static_cast<std::size_t>(ds.features.rows()) != ds.size())
    throw ConfigError("dataset has " + std::to_string(ds.features.rows()) +
                      " feature rows but " + std::to_string(ds.size()) + " labels");
  if (ds.num_classes < 1) throw ConfigError("dataset needs at least one class");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.num_classes)
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(ds.num_classes) + ")");
}

}  // namespace fedbea

namespace fedbea::models {

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kQuadratic:
      return "quadratic";
    case ObjectiveKind::kSoftmaxLinear:
      return "softmax-linear";
    case ObjectiveKind::kSmoothMlp:
      return "smooth-mlp";
  }
  return "unknown";
}

void BatchLoss::check_dimension(const ParamVector& v, const char* what) const {
  if (v.size() != dimension())
    throw ConfigError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                      ", objective expects " + std::to_string(dimension()));
}

double BatchLoss::loss(const ParamVector& w) const {
  check_dimension(w, "parameter");
  return do_loss(w);
}

ParamVector BatchLoss::grad(const ParamVector& w) const {
  check_dimension(w, "parameter");
  return do_grad(w);
}

ParamVector BatchLoss::hvp(const ParamVector& w, const ParamVector& v) const {
  check_dimension(w, "parameter");
  check_dimension(v, "direction");
  return do_hvp(w, v);
}

Matrix BatchLoss::full_hessian(const ParamVector& w) const {
  check_dimension(w, "parameter");
  if (dimension() > kMaxDenseDimension)
    throw CapabilityError("dense Hessian requested for dimension " +
                          std::to_string(dimension()) + " (cap is " +
                          std::to_string(kMaxDenseDimension) + "); use HVPs");
  return do_full_hessian(w);
}

ParamVector BatchLoss::gradient_increment(const ParamVector& w, const ParamVector& u) const {
  check_dimension(w, "parameter");
  check_dimension(u, "increment");
  return do_gradient_increment(w, u);
}

Matrix BatchLoss::do_full_hessian(const ParamVector& w) const {
  const Eigen::Index d = dimension();
  Matrix h(d, d);
  ParamVector e = ParamVector::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    e[i] = 1.0;
    h.col(i) = do_hvp(w, e);
    e[i] = 0.0;
  }
  return 0.5 * (h + h.transpose());
}

ParamVector BatchLoss::do_gradient_increment(const ParamVector& w,
                                             const ParamVector& u) const {
  ParamVector shifted = w + u;
  return do_grad(shifted) - do_grad(w);
}

ParamVector grad_norm_penalty_gradient(const BatchLoss& b, const ParamVector& w, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite-difference step eps must be > 0");
  const ParamVector g = b.grad(w);
  return b.gradient_increment(w, eps * g) / eps;
}

// --- quadratic --------------------------------------------------------------

QuadraticBatch::QuadraticBatch(Matrix curvature, ParamVector center)
    : curvature_(std::move(curvature)), center_(std::move(center)) {
  if (curvature_.rows() != curvature_.cols())
    throw ConfigError("quadratic curvature must be square");
  if (curvature_.rows() != center_.size())
    throw ConfigError("quadratic center has dimension " + std::to_string(center_.size()) +
                      ", curvature is " + std::to_string(curvature_.rows()));
  if (!curvature_.allFinite() || !center_.allFinite())
    throw ConfigError("quadratic coefficients must be finite");
  if ((curvature_ - curvature_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError("quadratic curvature must be symmetric");
  if (curvature_.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(curvature_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12)
      throw ConfigError("quadratic curvature must be positive semidefinite");
  }
}

double QuadraticBatch::do_loss(const ParamVector& w) const {
  const ParamVector r = w - center_;
  return 0.5 * r.dot(curvature_ * r);
}

ParamVector QuadraticBatch::do_grad(const ParamVector& w) const {
  return curvature_ * (w - center_);
}

ParamVector QuadraticBatch::do_hvp(const ParamVector&, const ParamVector& v) const {
  return curvature_ * v;
}

Matrix QuadraticBatch::do_full_hessian(const ParamVector&) const { return curvature_; }

ParamVector QuadraticBatch::do_gradient_increment(const ParamVector&,
                                                  const ParamVector& u) const {
  return curvature_ * u;
}

std::shared_ptr<const QuadraticBatch> make_quadratic(Matrix curvature, ParamVector center) {
  return std::make_shared<const QuadraticBatch>(std::move(curvature), std::move(center));
}

// --- helpers ----------------------------------------------------------------

void RunningMean::add(const ParamVector& x) {
  if (x.size() != mean_.size()) throw ConfigError("running mean dimension mismatch");
  ++n_;
  mean_ += (x - mean_) / static_cast<double>(n_);
}

double mean_loss(std::span<const BatchPtr> batches, const ParamVector& w) {
  if (batches.empty()) throw DomainError("mean over an empty batch list");
  double m = 0.0;
  std::size_t n = 0;
  for (const auto& b : batches) {
    ++n;
    m += (b->loss(w) - m) / static_cast<double>(n);
  }
  return m;
}

ParamVector mean_grad(std::span<const BatchPtr> batches, const ParamVector& w) {
  if (batches.empty()) throw DomainError("mean over an empty batch list");
  RunningMean acc(w.size());
  for (const auto& b : batches) acc.add(b->grad(w));
  return acc.value();
}

ParamVector mean_hvp(std::span<const BatchPtr> batches, const ParamVector& w,
                     const ParamVector& v) {
  if (batches.empty()) throw DomainError("mean over an empty batch list");
  RunningMean acc(w.size());
  for (const auto& b : batches) acc.add(b->hvp(w, v));
  return acc.value();
}

}  // namespace fedbea::models
