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

#include <cmath>
#include <random>
#include <string>

#include "fedbea/errors.hpp"
#include "fedbea/models.hpp"
#include "fedbea/rng.hpp"

namespace fedbea::models {
namespace {

// Row-wise softmax and the per-row log-sum-exp.
void softmax_rows(const RowMatrix& z, RowMatrix& p, Eigen::VectorXd& lse) {
  p.resize(z.rows(), z.cols());
  lse.resize(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - mx).exp();
    const double s = p.row(i).sum();
    p.row(i) /= s;
    lse[i] = mx + std::log(s);
  }
}

double cross_entropy(const RowMatrix& z, const Eigen::VectorXd& lse, std::span<const int> y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) total += lse[i] - z(i, y[i]);
  return total / static_cast<double>(z.rows());
}

// P - onehot(y)
RowMatrix residual(const RowMatrix& p, std::span<const int> y) {
  RowMatrix r = p;
  for (Eigen::Index i = 0; i < p.rows(); ++i) r(i, y[i]) -= 1.0;
  return r;
}

// (diag(p) - p p^T) u for every row.
RowMatrix softmax_jacobian_apply(const RowMatrix& p, const RowMatrix& u) {
  RowMatrix pu = p.cwiseProduct(u);
  Eigen::VectorXd s = pu.rowwise().sum();
  return pu - (p.array().colwise() * s.array()).matrix();
}

using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

class BoundClassifierBatch final : public BatchLoss {
 public:
  BoundClassifierBatch(ModelPtr model, RowMatrix x, std::vector<int> y)
      : model_(std::move(model)), x_(std::move(x)), y_(std::move(y)) {}

  Eigen::Index dimension() const noexcept override { return model_->dimension(); }
  ObjectiveKind kind() const noexcept override { return model_->kind(); }

 protected:
  double do_loss(const ParamVector& w) const override { return model_->batch_loss(x_, y_, w); }
  ParamVector do_grad(const ParamVector& w) const override {
    return model_->batch_grad(x_, y_, w);
  }
  ParamVector do_hvp(const ParamVector& w, const ParamVector& v) const override {
    return model_->batch_hvp(x_, y_, w, v);
  }

 private:
  ModelPtr model_;
  RowMatrix x_;
  std::vector<int> y_;
};

}  // namespace

ClassifierModel::ClassifierModel(int classes, Eigen::Index features)
    : classes_(classes), features_(features) {
  if (classes < 2) throw ConfigError("classifier needs at least 2 classes");
  if (features < 1) throw ConfigError("classifier needs at least 1 feature");
}

BatchPtr ClassifierModel::bind(const MiniBatch& batch) const {
  if (!batch.source) throw ConfigError("mini-batch has no source dataset");
  if (batch.indices.empty()) throw ConfigError("mini-batch is empty");
  const Dataset& ds = *batch.source;
  if (ds.num_features() != features_)
    throw ConfigError("dataset has " + std::to_string(ds.num_features()) +
                      " features, model expects " + std::to_string(features_));
  if (ds.num_classes > classes_)
    throw ConfigError("dataset has more classes than the model");
  RowMatrix x(static_cast<Eigen::Index>(batch.indices.size()), features_);
  std::vector<int> y(batch.indices.size());
  for (std::size_t r = 0; r < batch.indices.size(); ++r) {
    const std::size_t i = batch.indices[r];
    if (i >= ds.size()) throw ConfigError("mini-batch index out of range");
    x.row(static_cast<Eigen::Index>(r)) = ds.features.row(static_cast<Eigen::Index>(i));
    y[r] = ds.labels[i];
  }
  return std::make_shared<const BoundClassifierBatch>(shared_from_this(), std::move(x),
                                                      std::move(y));
}

Matrix ClassifierModel::per_example_gradients(const RowMatrix& x, std::span<const int> y,
                                              const ParamVector& w) const {
  if (w.size() != dimension()) throw ConfigError("parameter dimension mismatch");
  if (static_cast<std::size_t>(x.rows()) != y.size() || x.cols() != features_)
    throw ConfigError("per-example gradient inputs are inconsistent");
  Matrix out(x.rows(), dimension());
  example_gradients(x, y, w, out);
  return out;
}

double accuracy(const ClassifierModel& model, const Dataset& ds, const ParamVector& w) {
  validate(ds);
  constexpr Eigen::Index kChunk = 4096;
  std::size_t correct = 0;
  const Eigen::Index n = ds.features.rows();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    RowMatrix z = model.logits(ds.features.middleRows(start, len), w);
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index best;
      z.row(i).maxCoeff(&best);
      if (best == ds.labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

// --- softmax-linear ---------------------------------------------------------

SoftmaxLinearModel::SoftmaxLinearModel(int classes, Eigen::Index features)
    : ClassifierModel(classes, features) {}

Eigen::Index SoftmaxLinearModel::dimension() const noexcept {
  return num_classes() * num_features();
}

ParamVector SoftmaxLinearModel::initial_parameters(std::uint64_t) const {
  return ParamVector::Zero(dimension());
}

RowMatrix SoftmaxLinearModel::logits(const RowMatrix& x, const ParamVector& w) const {
  ConstRowMap wm(w.data(), num_classes(), num_features());
  return x * wm.transpose();
}

double SoftmaxLinearModel::batch_loss(const RowMatrix& x, std::span<const int> y,
                                      const ParamVector& w) const {
  RowMatrix z = logits(x, w);
  RowMatrix p;
  Eigen::VectorXd lse;
  softmax_rows(z, p, lse);
  return cross_entropy(z, lse, y);
}

ParamVector SoftmaxLinearModel::batch_grad(const RowMatrix& x, std::span<const int> y,
                                           const ParamVector& w) const {
  RowMatrix p;
  Eigen::VectorXd lse;
  softmax_rows(logits(x, w), p, lse);
  const RowMatrix r = residual(p, y);
  ParamVector g(dimension());
  RowMap gm(g.data(), num_classes(), num_features());
  gm.noalias() = r.transpose() * x / static_cast<double>(x.rows());
  return g;
}

ParamVector SoftmaxLinearModel::batch_hvp(const RowMatrix& x, std::span<const int>,
                                          const ParamVector& w, const ParamVector& v) const {
  RowMatrix p;
  Eigen::VectorXd lse;
  softmax_rows(logits(x, w), p, lse);
  ConstRowMap vm(v.data(), num_classes(), num_features());
  const RowMatrix u = x * vm.transpose();
  const RowMatrix ru = softmax_jacobian_apply(p, u);
  ParamVector out(dimension());
  RowMap om(out.data(), num_classes(), num_features());
  om.noalias() = ru.transpose() * x / static_cast<double>(x.rows());
  return out;
}

void SoftmaxLinearModel::example_gradients(const RowMatrix& x, std::span<const int> y,
                                           const ParamVector& w, Matrix& out) const {
  RowMatrix p;
  Eigen::VectorXd lse;
  softmax_rows(logits(x, w), p, lse);
  const RowMatrix r = residual(p, y);
  const Eigen::Index c = num_classes();
  const Eigen::Index f = num_features();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < c; ++k) out.row(i).segment(k * f, f) = r(i, k) * x.row(i);
}

// --- smooth MLP -------------------------------------------------------------

namespace {

struct MlpView {
  ConstRowMap w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  ConstRowMap w2;
  Eigen::Map<const Eigen::VectorXd> b2;
};

MlpView view(const ParamVector& w, Eigen::Index c, Eigen::Index p, Eigen::Index h) {
  const double* base = w.data();
  return MlpView{ConstRowMap(base, h, p), Eigen::Map<const Eigen::VectorXd>(base + h * p, h),
                 ConstRowMap(base + h * p + h, c, h),
                 Eigen::Map<const Eigen::VectorXd>(base + h * p + h + c * h, c)};
}

struct MlpForward {
  RowMatrix hidden;  // tanh activations, b x h
  RowMatrix z;       // logits, b x C
  RowMatrix p;       // softmax, b x C
  Eigen::VectorXd lse;
};

MlpForward forward(const MlpView& m, const RowMatrix& x) {
  MlpForward f;
  f.hidden = ((x * m.w1.transpose()).rowwise() + m.b1.transpose()).array().tanh().matrix();
  f.z = (f.hidden * m.w2.transpose()).rowwise() + m.b2.transpose();
  softmax_rows(f.z, f.p, f.lse);
  return f;
}

}  // namespace

SmoothMlpModel::SmoothMlpModel(int classes, Eigen::Index features, Eigen::Index hidden)
    : ClassifierModel(classes, features), hidden_(hidden) {
  if (hidden < 1) throw ConfigError("MLP hidden width must be >= 1");
}

Eigen::Index SmoothMlpModel::dimension() const noexcept {
  const Eigen::Index c = num_classes();
  return hidden_ * num_features() + hidden_ + c * hidden_ + c;
}

ParamVector SmoothMlpModel::initial_parameters(std::uint64_t seed) const {
  Engine eng = make_engine(seed, Stream::kInit, {static_cast<std::uint64_t>(dimension())});
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector w = ParamVector::Zero(dimension());
  const Eigen::Index p = num_features();
  const Eigen::Index h = hidden_;
  const Eigen::Index c = num_classes();
  const double s1 = 1.0 / std::sqrt(static_cast<double>(p));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (Eigen::Index i = 0; i < h * p; ++i) w[i] = s1 * normal(eng);
  for (Eigen::Index i = 0; i < c * h; ++i) w[h * p + h + i] = s2 * normal(eng);
  return w;
}

RowMatrix SmoothMlpModel::logits(const RowMatrix& x, const ParamVector& w) const {
  return forward(view(w, num_classes(), num_features(), hidden_), x).z;
}

double SmoothMlpModel::batch_loss(const RowMatrix& x, std::span<const int> y,
                                  const ParamVector& w) const {
  const MlpForward f = forward(view(w, num_classes(), num_features(), hidden_), x);
  return cross_entropy(f.z, f.lse, y);
}

ParamVector SmoothMlpModel::batch_grad(const RowMatrix& x, std::span<const int> y,
                                       const ParamVector& w) const {
  const Eigen::Index c = num_classes(), p = num_features(), h = hidden_;
  const MlpView m = view(w, c, p, h);
  const MlpForward f = forward(m, x);
  const double inv_b = 1.0 / static_cast<double>(x.rows());
  const RowMatrix dz = residual(f.p, y) * inv_b;
  const RowMatrix dh = dz * m.w2;
  const RowMatrix da = dh.cwiseProduct((1.0 - f.hidden.array().square()).matrix());

  ParamVector g(dimension());
  double* base = g.data();
  RowMap(base, h, p).noalias() = da.transpose() * x;
  Eigen::Map<Eigen::VectorXd>(base + h * p, h) = da.colwise().sum().transpose();
  RowMap(base + h * p + h, c, h).noalias() = dz.transpose() * f.hidden;
  Eigen::Map<Eigen::VectorXd>(base + h * p + h + c * h, c) = dz.colwise().sum().transpose();
  return g;
}

// Forward-over-reverse (R-operator) pass.
ParamVector SmoothMlpModel::batch_hvp(const RowMatrix& x, std::span<const int> y,
                                      const ParamVector& w, const ParamVector& v) const {
  const Eigen::Index c = num_classes(), p = num_features(), h = hidden_;
  const MlpView m = view(w, c, p, h);
  const MlpView dv = view(v, c, p, h);
  const MlpForward f = forward(m, x);
  const double inv_b = 1.0 / static_cast<double>(x.rows());

  const RowMatrix slope = (1.0 - f.hidden.array().square()).matrix();
  const RowMatrix ra = (x * dv.w1.transpose()).rowwise() + dv.b1.transpose();
  const RowMatrix rh = slope.cwiseProduct(ra);
  const RowMatrix rz =
      ((rh * m.w2.transpose() + f.hidden * dv.w2.transpose()).rowwise() + dv.b2.transpose());
  const RowMatrix rdz = softmax_jacobian_apply(f.p, rz) * inv_b;

  const RowMatrix dz = residual(f.p, y) * inv_b;
  const RowMatrix dh = dz * m.w2;
  const RowMatrix rdh = rdz * m.w2 + dz * dv.w2;
  const RowMatrix rda =
      rdh.cwiseProduct(slope) -
      (2.0 * dh.array() * f.hidden.array() * rh.array()).matrix();

  ParamVector out(dimension());
  double* base = out.data();
  RowMap(base, h, p).noalias() = rda.transpose() * x;
  Eigen::Map<Eigen::VectorXd>(base + h * p, h) = rda.colwise().sum().transpose();
  RowMap(base + h * p + h, c, h).noalias() = rdz.transpose() * f.hidden + dz.transpose() * rh;
  Eigen::Map<Eigen::VectorXd>(base + h * p + h + c * h, c) = rdz.colwise().sum().transpose();
  return out;
}

void SmoothMlpModel::example_gradients(const RowMatrix& x, std::span<const int> y,
                                       const ParamVector& w, Matrix& out) const {
  const Eigen::Index c = num_classes(), p = num_features(), h = hidden_;
  const MlpView m = view(w, c, p, h);
  const MlpForward f = forward(m, x);
  const RowMatrix dz = residual(f.p, y);
  const RowMatrix dh = dz * m.w2;
  const RowMatrix da = dh.cwiseProduct((1.0 - f.hidden.array().square()).matrix());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = out.row(i);
    for (Eigen::Index k = 0; k < h; ++k) row.segment(k * p, p) = da(i, k) * x.row(i);
    row.segment(h * p, h) = da.row(i);
    for (Eigen::Index k = 0; k < c; ++k)
      row.segment(h * p + h + k * h, h) = dz(i, k) * f.hidden.row(i);
    row.segment(h * p + h + c * h, c) = dz.row(i);
  }
}

}  // namespace fedbea::models
