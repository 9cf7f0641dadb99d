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

#ifndef FEDBEA_TESTS_SUPPORT_ORACLES_HPP_
#define FEDBEA_TESTS_SUPPORT_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "fedbea/data.hpp"
#include "fedbea/models.hpp"

namespace fedbea::testing {

// Central-difference step scaled to the point.
inline double fd_step(const ParamVector& w) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) *
         std::max(1.0, w.lpNorm<Eigen::Infinity>());
}

inline ParamVector fd_gradient(const std::function<double(const ParamVector&)>& f,
                               const ParamVector& w, double h) {
  ParamVector g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    ParamVector p = w, m = w;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

inline ParamVector fd_hvp(const models::BatchLoss& b, const ParamVector& w, const ParamVector& v,
                          double h) {
  return (b.grad(w + h * v) - b.grad(w - h * v)) / (2.0 * h);
}

inline double relative_error(const ParamVector& got, const ParamVector& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

inline ParamVector random_vector(std::mt19937_64& eng, Eigen::Index d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ParamVector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n(eng);
  return v;
}

inline Matrix random_spd(std::mt19937_64& eng, Eigen::Index d, double floor = 0.1) {
  Matrix g(d, d);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(eng);
  Matrix a = g * g.transpose() / static_cast<double>(d) + floor * Matrix::Identity(d, d);
  return 0.5 * (a + a.transpose());
}

inline std::shared_ptr<Dataset> random_dataset(std::mt19937_64& eng, std::size_t n, Eigen::Index p,
                                               int classes) {
  auto ds = std::make_shared<Dataset>();
  ds->num_classes = classes;
  ds->features.resize(static_cast<Eigen::Index>(n), p);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < ds->features.size(); ++i) ds->features.data()[i] = nd(eng);
  ds->labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds->labels[i] = static_cast<int>(eng() % classes);
  return ds;
}

inline MiniBatch whole(std::shared_ptr<const Dataset> ds) {
  MiniBatch b;
  b.source = ds;
  b.indices.resize(ds->size());
  for (std::size_t i = 0; i < ds->size(); ++i) b.indices[i] = i;
  return b;
}

// Two-pass client-gradient variance computed from explicit per-client
// gradient lists: client means first, then squared deviations.
inline double two_pass_dispersion(const std::vector<data::ClientBatches>& clients,
                                  const ParamVector& w) {
  std::vector<ParamVector> means;
  for (const auto& c : clients) {
    ParamVector s = ParamVector::Zero(w.size());
    for (const auto& b : c) s += b->grad(w);
    means.push_back(s / static_cast<double>(c.size()));
  }
  ParamVector g = ParamVector::Zero(w.size());
  for (const auto& x : means) g += x;
  g /= static_cast<double>(means.size());
  double v = 0.0;
  for (const auto& x : means) v += (x - g).squaredNorm();
  return v / static_cast<double>(means.size());
}

// Scalar quadratic batch 0.5 a (w - mu)^2.
inline models::BatchPtr scalar_quadratic(double a, double mu) {
  return models::make_quadratic(Matrix::Constant(1, 1, a), ParamVector::Constant(1, mu));
}

inline ParamVector scalar(double x) { return ParamVector::Constant(1, x); }

}  // namespace fedbea::testing

#endif  // FEDBEA_TESTS_SUPPORT_ORACLES_HPP_
