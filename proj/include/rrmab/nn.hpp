// Copyright 2026 The robust-rmab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rrmab/autodiff.hpp"
#include "rrmab/model.hpp"
#include "rrmab/rng.hpp"

namespace rrmab::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

inline constexpr int kHiddenUnits = 16;

// Orthogonal init: a Gaussian matrix orthonormalized by QR, with the sign of
// R's diagonal folded back in so the draw is uniform over the group.
inline Matrix orthogonal(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool tall = rows >= cols;
  const int r = tall ? rows : cols, c = tall ? cols : rows;
  Matrix g(r, c);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  const Matrix rr = qr.matrixQR();
  for (int j = 0; j < c; ++j)
    if (rr(j, j) < 0.0) q.col(j) *= -1.0;
  return gain * (tall ? q : Matrix(q.transpose()));
}

// in -> 16 -> 16 -> out with tanh hidden activations and a linear output.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int in, int out, Rng& rng, double out_scale = 1.0, std::string name = "mlp")
      : in_(in), out_(out) {
    const double g = std::sqrt(2.0);
    layers_.push_back({Parameter(name + ".w0", orthogonal(in, kHiddenUnits, g, rng)),
                       Parameter(name + ".b0", Matrix::Zero(1, kHiddenUnits))});
    layers_.push_back({Parameter(name + ".w1", orthogonal(kHiddenUnits, kHiddenUnits, g, rng)),
                       Parameter(name + ".b1", Matrix::Zero(1, kHiddenUnits))});
    layers_.push_back({Parameter(name + ".w2", orthogonal(kHiddenUnits, out, out_scale, rng)),
                       Parameter(name + ".b2", Matrix::Zero(1, out))});
  }

  int in_width() const { return in_; }
  int out_width() const { return out_; }

  Var forward(Tape& tape, const Var& x) {
    if (x.cols() != in_) throw DimensionError("Mlp::forward: input width mismatch");
    Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = ad::add_row(ad::matmul(h, tape.param(layers_[l].w)), tape.param(layers_[l].b));
      if (l + 1 < layers_.size()) h = ad::tanh(h);
    }
    return h;
  }

  Matrix forward(const Matrix& x) const {
    if (x.cols() != in_) throw DimensionError("Mlp::forward: input width mismatch");
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = (h * layers_[l].w.value).rowwise() + layers_[l].b.value.row(0);
      if (l + 1 < layers_.size()) h = h.array().tanh();
    }
    return h;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& l : layers_) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }

  bool all_finite() const {
    for (const auto* p : parameters())
      if (!p->value.allFinite()) return false;
    return true;
  }

 private:
  struct Layer {
    Parameter w;
    Parameter b;
  };
  int in_ = 0;
  int out_ = 0;
  std::vector<Layer> layers_;
};

// Adam with bias correction.
struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      if (!g.allFinite()) throw TrainingError("Adam::step: non-finite gradient in " + params_[i]->name);
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      params_[i]->value.array() -=
          cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
  }

  int steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  AdamConfig cfg_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Categorical head over logits.

struct Categorical {
  static std::vector<double> probs(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
    const double m = logits.maxCoeff();
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.size(); ++j) z += (p[j] = std::exp(logits(j) - m));
    for (double& x : p) x /= z;
    return p;
  }

  static double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
      if (x > 0.0) h -= x * std::log(x);
    return h;
  }

  static double logprob(const std::vector<double>& p, int a) { return std::log(p[a]); }

  static int sample(const std::vector<double>& p, Rng& rng) { return sample_categorical(p, rng); }

  // Lowest-index maximizer.
  static int greedy(const std::vector<double>& p) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(p.size()); ++j)
      if (p[j] > p[best]) best = j;
    return best;
  }

  // Tape versions: (B, k) logits -> (B, 1).
  static Var logprob(const Var& logits, const std::vector<int>& actions) {
    return ad::gather(ad::log_softmax(logits), actions);
  }

  static Var entropy(const Var& logits) {
    Var lp = ad::log_softmax(logits);
    return ad::scale(ad::row_sum(ad::mul(ad::exp(lp), lp)), -1.0);
  }
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian with state-independent log standard deviations.

struct DiagGaussian {
  static constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

  static double logprob(const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& log_std,
                        const Eigen::RowVectorXd& x) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      const double z = (x(i) - mean(i)) / std::exp(log_std(i));
      lp += -0.5 * z * z - log_std(i) - 0.5 * kLog2Pi;
    }
    return lp;
  }

  static double entropy(const Eigen::RowVectorXd& log_std) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < log_std.size(); ++i) h += 0.5 * (kLog2Pi + 1.0) + log_std(i);
    return h;
  }

  static Eigen::RowVectorXd sample(const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& log_std,
                                   Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::RowVectorXd x(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) x(i) = mean(i) + std::exp(log_std(i)) * normal(rng);
    return x;
  }

  // Tape version: mean (B, d), log_std (1, d), x constant (B, d) -> (B, 1).
  static Var logprob(const Var& mean, const Var& log_std, const Matrix& x) {
    Tape& t = *mean.tape;
    Var ls = ad::broadcast_rows(log_std, mean.rows());
    Var z = ad::mul(ad::sub(t.constant(x), mean), ad::exp(ad::scale(ls, -1.0)));
    Var per_dim = ad::add_scalar(ad::add(ad::scale(ad::square(z), -0.5), ad::scale(ls, -1.0)),
                                 -0.5 * kLog2Pi);
    return ad::row_sum(per_dim);
  }

  static Var entropy(const Var& log_std) {
    return ad::add_scalar(ad::sum(log_std), 0.5 * (kLog2Pi + 1.0) * static_cast<double>(log_std.cols()));
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: a versioned JSON document with a layer-shape manifest. Doubles
// are written in shortest round-trip form, so reload is bit-exact.

inline constexpr const char* kCheckpointFormat = "rrmab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json parameters_to_json(const std::vector<const Parameter*>& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto* p : params) {
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    layers.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"data", data}});
  }
  return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"layers", layers}};
}

inline void parameters_from_json(const nlohmann::json& j, const std::vector<Parameter*>& params) {
  if (j.value("format", "") != kCheckpointFormat) throw ParameterError("checkpoint: unknown format");
  if (j.value("version", 0) != kCheckpointVersion) throw ParameterError("checkpoint: unsupported version");
  const auto& layers = j.at("layers");
  if (layers.size() != params.size()) throw DimensionError("checkpoint: layer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& l = layers[i];
    auto* p = params[i];
    if (l.at("name").get<std::string>() != p->name || l.at("rows").get<Eigen::Index>() != p->value.rows() ||
        l.at("cols").get<Eigen::Index>() != p->value.cols())
      throw DimensionError("checkpoint: layer manifest mismatch at " + p->name);
    const auto data = l.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != p->value.size())
      throw DimensionError("checkpoint: data length mismatch at " + p->name);
    std::copy(data.begin(), data.end(), p->value.data());
    p->zero_grad();
  }
}

}  // namespace rrmab::nn
