#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fastinf/data.hpp"
#include "fastinf/errors.hpp"
#include "fastinf/params.hpp"
#include "fastinf/rng.hpp"

namespace fastinf {

enum class Architecture { LogisticRegression, Mlp };
enum class Activation { Tanh, Relu };

inline const char* to_string(Architecture a) {
  return a == Architecture::LogisticRegression ? "logistic-regression" : "mlp";
}
inline const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

// Per-example loss is cross-entropy plus (l2/2)*||theta||^2, so the weight
// decay is visible to gradients and HVPs.
struct ModelSpec {
  Architecture arch = Architecture::LogisticRegression;
  int d = 0;
  int num_classes = 2;
  std::vector<int> hidden;           // mlp only
  Activation activation = Activation::Tanh;
  double l2 = 0.005;
  std::vector<std::string> frozen;   // segment names with zero-masked gradients

  void validate() const {
    if (d <= 0) throw ConfigError("model spec: d must be positive");
    if (num_classes < 2) throw ConfigError("model spec: need at least 2 classes");
    if (l2 < 0) throw ConfigError("model spec: l2 penalty must be non-negative");
    if (arch == Architecture::Mlp) {
      if (hidden.empty()) throw ConfigError("mlp needs at least one hidden layer");
      for (int h : hidden)
        if (h <= 0) throw ConfigError("mlp hidden sizes must be positive");
    }
  }

  // Layer widths d, hidden..., C for the mlp.
  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    s.push_back(d);
    for (int h : hidden) s.push_back(h);
    s.push_back(num_classes);
    return s;
  }
};

inline ParamLayout make_layout(const ModelSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::size_t off = 0;
  auto add = [&](const std::string& name, std::size_t len) {
    layout.segments.push_back({name, off, len, false});
    off += len;
  };
  if (spec.arch == Architecture::LogisticRegression) {
    if (spec.num_classes == 2)
      add("w", static_cast<std::size_t>(spec.d));
    else
      add("W", static_cast<std::size_t>(spec.num_classes) * spec.d);
  } else {
    const auto sizes = spec.layer_sizes();
    for (std::size_t i = 1; i < sizes.size(); ++i) {
      add("W" + std::to_string(i), static_cast<std::size_t>(sizes[i]) * sizes[i - 1]);
      add("b" + std::to_string(i), static_cast<std::size_t>(sizes[i]));
    }
  }
  for (const auto& name : spec.frozen) {
    bool found = false;
    for (auto& s : layout.segments)
      if (s.name == name) s.frozen = found = true;
    if (!found) throw ConfigError("frozen segment not in layout: " + name);
  }
  return layout;
}

inline std::size_t param_count(const ModelSpec& spec) { return make_layout(spec).total(); }

inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p;
  p.layout = make_layout(spec);
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.layout.total()));
  if (spec.arch == Architecture::Mlp) {
    auto eng = make_engine(derive_seed(seed, "init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto sizes = spec.layer_sizes();
    for (std::size_t i = 1; i < sizes.size(); ++i) {
      const auto& seg = p.layout.find("W" + std::to_string(i));
      const double scale = 1.0 / std::sqrt(static_cast<double>(sizes[i - 1]));
      for (std::size_t j = 0; j < seg.length; ++j)
        p.values[static_cast<Eigen::Index>(seg.offset + j)] = scale * normal(eng);
    }
  }
  return p;
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using MutMat = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

inline void check_point(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  if (z.x.size() != spec.d)
    throw ConfigError("data point dimension " + std::to_string(z.x.size()) + " does not match model d=" + std::to_string(spec.d));
  if (z.y < 0 || z.y >= spec.num_classes) throw ConfigError("label out of range for model");
  if (params.values.size() != static_cast<Eigen::Index>(param_count(spec)))
    throw ConfigError("parameter vector length does not match model spec");
  check_finite(params.values, "parameters");
}

inline double softplus(double t) { return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0); }
inline double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

inline Eigen::VectorXd softmax(const Eigen::VectorXd& u) {
  Eigen::VectorXd e = (u.array() - u.maxCoeff()).exp();
  return e / e.sum();
}

inline double act(Activation a, double z) { return a == Activation::Tanh ? std::tanh(z) : std::max(z, 0.0); }
inline double act_d1(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0 ? 1.0 : 0.0;
}
inline double act_d2(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return -2.0 * t * (1.0 - t * t);
  }
  return 0.0;
}

// Offsets of W_i / b_i inside the flat vector, in layout order.
struct MlpOffsets {
  std::vector<std::size_t> w_off, b_off;
  std::vector<int> sizes;

  explicit MlpOffsets(const ModelSpec& spec) : sizes(spec.layer_sizes()) {
    std::size_t off = 0;
    for (std::size_t i = 1; i < sizes.size(); ++i) {
      w_off.push_back(off);
      off += static_cast<std::size_t>(sizes[i]) * sizes[i - 1];
      b_off.push_back(off);
      off += static_cast<std::size_t>(sizes[i]);
    }
  }

  std::size_t layers() const { return w_off.size(); }
  ConstMat W(const Eigen::VectorXd& theta, std::size_t i) const {
    return ConstMat(theta.data() + w_off[i], sizes[i + 1], sizes[i]);
  }
  ConstVec b(const Eigen::VectorXd& theta, std::size_t i) const {
    return ConstVec(theta.data() + b_off[i], sizes[i + 1]);
  }
  MutMat W(Eigen::VectorXd& theta, std::size_t i) const {
    return MutMat(theta.data() + w_off[i], sizes[i + 1], sizes[i]);
  }
  MutVec b(Eigen::VectorXd& theta, std::size_t i) const {
    return MutVec(theta.data() + b_off[i], sizes[i + 1]);
  }
};

struct MlpForward {
  std::vector<Eigen::VectorXd> z;  // pre-activations, layers 1..L (z.back() = logits)
  std::vector<Eigen::VectorXd> a;  // activations, a[0] = x, a[i] = f(z[i]) for i < L
  Eigen::VectorXd probs;
};

inline MlpForward mlp_forward(const ModelSpec& spec, const MlpOffsets& off, const Eigen::VectorXd& theta, const Eigen::VectorXd& x) {
  MlpForward f;
  const std::size_t L = off.layers();
  f.a.resize(L);  // a[0..L-1]; logits are not activated
  f.z.resize(L);
  f.a[0] = x;
  for (std::size_t i = 0; i < L; ++i) {
    f.z[i] = off.W(theta, i) * f.a[i] + off.b(theta, i);
    if (i + 1 < L) {
      f.a[i + 1] = f.z[i].unaryExpr([&](double v) { return act(spec.activation, v); });
    }
  }
  f.probs = softmax(f.z[L - 1]);
  return f;
}

inline void mask_frozen(const ParamLayout& layout, Eigen::VectorXd& v) {
  for (const auto& s : layout.segments)
    if (s.frozen) v.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.length)).setZero();
}

}  // namespace detail

inline Eigen::VectorXd class_probs(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  detail::check_point(spec, params, z);
  if (spec.arch == Architecture::LogisticRegression) {
    if (spec.num_classes == 2) {
      const double p1 = detail::sigmoid(params.values.dot(z.x));
      Eigen::VectorXd p(2);
      p << 1.0 - p1, p1;
      return p;
    }
    detail::ConstMat W(params.values.data(), spec.num_classes, spec.d);
    return detail::softmax(W * z.x);
  }
  const detail::MlpOffsets off(spec);
  return detail::mlp_forward(spec, off, params.values, z.x).probs;
}

inline int predict(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  Eigen::Index arg = 0;
  class_probs(spec, params, z).maxCoeff(&arg);
  return static_cast<int>(arg);
}

inline double loss(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  detail::check_point(spec, params, z);
  double data_loss;
  if (spec.arch == Architecture::LogisticRegression && spec.num_classes == 2) {
    const double u = params.values.dot(z.x);
    data_loss = detail::softplus(u) - z.y * u;
  } else {
    Eigen::VectorXd u;
    if (spec.arch == Architecture::LogisticRegression) {
      detail::ConstMat W(params.values.data(), spec.num_classes, spec.d);
      u = W * z.x;
    } else {
      const detail::MlpOffsets off(spec);
      u = detail::mlp_forward(spec, off, params.values, z.x).z.back();
    }
    const double m = u.maxCoeff();
    data_loss = m + std::log((u.array() - m).exp().sum()) - u[z.y];
  }
  const double total = data_loss + 0.5 * spec.l2 * params.values.squaredNorm();
  if (!std::isfinite(total)) throw NumericError("loss is non-finite");
  return total;
}

inline double mean_loss(const ModelSpec& spec, const ParamVector& params, std::span<const DataPoint> batch) {
  if (batch.empty()) throw ConfigError("batch must be non-empty");
  double s = 0;
  for (const auto& z : batch) s += loss(spec, params, z);
  return s / static_cast<double>(batch.size());
}

inline double mean_loss(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  return mean_loss(spec, params, std::span<const DataPoint>(ds.points()));
}

inline double accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  int correct = 0;
  for (const auto& z : ds.points()) correct += predict(spec, params, z) == z.y;
  return static_cast<double>(correct) / ds.size();
}

namespace detail {

// Data-loss gradient of one point accumulated into out (no l2 term here).
inline void grad_point_accum(const ModelSpec& spec, const ParamVector& params, const DataPoint& z, Eigen::VectorXd& out) {
  if (spec.arch == Architecture::LogisticRegression) {
    if (spec.num_classes == 2) {
      const double r = sigmoid(params.values.dot(z.x)) - z.y;
      out.noalias() += r * z.x;
      return;
    }
    ConstMat W(params.values.data(), spec.num_classes, spec.d);
    Eigen::VectorXd delta = softmax(W * z.x);
    delta[z.y] -= 1.0;
    MutMat G(out.data(), spec.num_classes, spec.d);
    G.noalias() += delta * z.x.transpose();
    return;
  }
  const MlpOffsets off(spec);
  const auto f = mlp_forward(spec, off, params.values, z.x);
  const std::size_t L = off.layers();
  Eigen::VectorXd delta = f.probs;
  delta[z.y] -= 1.0;
  for (std::size_t i = L; i-- > 0;) {
    MutMat GW(out.data() + off.w_off[i], off.sizes[i + 1], off.sizes[i]);
    MutVec Gb(out.data() + off.b_off[i], off.sizes[i + 1]);
    GW.noalias() += delta * f.a[i].transpose();
    Gb.noalias() += delta;
    if (i > 0) {
      Eigen::VectorXd back = off.W(params.values, i).transpose() * delta;
      delta = back.cwiseProduct(f.z[i - 1].unaryExpr([&](double v) { return act_d1(spec.activation, v); }));
    }
  }
}

// Data-loss Hessian-vector product of one point accumulated into out.
inline void hvp_point_accum(const ModelSpec& spec, const ParamVector& params, const DataPoint& z, const Eigen::VectorXd& v, Eigen::VectorXd& out) {
  if (spec.arch == Architecture::LogisticRegression) {
    if (spec.num_classes == 2) {
      const double p1 = sigmoid(params.values.dot(z.x));
      out.noalias() += (p1 * (1.0 - p1) * v.dot(z.x)) * z.x;
      return;
    }
    ConstMat W(params.values.data(), spec.num_classes, spec.d);
    ConstMat V(v.data(), spec.num_classes, spec.d);
    const Eigen::VectorXd p = softmax(W * z.x);
    const Eigen::VectorXd ru = V * z.x;
    const Eigen::VectorXd rp = p.cwiseProduct(ru) - p * p.dot(ru);
    MutMat O(out.data(), spec.num_classes, spec.d);
    O.noalias() += rp * z.x.transpose();
    return;
  }
  // Pearlmutter's forward-over-reverse pass through the mlp.
  const MlpOffsets off(spec);
  const auto f = mlp_forward(spec, off, params.values, z.x);
  const std::size_t L = off.layers();

  std::vector<Eigen::VectorXd> rz(L), ra(L);
  ra[0] = Eigen::VectorXd::Zero(spec.d);
  for (std::size_t i = 0; i < L; ++i) {
    ConstMat Vw(v.data() + off.w_off[i], off.sizes[i + 1], off.sizes[i]);
    ConstVec vb(v.data() + off.b_off[i], off.sizes[i + 1]);
    rz[i] = off.W(params.values, i) * ra[i] + Vw * f.a[i] + vb;
    if (i + 1 < L)
      ra[i + 1] = rz[i].cwiseProduct(f.z[i].unaryExpr([&](double t) { return act_d1(spec.activation, t); }));
  }

  std::vector<Eigen::VectorXd> delta(L), rdelta(L);
  delta[L - 1] = f.probs;
  delta[L - 1][z.y] -= 1.0;
  rdelta[L - 1] = f.probs.cwiseProduct(rz[L - 1]) - f.probs * f.probs.dot(rz[L - 1]);
  for (std::size_t i = L - 1; i-- > 0;) {
    ConstMat Vw(v.data() + off.w_off[i + 1], off.sizes[i + 2], off.sizes[i + 1]);
    const Eigen::VectorXd t = off.W(params.values, i + 1).transpose() * delta[i + 1];
    const Eigen::VectorXd rt = Vw.transpose() * delta[i + 1] + off.W(params.values, i + 1).transpose() * rdelta[i + 1];
    const Eigen::VectorXd d1 = f.z[i].unaryExpr([&](double s) { return act_d1(spec.activation, s); });
    const Eigen::VectorXd d2 = f.z[i].unaryExpr([&](double s) { return act_d2(spec.activation, s); });
    delta[i] = t.cwiseProduct(d1);
    rdelta[i] = rt.cwiseProduct(d1) + t.cwiseProduct(d2).cwiseProduct(rz[i]);
  }

  for (std::size_t i = 0; i < L; ++i) {
    MutMat OW(out.data() + off.w_off[i], off.sizes[i + 1], off.sizes[i]);
    MutVec Ob(out.data() + off.b_off[i], off.sizes[i + 1]);
    OW.noalias() += rdelta[i] * f.a[i].transpose();
    OW.noalias() += delta[i] * ra[i].transpose();
    Ob.noalias() += rdelta[i];
  }
}

}  // namespace detail

// Mean gradient of the per-example loss over the batch.
inline GradVector grad(const ModelSpec& spec, const ParamVector& params, std::span<const DataPoint> batch) {
  if (batch.empty()) throw ConfigError("batch must be non-empty");
  detail::check_point(spec, params, batch[0]);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.values.size());
  for (const auto& z : batch) detail::grad_point_accum(spec, params, z, g);
  g /= static_cast<double>(batch.size());
  g.noalias() += spec.l2 * params.values;
  detail::mask_frozen(params.layout, g);
  if (!g.allFinite()) throw NumericError("gradient is non-finite");
  return g;
}

inline GradVector grad(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  return grad(spec, params, std::span<const DataPoint>(&z, 1));
}

inline GradVector grad(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  return grad(spec, params, std::span<const DataPoint>(ds.points()));
}

// Exact mean-loss Hessian-vector product over the batch. include_l2 drops the
// weight-decay block for callers that want the data-only Hessian.
inline GradVector hvp(const ModelSpec& spec, const ParamVector& params, std::span<const DataPoint> batch, const GradVector& v, bool include_l2 = true) {
  if (batch.empty()) throw ConfigError("batch must be non-empty");
  detail::check_point(spec, params, batch[0]);
  if (v.size() != params.values.size()) throw ConfigError("hvp direction length does not match parameters");
  Eigen::VectorXd vm = v;
  detail::mask_frozen(params.layout, vm);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(params.values.size());
  for (const auto& z : batch) detail::hvp_point_accum(spec, params, z, vm, out);
  out /= static_cast<double>(batch.size());
  if (include_l2) out.noalias() += spec.l2 * vm;
  detail::mask_frozen(params.layout, out);
  if (!out.allFinite()) throw NumericError("hvp is non-finite");
  return out;
}

inline GradVector hvp(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, const GradVector& v, bool include_l2 = true) {
  return hvp(spec, params, std::span<const DataPoint>(ds.points()), v, include_l2);
}

// kNN feature space: the model's final representation.
inline Eigen::VectorXd features(const ModelSpec& spec, const ParamVector& params, const DataPoint& z) {
  detail::check_point(spec, params, z);
  if (spec.arch == Architecture::LogisticRegression) return z.x;
  const detail::MlpOffsets off(spec);
  const auto f = detail::mlp_forward(spec, off, params.values, z.x);
  return f.a.back();  // last hidden activation
}

struct TrainConfig {
  long steps = 2000;
  double lr = 0.5;
  std::uint64_t seed = 0;
  double stop_grad_norm = 0.0;  // 0 disables the early stop
};

struct TrainResult {
  ParamVector params;
  double final_grad_norm = 0.0;
  long steps_run = 0;
};

// Deterministic full-batch gradient descent from a seeded initialization.
inline TrainResult train(const ModelSpec& spec, const Dataset& train_set, const TrainConfig& cfg) {
  if (train_set.role() != DatasetRole::Train) throw ConfigError("train() expects a dataset with role=train");
  ParamVector p = init_params(spec, cfg.seed);
  const std::span<const DataPoint> all(train_set.points());
  const double blowup = 1e8 * std::max(1.0, p.values.norm());
  long step = 0;
  for (; step < cfg.steps; ++step) {
    Eigen::VectorXd g = grad(spec, p, all);
    if (!g.allFinite()) throw TrainingError("training diverged", static_cast<std::size_t>(step));
    if (cfg.stop_grad_norm > 0 && g.norm() <= cfg.stop_grad_norm) break;
    p.values.noalias() -= cfg.lr * g;
    if (!p.values.allFinite() || p.values.norm() > blowup)
      throw TrainingError("training diverged", static_cast<std::size_t>(step));
  }
  TrainResult r;
  r.final_grad_norm = grad(spec, p, all).norm();
  r.steps_run = step;
  r.params = std::move(p);
  return r;
}

// Full-batch gradient steps on the mean loss over `points`; input unchanged.
inline ParamVector finetune(const ModelSpec& spec, const ParamVector& params, std::span<const DataPoint> points, double lr, long steps = 1) {
  if (points.empty()) throw ConfigError("finetune needs at least one point");
  if (lr < 0) throw ConfigError("finetune learning rate must be non-negative");
  ParamVector p = params;
  for (long s = 0; s < steps; ++s) {
    Eigen::VectorXd g = grad(spec, p, points);
    p.values.noalias() -= lr * g;
    if (!p.values.allFinite()) throw NumericError("finetune produced non-finite parameters");
  }
  return p;
}

}  // namespace fastinf
