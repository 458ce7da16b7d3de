#pragma once

// Baseline regressors (least squares, ridge, lasso, SGD, one-hidden-layer
// MLP), RMSE scoring and the k-fold cross-validation harness.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/model_io.hpp"
#include "thermo/telemetry.hpp"

namespace thermo {

inline double rmse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw InvalidArgument("rmse: length mismatch");
  if (y.empty()) throw InvalidArgument("rmse: empty input");
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(y.size()));
}

// A fitted model reduced to its prediction function.
using Regressor = std::function<double(std::span<const double>)>;
// Fits a model on a dataset; the seed feeds any internal randomness.
using Trainer = std::function<Regressor(const Dataset&, std::uint64_t seed)>;

// ---------------------------------------------------------------------------
// standardization
// ---------------------------------------------------------------------------

// z-score per column using the population standard deviation. Constant
// columns keep unit scale (they are centered only).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

  static Standardizer fit(const Dataset& d) {
    Standardizer s{std::vector<double>(d.cols(), 0.0), std::vector<double>(d.cols(), 1.0)};
    const double n = static_cast<double>(d.rows());
    for (std::size_t j = 0; j < d.cols(); ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < d.rows(); ++i) m += d.at(i, j);
      m /= n;
      double v = 0.0;
      for (std::size_t i = 0; i < d.rows(); ++i) v += (d.at(i, j) - m) * (d.at(i, j) - m);
      const double sd = std::sqrt(v / n);
      s.mean[j] = m;
      s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 1.0;
    }
    return s;
  }

  bool is_identity() const {
    return std::all_of(mean.begin(), mean.end(), [](double m) { return m == 0.0; }) &&
           std::all_of(scale.begin(), scale.end(), [](double s) { return s == 1.0; });
  }

  double apply(std::size_t j, double v) const { return (v - mean[j]) / scale[j]; }

  // Row-major standardized copy of the dataset's feature matrix.
  std::vector<double> transform(const Dataset& d) const {
    std::vector<double> z(d.values.size());
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) z[i * d.cols() + j] = apply(j, d.at(i, j));
    return z;
  }

  bool operator==(const Standardizer&) const = default;
};

// ---------------------------------------------------------------------------
// linear models
// ---------------------------------------------------------------------------

struct LinearModel {
  std::string kind = "ols";
  std::vector<std::string> feature_names;
  Standardizer standardizer;
  std::vector<double> weights;  // in standardized feature space
  double intercept = 0.0;
  bool rank_fallback = false;   // design was rank-deficient, solved as tiny ridge
  bool converged = true;        // lasso: false when the sweep budget ran out
  Bounds target_bounds;

  double predict(std::span<const double> x) const {
    if (x.size() != weights.size()) {
      throw InvalidArgument(concat("linear model expects ", weights.size(), " features, got ", x.size()));
    }
    double y = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) y += weights[j] * standardizer.apply(j, x[j]);
    return y;
  }

  // Coefficients expressed on the raw (unstandardized) features.
  std::pair<std::vector<double>, double> raw_coefficients() const {
    std::vector<double> w(weights.size());
    double b = intercept;
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] = weights[j] / standardizer.scale[j];
      b -= w[j] * standardizer.mean[j];
    }
    return {w, b};
  }

  bool operator==(const LinearModel&) const = default;
};

namespace detail {

struct Centered {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
};

inline Centered center(const Dataset& d) {
  const auto n = static_cast<Eigen::Index>(d.rows());
  const auto p = static_cast<Eigen::Index>(d.cols());
  Centered c;
  c.x.resize(n, p);
  c.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) c.x(i, j) = d.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    c.y(i) = d.target[static_cast<std::size_t>(i)];
  }
  c.x_mean = c.x.colwise().mean().transpose();
  c.y_mean = c.y.mean();
  c.x.rowwise() -= c.x_mean.transpose();
  c.y.array() -= c.y_mean;
  return c;
}

inline LinearModel finish_linear(const Dataset& d, std::string kind, const Centered& c, const Eigen::VectorXd& w) {
  LinearModel m;
  m.kind = std::move(kind);
  m.feature_names = d.feature_names;
  m.standardizer = Standardizer::identity(d.cols());
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercept = c.y_mean - c.x_mean.dot(w);
  m.target_bounds = d.target_bounds;
  return m;
}

// Ridge on centered data via QR of the stacked system [X; sqrt(l) I].
inline Eigen::VectorXd ridge_solve(const Centered& c, double lambda) {
  const auto n = c.x.rows();
  const auto p = c.x.cols();
  Eigen::MatrixXd a(n + p, p);
  a.topRows(n) = c.x;
  a.bottomRows(p) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + p);
  b.head(n) = c.y;
  return a.colPivHouseholderQr().solve(b);
}

inline void require_rows(const Dataset& d, std::size_t min_rows, const char* who) {
  d.validate();
  if (d.rows() < min_rows) throw InvalidArgument(concat(who, ": need at least ", min_rows, " rows"));
}

}  // namespace detail

inline constexpr double kRankFallbackLambda = 1e-8;

// Least squares via column-pivoted Householder QR on centered data. A
// rank-deficient (or underdetermined) design is solved as ridge with a tiny
// penalty and flagged.
inline LinearModel fit_ols(const Dataset& d) {
  detail::require_rows(d, 1, "fit_ols");
  auto c = detail::center(d);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.x);
  const bool full_rank = d.rows() >= d.cols() + 1 && qr.rank() == c.x.cols();
  if (full_rank) return detail::finish_linear(d, "ols", c, qr.solve(c.y));
  auto m = detail::finish_linear(d, "ols", c, detail::ridge_solve(c, kRankFallbackLambda));
  m.rank_fallback = true;
  return m;
}

// Squared error + lambda * ||w||^2, intercept unpenalized. Stands in for
// Bayesian regression under a fixed Gaussian prior.
inline LinearModel fit_ridge(const Dataset& d, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("fit_ridge: lambda must be >= 0");
  if (lambda == 0.0) {
    auto m = fit_ols(d);
    m.kind = "ridge";
    return m;
  }
  detail::require_rows(d, 1, "fit_ridge");
  auto c = detail::center(d);
  return detail::finish_linear(d, "ridge", c, detail::ridge_solve(c, lambda));
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Coordinate descent on (1/2n)||y - b - Zw||^2 + lambda ||w||_1 over
// standardized columns Z.
inline LinearModel fit_lasso(const Dataset& d, double lambda, double tol = 1e-7, int max_sweeps = 10000) {
  if (!(lambda >= 0.0)) throw InvalidArgument("fit_lasso: lambda must be >= 0");
  detail::require_rows(d, 1, "fit_lasso");
  const std::size_t n = d.rows();
  const std::size_t p = d.cols();
  const auto st = Standardizer::fit(d);
  const auto z = st.transform(d);
  const double y_mean = std::accumulate(d.target.begin(), d.target.end(), 0.0) / static_cast<double>(n);

  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = d.target[i] - y_mean;
  std::vector<double> col_sq(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) col_sq[j] += z[i * p + j] * z[i * p + j];
  for (auto& v : col_sq) v /= static_cast<double>(n);

  std::vector<double> w(p, 0.0);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (col_sq[j] <= 0.0) continue;
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += z[i * p + j] * (resid[i] + z[i * p + j] * w[j]);
      rho /= static_cast<double>(n);
      const double next = soft_threshold(rho, lambda) / col_sq[j];
      const double delta = next - w[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= z[i * p + j] * delta;
        w[j] = next;
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    converged = max_delta < tol;
  }

  LinearModel m;
  m.kind = "lasso";
  m.feature_names = d.feature_names;
  m.standardizer = st;
  m.weights = std::move(w);
  m.intercept = y_mean;
  m.converged = converged;
  m.target_bounds = d.target_bounds;
  return m;
}

inline constexpr double kDivergenceLoss = 1e12;

// Per-sample squared-loss steps on standardized features; sample order is
// reshuffled every epoch from the seeded generator.
inline LinearModel fit_sgd(const Dataset& d, double lr, int epochs, std::uint64_t seed) {
  if (!(lr > 0.0)) throw InvalidArgument("fit_sgd: learning rate must be > 0");
  if (epochs < 0) throw InvalidArgument("fit_sgd: epochs must be >= 0");
  detail::require_rows(d, 1, "fit_sgd");
  const std::size_t n = d.rows();
  const std::size_t p = d.cols();
  const auto st = Standardizer::fit(d);
  const auto z = st.transform(d);

  std::vector<double> w(p, 0.0);
  double b = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int e = 0; e < epochs; ++e) {
    shuffle(order, rng);
    for (auto i : order) {
      double pred = b;
      for (std::size_t j = 0; j < p; ++j) pred += w[j] * z[i * p + j];
      const double err = pred - d.target[i];
      for (std::size_t j = 0; j < p; ++j) w[j] -= lr * err * z[i * p + j];
      b -= lr * err;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double pred = b;
      for (std::size_t j = 0; j < p; ++j) pred += w[j] * z[i * p + j];
      loss += (pred - d.target[i]) * (pred - d.target[i]);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss) || loss > kDivergenceLoss) {
      throw DivergenceError(concat("fit_sgd diverged at epoch ", e + 1, " (loss ", loss, ")"));
    }
  }

  LinearModel m;
  m.kind = "sgd";
  m.feature_names = d.feature_names;
  m.standardizer = st;
  m.weights = std::move(w);
  m.intercept = b;
  m.target_bounds = d.target_bounds;
  return m;
}

// ---------------------------------------------------------------------------
// multilayer perceptron: p inputs -> 5 ReLU units -> 1 linear output
// ---------------------------------------------------------------------------

inline constexpr std::size_t kHiddenUnits = 5;

struct MlpModel {
  std::vector<std::string> feature_names;
  Standardizer standardizer;
  std::vector<double> hidden_weights;  // kHiddenUnits x p, row-major
  std::vector<double> hidden_bias;     // kHiddenUnits
  std::vector<double> output_weights;  // kHiddenUnits
  double output_bias = 0.0;
  double target_mean = 0.0;   // network output is de-standardized with these
  double target_scale = 1.0;
  Bounds target_bounds;

  std::size_t inputs() const { return feature_names.size(); }

  // Forward pass on an already standardized input.
  double forward_standardized(std::span<const double> z) const {
    const std::size_t p = z.size();
    double out = output_bias;
    for (std::size_t h = 0; h < kHiddenUnits; ++h) {
      double a = hidden_bias[h];
      for (std::size_t j = 0; j < p; ++j) a += hidden_weights[h * p + j] * z[j];
      out += output_weights[h] * std::max(0.0, a);
    }
    return out;
  }

  double predict(std::span<const double> x) const {
    if (x.size() != inputs()) {
      throw InvalidArgument(concat("mlp expects ", inputs(), " features, got ", x.size()));
    }
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = standardizer.apply(j, x[j]);
    return target_mean + target_scale * forward_standardized(z);
  }

  // Parameter vector order: hidden weights, hidden bias, output weights,
  // output bias.
  std::vector<double> flatten() const {
    std::vector<double> v = hidden_weights;
    v.insert(v.end(), hidden_bias.begin(), hidden_bias.end());
    v.insert(v.end(), output_weights.begin(), output_weights.end());
    v.push_back(output_bias);
    return v;
  }

  void unflatten(std::span<const double> v) {
    const std::size_t p = inputs();
    if (v.size() != kHiddenUnits * p + 2 * kHiddenUnits + 1) throw InvalidArgument("mlp parameter size mismatch");
    hidden_weights.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(kHiddenUnits * p));
    auto it = v.begin() + static_cast<std::ptrdiff_t>(kHiddenUnits * p);
    hidden_bias.assign(it, it + kHiddenUnits);
    it += kHiddenUnits;
    output_weights.assign(it, it + kHiddenUnits);
    output_bias = *(it + kHiddenUnits);
  }

  bool operator==(const MlpModel&) const = default;
};

struct MlpObjective {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Mean half squared error of the network on standardized rows z (row-major,
// n x p) against targets t, with its analytic gradient in flatten() order.
inline MlpObjective mlp_objective(const MlpModel& m, std::span<const double> z, std::span<const double> t) {
  const std::size_t p = m.inputs();
  const std::size_t n = t.size();
  MlpObjective obj;
  obj.gradient.assign(kHiddenUnits * p + 2 * kHiddenUnits + 1, 0.0);
  double* g_w = obj.gradient.data();
  double* g_b = g_w + kHiddenUnits * p;
  double* g_v = g_b + kHiddenUnits;
  double& g_c = obj.gradient.back();
  std::array<double, kHiddenUnits> act{};
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = z.data() + i * p;
    double out = m.output_bias;
    for (std::size_t h = 0; h < kHiddenUnits; ++h) {
      double a = m.hidden_bias[h];
      for (std::size_t j = 0; j < p; ++j) a += m.hidden_weights[h * p + j] * zi[j];
      act[h] = a;
      out += m.output_weights[h] * std::max(0.0, a);
    }
    const double err = out - t[i];
    obj.loss += 0.5 * err * err;
    g_c += err;
    for (std::size_t h = 0; h < kHiddenUnits; ++h) {
      if (act[h] <= 0.0) continue;
      g_v[h] += err * act[h];
      const double back = err * m.output_weights[h];
      g_b[h] += back;
      for (std::size_t j = 0; j < p; ++j) g_w[h * p + j] += back * zi[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  obj.loss *= inv_n;
  for (auto& g : obj.gradient) g *= inv_n;
  return obj;
}

// Seeded uniform(-0.5, 0.5) initialization of every parameter.
inline MlpModel init_mlp(const Dataset& d, std::uint64_t seed) {
  MlpModel m;
  m.feature_names = d.feature_names;
  m.standardizer = Standardizer::fit(d);
  const double n = static_cast<double>(d.rows());
  m.target_mean = std::accumulate(d.target.begin(), d.target.end(), 0.0) / n;
  double var = 0.0;
  for (double y : d.target) var += (y - m.target_mean) * (y - m.target_mean);
  const double sd = std::sqrt(var / n);
  m.target_scale = sd > 1e-12 ? sd : 1.0;
  m.target_bounds = d.target_bounds;
  Rng rng(seed);
  std::vector<double> params(kHiddenUnits * d.cols() + 2 * kHiddenUnits + 1);
  for (auto& v : params) v = uniform(rng, -0.5, 0.5);
  m.unflatten(params);
  return m;
}

// Full-batch gradient descent on the mean half squared error of the
// standardized target.
inline MlpModel fit_mlp(const Dataset& d, double lr, int epochs, std::uint64_t seed) {
  if (!(lr > 0.0)) throw InvalidArgument("fit_mlp: learning rate must be > 0");
  if (epochs < 0) throw InvalidArgument("fit_mlp: epochs must be >= 0");
  detail::require_rows(d, 1, "fit_mlp");
  auto m = init_mlp(d, seed);
  const auto z = m.standardizer.transform(d);
  std::vector<double> t(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) t[i] = (d.target[i] - m.target_mean) / m.target_scale;

  auto params = m.flatten();
  for (int e = 0; e < epochs; ++e) {
    const auto obj = mlp_objective(m, z, t);
    const double raw_loss = 2.0 * obj.loss * m.target_scale * m.target_scale;
    if (!std::isfinite(raw_loss) || raw_loss > kDivergenceLoss) {
      throw DivergenceError(concat("fit_mlp diverged at epoch ", e + 1));
    }
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * obj.gradient[k];
    m.unflatten(params);
  }
  return m;
}

// ---------------------------------------------------------------------------
// cross validation
// ---------------------------------------------------------------------------

struct CvReport {
  std::string model_name;
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
  std::size_t k = 0;
  double target_range = 0.0;  // max - min of the target over the whole dataset

  // Mean RMSE in min-max normalized target units.
  double normalized_mean_rmse() const { return target_range > 0.0 ? mean_rmse / target_range : 0.0; }
};

// Row indices of each validation fold: one seeded shuffle, then contiguous
// folds whose sizes differ by at most one (larger folds first).
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("kfold: k must be >= 2");
  if (n < k) throw InvalidArgument(concat("kfold: ", n, " rows cannot fill ", k, " folds"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

inline CvReport kfold_cv(const Dataset& d, std::size_t k, const Trainer& trainer, std::uint64_t seed,
                         std::string model_name = {}) {
  d.validate();
  const auto folds = kfold_indices(d.rows(), k, seed);
  CvReport rep;
  rep.model_name = std::move(model_name);
  rep.k = k;
  rep.target_range = d.target_bounds.max - d.target_bounds.min;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    auto valid_idx = folds[f];
    std::sort(valid_idx.begin(), valid_idx.end());
    const auto train = d.subset_rows(train_idx);
    const auto model = trainer(train, seed);
    std::vector<double> y, y_hat;
    for (auto i : valid_idx) {
      y.push_back(d.target[i]);
      y_hat.push_back(model(d.row(i)));
    }
    rep.fold_rmse.push_back(rmse(y, y_hat));
  }
  rep.mean_rmse = std::accumulate(rep.fold_rmse.begin(), rep.fold_rmse.end(), 0.0) / static_cast<double>(k);
  return rep;
}

struct ModelSpec {
  std::string name;
  Trainer trainer;
};

// Cross-validates every spec; ascending mean RMSE, ties by name.
inline std::vector<CvReport> compare_models(const Dataset& d, const std::vector<ModelSpec>& specs,
                                            std::size_t k, std::uint64_t seed) {
  if (specs.empty()) throw InvalidArgument("compare_models: no model specs");
  std::vector<CvReport> out;
  for (const auto& s : specs) out.push_back(kfold_cv(d, k, s.trainer, seed, s.name));
  std::stable_sort(out.begin(), out.end(), [](const CvReport& a, const CvReport& b) {
    if (a.mean_rmse != b.mean_rmse) return a.mean_rmse < b.mean_rmse;
    return a.model_name < b.model_name;
  });
  return out;
}

// Default baseline settings.
struct BaselineDefaults {
  double ridge_lambda = 1.0;
  double lasso_lambda = 0.01;
  double sgd_lr = 0.001;
  int sgd_epochs = 20;
  double mlp_lr = 0.1;
  int mlp_epochs = 2000;
};

inline std::vector<ModelSpec> baseline_specs(const BaselineDefaults& cfg = {}) {
  return {
      {"LR", [](const Dataset& d, std::uint64_t) -> Regressor {
         return [m = fit_ols(d)](std::span<const double> x) { return m.predict(x); };
       }},
      {"BR", [l = cfg.ridge_lambda](const Dataset& d, std::uint64_t) -> Regressor {
         return [m = fit_ridge(d, l)](std::span<const double> x) { return m.predict(x); };
       }},
      {"LLR", [l = cfg.lasso_lambda](const Dataset& d, std::uint64_t) -> Regressor {
         return [m = fit_lasso(d, l)](std::span<const double> x) { return m.predict(x); };
       }},
      {"SGD", [lr = cfg.sgd_lr, ep = cfg.sgd_epochs](const Dataset& d, std::uint64_t seed) -> Regressor {
         return [m = fit_sgd(d, lr, ep, seed)](std::span<const double> x) { return m.predict(x); };
       }},
      {"MLP", [lr = cfg.mlp_lr, ep = cfg.mlp_epochs](const Dataset& d, std::uint64_t seed) -> Regressor {
         return [m = fit_mlp(d, lr, ep, seed)](std::span<const double> x) { return m.predict(x); };
       }},
  };
}

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void write_header(io::Writer& w, std::string_view kind, const std::vector<std::string>& names,
                         const Bounds& tb) {
  w.field("thermo-model", kModelFormatVersion);
  w.field("kind", kind);
  w.words("features", names);
  w.field("target_bounds", tb.min, tb.max);
}

inline void write_standardizer(io::Writer& w, const Standardizer& s) {
  w.numbers("mean", s.mean);
  w.numbers("scale", s.scale);
}

inline Standardizer read_standardizer(io::Reader& r, std::size_t p) {
  Standardizer s;
  s.mean = r.numbers("mean");
  s.scale = r.numbers("scale");
  if (s.mean.size() != p || s.scale.size() != p) r.fail("standardizer size mismatch");
  return s;
}

inline Bounds read_bounds(io::Reader& r, std::string_view key) {
  auto t = r.expect(key);
  if (t.size() != 2) r.fail(concat("'", key, "' takes two values"));
  return {r.to_number(t[0], key), r.to_number(t[1], key)};
}

}  // namespace detail

// Reads the common header; returns the kind.
inline std::string read_model_header(io::Reader& r, std::vector<std::string>& names, Bounds& tb) {
  const auto version = r.integer("thermo-model");
  if (version != kModelFormatVersion) r.fail(concat("unsupported model format version ", version));
  auto kind = r.word("kind");
  names = r.words("features");
  tb = detail::read_bounds(r, "target_bounds");
  return kind;
}

inline std::string serialize(const LinearModel& m) {
  io::Writer w;
  detail::write_header(w, "linear", m.feature_names, m.target_bounds);
  w.field("fit", m.kind);
  w.field("rank_fallback", m.rank_fallback);
  w.field("converged", m.converged);
  detail::write_standardizer(w, m.standardizer);
  w.numbers("weights", m.weights);
  w.field("intercept", m.intercept);
  return w.str();
}

inline LinearModel read_linear_body(io::Reader& r, std::vector<std::string> names, Bounds tb) {
  LinearModel m;
  m.feature_names = std::move(names);
  m.target_bounds = tb;
  m.kind = r.word("fit");
  m.rank_fallback = r.integer("rank_fallback") != 0;
  m.converged = r.integer("converged") != 0;
  m.standardizer = detail::read_standardizer(r, m.feature_names.size());
  m.weights = r.numbers("weights");
  if (m.weights.size() != m.feature_names.size()) r.fail("weight count mismatch");
  m.intercept = r.number("intercept");
  return m;
}

inline LinearModel parse_linear_model(std::string_view text) {
  io::Reader r(text, "linear model");
  std::vector<std::string> names;
  Bounds tb;
  if (read_model_header(r, names, tb) != "linear") r.fail("not a linear model");
  return read_linear_body(r, std::move(names), tb);
}

inline std::string serialize(const MlpModel& m) {
  io::Writer w;
  detail::write_header(w, "mlp", m.feature_names, m.target_bounds);
  detail::write_standardizer(w, m.standardizer);
  w.field("target_scaling", m.target_mean, m.target_scale);
  w.numbers("hidden_weights", m.hidden_weights);
  w.numbers("hidden_bias", m.hidden_bias);
  w.numbers("output_weights", m.output_weights);
  w.field("output_bias", m.output_bias);
  return w.str();
}

inline MlpModel read_mlp_body(io::Reader& r, std::vector<std::string> names, Bounds tb) {
  MlpModel m;
  m.feature_names = std::move(names);
  m.target_bounds = tb;
  m.standardizer = detail::read_standardizer(r, m.feature_names.size());
  auto ts = r.expect("target_scaling");
  if (ts.size() != 2) r.fail("target_scaling takes two values");
  m.target_mean = r.to_number(ts[0], "target_scaling");
  m.target_scale = r.to_number(ts[1], "target_scaling");
  m.hidden_weights = r.numbers("hidden_weights");
  m.hidden_bias = r.numbers("hidden_bias");
  m.output_weights = r.numbers("output_weights");
  m.output_bias = r.number("output_bias");
  if (m.hidden_weights.size() != kHiddenUnits * m.feature_names.size() || m.hidden_bias.size() != kHiddenUnits ||
      m.output_weights.size() != kHiddenUnits) {
    r.fail("mlp layer size mismatch");
  }
  return m;
}

inline MlpModel parse_mlp_model(std::string_view text) {
  io::Reader r(text, "mlp model");
  std::vector<std::string> names;
  Bounds tb;
  if (read_model_header(r, names, tb) != "mlp") r.fail("not an mlp model");
  return read_mlp_body(r, std::move(names), tb);
}

}  // namespace thermo
