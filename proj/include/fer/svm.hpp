#pragma once

// Polynomial-kernel SVM: SMO dual solver with maximal-violating-pair working
// set selection, one-vs-one multi-class voting, and per-dimension feature
// standardization.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "fer/error.hpp"
#include "fer/io_util.hpp"
#include "fer/tensor_file.hpp"

namespace fer {

struct KernelParams {
  int degree = 3;
  double gamma = 0.0;  // <= 0 selects 1 / dim
  double coef0 = 1.0;
  double C = 1.0;

  void validate() const {
    if (degree < 1) throw Error(ErrorCode::ConfigError, "kernel degree must be >= 1");
    if (!(C > 0.0)) throw Error(ErrorCode::ConfigError, "C must be > 0");
  }

  KernelParams resolved(Eigen::Index dim) const {
    KernelParams p = *this;
    if (!(p.gamma > 0.0)) p.gamma = 1.0 / static_cast<double>(std::max<Eigen::Index>(dim, 1));
    return p;
  }
};

inline double int_pow(double base, int exponent) {
  double r = 1.0;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

inline double poly_kernel(std::span<const double> x, std::span<const double> y, const KernelParams& p) {
  if (x.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "kernel arguments differ in length");
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  return int_pow(p.gamma * dot + p.coef0, p.degree);
}

inline double poly_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const KernelParams& p) {
  return poly_kernel(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                     std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), p);
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
  Eigen::MatrixXd k = (p.gamma * (a * b.transpose())).array() + p.coef0;
  return k.unaryExpr([&](double v) { return int_pow(v, p.degree); });
}

struct BinarySvm {
  KernelParams params;            // resolved
  Eigen::MatrixXd support;        // rows are support vectors
  Eigen::VectorXd coef;           // alpha_i * y_i per support vector
  double bias = 0.0;
  std::vector<double> alpha;      // dual variables for every training row
  double kkt_gap = 0.0;           // max violating pair gap at termination
  std::size_t iterations = 0;

  double decision(const Eigen::VectorXd& x) const {
    double f = bias;
    for (Eigen::Index i = 0; i < support.rows(); ++i) f += coef(i) * poly_kernel(support.row(i).transpose(), x, params);
    return f;
  }
};

/// Solves the C-SVM dual for labels in {-1, +1}. Stops once the maximal KKT
/// violating pair gap is at most `tol`; ties in pair selection go to the
/// lowest index.
inline BinarySvm svm_train_binary(const Eigen::MatrixXd& X, std::span<const int> y, const KernelParams& params_in,
                                  double tol = 1e-3, std::size_t max_iter = 0) {
  const Eigen::Index n = X.rows();
  if (static_cast<std::size_t>(n) != y.size()) throw Error(ErrorCode::LengthMismatch, "labels and samples differ in count");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else throw Error(ErrorCode::ConfigError, "binary labels must be -1 or +1");
  }
  if (!has_pos || !has_neg) throw Error(ErrorCode::SingleClass, "binary SVM needs both classes");
  params_in.validate();
  const KernelParams p = params_in.resolved(X.cols());
  const double C = p.C;
  if (max_iter == 0) max_iter = std::max<std::size_t>(10'000'000, 100 * static_cast<std::size_t>(n));

  const Eigen::MatrixXd K = kernel_matrix(X, X, p);
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  std::vector<double> G(static_cast<std::size_t>(n), -1.0);
  auto Q = [&](Eigen::Index i, Eigen::Index j) { return y[i] * y[j] * K(i, j); };
  constexpr double kTau = 1e-12;

  auto in_up = [&](Eigen::Index t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0); };
  auto in_low = [&](Eigen::Index t) { return (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0.0); };

  BinarySvm model;
  model.params = p;
  std::size_t iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    Eigen::Index i = -1, j = -1;
    double g_max = -INFINITY, g_min = INFINITY;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      if (in_up(t) && v > g_max) { g_max = v; i = t; }
      if (in_low(t) && v < g_min) { g_min = v; j = t; }
    }
    gap = (i < 0 || j < 0) ? 0.0 : g_max - g_min;
    if (gap <= tol || iter >= max_iter) break;

    const double Ci = C, Cj = C;
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = -diff; }
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = Ci - diff; }
      } else {
        if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = Cj + diff; }
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = sum - Ci; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = sum - Cj; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_ai;
    const double dj = alpha[j] - old_aj;
    for (Eigen::Index t = 0; t < n; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
  }

  // rho: mean of y*G over free variables, else midpoint of the feasible range.
  double ub = INFINITY, lb = -INFINITY, sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yG = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
    } else {
      ++n_free;
      sum_free += yG;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) sv.push_back(t);
  }
  model.support.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  model.coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support.row(static_cast<Eigen::Index>(s)) = X.row(sv[s]);
    model.coef(static_cast<Eigen::Index>(s)) = alpha[sv[s]] * y[sv[s]];
  }
  model.bias = -rho;
  model.alpha = std::move(alpha);
  model.kkt_gap = gap;
  model.iterations = iter;
  return model;
}

/// Largest per-variable KKT violation of a trained binary model on its
/// training data: margin >= 1 at alpha = 0, margin <= 1 at alpha = C,
/// margin = 1 in between.
inline double kkt_residual(const BinarySvm& m, const Eigen::MatrixXd& X, std::span<const int> y) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double margin = y[i] * m.decision(X.row(i).transpose());
    const double a = m.alpha[static_cast<std::size_t>(i)];
    double r;
    if (a <= 0.0) r = std::max(0.0, 1.0 - margin);
    else if (a >= m.params.C) r = std::max(0.0, margin - 1.0);
    else r = std::abs(margin - 1.0);
    worst = std::max(worst, r);
  }
  return worst;
}

/// Zero-mean, unit-variance scaling with statistics from the training rows.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& rows) {
    Standardizer s;
    s.mean = rows.colwise().mean().transpose();
    s.scale.resize(rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      const double var = (rows.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(rows.rows());
      s.scale(c) = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const {
    return ((rows.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array()).matrix();
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return ((x - mean).array() * scale.array()).matrix(); }
};

struct SvmModel {
  std::vector<int> classes;  // ascending
  KernelParams params;       // resolved
  struct Pair {
    int positive;  // decision > 0 votes for this class
    int negative;
    BinarySvm svm;
  };
  std::vector<Pair> pairs;
};

/// Majority vote; ties go to the larger summed margin, then the lowest class.
inline int resolve_vote(std::span<const int> classes, std::span<const int> votes, std::span<const double> margins) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes.size(); ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && margins[c] > margins[best])) best = c;
  }
  return classes[best];
}

inline SvmModel svm_train_multiclass(const Eigen::MatrixXd& X, std::span<const int> labels, const KernelParams& params,
                                     double tol = 1e-3) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels and samples differ in count");
  }
  params.validate();
  SvmModel model;
  model.params = params.resolved(X.cols());
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw Error(ErrorCode::SingleClass, "multi-class SVM needs at least 2 classes");

  for (std::size_t a = 0; a < model.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
      std::vector<Eigen::Index> rows;
      std::vector<int> y;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == model.classes[a] || labels[i] == model.classes[b]) {
          rows.push_back(static_cast<Eigen::Index>(i));
          y.push_back(labels[i] == model.classes[a] ? 1 : -1);
        }
      }
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), X.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
      model.pairs.push_back({model.classes[a], model.classes[b], svm_train_binary(sub, y, model.params, tol)});
    }
  }
  return model;
}

inline int svm_predict(const SvmModel& model, const Eigen::VectorXd& x) {
  std::vector<int> votes(model.classes.size(), 0);
  std::vector<double> margins(model.classes.size(), 0.0);
  auto slot = [&](int label) {
    return static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), label) -
                                    model.classes.begin());
  };
  for (const auto& pair : model.pairs) {
    const double d = pair.svm.decision(x);
    const std::size_t pos = slot(pair.positive), neg = slot(pair.negative);
    ++votes[d > 0.0 ? pos : neg];
    margins[pos] += d;
    margins[neg] -= d;
  }
  return resolve_vote(model.classes, votes, margins);
}

inline std::string kernel_manifest(const SvmModel& model) {
  std::ostringstream out;
  out.precision(17);
  out << "kernel = polynomial\n"
      << "degree = " << model.params.degree << "\n"
      << "gamma = " << model.params.gamma << "\n"
      << "coef0 = " << model.params.coef0 << "\n"
      << "C = " << model.params.C << "\n"
      << "classes =";
  for (int c : model.classes) out << ' ' << c;
  out << "\npairs = " << model.pairs.size() << "\n";
  return out.str();
}

inline TensorFile svm_to_tensors(const SvmModel& model) {
  TensorFile file;
  std::vector<float> cls(model.classes.begin(), model.classes.end());
  file.push_back({"classes", FeatureTensor({cls.size()}, cls)});
  file.push_back({"kernel", FeatureTensor({4}, std::vector<float>{static_cast<float>(model.params.degree),
                                                                 static_cast<float>(model.params.gamma),
                                                                 static_cast<float>(model.params.coef0),
                                                                 static_cast<float>(model.params.C)})});
  for (const auto& pr : model.pairs) {
    const std::string prefix = "pair_" + std::to_string(pr.positive) + "_" + std::to_string(pr.negative);
    const auto& s = pr.svm;
    std::vector<float> sv(static_cast<std::size_t>(s.support.size()));
    for (Eigen::Index r = 0; r < s.support.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.support.cols(); ++c) {
        sv[static_cast<std::size_t>(r * s.support.cols() + c)] = static_cast<float>(s.support(r, c));
      }
    }
    std::vector<float> coef(s.coef.data(), s.coef.data() + s.coef.size());
    file.push_back({prefix + ".support", FeatureTensor({static_cast<std::size_t>(s.support.rows()),
                                                        static_cast<std::size_t>(s.support.cols())}, sv)});
    file.push_back({prefix + ".coef", FeatureTensor({coef.size()}, coef)});
    file.push_back({prefix + ".bias", FeatureTensor({1}, std::vector<float>{static_cast<float>(s.bias)})});
  }
  return file;
}

inline SvmModel svm_from_tensors(const TensorFile& file) {
  SvmModel m;
  for (float c : find_tensor(file, "classes").data) m.classes.push_back(static_cast<int>(c));
  const auto& k = find_tensor(file, "kernel").data;
  if (k.size() != 4) throw Error(ErrorCode::ShapeMismatch, "kernel entry must hold 4 values");
  m.params = {static_cast<int>(k[0]), k[1], k[2], k[3]};
  for (std::size_t a = 0; a < m.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < m.classes.size(); ++b) {
      const std::string prefix = "pair_" + std::to_string(m.classes[a]) + "_" + std::to_string(m.classes[b]);
      const auto& sv = find_tensor(file, prefix + ".support");
      const auto& coef = find_tensor(file, prefix + ".coef");
      BinarySvm s;
      s.params = m.params;
      const auto rows = static_cast<Eigen::Index>(sv.dims.at(0));
      const auto cols = static_cast<Eigen::Index>(sv.dims.at(1));
      s.support = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(sv.data.data(), rows, cols)
                      .cast<double>();
      s.coef = Eigen::Map<const Eigen::VectorXf>(coef.data.data(), static_cast<Eigen::Index>(coef.size())).cast<double>();
      s.bias = find_tensor(file, prefix + ".bias").data.at(0);
      m.pairs.push_back({m.classes[a], m.classes[b], std::move(s)});
    }
  }
  return m;
}

}  // namespace fer
