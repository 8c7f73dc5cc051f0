#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "fer/error.hpp"
#include "fer/tensor_file.hpp"

namespace fer {

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;             // d x k, orthonormal columns
  Eigen::VectorXd component_ratios;  // explained-variance ratio of every computed component, descending
  double explained_ratio = 0.0;      // cumulative ratio of the k retained components

  Eigen::Index dims() const { return mean.size(); }
  Eigen::Index components() const { return basis.cols(); }
};

/// Mean-centered PCA keeping the fewest leading components whose cumulative
/// explained variance reaches `target_variance`. Rows of `samples` are
/// observations. Uses the n x n Gram matrix when there are fewer samples
/// than dimensions.
inline PcaModel pca_fit(const Eigen::MatrixXd& samples, double target_variance = 0.99) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) throw Error(ErrorCode::DegenerateData, "PCA needs at least 2 samples");
  if (!(target_variance > 0.0 && target_variance <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "target variance must lie in (0, 1]");
  }
  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
  const double total = centered.squaredNorm();
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateData, "total variance is zero");

  const bool dual = n < d;
  const Eigen::MatrixXd gram = dual ? Eigen::MatrixXd(centered * centered.transpose())
                                    : Eigen::MatrixXd(centered.transpose() * centered);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::DegenerateData, "eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::Index m = values.size();
  const double largest = values(m - 1);

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    if (values(i) > largest * 1e-12) kept.push_back(i);
  }
  model.component_ratios.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    model.component_ratios(static_cast<Eigen::Index>(j)) = values(kept[j]) / total;
  }

  Eigen::Index k = 0;
  double cumulative = 0.0;
  while (k < model.component_ratios.size()) {
    cumulative += model.component_ratios(k++);
    if (cumulative >= target_variance - 1e-12) break;
  }
  model.explained_ratio = cumulative;
  model.basis.resize(d, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index idx = kept[static_cast<std::size_t>(j)];
    if (dual) {
      model.basis.col(j) = centered.transpose() * solver.eigenvectors().col(idx) / std::sqrt(values(idx));
      model.basis.col(j).normalize();
    } else {
      model.basis.col(j) = solver.eigenvectors().col(idx);
    }
  }
  return model;
}

inline Eigen::VectorXd pca_transform(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "PCA input has " + std::to_string(x.size()) + " dims, model expects " +
                                              std::to_string(model.mean.size()));
  }
  return model.basis.transpose() * (x - model.mean);
}

inline Eigen::MatrixXd pca_transform_rows(const PcaModel& model, const Eigen::MatrixXd& rows) {
  if (rows.cols() != model.mean.size()) throw Error(ErrorCode::ShapeMismatch, "PCA input width mismatch");
  return (rows.rowwise() - model.mean.transpose()) * model.basis;
}

inline Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::VectorXd& projected) {
  return model.mean + model.basis * projected;
}

inline TensorFile pca_to_tensors(const PcaModel& model) {
  auto to_floats = [](const auto& m) {
    std::vector<float> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
    return v;
  };
  // basis stored k x d, row-major (one component per row)
  const Eigen::MatrixXd rows = model.basis.transpose();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = rows;
  const auto d = static_cast<std::size_t>(model.dims());
  const auto k = static_cast<std::size_t>(model.components());
  return {
      {"mean", FeatureTensor({d}, to_floats(model.mean))},
      {"basis", FeatureTensor({k, d}, to_floats(rm))},
      {"component_ratios", FeatureTensor({static_cast<std::size_t>(model.component_ratios.size())},
                                         to_floats(model.component_ratios))},
      {"explained_ratio", FeatureTensor({1}, std::vector<float>{static_cast<float>(model.explained_ratio)})},
  };
}

inline PcaModel pca_from_tensors(const TensorFile& file) {
  const auto& mean = find_tensor(file, "mean");
  const auto& basis = find_tensor(file, "basis");
  const auto& ratios = find_tensor(file, "component_ratios");
  const auto& explained = find_tensor(file, "explained_ratio");
  if (mean.dims.size() != 1 || basis.dims.size() != 2 || basis.dims[1] != mean.dims[0]) {
    throw Error(ErrorCode::ShapeMismatch, "PCA tensors have inconsistent shapes");
  }
  PcaModel m;
  const auto d = static_cast<Eigen::Index>(mean.dims[0]);
  const auto k = static_cast<Eigen::Index>(basis.dims[0]);
  m.mean = Eigen::Map<const Eigen::VectorXf>(mean.data.data(), d).cast<double>();
  m.basis = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(basis.data.data(), k, d)
                .transpose()
                .cast<double>();
  m.component_ratios =
      Eigen::Map<const Eigen::VectorXf>(ratios.data.data(), static_cast<Eigen::Index>(ratios.size())).cast<double>();
  m.explained_ratio = explained.data.at(0);
  return m;
}

}  // namespace fer
