#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace jd2p {

/// A labeled sample as an importance-ordered feature vector.
struct EmbeddedSample {
  std::size_t id = 0;
  int label = 0;
  Eigen::VectorXd features;
};

/// Embedded samples stored row-wise (M x F) with their class labels.
struct EmbeddedDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  EmbeddedSample sample(std::size_t i) const {
    return {i, labels[i], features.row(static_cast<Eigen::Index>(i)).transpose()};
  }
  /// Throws if shapes disagree or a label falls outside [0, num_classes).
  void validate() const;
};

/// PCA embedding with features ordered by importance (eigenvalue, descending).
///
/// Components are stored row-wise (F x D). Each row is unit norm and its
/// largest-magnitude entry is positive, so fits are reproducible across runs.
/// Immutable after fit_pca; safe to share between threads.
class EmbeddingModel {
 public:
  EmbeddingModel(Eigen::VectorXd mean, Eigen::MatrixXd components,
                 Eigen::VectorXd eigenvalues);

  int raw_dim() const { return static_cast<int>(mean_.size()); }
  int feature_dim() const { return static_cast<int>(components_.rows()); }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& components() const { return components_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  /// Projects a raw D-vector onto the components: components * (raw - mean).
  Eigen::VectorXd embed(const Eigen::Ref<const Eigen::VectorXd>& raw) const;

  /// Row-wise embed of an n x D matrix; returns n x F.
  Eigen::MatrixXd embed_rows(const Eigen::MatrixXd& raw) const;

  /// mean + sum_{i<depth} features[i] * components[i]. Features past `depth`
  /// are treated as zero; `features` may be shorter than F as long as it
  /// holds at least `depth` entries.
  Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& features,
                              int depth) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;
  Eigen::VectorXd eigenvalues_;
};

/// Fits the top-`num_features` principal components of `raw` (one sample per
/// row). Covariance uses the n-1 divisor and is diagonalised with Eigen's
/// SelfAdjointEigenSolver (tridiagonal QR).
EmbeddingModel fit_pca(const Eigen::MatrixXd& raw, int num_features);

}  // namespace jd2p
