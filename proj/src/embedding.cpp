#include "jd2p/embedding.hpp"

#include <stdexcept>
#include <string>

namespace jd2p {

void EmbeddedDataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw std::invalid_argument("dataset: feature rows and labels differ in count");
  }
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

EmbeddingModel::EmbeddingModel(Eigen::VectorXd mean, Eigen::MatrixXd components,
                               Eigen::VectorXd eigenvalues)
    : mean_(std::move(mean)),
      components_(std::move(components)),
      eigenvalues_(std::move(eigenvalues)) {
  if (components_.cols() != mean_.size() || components_.rows() != eigenvalues_.size()) {
    throw std::invalid_argument("embedding: inconsistent model shapes");
  }
}

Eigen::VectorXd EmbeddingModel::embed(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  if (raw.size() != mean_.size()) {
    throw std::invalid_argument("embed: expected raw length " + std::to_string(mean_.size()) +
                                ", got " + std::to_string(raw.size()));
  }
  return components_ * (raw - mean_);
}

Eigen::MatrixXd EmbeddingModel::embed_rows(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != mean_.size()) {
    throw std::invalid_argument("embed: raw column count does not match model");
  }
  return (raw.rowwise() - mean_.transpose()) * components_.transpose();
}

Eigen::VectorXd EmbeddingModel::reconstruct(const Eigen::Ref<const Eigen::VectorXd>& features,
                                            int depth) const {
  if (depth < 1 || depth > feature_dim()) {
    throw std::out_of_range("reconstruct: depth " + std::to_string(depth) +
                            " outside [1, " + std::to_string(feature_dim()) + "]");
  }
  if (features.size() < depth) {
    throw std::invalid_argument("reconstruct: fewer features than requested depth");
  }
  return mean_ + components_.topRows(depth).transpose() * features.head(depth);
}

EmbeddingModel fit_pca(const Eigen::MatrixXd& raw, int num_features) {
  const Eigen::Index n = raw.rows();
  const Eigen::Index d = raw.cols();
  if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 samples");
  if (num_features < 1 || num_features >= d) {
    throw std::invalid_argument("fit_pca: need 1 <= F < D");
  }

  Eigen::VectorXd mean = raw.colwise().mean().transpose();
  Eigen::MatrixXd centered = raw.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);

  if (cov.trace() <= 0.0) throw std::invalid_argument("fit_pca: zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("fit_pca: eigensolver did not converge");
  }

  // Eigen returns ascending eigenvalues.
  Eigen::MatrixXd components(num_features, d);
  Eigen::VectorXd eigenvalues(num_features);
  for (int i = 0; i < num_features; ++i) {
    const Eigen::Index src = d - 1 - i;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index argmax = 0;
    v.cwiseAbs().maxCoeff(&argmax);
    if (v(argmax) < 0) v = -v;
    components.row(i) = v.transpose();
    eigenvalues(i) = std::max(0.0, solver.eigenvalues()(src));
  }
  return EmbeddingModel(std::move(mean), std::move(components), std::move(eigenvalues));
}

}  // namespace jd2p
