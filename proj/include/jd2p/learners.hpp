#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace jd2p {

struct TrainSpec {
  double c_slack = 1.0;
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;

  static TrainSpec svm_defaults();
  static TrainSpec mlp_defaults();
  void validate() const;
};

/// Binary soft-margin linear SVM. Class 0 lies on the side where w.x + b >= 0.
struct LinearSvm {
  Eigen::VectorXd w;
  double b = 0.0;

  int depth() const { return static_cast<int>(w.size()); }
  double decision(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct SvmFit {
  LinearSvm model;
  /// Primal objective of the retained iterate after every epoch (index 0 is
  /// the zero initialisation).
  std::vector<double> objective;
};

/// (1/2)||w||^2 + c_slack * sum_i hinge(y_i (w.x_i + b)), y = +1 for class 0.
double svm_objective(const LinearSvm& svm, const Eigen::MatrixXd& samples,
                     std::span<const int> labels, double c_slack);

/// Mini-batch Pegasos subgradient steps on w (step 1/(lambda t) with
/// lambda = 1/(c_slack n)), an exact line minimisation of the offset after
/// every epoch, and a pocket that keeps the best objective seen. Labels must
/// be 0/1 and both must occur.
SvmFit train_svm(const Eigen::MatrixXd& samples, std::span<const int> labels,
                 const TrainSpec& spec);

inline int svm_predict(const LinearSvm& svm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return svm.predict(x);
}

/// Fully connected network: rectifier on hidden layers, softmax output.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// He-style initialisation N(0, 2/fan_in), zero biases.
  static Mlp init(std::span<const int> layer_sizes, std::uint64_t seed);

  int input_dim() const;
  int num_classes() const;
  std::vector<int> layer_sizes() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Pre-softmax outputs for each row of `inputs` (n x C).
  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;
  /// Softmax posteriors for each row (n x C).
  Eigen::MatrixXd posteriors(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Mean cross-entropy over the rows; fills `grads` (same shapes as layers)
  /// when non-null.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                           std::vector<Layer>* grads) const;

 private:
  std::vector<Layer> layers_;
};

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

struct MlpFit {
  Mlp model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Trains `initial` in place-copy with seeded mini-batch SGD (with momentum)
/// on softmax cross-entropy.
MlpFit train_mlp(Mlp initial, const Eigen::MatrixXd& samples, std::span<const int> labels,
                 const TrainSpec& spec);

/// Convenience: initialises input -> hidden... -> num_classes and trains.
MlpFit train_mlp(const Eigen::MatrixXd& samples, std::span<const int> labels, int num_classes,
                 std::span<const int> hidden, const TrainSpec& spec);

inline Eigen::VectorXd mlp_posterior(const Mlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return mlp.posterior(x);
}

/// Default hidden widths for the six-layer network.
std::vector<int> default_hidden_widths();

// Versioned text serialisation; values are written as hex floats so a
// round-trip is bit-exact.
void save(std::ostream& out, const LinearSvm& svm);
void save(std::ostream& out, const Mlp& mlp);
LinearSvm load_svm(std::istream& in);
Mlp load_mlp(std::istream& in);

}  // namespace jd2p
