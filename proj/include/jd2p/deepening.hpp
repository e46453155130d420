#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "jd2p/embedding.hpp"
#include "jd2p/learners.hpp"
#include "jd2p/stats.hpp"

namespace jd2p {

enum class MocKind { SvmDistance, NegEntropy, PosteriorGap };

std::string to_string(MocKind kind);
MocKind parse_moc_kind(const std::string& name);

/// Strategy 1 trains on the current candidate set only; strategy 2 trains on
/// everything received so far (zero-padded for the SVM, reconstructed for the
/// network).
enum class TrainingStrategy { CandidatesOnly = 1, AllReceived = 2 };

using DepthClassifier = std::variant<LinearSvm, Mlp>;

/// Absolute distance to the hyperplane. Throws unless kind is SvmDistance.
double moc(MocKind kind, const LinearSvm& svm, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Posterior-based clarity; `x` is the reconstructed D-vector.
double moc(MocKind kind, const Mlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& x);
double moc(MocKind kind, const DepthClassifier& classifier,
           const Eigen::Ref<const Eigen::VectorXd>& x);
/// NegEntropy: sum p log p (natural log, 0 log 0 = 0). PosteriorGap: top-1
/// minus top-2 probability.
double moc_from_posterior(MocKind kind, const Eigen::Ref<const Eigen::VectorXd>& posterior);

/// {x : (x - center)^T shape (x - center) <= radius^2}, shape SPD.
class Ellipsoid {
 public:
  Ellipsoid(Eigen::VectorXd center, const Eigen::MatrixXd& shape, double radius);

  const Eigen::VectorXd& center() const { return center_; }
  double radius() const { return radius_; }
  int dim() const { return static_cast<int>(center_.size()); }
  /// Largest semi-axis length.
  double extent() const;

  double level(const Eigen::Ref<const Eigen::VectorXd>& x) const;  // quadratic form
  /// Euclidean projection; the single multiplier is found by bisection.
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& y) const;

 private:
  Eigen::VectorXd center_;
  Eigen::MatrixXd basis_;      // eigenvectors of shape
  Eigen::VectorXd eigen_;      // eigenvalues of shape
  double radius_;
};

struct ProjectionResult {
  Eigen::VectorXd point;
  bool feasible = false;
  int iterations = 0;
};

/// Dykstra's alternating projections onto a ∩ b. `feasible` is false when the
/// limit stays farther than feasibility_tol * scale from `a`.
ProjectionResult dykstra_project(const Ellipsoid& a, const Ellipsoid& b,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 double feasibility_tol = 1e-8, int max_iterations = 20000);

struct SvmThresholdResult {
  double threshold = 0.0;       // beta-bar
  double delta_bar = 0.0;       // Mahalanobis radius
  bool empty_intersection = false;
  Eigen::VectorXd argmax;       // maximiser (empty when the intersection is empty)
};

/// Largest hyperplane distance over the intersection of the two truncated
/// class ellipsoids, by projected gradient ascent (both signs) with Dykstra
/// projections. Returns 0 when the ellipsoids do not intersect.
SvmThresholdResult svm_threshold_detail(const ClassGaussian& g0, const ClassGaussian& g1,
                                        const LinearSvm& svm, double p_th,
                                        double tolerance = 1e-6);
double svm_threshold(const ClassGaussian& g0, const ClassGaussian& g1, const LinearSvm& svm,
                     double p_th);

inline constexpr double kEmptyThreshold = -std::numeric_limits<double>::infinity();

/// sup{beta : z(beta) >= z_th} over the observed MoC values, where z(beta) is
/// the fraction of samples that are mispredicted with MoC >= beta. Returns
/// kEmptyThreshold when no observed value qualifies.
double dnn_threshold(std::span<const double> moc_values, std::span<const bool> correct,
                     double z_th);

struct SettledSample {
  std::size_t index = 0;
  int prediction = 0;
  int depth = 0;
};

/// Candidate set S^(k) of round `round`, with the thresholds of completed
/// rounds, the members' MoC values once evaluated, and every sample settled
/// so far.
struct AcsState {
  int round = 1;
  std::vector<std::size_t> members;
  std::vector<double> thresholds;
  std::vector<double> member_moc;
  std::vector<SettledSample> settled;

  static AcsState initial(std::size_t num_samples);
};

/// S^(k+1) = {m in S^(k) : moc_m <= threshold}; the rest settle with their
/// round-k prediction.
AcsState partition(const AcsState& state, std::span<const double> moc_values, double threshold,
                   std::span<const int> predictions);

struct DepthStage {
  DepthClassifier classifier;
  double threshold = std::numeric_limits<double>::infinity();
};

struct Inference {
  int label = 0;
  int depth = 0;
};

/// Cascade of depth-1..K classifiers; a query stops at the first depth where
/// its MoC exceeds that depth's threshold. Queries still ambiguous at the last
/// depth take the last classifier's prediction.
class HierarchicalClassifier {
 public:
  HierarchicalClassifier(MocKind kind, std::shared_ptr<const EmbeddingModel> embedding);

  void add_stage(DepthClassifier classifier, double threshold);
  void set_threshold(int depth, double threshold);

  MocKind kind() const { return kind_; }
  int depth() const { return static_cast<int>(stages_.size()); }
  const std::vector<DepthStage>& stages() const { return stages_; }

  Inference infer(const Eigen::Ref<const Eigen::VectorXd>& features) const;
  /// Same as infer but using only the first `max_depth` stages.
  Inference infer(const Eigen::Ref<const Eigen::VectorXd>& features, int max_depth) const;

 private:
  MocKind kind_;
  std::shared_ptr<const EmbeddingModel> embedding_;
  std::vector<DepthStage> stages_;
};

struct DeepeningParams {
  MocKind moc = MocKind::SvmDistance;
  double p_th = 0.98;
  double z_th = 0.03;
  TrainingStrategy strategy = TrainingStrategy::AllReceived;
  TrainSpec train = TrainSpec::svm_defaults();
  std::vector<int> hidden = default_hidden_widths();

  bool uses_svm() const { return moc == MocKind::SvmDistance; }
};

struct RoundLog {
  int round = 0;
  std::size_t acs_size = 0;
  std::size_t training_size = 0;
  double threshold = 0.0;
  std::size_t next_size = 0;
  double train_accuracy = 0.0;
  std::optional<double> heldout_accuracy;
  std::vector<double> epoch_loss;
  std::string note;
};

/// Round-by-round data deepening over an embedded training set. Each round is
/// split into train_round() (fit the k-depth classifier) and close_round()
/// (threshold and partition) so a caller can act in between.
class DeepeningSession {
 public:
  DeepeningSession(const EmbeddedDataset& train, int rounds, DeepeningParams params,
                   std::shared_ptr<const EmbeddingModel> embedding = nullptr,
                   const EmbeddedDataset* heldout = nullptr);

  bool done() const { return done_; }
  int round() const { return state_.round; }
  int rounds() const { return rounds_; }
  const AcsState& state() const { return state_; }
  /// Candidate-set snapshots of every closed round, before partitioning.
  const std::vector<AcsState>& history() const { return history_; }

  void train_round();
  const AcsState& close_round();

  const HierarchicalClassifier& classifier() const { return hierarchy_; }
  const std::vector<RoundLog>& logs() const { return logs_; }
  /// |S^(1)|, ..., |S^(K)|; rounds skipped after termination contribute 0.
  std::vector<std::size_t> chain_sizes() const;
  /// Final prediction for every training sample (settled or last-round).
  std::vector<int> training_predictions() const;

 private:
  Eigen::MatrixXd depth_inputs(std::span<const std::size_t> rows, int depth) const;
  Eigen::MatrixXd training_inputs(int depth, std::vector<int>& labels) const;
  void evaluate_heldout(RoundLog& log);

  const EmbeddedDataset& train_;
  const EmbeddedDataset* heldout_;
  int rounds_;
  DeepeningParams params_;
  std::shared_ptr<const EmbeddingModel> embedding_;
  HierarchicalClassifier hierarchy_;
  AcsState state_;
  std::vector<int> depth_reached_;
  std::vector<int> latest_prediction_;
  std::vector<AcsState> history_;
  std::vector<std::size_t> chain_;
  std::vector<RoundLog> logs_;
  std::optional<DepthClassifier> pending_;
  bool done_ = false;

  // Held-out cascade bookkeeping.
  std::vector<bool> heldout_settled_;
  std::vector<int> heldout_prediction_;
};

struct DeepeningResult {
  HierarchicalClassifier classifier;
  std::vector<std::size_t> chain_sizes;
  std::vector<AcsState> states;
  std::vector<RoundLog> logs;
};

DeepeningResult run_deepening(const EmbeddedDataset& train, int rounds,
                              const DeepeningParams& params,
                              std::shared_ptr<const EmbeddingModel> embedding = nullptr,
                              const EmbeddedDataset* heldout = nullptr);

}  // namespace jd2p
