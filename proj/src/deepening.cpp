#include "jd2p/deepening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace jd2p {

std::string to_string(MocKind kind) {
  switch (kind) {
    case MocKind::SvmDistance: return "svm-distance";
    case MocKind::NegEntropy: return "neg-entropy";
    case MocKind::PosteriorGap: return "posterior-gap";
  }
  return "unknown";
}

MocKind parse_moc_kind(const std::string& name) {
  if (name == "svm-distance") return MocKind::SvmDistance;
  if (name == "neg-entropy") return MocKind::NegEntropy;
  if (name == "posterior-gap") return MocKind::PosteriorGap;
  throw std::invalid_argument("unknown MoC kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// Metrics of clarity

double moc(MocKind kind, const LinearSvm& svm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (kind != MocKind::SvmDistance) {
    throw std::invalid_argument("moc: " + to_string(kind) + " is not defined for a linear SVM");
  }
  return std::abs(svm.decision(x)) / svm.w.norm();
}

double moc_from_posterior(MocKind kind, const Eigen::Ref<const Eigen::VectorXd>& posterior) {
  switch (kind) {
    case MocKind::NegEntropy: {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        const double p = posterior(i);
        if (p > 0.0) sum += p * std::log(p);
      }
      return sum;
    }
    case MocKind::PosteriorGap: {
      if (posterior.size() < 2) throw std::invalid_argument("moc: posterior gap needs >= 2 classes");
      double first = -1.0, second = -1.0;
      for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        const double p = posterior(i);
        if (p > first) {
          second = first;
          first = p;
        } else if (p > second) {
          second = p;
        }
      }
      return first - second;
    }
    case MocKind::SvmDistance: break;
  }
  throw std::invalid_argument("moc: svm-distance is not defined for a posterior");
}

double moc(MocKind kind, const Mlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (kind == MocKind::SvmDistance) {
    throw std::invalid_argument("moc: svm-distance is not defined for a network classifier");
  }
  return moc_from_posterior(kind, mlp.posterior(x));
}

double moc(MocKind kind, const DepthClassifier& classifier,
           const Eigen::Ref<const Eigen::VectorXd>& x) {
  return std::visit([&](const auto& c) { return moc(kind, c, x); }, classifier);
}

// ---------------------------------------------------------------------------
// Ellipsoid geometry

Ellipsoid::Ellipsoid(Eigen::VectorXd center, const Eigen::MatrixXd& shape, double radius)
    : center_(std::move(center)), radius_(radius) {
  if (shape.rows() != center_.size() || shape.cols() != center_.size()) {
    throw std::invalid_argument("ellipsoid: shape/center mismatch");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("ellipsoid: radius must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(shape);
  basis_ = solver.eigenvectors();
  eigen_ = solver.eigenvalues();
  if (!(eigen_.minCoeff() > 0.0)) throw std::invalid_argument("ellipsoid: shape must be SPD");
}

double Ellipsoid::extent() const { return radius_ / std::sqrt(eigen_.minCoeff()); }

double Ellipsoid::level(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd z = basis_.transpose() * (x - center_);
  return (eigen_.array() * z.array().square()).sum();
}

Eigen::VectorXd Ellipsoid::project(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  const Eigen::VectorXd z = basis_.transpose() * (y - center_);
  const Eigen::ArrayXd w = eigen_.array() * z.array().square();
  const double r2 = radius_ * radius_;
  if (w.sum() <= r2) return y;

  // g(mu) = sum eig_i z_i^2 / (1 + mu eig_i)^2 decreases from g(0) > r^2 to 0.
  auto g = [&](double mu) { return (w / (1.0 + mu * eigen_.array()).square()).sum(); };
  double lo = 0.0;
  double hi = 1.0 / eigen_.maxCoeff();
  while (g(hi) > r2) {
    lo = hi;
    hi *= 2.0;
  }
  // Newton from the left is monotone for this convex decreasing function;
  // the bracket keeps it safe.
  double mu = lo;
  for (int i = 0; i < 200; ++i) {
    const Eigen::ArrayXd denom = 1.0 + mu * eigen_.array();
    const double gv = (w / denom.square()).sum() - r2;
    if (gv > 0.0) lo = mu; else hi = mu;
    const double dg = (-2.0 * w * eigen_.array() / denom.cube()).sum();
    double next = mu - gv / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - mu) <= 1e-15 * std::max(1.0, mu) || hi - lo <= 1e-15 * hi) {
      mu = next;
      break;
    }
    mu = next;
  }
  // Finish on the feasible side. Newton from the left never moves `hi`, so
  // step up from mu rather than jumping there.
  for (double step = 1e-16 * std::max(1.0, mu); g(mu) > r2; step *= 2.0) mu += step;
  const Eigen::VectorXd shrunk = (z.array() / (1.0 + mu * eigen_.array())).matrix();
  return center_ + basis_ * shrunk;
}

ProjectionResult dykstra_project(const Ellipsoid& a, const Ellipsoid& b,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 double feasibility_tol, int max_iterations) {
  const double scale = std::max({a.extent(), b.extent(), 1e-300});
  Eigen::VectorXd x = y;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(y.size());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(y.size());
  ProjectionResult result;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd u = a.project(x + p);
    p = x + p - u;
    const Eigen::VectorXd next = b.project(u + q);
    q = u + q - next;
    const double change = (next - x).norm();
    x = next;
    result.iterations = it;
    if (change <= 1e-12 * scale) break;
  }
  result.point = x;
  result.feasible = (x - a.project(x)).norm() <= feasibility_tol * scale;
  return result;
}

// ---------------------------------------------------------------------------
// Thresholds

SvmThresholdResult svm_threshold_detail(const ClassGaussian& g0, const ClassGaussian& g1,
                                        const LinearSvm& svm, double p_th, double tolerance) {
  const int k = svm.depth();
  if (g0.dim() != k || g1.dim() != k) {
    throw std::invalid_argument("svm_threshold: Gaussian depth differs from the classifier");
  }
  SvmThresholdResult result;
  result.delta_bar = std::sqrt(chi2_quantile(p_th, k));
  const Ellipsoid e0(g0.mu, g0.sigma_inverse, result.delta_bar);
  const Ellipsoid e1(g1.mu, g1.sigma_inverse, result.delta_bar);
  const double scale = std::max(e0.extent(), e1.extent());

  const ProjectionResult start = dykstra_project(e0, e1, 0.5 * (g0.mu + g1.mu));
  if (!start.feasible) {
    result.empty_intersection = true;
    result.threshold = 0.0;
    return result;
  }

  const double wnorm = svm.w.norm();
  const double step = 10.0 * scale;
  result.threshold = -std::numeric_limits<double>::infinity();
  for (double sign : {1.0, -1.0}) {
    const Eigen::VectorXd dir = (sign / wnorm) * svm.w;
    Eigen::VectorXd x = start.point;
    double value = sign * svm.decision(x) / wnorm;
    for (int it = 0; it < 500; ++it) {
      const ProjectionResult next = dykstra_project(e0, e1, x + step * dir);
      const double next_value = sign * svm.decision(next.point) / wnorm;
      const double gain = next_value - value;
      x = next.point;
      value = next_value;
      // Stop on objective progress; Dykstra's own residual sets a floor on
      // how still the iterate can get.
      if (gain <= tolerance * scale) break;
    }
    if (value > result.threshold) {
      result.threshold = value;
      result.argmax = x;
    }
  }
  // The intersection may lie entirely on one side of the hyperplane; the
  // larger signed maximum is then the maximal absolute distance.
  result.threshold = std::max(result.threshold, 0.0);
  return result;
}

double svm_threshold(const ClassGaussian& g0, const ClassGaussian& g1, const LinearSvm& svm,
                     double p_th) {
  return svm_threshold_detail(g0, g1, svm, p_th).threshold;
}

double dnn_threshold(std::span<const double> moc_values, std::span<const bool> correct,
                     double z_th) {
  if (moc_values.empty()) throw std::invalid_argument("dnn_threshold: empty input");
  if (moc_values.size() != correct.size()) {
    throw std::invalid_argument("dnn_threshold: input lengths differ");
  }
  const std::size_t n = moc_values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return moc_values[a] > moc_values[b]; });

  // Descending sweep; z(v) counts errors with moc >= v, so ties are grouped.
  const double needed = z_th * static_cast<double>(n);
  std::size_t errors = 0;
  std::size_t i = 0;
  while (i < n) {
    const double v = moc_values[order[i]];
    while (i < n && moc_values[order[i]] == v) {
      errors += correct[order[i]] ? 0 : 1;
      ++i;
    }
    if (static_cast<double>(errors) >= needed - 1e-9) return v;
  }
  return kEmptyThreshold;
}

// ---------------------------------------------------------------------------
// Candidate sets

AcsState AcsState::initial(std::size_t num_samples) {
  AcsState s;
  s.round = 1;
  s.members.resize(num_samples);
  std::iota(s.members.begin(), s.members.end(), std::size_t{0});
  return s;
}

AcsState partition(const AcsState& state, std::span<const double> moc_values, double threshold,
                   std::span<const int> predictions) {
  if (moc_values.size() != state.members.size() || predictions.size() != state.members.size()) {
    throw std::invalid_argument("partition: MoC values must cover the candidate set exactly");
  }
  AcsState next;
  next.round = state.round + 1;
  next.thresholds = state.thresholds;
  next.thresholds.push_back(threshold);
  next.settled = state.settled;
  for (std::size_t i = 0; i < state.members.size(); ++i) {
    if (moc_values[i] <= threshold) {
      next.members.push_back(state.members[i]);
    } else {
      next.settled.push_back({state.members[i], predictions[i], state.round});
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Hierarchical inference

HierarchicalClassifier::HierarchicalClassifier(MocKind kind,
                                               std::shared_ptr<const EmbeddingModel> embedding)
    : kind_(kind), embedding_(std::move(embedding)) {
  if (kind != MocKind::SvmDistance && !embedding_) {
    throw std::invalid_argument("hierarchical classifier: network stages need the embedding");
  }
}

void HierarchicalClassifier::add_stage(DepthClassifier classifier, double threshold) {
  const bool is_svm = std::holds_alternative<LinearSvm>(classifier);
  if (is_svm != (kind_ == MocKind::SvmDistance)) {
    throw std::invalid_argument("hierarchical classifier: stage type does not match MoC kind");
  }
  if (is_svm && std::get<LinearSvm>(classifier).depth() != depth() + 1) {
    throw std::invalid_argument("hierarchical classifier: depths must increase by one");
  }
  stages_.push_back({std::move(classifier), threshold});
}

void HierarchicalClassifier::set_threshold(int depth, double threshold) {
  stages_.at(static_cast<std::size_t>(depth - 1)).threshold = threshold;
}

Inference HierarchicalClassifier::infer(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  return infer(features, depth());
}

Inference HierarchicalClassifier::infer(const Eigen::Ref<const Eigen::VectorXd>& features,
                                        int max_depth) const {
  if (stages_.empty()) throw std::logic_error("hierarchical classifier: no stages");
  max_depth = std::min(max_depth, depth());
  if (features.size() < max_depth) {
    throw std::invalid_argument("infer: query has fewer features than the cascade depth");
  }
  Inference out;
  for (int k = 1; k <= max_depth; ++k) {
    const auto& stage = stages_[static_cast<std::size_t>(k - 1)];
    double clarity = 0.0;
    if (const auto* svm = std::get_if<LinearSvm>(&stage.classifier)) {
      const auto x = features.head(k);
      clarity = moc(kind_, *svm, x);
      out.label = svm->predict(x);
    } else {
      const auto& mlp = std::get<Mlp>(stage.classifier);
      const Eigen::VectorXd post = mlp.posterior(embedding_->reconstruct(features, k));
      clarity = moc_from_posterior(kind_, post);
      Eigen::Index arg = 0;
      post.maxCoeff(&arg);
      out.label = static_cast<int>(arg);
    }
    out.depth = k;
    if (clarity > stage.threshold) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deepening loop

DeepeningSession::DeepeningSession(const EmbeddedDataset& train, int rounds,
                                   DeepeningParams params,
                                   std::shared_ptr<const EmbeddingModel> embedding,
                                   const EmbeddedDataset* heldout)
    : train_(train),
      heldout_(heldout),
      rounds_(rounds),
      params_(std::move(params)),
      embedding_(std::move(embedding)),
      hierarchy_(params_.moc, embedding_),
      state_(AcsState::initial(train.size())),
      depth_reached_(train.size(), 0),
      latest_prediction_(train.size(), -1) {
  train_.validate();
  if (train_.size() == 0) throw std::invalid_argument("deepening: empty training set");
  if (rounds_ < 1 || rounds_ > train_.feature_dim()) {
    throw std::invalid_argument("deepening: need 1 <= K <= F");
  }
  if (params_.uses_svm() && train_.num_classes != 2) {
    throw std::invalid_argument("deepening: the SVM path is binary only");
  }
  if (!params_.uses_svm() && embedding_ && embedding_->feature_dim() < rounds_) {
    throw std::invalid_argument("deepening: embedding has fewer features than rounds");
  }
  if (heldout_) {
    heldout_->validate();
    heldout_settled_.assign(heldout_->size(), false);
    heldout_prediction_.assign(heldout_->size(), -1);
  }
}

Eigen::MatrixXd DeepeningSession::depth_inputs(std::span<const std::size_t> rows, int depth) const {
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(rows.size()), depth);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) =
        train_.features.row(static_cast<Eigen::Index>(rows[i])).head(depth);
  }
  if (params_.uses_svm()) return feats;
  Eigen::MatrixXd raw = feats * embedding_->components().topRows(depth);
  raw.rowwise() += embedding_->mean().transpose();
  return raw;
}

Eigen::MatrixXd DeepeningSession::training_inputs(int depth, std::vector<int>& labels) const {
  labels.clear();
  if (params_.strategy == TrainingStrategy::CandidatesOnly) {
    for (std::size_t m : state_.members) labels.push_back(train_.labels[m]);
    return depth_inputs(state_.members, depth);
  }
  // Everything received so far, zero-padded past each sample's own depth.
  const auto n = static_cast<Eigen::Index>(train_.size());
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(n, depth);
  for (Eigen::Index m = 0; m < n; ++m) {
    const int d = std::min(depth, depth_reached_[static_cast<std::size_t>(m)]);
    feats.row(m).head(d) = train_.features.row(m).head(d);
  }
  labels = train_.labels;
  if (params_.uses_svm()) return feats;
  Eigen::MatrixXd raw = feats * embedding_->components().topRows(depth);
  raw.rowwise() += embedding_->mean().transpose();
  return raw;
}

void DeepeningSession::train_round() {
  if (done_) throw std::logic_error("deepening: session already finished");
  if (pending_) throw std::logic_error("deepening: round already trained");
  const int k = state_.round;
  for (std::size_t m : state_.members) depth_reached_[m] = k;

  RoundLog log;
  log.round = k;
  log.acs_size = state_.members.size();

  std::vector<int> labels;
  const Eigen::MatrixXd inputs = training_inputs(k, labels);
  log.training_size = labels.size();
  TrainSpec spec = params_.train;
  spec.seed = params_.train.seed + static_cast<std::uint64_t>(k);

  std::size_t correct = 0;
  if (params_.uses_svm()) {
    SvmFit fit = train_svm(inputs, labels, spec);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      correct += fit.model.predict(inputs.row(i).transpose()) == labels[static_cast<std::size_t>(i)];
    }
    pending_ = std::move(fit.model);
  } else {
    if (!embedding_) throw std::invalid_argument("deepening: network path needs the embedding");
    MlpFit fit;
    if (hierarchy_.depth() > 0) {
      // Warm start from the previous depth's network.
      fit = train_mlp(std::get<Mlp>(hierarchy_.stages().back().classifier), inputs, labels, spec);
    } else {
      fit = train_mlp(inputs, labels, train_.num_classes, params_.hidden, spec);
    }
    const Eigen::MatrixXd logits = fit.model.logits(inputs);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      correct += static_cast<int>(arg) == labels[static_cast<std::size_t>(i)];
    }
    log.epoch_loss = std::move(fit.epoch_loss);
    pending_ = std::move(fit.model);
  }
  log.train_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  logs_.push_back(std::move(log));
}

const AcsState& DeepeningSession::close_round() {
  if (!pending_) throw std::logic_error("deepening: close_round before train_round");
  const int k = state_.round;
  const std::size_t count = state_.members.size();
  std::vector<double> clarity(count);
  std::vector<int> predictions(count);
  RoundLog& log = logs_.back();

  const Eigen::MatrixXd inputs = depth_inputs(state_.members, k);
  double threshold = 0.0;
  if (const auto* svm = std::get_if<LinearSvm>(&*pending_)) {
    std::vector<Eigen::Index> rows0, rows1;
    for (std::size_t i = 0; i < count; ++i) {
      const auto x = inputs.row(static_cast<Eigen::Index>(i)).transpose();
      clarity[i] = moc(params_.moc, *svm, x);
      predictions[i] = svm->predict(x);
      (train_.labels[state_.members[i]] == 0 ? rows0 : rows1).push_back(static_cast<Eigen::Index>(i));
    }
    if (rows0.size() < 2 || rows1.size() < 2) {
      // The overlap region is undefined without both classes.
      threshold = kEmptyThreshold;
      log.note = "class missing from candidate set";
    } else {
      const ClassGaussian g0 = fit_class_gaussian(inputs(rows0, Eigen::all), 0);
      const ClassGaussian g1 = fit_class_gaussian(inputs(rows1, Eigen::all), 1);
      threshold = svm_threshold(g0, g1, *svm, params_.p_th);
    }
  } else {
    const Mlp& mlp = std::get<Mlp>(*pending_);
    const Eigen::MatrixXd post = mlp.posteriors(inputs);
    std::unique_ptr<bool[]> correct(new bool[count]);
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = post.row(static_cast<Eigen::Index>(i)).transpose();
      clarity[i] = moc_from_posterior(params_.moc, row);
      Eigen::Index arg = 0;
      row.maxCoeff(&arg);
      predictions[i] = static_cast<int>(arg);
      correct[i] = predictions[i] == train_.labels[state_.members[i]];
    }
    threshold = dnn_threshold(clarity, std::span<const bool>(correct.get(), count), params_.z_th);
  }

  state_.member_moc = clarity;
  for (std::size_t i = 0; i < count; ++i) latest_prediction_[state_.members[i]] = predictions[i];
  hierarchy_.add_stage(std::move(*pending_), threshold);
  pending_.reset();

  AcsState next = partition(state_, clarity, threshold, predictions);
  log.threshold = threshold;
  log.next_size = next.members.size();
  chain_.push_back(count);
  if (heldout_) evaluate_heldout(log);

  if (next.members.empty() || k >= rounds_) done_ = true;
  history_.push_back(state_);
  state_ = std::move(next);
  return state_;
}

void DeepeningSession::evaluate_heldout(RoundLog& log) {
  const int k = hierarchy_.depth();
  const auto& stage = hierarchy_.stages().back();
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < heldout_->size(); ++i) {
    if (!heldout_settled_[i]) open.push_back(i);
  }
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(open.size()), k);
  for (std::size_t i = 0; i < open.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) =
        heldout_->features.row(static_cast<Eigen::Index>(open[i])).head(k);
  }
  std::vector<double> clarity(open.size());
  std::vector<int> predictions(open.size());
  if (const auto* svm = std::get_if<LinearSvm>(&stage.classifier)) {
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto x = feats.row(static_cast<Eigen::Index>(i)).transpose();
      clarity[i] = moc(params_.moc, *svm, x);
      predictions[i] = svm->predict(x);
    }
  } else {
    Eigen::MatrixXd raw = feats * embedding_->components().topRows(k);
    raw.rowwise() += embedding_->mean().transpose();
    const Eigen::MatrixXd post = std::get<Mlp>(stage.classifier).posteriors(raw);
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto row = post.row(static_cast<Eigen::Index>(i)).transpose();
      clarity[i] = moc_from_posterior(params_.moc, row);
      Eigen::Index arg = 0;
      row.maxCoeff(&arg);
      predictions[i] = static_cast<int>(arg);
    }
  }
  for (std::size_t i = 0; i < open.size(); ++i) {
    heldout_prediction_[open[i]] = predictions[i];
    if (clarity[i] > stage.threshold) heldout_settled_[open[i]] = true;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < heldout_->size(); ++i) {
    correct += heldout_prediction_[i] == heldout_->labels[i];
  }
  log.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(heldout_->size());
}

std::vector<std::size_t> DeepeningSession::chain_sizes() const {
  std::vector<std::size_t> sizes = chain_;
  sizes.resize(static_cast<std::size_t>(rounds_), 0);
  return sizes;
}

std::vector<int> DeepeningSession::training_predictions() const {
  std::vector<int> out = latest_prediction_;
  for (const auto& s : state_.settled) out[s.index] = s.prediction;
  return out;
}

DeepeningResult run_deepening(const EmbeddedDataset& train, int rounds,
                              const DeepeningParams& params,
                              std::shared_ptr<const EmbeddingModel> embedding,
                              const EmbeddedDataset* heldout) {
  DeepeningSession session(train, rounds, params, std::move(embedding), heldout);
  while (!session.done()) {
    session.train_round();
    session.close_round();
  }
  DeepeningResult result{session.classifier(), session.chain_sizes(), session.history(),
                         session.logs()};
  result.states.push_back(session.state());
  return result;
}

}  // namespace jd2p
