#include "jd2p/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace jd2p {

namespace {

std::vector<std::size_t> iota_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

// Minimises sum_i hinge(y_i (s_i + b)) over b exactly. The subgradient is
// piecewise constant and non-decreasing, so a sweep over the sorted
// breakpoints finds the zero crossing; flat optima return their midpoint.
double best_offset(const Eigen::VectorXd& scores, const std::vector<double>& y) {
  std::vector<double> points;
  points.reserve(scores.size());
  int slope = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (y[i] > 0) {
      points.push_back(1.0 - scores(i));
      --slope;
    } else {
      points.push_back(-1.0 - scores(i));
    }
  }
  std::sort(points.begin(), points.end());
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++slope;
    if (slope > 0) return points[i];
    if (slope == 0) {
      const double next = i + 1 < points.size() ? points[i + 1] : points[i];
      return 0.5 * (points[i] + next);
    }
  }
  return points.empty() ? 0.0 : points.back();
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", v(i));
    out << (i ? " " : "") << buf;
  }
  out << '\n';
}

double read_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw std::runtime_error("model load: unexpected end of input");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw std::runtime_error("model load: bad number '" + token + "'");
  }
  return v;
}

void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) {
    throw std::runtime_error("model load: expected '" + want + "', got '" + got + "'");
  }
}

}  // namespace

TrainSpec TrainSpec::svm_defaults() {
  TrainSpec s;
  s.c_slack = 1.0;
  s.epochs = 40;
  s.batch_size = 64;
  return s;
}

TrainSpec TrainSpec::mlp_defaults() {
  TrainSpec s;
  s.epochs = 10;
  s.batch_size = 64;
  s.learning_rate = 0.01;
  s.momentum = 0.9;
  return s;
}

void TrainSpec::validate() const {
  if (!(c_slack > 0.0) || epochs < 0 || batch_size < 1 || !(learning_rate > 0.0) ||
      momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("train spec: parameters out of range");
  }
}

double LinearSvm::decision(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != w.size()) throw std::invalid_argument("svm: input depth mismatch");
  return w.dot(x) + b;
}

int LinearSvm::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return decision(x) >= 0.0 ? 0 : 1;
}

double svm_objective(const LinearSvm& svm, const Eigen::MatrixXd& samples,
                     std::span<const int> labels, double c_slack) {
  const Eigen::VectorXd scores = (samples * svm.w).array() + svm.b;
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double y = labels[i] == 0 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * scores(i));
  }
  return 0.5 * svm.w.squaredNorm() + c_slack * hinge;
}

SvmFit train_svm(const Eigen::MatrixXd& samples, std::span<const int> labels,
                 const TrainSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(samples.rows());
  if (labels.size() != n) throw std::invalid_argument("train_svm: label count mismatch");
  if (samples.cols() < 1) throw std::invalid_argument("train_svm: zero-depth samples");

  std::vector<double> y(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("train_svm: labels must be 0/1");
    y[i] = labels[i] == 0 ? 1.0 : -1.0;
    positives += labels[i] == 0;
  }
  if (positives == 0 || positives == n) {
    throw std::invalid_argument("train_svm: degenerate training set (single class)");
  }

  const double lambda = 1.0 / (spec.c_slack * static_cast<double>(n));
  LinearSvm current{Eigen::VectorXd::Zero(samples.cols()), 0.0};
  SvmFit fit{current, {svm_objective(current, samples, labels, spec.c_slack)}};
  double best = fit.objective.front();

  std::mt19937_64 rng(spec.seed);
  auto order = iota_order(n);
  const auto batch = static_cast<std::size_t>(spec.batch_size);
  std::int64_t t = 0;
  Eigen::VectorXd step_dir(samples.cols());

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      step_dir.setZero();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        if (y[i] * (samples.row(i).dot(current.w) + current.b) < 1.0) {
          step_dir.noalias() += y[i] * samples.row(i).transpose();
        }
      }
      current.w *= (1.0 - eta * lambda);
      current.w.noalias() += (eta / static_cast<double>(stop - start)) * step_dir;
      // Pegasos projection onto the ball holding the optimum.
      const double radius = 1.0 / std::sqrt(lambda);
      const double norm = current.w.norm();
      if (norm > radius) current.w *= radius / norm;
    }
    current.b = best_offset(samples * current.w, y);
    const double obj = svm_objective(current, samples, labels, spec.c_slack);
    if (obj < best) {
      best = obj;
      fit.model = current;
    }
    fit.objective.push_back(best);
  }
  if (!(fit.model.w.norm() > 0.0)) {
    // Every epoch failed to improve on w = 0; fall back to the last iterate.
    fit.model = current;
  }
  return fit;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("mlp: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weight.rows()) {
      throw std::invalid_argument("mlp: bias/weight mismatch");
    }
    if (i > 0 && layers_[i].weight.cols() != layers_[i - 1].weight.rows()) {
      throw std::invalid_argument("mlp: layer shapes do not chain");
    }
  }
}

Mlp Mlp::init(std::span<const int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("mlp: need input and output sizes");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int in = layer_sizes[i];
    const int out = layer_sizes[i + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
    Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = normal(rng);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int Mlp::num_classes() const { return static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes{input_dim()};
  for (const auto& l : layers_) sizes.push_back(static_cast<int>(l.weight.rows()));
  return sizes;
}

Eigen::MatrixXd Mlp::logits(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_dim()) throw std::invalid_argument("mlp: input dimension mismatch");
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = a * layers_[i].weight.transpose();
    z.rowwise() += layers_[i].bias.transpose();
    a = i + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

Eigen::MatrixXd Mlp::posteriors(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd z = logits(inputs);
  for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) = softmax(z.row(r).transpose()).transpose();
  return z;
}

Eigen::VectorXd Mlp::posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return posteriors(x.transpose()).row(0).transpose();
}

int Mlp::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::Index arg = 0;
  logits(x.transpose()).row(0).maxCoeff(&arg);
  return static_cast<int>(arg);
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                              std::vector<Layer>* grads) const {
  const Eigen::Index n = inputs.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("mlp: label count mismatch");
  }
  if (n == 0) return 0.0;

  std::vector<Eigen::MatrixXd> acts;  // acts[i] = input to layer i
  acts.reserve(layers_.size() + 1);
  acts.push_back(inputs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = acts.back() * layers_[i].weight.transpose();
    z.rowwise() += layers_[i].bias.transpose();
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }

  Eigen::MatrixXd delta = acts.back();  // logits -> dL/dlogits
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int c = labels[r];
    if (c < 0 || c >= delta.cols()) throw std::invalid_argument("mlp: label out of range");
    const double top = delta.row(r).maxCoeff();
    const double log_norm = top + std::log((delta.row(r).array() - top).exp().sum());
    loss += log_norm - delta(r, c);
    delta.row(r) = (delta.row(r).array() - log_norm).exp();
    delta(r, c) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  if (!grads) return loss;

  delta *= inv_n;
  grads->resize(layers_.size());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    (*grads)[i].weight.noalias() = delta.transpose() * acts[i];
    (*grads)[i].bias = delta.colwise().sum().transpose();
    if (i > 0) {
      Eigen::MatrixXd back = delta * layers_[i].weight;
      delta = (acts[i].array() > 0.0).select(back, 0.0);
    }
  }
  return loss;
}

MlpFit train_mlp(Mlp initial, const Eigen::MatrixXd& samples, std::span<const int> labels,
                 const TrainSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(samples.rows());
  if (labels.size() != n) throw std::invalid_argument("train_mlp: label count mismatch");
  if (n == 0) throw std::invalid_argument("train_mlp: empty training set");
  if (samples.cols() != initial.input_dim()) {
    throw std::invalid_argument("train_mlp: input dimension mismatch");
  }

  MlpFit fit{std::move(initial), {}};
  auto& layers = fit.model.layers();
  std::vector<Mlp::Layer> velocity(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    velocity[i].weight = Eigen::MatrixXd::Zero(layers[i].weight.rows(), layers[i].weight.cols());
    velocity[i].bias = Eigen::VectorXd::Zero(layers[i].bias.size());
  }

  std::mt19937_64 rng(spec.seed);
  auto order = iota_order(n);
  const auto batch = static_cast<std::size_t>(spec.batch_size);
  std::vector<Mlp::Layer> grads;
  Eigen::MatrixXd xb;
  std::vector<int> yb;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      xb.resize(static_cast<Eigen::Index>(stop - start), samples.cols());
      yb.resize(stop - start);
      for (std::size_t j = start; j < stop; ++j) {
        xb.row(static_cast<Eigen::Index>(j - start)) = samples.row(order[j]);
        yb[j - start] = labels[order[j]];
      }
      loss_sum += fit.model.loss_and_gradient(xb, yb, &grads) * static_cast<double>(stop - start);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        velocity[i].weight = spec.momentum * velocity[i].weight - spec.learning_rate * grads[i].weight;
        velocity[i].bias = spec.momentum * velocity[i].bias - spec.learning_rate * grads[i].bias;
        layers[i].weight += velocity[i].weight;
        layers[i].bias += velocity[i].bias;
      }
    }
    fit.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }
  return fit;
}

MlpFit train_mlp(const Eigen::MatrixXd& samples, std::span<const int> labels, int num_classes,
                 std::span<const int> hidden, const TrainSpec& spec) {
  std::vector<int> sizes{static_cast<int>(samples.cols())};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes);
  return train_mlp(Mlp::init(sizes, spec.seed ^ 0x9e3779b97f4a7c15ULL), samples, labels, spec);
}

std::vector<int> default_hidden_widths() { return {256, 128, 64, 32}; }

void save(std::ostream& out, const LinearSvm& svm) {
  out << "jd2p-svm 1\n" << svm.depth() << '\n';
  write_vector(out, svm.w);
  write_vector(out, Eigen::VectorXd::Constant(1, svm.b));
}

void save(std::ostream& out, const Mlp& mlp) {
  out << "jd2p-mlp 1\n" << mlp.layers().size() << '\n';
  for (const auto& layer : mlp.layers()) {
    out << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      write_vector(out, layer.weight.row(r).transpose());
    }
    write_vector(out, layer.bias);
  }
}

LinearSvm load_svm(std::istream& in) {
  expect_token(in, "jd2p-svm");
  expect_token(in, "1");
  int depth = 0;
  if (!(in >> depth) || depth < 1) throw std::runtime_error("model load: bad svm depth");
  LinearSvm svm{Eigen::VectorXd(depth), 0.0};
  for (int i = 0; i < depth; ++i) svm.w(i) = read_double(in);
  svm.b = read_double(in);
  return svm;
}

Mlp load_mlp(std::istream& in) {
  expect_token(in, "jd2p-mlp");
  expect_token(in, "1");
  std::size_t count = 0;
  if (!(in >> count) || count == 0) throw std::runtime_error("model load: bad layer count");
  std::vector<Mlp::Layer> layers(count);
  for (auto& layer : layers) {
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1) {
      throw std::runtime_error("model load: bad layer shape");
    }
    layer.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = read_double(in);
    layer.bias.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = read_double(in);
  }
  return Mlp(std::move(layers));
}

}  // namespace jd2p
