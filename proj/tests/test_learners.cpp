#include <random>
#include <sstream>

#include "doctest.h"
#include "jd2p/learners.hpp"

using namespace jd2p;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs blobs(const std::vector<Eigen::Vector2d>& centers, int per_class, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Blobs b;
  b.x.resize(static_cast<Eigen::Index>(centers.size()) * per_class, 2);
  Eigen::Index r = 0;
  for (int i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < centers.size(); ++c) {
      b.x.row(r++) = (centers[c] + Eigen::Vector2d(n(rng), n(rng))).transpose();
      b.y.push_back(static_cast<int>(c));
    }
  }
  return b;
}

double svm_accuracy(const LinearSvm& s, const Blobs& b) {
  int ok = 0;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) ok += s.predict(b.x.row(i).transpose()) == b.y[static_cast<std::size_t>(i)];
  return static_cast<double>(ok) / static_cast<double>(b.x.rows());
}

double mlp_accuracy(const Mlp& m, const Blobs& b) {
  int ok = 0;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) ok += m.predict(b.x.row(i).transpose()) == b.y[static_cast<std::size_t>(i)];
  return static_cast<double>(ok) / static_cast<double>(b.x.rows());
}

}  // namespace

TEST_CASE("svm prediction follows the >= 0 convention") {
  LinearSvm s{Eigen::Vector2d(3, 4), -10};
  CHECK(s.decision(Eigen::Vector2d(2, 1)) == 0.0);
  CHECK(svm_predict(s, Eigen::Vector2d(2, 1)) == 0);
  LinearSvm t{Eigen::Vector2d(1, 0), 0};
  CHECK(t.predict(Eigen::Vector2d(5, 9)) == 0);
  CHECK(t.predict(Eigen::Vector2d(-5, 9)) == 1);
  CHECK_THROWS_AS(t.predict(Eigen::Vector3d::Zero()), std::invalid_argument);
}

TEST_CASE("svm objective by hand") {
  LinearSvm s{Eigen::Vector2d(1, -1), 0.5};
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 0, 1, 2, 2;
  const std::vector<int> y{0, 0, 1};
  // scores: 1.5, -0.5, 0.5 ; margins y*s: 1.5, -0.5, -0.5 ; hinge 0 + 1.5 + 1.5
  CHECK(svm_objective(s, x, y, 2.0) == doctest::Approx(0.5 * 2.0 + 2.0 * 3.0));
}

TEST_CASE("svm separates a separable pair") {
  Eigen::MatrixXd x(2, 2);
  x << -1, 0, 1, 0;
  const std::vector<int> y{0, 1};
  const SvmFit fit = train_svm(x, y, TrainSpec::svm_defaults());
  CHECK(fit.model.predict(x.row(0).transpose()) == 0);
  CHECK(fit.model.predict(x.row(1).transpose()) == 1);
  CHECK(fit.model.w.norm() > 0.0);
}

TEST_CASE("svm on Gaussian blobs") {
  const Blobs b = blobs({{-2, 0}, {2, 0}}, 100, 1.0, 3);
  const SvmFit fit = train_svm(b.x, b.y, TrainSpec::svm_defaults());
  CHECK(svm_accuracy(fit.model, b) >= 0.95);
  // Recorded objective is non-increasing and ends below the start.
  for (std::size_t i = 1; i < fit.objective.size(); ++i) {
    CHECK(fit.objective[i] <= fit.objective[i - 1] + 1e-9);
  }
  CHECK(fit.objective.back() <= fit.objective.front());
  CHECK(svm_objective(fit.model, b.x, b.y, 1.0) == doctest::Approx(fit.objective.back()));
}

TEST_CASE("flipping labels negates the decision function") {
  const Blobs b = blobs({{-2, 0.5}, {2, -0.5}}, 60, 1.2, 4);
  std::vector<int> flipped;
  for (int l : b.y) flipped.push_back(1 - l);
  const SvmFit a = train_svm(b.x, b.y, TrainSpec::svm_defaults());
  const SvmFit f = train_svm(b.x, flipped, TrainSpec::svm_defaults());
  CHECK((a.model.w + f.model.w).norm() <= 1e-9 * a.model.w.norm());
  CHECK(std::abs(a.model.b + f.model.b) <= 1e-9 * (1.0 + std::abs(a.model.b)));
}

TEST_CASE("scaling separable inputs keeps the training predictions") {
  const Blobs b = blobs({{-3, 0}, {3, 0}}, 50, 0.5, 5);
  const SvmFit a = train_svm(b.x, b.y, TrainSpec::svm_defaults());
  for (double scale : {0.1, 7.0}) {
    const SvmFit s = train_svm(b.x * scale, b.y, TrainSpec::svm_defaults());
    for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
      CHECK(s.model.predict(scale * b.x.row(i).transpose()) == a.model.predict(b.x.row(i).transpose()));
    }
  }
}

TEST_CASE("svm training rejects degenerate input") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 2);
  const std::vector<int> one{1, 1, 1, 1};
  CHECK_THROWS_WITH_AS(train_svm(x, one, TrainSpec::svm_defaults()),
                       doctest::Contains("degenerate training set"), std::invalid_argument);
  const std::vector<int> bad{0, 2, 1, 0};
  CHECK_THROWS_AS(train_svm(x, bad, TrainSpec::svm_defaults()), std::invalid_argument);
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(train_svm(x, short_labels, TrainSpec::svm_defaults()), std::invalid_argument);
}

TEST_CASE("svm training is deterministic") {
  const Blobs b = blobs({{-1, 0}, {1, 0}}, 80, 1.0, 6);
  const SvmFit a = train_svm(b.x, b.y, TrainSpec::svm_defaults());
  const SvmFit c = train_svm(b.x, b.y, TrainSpec::svm_defaults());
  CHECK(a.model.w == c.model.w);
  CHECK(a.model.b == c.model.b);
}

TEST_CASE("posteriors are distributions and shift invariant") {
  const std::vector<int> sizes{3, 8, 4};
  const Mlp m = Mlp::init(sizes, 11);
  CHECK(m.input_dim() == 3);
  CHECK(m.num_classes() == 4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 3) * 5.0;
  const Eigen::MatrixXd p = m.posteriors(x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-6);
    CHECK(p.row(i).minCoeff() >= 0.0);
    CHECK((m.posterior(x.row(i).transpose()) - p.row(i).transpose()).norm() < 1e-12);
  }
  const Eigen::VectorXd logits = Eigen::Vector4d(0.3, -2.0, 5.0, 1.0);
  CHECK((softmax(logits) - softmax((logits.array() + 123.0).matrix())).norm() < 1e-12);
  CHECK(softmax(Eigen::Vector3d(1000, 0, -1000))(0) == doctest::Approx(1.0));

  Mlp zero = m;
  for (auto& l : zero.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Eigen::VectorXd u = zero.posterior(Eigen::Vector3d(1, 2, 3));
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(u(c) == doctest::Approx(0.25));
}

TEST_CASE("backprop matches central finite differences at initialization") {
  const std::vector<int> sizes{4, 6, 5, 3};
  Mlp m = Mlp::init(sizes, 21);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  const std::vector<int> y{0, 2, 1, 2, 0};
  std::vector<Mlp::Layer> grads;
  m.loss_and_gradient(x, y, &grads);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = m.loss_and_gradient(x, y, nullptr);
      param = saved - h;
      const double down = m.loss_and_gradient(x, y, nullptr);
      param = saved;
      const double numeric = (up - down) / (2 * h);
      const double rel = std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      worst = std::max(worst, rel);
    };
    auto& layer = m.layers()[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) check(layer.weight(r, c), grads[l].weight(r, c));
      check(layer.bias(r), grads[l].bias(r));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mlp learns three separated blobs") {
  const Blobs b = blobs({{-3, 0}, {3, 0}, {0, 5}}, 167, 0.5, 8);
  TrainSpec spec = TrainSpec::mlp_defaults();
  const std::vector<int> hidden{32, 16};
  const MlpFit fit = train_mlp(b.x, b.y, 3, hidden, spec);
  CHECK(fit.epoch_loss.size() == 10);
  CHECK(fit.epoch_loss.back() < fit.epoch_loss.front());
  CHECK(mlp_accuracy(fit.model, b) >= 0.90);
  CHECK(fit.model.predict(Eigen::Vector2d(-3, 0)) == 0);
  CHECK(fit.model.predict(Eigen::Vector2d(3, 0)) == 1);
  CHECK(fit.model.predict(Eigen::Vector2d(0, 5)) == 2);

  const MlpFit again = train_mlp(b.x, b.y, 3, hidden, spec);
  CHECK(again.epoch_loss == fit.epoch_loss);
}

TEST_CASE("zero epochs leave the network unchanged") {
  const std::vector<int> sizes{2, 5, 2};
  const Mlp init = Mlp::init(sizes, 2);
  TrainSpec spec = TrainSpec::mlp_defaults();
  spec.epochs = 0;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  const MlpFit fit = train_mlp(init, x, y, spec);
  CHECK(fit.epoch_loss.empty());
  for (std::size_t l = 0; l < init.layers().size(); ++l) {
    CHECK(fit.model.layers()[l].weight == init.layers()[l].weight);
    CHECK(fit.model.layers()[l].bias == init.layers()[l].bias);
  }
}

TEST_CASE("models round-trip through text exactly") {
  LinearSvm s{Eigen::Vector3d(0.1, -1.0 / 3.0, 1e-300), std::nextafter(1.0, 2.0)};
  std::stringstream io;
  save(io, s);
  const LinearSvm back = load_svm(io);
  CHECK(back.w == s.w);
  CHECK(back.b == s.b);

  const std::vector<int> sizes{3, 4, 2};
  const Mlp m = Mlp::init(sizes, 5);
  std::stringstream mio;
  save(mio, m);
  const Mlp mb = load_mlp(mio);
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    CHECK(mb.layers()[l].weight == m.layers()[l].weight);
    CHECK(mb.layers()[l].bias == m.layers()[l].bias);
  }
  std::stringstream junk("jd2p-mlp 2\n");
  CHECK_THROWS(load_mlp(junk));
}

TEST_CASE("train spec validation") {
  TrainSpec s;
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(default_hidden_widths() == std::vector<int>{256, 128, 64, 32});
}
