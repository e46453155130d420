#include <random>

#include "doctest.h"
#include "jd2p/dataset.hpp"
#include "jd2p/deepening.hpp"

using namespace jd2p;

namespace {

ClassGaussian gaussian(Eigen::VectorXd mu, Eigen::MatrixXd sigma) {
  return {0, mu, sigma, sigma.inverse()};
}

// Largest |w.x+b|/|w| over uniform draws that land in both truncated regions.
double rejection_max(const ClassGaussian& g0, const ClassGaussian& g1, const LinearSvm& s,
                     double radius, int draws, std::uint64_t seed) {
  Eigen::Vector2d lo, hi;
  for (int d = 0; d < 2; ++d) {
    const double r0 = radius * std::sqrt(g0.sigma(d, d)), r1 = radius * std::sqrt(g1.sigma(d, d));
    lo(d) = std::max(g0.mu(d) - r0, g1.mu(d) - r1);
    hi(d) = std::min(g0.mu(d) + r0, g1.mu(d) + r1);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo(0), hi(0)), uy(lo(1), hi(1));
  double best = -1.0;
  for (int i = 0; i < draws; ++i) {
    const Eigen::Vector2d x(ux(rng), uy(rng));
    if (mahalanobis(g0, x) <= radius && mahalanobis(g1, x) <= radius) {
      best = std::max(best, std::abs(s.decision(x)) / s.w.norm());
    }
  }
  return best;
}

EmbeddedDataset blob_data(std::size_t per_class, double separation, std::uint64_t seed) {
  const RawDataset raw = gen_synthetic(blob_params(per_class, 2, separation, seed));
  return {raw.samples, raw.labels, 2};
}

}  // namespace

TEST_CASE("metric of clarity") {
  LinearSvm s{Eigen::Vector2d(3, 4), -10};
  CHECK(moc(MocKind::SvmDistance, s, Eigen::Vector2d(2, 1)) == 0.0);
  CHECK(moc(MocKind::SvmDistance, s, Eigen::Vector2d(0, 0)) == doctest::Approx(2.0));
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(10, 0.1);
  CHECK(moc_from_posterior(MocKind::NegEntropy, uniform) == doctest::Approx(-std::log(10.0)));
  CHECK(moc_from_posterior(MocKind::PosteriorGap, Eigen::Vector3d(0.7, 0.2, 0.1)) == doctest::Approx(0.5));
  CHECK(moc_from_posterior(MocKind::PosteriorGap, Eigen::Vector3d(0.1, 0.2, 0.7)) == doctest::Approx(0.5));
  CHECK(moc_from_posterior(MocKind::PosteriorGap, Eigen::Vector3d(0, 1, 0)) == 1.0);
  CHECK(moc_from_posterior(MocKind::NegEntropy, Eigen::Vector3d(0, 1, 0)) == 0.0);
  // Every other posterior has larger entropy than uniform has.
  CHECK(moc_from_posterior(MocKind::NegEntropy, Eigen::Vector3d(0.5, 0.3, 0.2)) > -std::log(3.0));

  CHECK_THROWS_AS(moc(MocKind::NegEntropy, s, Eigen::Vector2d(1, 1)), std::invalid_argument);
  const std::vector<int> sizes{2, 3};
  const Mlp m = Mlp::init(sizes, 1);
  CHECK_THROWS_AS(moc(MocKind::SvmDistance, m, Eigen::Vector2d(1, 1)), std::invalid_argument);
  CHECK(moc(MocKind::PosteriorGap, DepthClassifier{m}, Eigen::Vector2d(1, 1)) >= 0.0);
  CHECK(to_string(parse_moc_kind("posterior-gap")) == "posterior-gap");
  CHECK_THROWS(parse_moc_kind("margin"));
}

TEST_CASE("ellipsoid projection satisfies the optimality conditions") {
  Eigen::Matrix2d shape;
  shape << 2.0, 0.6, 0.6, 0.5;
  const Ellipsoid e(Eigen::Vector2d(1, -1), shape, 1.5);
  const Eigen::Vector2d inside(1.2, -0.9);
  CHECK((e.project(inside) - inside).norm() == 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 6.0);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d y(n(rng), n(rng));
    if (e.level(y) <= 1.5 * 1.5) continue;
    const Eigen::Vector2d x = e.project(y);
    CHECK(e.level(x) == doctest::Approx(2.25).epsilon(1e-9));
    // y - x is a non-negative multiple of the outward normal at x.
    const Eigen::Vector2d normal = shape * (x - e.center());
    const Eigen::Vector2d r = y - x;
    CHECK(std::abs(r(0) * normal(1) - r(1) * normal(0)) <= 1e-8 * r.norm() * normal.norm());
    CHECK(r.dot(normal) > 0.0);
  }
  CHECK_THROWS_AS(Ellipsoid(Eigen::Vector2d::Zero(), -Eigen::Matrix2d::Identity(), 1.0), std::invalid_argument);
}

TEST_CASE("dykstra finds the nearest point of the intersection") {
  const Ellipsoid a(Eigen::Vector2d(-1, 0), Eigen::Matrix2d::Identity(), 1.5);
  const Ellipsoid b(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity(), 1.5);
  const Eigen::Vector2d y(0.3, 3.0);
  const ProjectionResult r = dykstra_project(a, b, y);
  CHECK(r.feasible);
  // Brute force over a fine grid of the lens.
  double best = 1e9;
  for (double px = -0.5; px <= 0.5; px += 1e-3) {
    for (double py = 0.0; py <= 1.2; py += 1e-3) {
      const Eigen::Vector2d p(px, py);
      if (a.level(p) <= 2.25 && b.level(p) <= 2.25) best = std::min(best, (p - y).norm());
    }
  }
  CHECK((r.point - y).norm() == doctest::Approx(best).epsilon(1e-3));
  CHECK(a.level(r.point) <= 2.25 * (1 + 1e-8));
  CHECK(b.level(r.point) <= 2.25 * (1 + 1e-8));

  const Ellipsoid far(Eigen::Vector2d(10, 0), Eigen::Matrix2d::Identity(), 1.0);
  CHECK_FALSE(dykstra_project(a, far, y).feasible);
}

TEST_CASE("svm threshold: identical Gaussians give the ellipsoid radius") {
  const ClassGaussian g = gaussian(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  for (const Eigen::Vector2d w : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0.3, -2.0)}) {
    const SvmThresholdResult r = svm_threshold_detail(g, g, LinearSvm{w, 0.0}, 0.95);
    CHECK(r.delta_bar == doctest::Approx(std::sqrt(chi2_quantile(0.95, 2))));
    CHECK(r.threshold == doctest::Approx(r.delta_bar).epsilon(1e-6));
    CHECK_FALSE(r.empty_intersection);
  }
}

TEST_CASE("svm threshold: disjoint Gaussians give zero") {
  const ClassGaussian g0 = gaussian(Eigen::Vector2d(-100, 0), Eigen::Matrix2d::Identity());
  const ClassGaussian g1 = gaussian(Eigen::Vector2d(100, 0), Eigen::Matrix2d::Identity());
  const SvmThresholdResult r = svm_threshold_detail(g0, g1, LinearSvm{Eigen::Vector2d(1, 0), 0}, 0.95);
  CHECK(r.empty_intersection);
  CHECK(r.threshold == 0.0);
}

TEST_CASE("svm threshold agrees with rejection sampling") {
  const LinearSvm s{Eigen::Vector2d(1, 0), 0};
  const ClassGaussian g0 = gaussian(Eigen::Vector2d(-1, 0), Eigen::Matrix2d::Identity());
  const ClassGaussian g1 = gaussian(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity());
  const SvmThresholdResult r = svm_threshold_detail(g0, g1, s, 0.95);
  CHECK(r.delta_bar == doctest::Approx(2.4477).epsilon(1e-4));
  const double sampled = rejection_max(g0, g1, s, r.delta_bar, 1000000, 1);
  CHECK(std::abs(r.threshold - sampled) < 1e-2);
  CHECK(r.threshold >= sampled);
  // Lens of two unit circles: the farthest point from x = 0 sits on an axis.
  CHECK(r.threshold == doctest::Approx(r.delta_bar - 1.0).epsilon(1e-6));
}

TEST_CASE("svm threshold: label swap and the sanity bound") {
  Eigen::Matrix2d s0, s1;
  s0 << 1.5, 0.4, 0.4, 0.8;
  s1 << 0.7, -0.2, -0.2, 1.2;
  const ClassGaussian g0 = gaussian(Eigen::Vector2d(-0.8, 0.3), s0);
  const ClassGaussian g1 = gaussian(Eigen::Vector2d(0.9, -0.1), s1);
  const LinearSvm s{Eigen::Vector2d(1.0, -0.4), 0.15};
  const SvmThresholdResult r = svm_threshold_detail(g0, g1, s, 0.98);
  const LinearSvm flipped{-s.w, -s.b};
  CHECK(std::abs(svm_threshold(g1, g0, flipped, 0.98) - r.threshold) < 1e-9);
  CHECK(std::abs(svm_threshold(g1, g0, s, 0.98) - r.threshold) < 1e-9);

  const double center = std::max(std::abs(s.decision(g0.mu)), std::abs(s.decision(g1.mu))) / s.w.norm();
  const double spread = std::max(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s0).eigenvalues().maxCoeff(),
                                 Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s1).eigenvalues().maxCoeff());
  CHECK(r.threshold <= center + r.delta_bar * std::sqrt(spread));
  CHECK(std::abs(r.threshold - rejection_max(g0, g1, s, r.delta_bar, 1000000, 2)) < 1e-2);
}

TEST_CASE("svm threshold dominates the in-lens training samples") {
  const EmbeddedDataset d = blob_data(300, 2.0, 4);
  const SvmFit fit = train_svm(d.features, d.labels, TrainSpec::svm_defaults());
  std::vector<Eigen::Index> r0, r1;
  for (std::size_t i = 0; i < d.size(); ++i) (d.labels[i] == 0 ? r0 : r1).push_back(static_cast<Eigen::Index>(i));
  const ClassGaussian g0 = fit_class_gaussian(d.features(r0, Eigen::all), 0);
  const ClassGaussian g1 = fit_class_gaussian(d.features(r1, Eigen::all), 1);
  const SvmThresholdResult r = svm_threshold_detail(g0, g1, fit.model, 0.95);
  double data_max = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd x = d.features.row(static_cast<Eigen::Index>(i)).transpose();
    if (mahalanobis(g0, x) <= r.delta_bar && mahalanobis(g1, x) <= r.delta_bar) {
      data_max = std::max(data_max, moc(MocKind::SvmDistance, fit.model, x));
    }
  }
  CHECK(data_max > 0.0);
  CHECK(r.threshold >= data_max);
}

TEST_CASE("dnn threshold sweep") {
  const std::vector<double> m{0.9, 0.5, 0.3, 0.1};
  const bool ok[] = {true, false, true, false};
  CHECK(dnn_threshold(m, ok, 0.25) == 0.5);
  CHECK(dnn_threshold(m, ok, 0.5) == 0.1);
  CHECK(dnn_threshold(m, ok, 0.75) == kEmptyThreshold);
  CHECK(dnn_threshold(m, ok, 0.0) == 0.9);
  const bool all_ok[] = {true, true, true, true};
  CHECK(dnn_threshold(m, all_ok, 0.01) == kEmptyThreshold);
  CHECK_THROWS_AS(dnn_threshold(std::span<const double>{}, std::span<const bool>{}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(dnn_threshold(m, std::span<const bool>(ok, 3), 0.1), std::invalid_argument);

  // Non-increasing in z_th on random data.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  std::vector<double> v(200);
  std::unique_ptr<bool[]> c(new bool[200]);
  for (int i = 0; i < 200; ++i) {
    v[static_cast<std::size_t>(i)] = u(rng);
    c[i] = u(rng) < 0.7;
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double z = 0.0; z <= 0.3; z += 0.01) {
    const double t = dnn_threshold(v, std::span<const bool>(c.get(), 200), z);
    CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("partition keeps moc <= threshold inclusively") {
  const AcsState s = AcsState::initial(3);
  CHECK(s.members == std::vector<std::size_t>{0, 1, 2});
  const std::vector<double> m{0.1, 0.5, 0.9};
  const std::vector<int> pred{1, 0, 1};
  const AcsState next = partition(s, m, 0.5, pred);
  CHECK(next.round == 2);
  CHECK(next.members == std::vector<std::size_t>{0, 1});
  REQUIRE(next.settled.size() == 1);
  CHECK(next.settled[0].index == 2);
  CHECK(next.settled[0].prediction == 1);
  CHECK(next.settled[0].depth == 1);
  CHECK(next.thresholds == std::vector<double>{0.5});
  CHECK(partition(s, m, std::numeric_limits<double>::infinity(), pred).members.size() == 3);
  CHECK(partition(s, m, kEmptyThreshold, pred).members.empty());
  CHECK_THROWS_AS(partition(s, std::vector<double>{0.1}, 0.5, pred), std::invalid_argument);
}

TEST_CASE("hierarchical inference walks depths") {
  HierarchicalClassifier h(MocKind::SvmDistance, nullptr);
  h.add_stage(LinearSvm{Eigen::VectorXd::Constant(1, 1.0), 0.0}, 1.0);
  h.add_stage(LinearSvm{Eigen::Vector2d(0.0, 1.0), 0.0}, 1.0);
  CHECK_THROWS_AS(h.add_stage(LinearSvm{Eigen::Vector2d(1, 1), 0}, 1.0), std::invalid_argument);
  const Inference clear = h.infer(Eigen::Vector2d(-3.0, 5.0));
  CHECK(clear.depth == 1);
  CHECK(clear.label == 1);
  const Inference deep = h.infer(Eigen::Vector2d(0.5, 5.0));
  CHECK(deep.depth == 2);
  CHECK(deep.label == 0);
  h.set_threshold(1, std::numeric_limits<double>::infinity());
  h.set_threshold(2, std::numeric_limits<double>::infinity());
  CHECK(h.infer(Eigen::Vector2d(-3.0, -5.0)).depth == 2);
  CHECK(h.infer(Eigen::Vector2d(-3.0, -5.0), 1).depth == 1);
  CHECK_THROWS_AS(h.infer(Eigen::VectorXd::Constant(1, 1.0)), std::invalid_argument);
}

TEST_CASE("deepening with one round is a plain classifier") {
  const EmbeddedDataset d = blob_data(200, 3.0, 5);
  DeepeningParams p;
  const DeepeningResult r = run_deepening(d, 1, p);
  CHECK(r.classifier.depth() == 1);
  CHECK(r.chain_sizes == std::vector<std::size_t>{d.size()});
  const SvmFit plain = train_svm(d.features.leftCols(1), d.labels, [&] {
    TrainSpec s = p.train;
    s.seed = p.train.seed + 1;
    return s;
  }());
  CHECK(std::get<LinearSvm>(r.classifier.stages()[0].classifier).w == plain.model.w);
}

TEST_CASE("deepening shrinks the candidate set on separated blobs") {
  const EmbeddedDataset d = blob_data(500, 4.0, 6);
  DeepeningParams p;
  p.p_th = 0.95;
  for (TrainingStrategy strategy : {TrainingStrategy::CandidatesOnly, TrainingStrategy::AllReceived}) {
    p.strategy = strategy;
    const DeepeningResult r = run_deepening(d, 2, p);
    REQUIRE(r.chain_sizes.size() == 2);
    CHECK(r.chain_sizes[1] < r.chain_sizes[0]);
    for (std::size_t k = 1; k < r.states.size(); ++k) {
      CHECK(r.states[k].members.size() <= r.states[k - 1].members.size());
      for (std::size_t m : r.states[k].members) {
        CHECK(std::find(r.states[k - 1].members.begin(), r.states[k - 1].members.end(), m) !=
              r.states[k - 1].members.end());
      }
    }
    // Every sample ends with exactly one outcome.
    const AcsState& last = r.states.back();
    CHECK(last.members.size() + last.settled.size() == d.size());
  }
}

TEST_CASE("deepening session exposes rounds and logs") {
  const EmbeddedDataset d = blob_data(200, 3.0, 7);
  const EmbeddedDataset test = blob_data(100, 3.0, 8);
  DeepeningSession s(d, 2, DeepeningParams{}, nullptr, &test);
  CHECK_THROWS_AS(s.close_round(), std::logic_error);
  s.train_round();
  CHECK_THROWS_AS(s.train_round(), std::logic_error);
  s.close_round();
  CHECK(s.logs().size() == 1);
  CHECK(s.logs()[0].heldout_accuracy.has_value());
  CHECK(*s.logs()[0].heldout_accuracy > 0.8);
  CHECK_THROWS_AS(DeepeningSession(d, 3, DeepeningParams{}), std::invalid_argument);
}

TEST_CASE("network deepening on three classes") {
  RawDataset raw = gen_synthetic([] {
    SyntheticParams p;
    p.seed = 3;
    for (int c = 0; c < 3; ++c) {
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(6);
      mu(c) = 4.0;
      p.classes.push_back({mu, Eigen::MatrixXd::Identity(6, 6) * 0.5, 150});
    }
    return p;
  }());
  auto model = std::make_shared<EmbeddingModel>(fit_pca(raw.samples, 4));
  const EmbeddedDataset d = embed_dataset(raw, *model);
  DeepeningParams p;
  p.moc = MocKind::NegEntropy;
  p.z_th = 0.02;
  p.train = TrainSpec::mlp_defaults();
  p.hidden = {16, 8};
  const DeepeningResult r = run_deepening(d, 3, p, model, &d);
  CHECK(r.logs.front().heldout_accuracy.value() > 0.6);
  for (std::size_t k = 1; k < r.chain_sizes.size(); ++k) CHECK(r.chain_sizes[k] <= r.chain_sizes[k - 1]);
  for (const auto& l : r.logs) CHECK(l.epoch_loss.size() == 10);
  CHECK_THROWS_AS(run_deepening(d, 3, p, nullptr), std::invalid_argument);
}

TEST_CASE("hierarchical inference on MNIST 3-vs-5 is close to the deepest classifier") {
  const RawDataset all = load_idx(JD2P_DATA_DIR "/mnist/images-idx3-ubyte",
                                  JD2P_DATA_DIR "/mnist/labels-idx1-ubyte");
  const int pair[] = {3, 5};
  const Split sp = split(select_classes(all, pair), 1300, 595, 11);
  const EmbeddingModel model = fit_pca(sp.train.samples, 10);
  const EmbeddedDataset train = embed_dataset(sp.train, model);
  const EmbeddedDataset test = embed_dataset(sp.test, model);
  DeepeningParams p;
  p.p_th = 0.99;
  const DeepeningResult r = run_deepening(train, 10, p, nullptr, &test);
  for (std::size_t k = 1; k < r.chain_sizes.size(); ++k) CHECK(r.chain_sizes[k] <= r.chain_sizes[k - 1]);

  const auto& deepest = std::get<LinearSvm>(r.classifier.stages().back().classifier);
  const int K = r.classifier.depth();
  int cascade = 0, direct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Eigen::VectorXd x = test.features.row(static_cast<Eigen::Index>(i)).transpose();
    cascade += r.classifier.infer(x).label == test.labels[i];
    direct += deepest.predict(x.head(K)) == test.labels[i];
  }
  const double n = static_cast<double>(test.size());
  CHECK(std::abs(cascade / n - direct / n) <= 0.02);
  CHECK(cascade / n == doctest::Approx(r.logs.back().heldout_accuracy.value()));
}
