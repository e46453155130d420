#include "jd2p/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace jd2p {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw std::runtime_error(path + ": unexpected end of file");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return in;
}

}  // namespace

void RawDataset::validate() const {
  if (static_cast<std::size_t>(samples.rows()) != labels.size()) {
    throw std::invalid_argument("dataset: sample rows and labels differ in count");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw std::invalid_argument("dataset: label out of range");
  }
}

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img = open_in(images_path);
  std::ifstream lab = open_in(labels_path);
  if (read_be32(img, images_path) != 0x803) throw std::runtime_error(images_path + ": bad magic (want 0x00000803)");
  if (read_be32(lab, labels_path) != 0x801) throw std::runtime_error(labels_path + ": bad magic (want 0x00000801)");
  const std::uint32_t n = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);
  const std::uint32_t n_labels = read_be32(lab, labels_path);
  if (n != n_labels) throw std::runtime_error("image/label count mismatch");
  const std::size_t d = std::size_t{rows} * cols;
  if (d == 0) throw std::runtime_error(images_path + ": zero-sized images");

  RawDataset out;
  out.samples.resize(n, static_cast<Eigen::Index>(d));
  std::vector<unsigned char> buf(d);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d));
    if (static_cast<std::size_t>(img.gcount()) != d) {
      throw std::runtime_error(images_path + ": unexpected end of file");
    }
    for (std::size_t j = 0; j < d; ++j) out.samples(i, static_cast<Eigen::Index>(j)) = buf[j] / 255.0;
  }
  std::vector<unsigned char> lbuf(n);
  lab.read(reinterpret_cast<char*>(lbuf.data()), n);
  if (static_cast<std::uint32_t>(lab.gcount()) != n) {
    throw std::runtime_error(labels_path + ": unexpected end of file");
  }
  out.labels.assign(lbuf.begin(), lbuf.end());
  out.num_classes = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  return out;
}

void write_idx(const RawDataset& data, int rows, int cols, const std::string& images_path,
               const std::string& labels_path) {
  data.validate();
  if (rows * cols != data.dim()) throw std::invalid_argument("write_idx: rows*cols != D");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("write_idx: cannot open output");
  write_be32(img, 0x803);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lab, 0x801);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.samples.cols(); ++j) {
      const double v = std::clamp(data.samples(i, j), 0.0, 1.0);
      img.put(static_cast<char>(std::lround(v * 255.0)));
    }
    const int l = data.labels[static_cast<std::size_t>(i)];
    if (l > 255) throw std::invalid_argument("write_idx: label does not fit a byte");
    lab.put(static_cast<char>(l));
  }
}

RawDataset gen_synthetic(const SyntheticParams& params) {
  if (params.classes.size() < 2) throw std::invalid_argument("gen_synthetic: need >= 2 classes");
  const Eigen::Index d = params.classes.front().mean.size();
  std::vector<Eigen::MatrixXd> factors;
  std::size_t total = 0;
  for (const auto& c : params.classes) {
    if (c.mean.size() != d || c.covariance.rows() != d || c.covariance.cols() != d) {
      throw std::invalid_argument("gen_synthetic: inconsistent class dimensions");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
    if (llt.info() != Eigen::Success || !c.covariance.isApprox(c.covariance.transpose())) {
      throw std::invalid_argument("gen_synthetic: covariance must be symmetric positive definite");
    }
    factors.push_back(llt.matrixL());
    total += c.count;
  }

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> normal;
  RawDataset out;
  out.num_classes = static_cast<int>(params.classes.size());
  out.samples.resize(static_cast<Eigen::Index>(total), d);
  std::vector<std::size_t> left;
  for (const auto& c : params.classes) left.push_back(c.count);
  Eigen::Index row = 0;
  Eigen::VectorXd z(d);
  while (row < static_cast<Eigen::Index>(total)) {
    for (std::size_t c = 0; c < params.classes.size(); ++c) {
      if (left[c] == 0) continue;
      --left[c];
      for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
      out.samples.row(row++) = (params.classes[c].mean + factors[c] * z).transpose();
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

SyntheticParams blob_params(std::size_t per_class, int dim, double separation,
                            std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("blob_params: need dim >= 2");
  SyntheticParams p;
  p.seed = seed;
  // Geometric variance spectrum so the principal axes are well ordered; the
  // class offset decays along them.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd offset(dim);
  for (int i = 0; i < dim; ++i) {
    cov(i, i) = std::pow(0.7, i);
    offset(i) = 0.5 * separation * std::pow(0.6, i);
  }
  p.classes.push_back({-offset, cov, per_class});
  p.classes.push_back({offset, cov, per_class});
  return p;
}

RawDataset select_classes(const RawDataset& data, std::span<const int> classes) {
  std::vector<int> map(static_cast<std::size_t>(std::max(data.num_classes, 1)), -1);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= data.num_classes) {
      throw std::invalid_argument("select_classes: class not present");
    }
    map[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (map[static_cast<std::size_t>(data.labels[i])] >= 0) rows.push_back(i);
  }
  RawDataset out = take_rows(data, rows);
  for (int& l : out.labels) l = map[static_cast<std::size_t>(l)];
  out.num_classes = static_cast<int>(classes.size());
  return out;
}

RawDataset take_rows(const RawDataset& data, std::span<const std::size_t> rows) {
  RawDataset out;
  out.num_classes = data.num_classes;
  out.samples.resize(static_cast<Eigen::Index>(rows.size()), data.samples.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) throw std::out_of_range("take_rows: row index");
    out.samples.row(static_cast<Eigen::Index>(i)) = data.samples.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

Split split(const RawDataset& data, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > data.size()) {
    throw std::invalid_argument("split: requested " + std::to_string(n_train + n_test) +
                                " samples, have " + std::to_string(data.size()));
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  return {take_rows(data, all.subspan(0, n_train)), take_rows(data, all.subspan(n_train, n_test))};
}

EmbeddedDataset embed_dataset(const RawDataset& data, const EmbeddingModel& model) {
  data.validate();
  return {model.embed_rows(data.samples), data.labels, data.num_classes};
}

FeatureRange feature_range(const EmbeddedDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("feature_range: empty dataset");
  return {data.features.colwise().minCoeff().transpose(), data.features.colwise().maxCoeff().transpose()};
}

void quantize_features(EmbeddedDataset& data, const FeatureRange& range, int bits) {
  if (bits < 1 || bits > 52) throw std::invalid_argument("quantize: bits outside [1, 52]");
  if (range.lo.size() != data.features.cols() || range.hi.size() != data.features.cols()) {
    throw std::invalid_argument("quantize: range does not match feature count");
  }
  const double levels = std::ldexp(1.0, bits) - 1.0;
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
    const double lo = range.lo(j), width = range.hi(j) - range.lo(j);
    if (!(width > 0.0)) {
      data.features.col(j).setConstant(lo);
      continue;
    }
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
      const double t = std::clamp((data.features(i, j) - lo) / width, 0.0, 1.0);
      data.features(i, j) = lo + std::round(t * levels) / levels * width;
    }
  }
}

}  // namespace jd2p
