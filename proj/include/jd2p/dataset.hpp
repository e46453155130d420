#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jd2p/embedding.hpp"

namespace jd2p {

/// Raw samples (n x D, one per row) with class labels in [0, num_classes).
struct RawDataset {
  Eigen::MatrixXd samples;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(samples.cols()); }
  void validate() const;
};

/// Reads an IDX image/label pair (magic 0x803 / 0x801, big-endian). Pixel
/// bytes are scaled to [0, 1]; num_classes is max label + 1.
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes `data` as an IDX pair with rows x cols images; values in [0, 1] are
/// rounded to bytes.
void write_idx(const RawDataset& data, int rows, int cols, const std::string& images_path,
               const std::string& labels_path);

struct GaussianClass {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

struct SyntheticParams {
  std::vector<GaussianClass> classes;
  std::uint64_t seed = 1;
};

/// Seeded Gaussian class-conditional samples, classes interleaved round-robin.
/// Covariances must be SPD.
RawDataset gen_synthetic(const SyntheticParams& params);

/// Two anisotropic classes in `dim` dimensions whose separation lives in the
/// leading directions. Used as the default desk-scale synthetic workload.
SyntheticParams blob_params(std::size_t per_class, int dim, double separation,
                            std::uint64_t seed);

/// Keeps only `classes`, relabelled to their position in the list.
RawDataset select_classes(const RawDataset& data, std::span<const int> classes);

RawDataset take_rows(const RawDataset& data, std::span<const std::size_t> rows);

struct Split {
  RawDataset train;
  RawDataset test;
};

/// Seeded disjoint split: shuffles once, takes n_train then n_test rows.
Split split(const RawDataset& data, std::size_t n_train, std::size_t n_test, std::uint64_t seed);

EmbeddedDataset embed_dataset(const RawDataset& data, const EmbeddingModel& model);

/// Per-feature [min, max] over a dataset.
struct FeatureRange {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

FeatureRange feature_range(const EmbeddedDataset& data);

/// Uniform `bits`-bit quantisation of every feature over `range`; values
/// outside the range are clamped first.
void quantize_features(EmbeddedDataset& data, const FeatureRange& range, int bits);

}  // namespace jd2p
