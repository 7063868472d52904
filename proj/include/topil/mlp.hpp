// mlp.hpp - fully-connected regression network, Adam training, grid search, model files
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topil/oracle.hpp"

namespace topil {

struct ModelSpec {
  int input_dim = kNumFeatures;
  std::vector<int> hidden{64, 64, 64, 64};
  int output_dim = kNumCores;

  void validate() const;
  std::string label() const;  // e.g. "4x64"
  bool operator==(const ModelSpec&) const = default;
};

struct TrainConfig {
  double lr0 = 0.01;
  double decay = 0.95;  // lr = lr0 * decay^epoch
  int batch_size = 64;
  int max_epochs = 500;
  int patience = 20;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int final_epoch = 0;
  int best_epoch = 0;
  double val_loss = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MlpModel {
 public:
  MlpModel() = default;
  /// Zero weights and biases.
  explicit MlpModel(ModelSpec spec);
  /// He-normal weights from a seeded generator, zero biases.
  static MlpModel he_init(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  Normalizer normalizer;
  TrainingMeta meta;

  /// Row k of the result is the output for row k of `rows` (already normalized). The
  /// result for a row does not depend on the other rows of the batch.
  Eigen::MatrixXd infer_batch(const Eigen::MatrixXd& rows) const;
  /// Normalizes raw feature vectors with the frozen normalizer, then infers.
  Eigen::MatrixXd rate(const std::vector<FeatureVector>& rows) const;

  void save(const std::filesystem::path& path) const;
  /// Throws on a bad magic, version, truncation or a dimension mismatch with the
  /// expected sizes (when given).
  static MlpModel load(const std::filesystem::path& path, std::optional<int> input_dim = kNumFeatures,
                       std::optional<int> output_dim = kNumCores);

  bool operator==(const MlpModel& o) const;

 private:
  ModelSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct Dataset {
  Eigen::MatrixXd X;  // rows x input_dim, normalized
  Eigen::MatrixXd Y;  // rows x output_dim
  std::vector<std::string> groups;  // stratification key per row

  Eigen::Index rows() const { return X.rows(); }
  Dataset subset(const std::vector<Eigen::Index>& idx) const;
};

/// Builds a dataset from examples, fitting nothing: the normalizer is supplied.
Dataset make_dataset(const std::vector<TrainingExample>& examples, const Normalizer& norm);
/// ref_ips from the library; ref_l2d = 95th percentile of the examples' L2D feature.
Normalizer fit_normalizer(const std::vector<TrainingExample>& examples, double ref_ips);

/// Validation rows are drawn per group so every group contributes about `fraction`.
std::pair<Dataset, Dataset> split_stratified(const Dataset& data, double fraction, std::uint64_t seed);

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

/// Mean squared error over all outputs; fills `grad` when non-null.
double mse_loss(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Gradients* grad = nullptr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  MlpModel model;  // best-validation snapshot
  std::vector<EpochRecord> curve;
};

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelSpec& spec, const TrainConfig& cfg);
/// Splits off the validation set with split_stratified, then trains.
TrainResult train(const Dataset& data, const ModelSpec& spec, const TrainConfig& cfg);

void write_curve_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curve);

struct GridEntry {
  ModelSpec spec;
  std::vector<double> val_losses;  // one per seed
  double mean_val = 0.0;
  double std_val = 0.0;
};

/// Trains every depth x width combination with each seed; sorted ascending by mean val loss.
std::vector<GridEntry> grid_search(const Dataset& data, const std::vector<int>& depths, const std::vector<int>& widths,
                                   const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds = {0, 1, 2});

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridEntry>& entries);

}  // namespace topil
