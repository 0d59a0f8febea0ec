#pragma once

#include <cstdint>
#include <vector>

#include "spillcast/dataset.hpp"
#include "spillcast/models.hpp"

namespace spillcast {

struct TrainConfig {
  ModelKind kind = ModelKind::gcn;
  int layers = 2;  // propagation depth k
  int hidden = 32;
  int msg_hidden = 16;
  double learning_rate = 0.01;
  double theta = 1e-4;   // weight of the parameter-norm penalty
  double lambda = 0.5;   // weight of the per-user status loss
  int batch_size = 10;
  int max_epochs = 200;
  int patience = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate(std::size_t train_size) const;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Seeded shuffle, then fractional cut: floor(train_frac*n) train,
// floor(val_frac*n) val, remainder test.
SplitIndices split_dataset(std::size_t count, std::uint64_t seed, double train_frac = 0.70,
                           double val_frac = 0.15);

struct Metrics {
  double mrse = 0.0;
  double mape = 0.0;
  double wro_perc = 0.0;  // percent of cascades with relative error >= threshold
  std::size_t count = 0;
};

// Mean relative square error, (1/M) sum ((pred-truth)/truth)^2.
double mrse_loss(const std::vector<double>& predictions, const std::vector<double>& truths);

Metrics compute_metrics(const std::vector<double>& predictions,
                        const std::vector<double>& truths, double wro_threshold = 0.5);

// Mean over users of the clipped cross-entropy between predicted status
// probabilities and binary adoption labels.
double user_cross_entropy(const Eigen::VectorXd& statuses, const Eigen::VectorXd& labels);

// mrse + theta * (sum of per-tensor L2 norms) + lambda * user_cross_entropy.
double regularized_loss(double mrse, const ad::ParameterSet& params,
                        const Eigen::VectorXd& statuses, const Eigen::VectorXd& labels,
                        double theta, double lambda);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // full objective over the training set
  double train_mrse = 0.0;
  double val_mrse = 0.0;
};

struct TrainResult {
  PopularityModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mrse = 0.0;
};

// Mini-batch SGD with gradient clipping; keeps the parameter snapshot with
// the lowest validation MRSE and stops after `patience` epochs without
// improvement. An empty validation set falls back to the training MRSE.
TrainResult train_model(const ModelDataset& ds, const SplitIndices& split,
                        const TrainConfig& cfg);

std::vector<double> predict_items(PopularityModel& model, const ModelDataset& ds,
                                  const std::vector<int>& subset);

struct SubsetMetrics {
  Metrics all;
  Metrics preventive;  // items whose root message carries the preventive topic
  Metrics other;
};

SubsetMetrics evaluate_subsets(const std::vector<double>& predictions, const ModelDataset& ds,
                               const std::vector<int>& subset, double wro_threshold = 0.5);

}  // namespace spillcast
