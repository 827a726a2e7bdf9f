#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssair/reverse_ad.hpp"

namespace ssair {

struct DenseLayerParams {
  DenseTensor W;  // out x in
  DenseTensor b;  // out
};

/// Heads are single dense layers to one output.
struct ModelParams {
  std::vector<DenseLayerParams> trunk;
  std::vector<DenseLayerParams> class_head;
  std::vector<DenseLayerParams> domain_head;

  /// Flattened in argument order: W, b for trunk layers, class head, domain head.
  std::vector<RuntimeValue> flatten() const;
  static ModelParams unflatten(const ModelParams& like, std::span<const RuntimeValue> flat);
};

struct DANConfig {
  double lambda = 1.0;
  double lr = 0.05;
  int64_t epochs = 50;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  double rho = 0.95;
  // model and data shape
  std::vector<int64_t> layer_sizes{16, 8};  // input, then trunk widths
  int64_t n_train = 1024;
  int64_t n_test = 1000;
  int64_t n_probe = 1000;  // per probe split
  double class_shift = 1.0;
  double domain_shift = 1.5;
  double noise_sd = 5.0;

  void validate() const;
  static DANConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SyntheticSample {
  DenseTensor x;
  int y_c = 0;
  int y_d = 0;
};

/// Feature 0 carries the class, feature 1 the dataset signature, the rest is
/// noise. P(y_d = 1 | y_c = 1) = P(y_d = 0 | y_c = 0) = rho.
std::vector<SyntheticSample> make_synthetic(const DANConfig& cfg, int64_t n, double rho,
                                            uint64_t stream);
std::vector<SyntheticSample> make_synthetic(const DANConfig& cfg);

/// @model_forward(params..., x: tensor<d>) -> (y_c_hat, y_d_hat).
ProgramModule build_model_ir(const std::vector<int64_t>& layer_sizes);

/// Adds @dan_loss(params..., X: tensor<N x d>, y_c, y_d: tensor<N>, lambda) ->
/// (c_loss, d_loss) and @dan_eval(params..., X) -> (y_c_hat, y_d_hat, features)
/// for minibatches of n rows.
void add_minibatch_ir(ProgramModule& m, const std::vector<int64_t>& layer_sizes, int64_t n);

ModelParams init_params(const std::vector<int64_t>& layer_sizes, uint64_t seed);

struct StepMetrics {
  double c_loss = 0, d_loss = 0;
};

/// Gradient-ready loss for one minibatch size.
struct DanLoss {
  AdjointProgram adjoint;
  int64_t rows = 0;
};

DanLoss build_dan_loss(const std::vector<int64_t>& layer_sizes, int64_t rows);

/// Per-parameter gradient of c_loss + d_loss, from two pullbacks of one
/// forward pass.
std::vector<RuntimeValue> dan_gradient(const DanLoss& loss, const ModelParams& p,
                                       std::span<const SyntheticSample> batch, double lambda,
                                       StepMetrics* metrics = nullptr);

/// One plain gradient descent step.
ModelParams dan_step(const DanLoss& loss, const ModelParams& p,
                     std::span<const SyntheticSample> batch, const DANConfig& cfg,
                     StepMetrics* metrics = nullptr);

struct EpochMetrics {
  int64_t epoch = 0;
  double c_loss = 0, d_loss = 0, class_acc = 0, domain_probe_acc = 0;
};

struct MetricsHistory {
  std::vector<EpochMetrics> epochs;
  ModelParams final_params;
};

MetricsHistory train(const DANConfig& cfg);

/// Accuracy on a held-out set of a logistic-regression probe fit on frozen
/// trunk features to predict y_d.
double domain_probe_accuracy(const ModelParams& p, std::span<const SyntheticSample> fit,
                             std::span<const SyntheticSample> eval);
double class_accuracy(const ModelParams& p, std::span<const SyntheticSample> data);

std::string metrics_jsonl(const MetricsHistory& h);
nlohmann::json params_to_json(const ModelParams& p);

}  // namespace ssair
