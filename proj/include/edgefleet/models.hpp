#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/time.hpp"

namespace edgefleet {

/// Listing order doubles as the tie-break order when two algorithms score the same.
enum class Algorithm { kMlr, kSvr, kElm, kRfr };
inline constexpr std::array<Algorithm, 4> kAllAlgorithms = {Algorithm::kMlr, Algorithm::kSvr,
                                                            Algorithm::kElm, Algorithm::kRfr};

std::string_view to_string(Algorithm algorithm);
/// Case-insensitive "mlr" / "svr" / "elm" / "rfr".
Algorithm parse_algorithm(std::string_view text);

/// Per-feature standardization. Population standard deviation; constant
/// columns get std_dev 1.0 so they map to zero.
struct ScalerParams {
  Features means{};
  Features std_devs{1, 1, 1, 1, 1, 1};
  bool operator==(const ScalerParams&) const = default;
};

struct LinearParams {
  Features weights{};
  double intercept = 0.0;
  bool operator==(const LinearParams&) const = default;
};

struct SvrParams {
  Features weights{};
  double intercept = 0.0;
  double epsilon = 0.1;
  double c = 1.0;
  int epochs = 200;
  double learning_rate = 0.01;
  bool operator==(const SvrParams&) const = default;
};

struct ElmParams {
  int hidden = 0;
  std::string activation = "tanh";
  std::uint64_t seed = 0;
  std::vector<double> input_weights;  // hidden x 6, row-major
  std::vector<double> input_biases;   // hidden
  std::vector<double> output_weights; // hidden
  double output_bias = 0.0;
  bool operator==(const ElmParams&) const = default;
};

/// Array-encoded node. feature < 0 marks a leaf; internal nodes send
/// x[feature] <= threshold to `left`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  bool operator==(const RegressionTree&) const = default;
};

struct ForestParams {
  std::vector<RegressionTree> trees;
  int max_depth = 10;
  int min_leaf = 5;
  int feature_subset = 2;
  std::uint64_t seed = 0;
  bool operator==(const ForestParams&) const = default;
};

using ModelParams = std::variant<LinearParams, SvrParams, ElmParams, ForestParams>;

Algorithm algorithm_of(const ModelParams& params);

struct SvrConfig {
  double epsilon = 0.1;  // in units of the standardized target
  double c = 1.0;
  int epochs = 200;
  double learning_rate = 0.01;  // decays as lr / epoch
};

struct ElmConfig {
  int hidden = 64;
  double ridge = 1e-6;
};

struct ForestConfig {
  int trees = 100;
  int max_depth = 10;
  int min_leaf = 5;
  int feature_subset = 2;
  int max_bins = 64;  // candidate thresholds per feature
};

struct TrainConfig {
  double mlr_damping = 1e-8;
  SvrConfig svr;
  ElmConfig elm;
  ForestConfig forest;
};

struct ModelArtifact {
  ModelVersion version;
  Algorithm algorithm = Algorithm::kMlr;
  ScalerParams scaler;
  ModelParams params;
  Instant trained_at{};
  Instant window_start{};
  Instant window_end{};
  double cv_rmse = 0.0;
  double test_rmse = 0.0;
  std::string room;
};

ScalerParams fit_scaler(std::span<const Features> rows);
ScalerParams fit_scaler(std::span<const FeatureVector> rows);
Features apply_scaler(const ScalerParams& params, const Features& x);
std::vector<Features> apply_scaler(const ScalerParams& params, std::span<const Features> rows);

/// Deterministic in (algorithm, rows, targets, config, seed). Rows must
/// already be scaled.
ModelParams train(Algorithm algorithm, std::span<const Features> rows, std::span<const double> targets,
                  const TrainConfig& config = {}, std::uint64_t seed = 0);

LinearParams train_mlr(std::span<const Features> rows, std::span<const double> targets, double damping);

/// `epoch_losses`, when given, receives the regularized objective after every
/// epoch. The returned model is the lowest-objective iterate seen, so its
/// loss never exceeds the first entry.
SvrParams train_svr(std::span<const Features> rows, std::span<const double> targets, const SvrConfig& config,
                    std::uint64_t seed, std::vector<double>* epoch_losses = nullptr);
double svr_objective(const SvrParams& params, std::span<const Features> rows, std::span<const double> targets);

ElmParams train_elm(std::span<const Features> rows, std::span<const double> targets, const ElmConfig& config,
                    std::uint64_t seed);
ForestParams train_forest(std::span<const Features> rows, std::span<const double> targets,
                          const ForestConfig& config, std::uint64_t seed);

double predict_tree(const RegressionTree& tree, const Features& scaled);
/// Forward pass on already-scaled input.
double predict_scaled(const ModelParams& params, const Features& scaled);
double predict(const ModelArtifact& artifact, const Features& raw);
double predict(const ModelArtifact& artifact, const FeatureVector& x);

double rmse(std::span<const double> predictions, std::span<const double> actuals);

/// Half-open [begin, end) index ranges; the first n % k folds get one extra row.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t k);

struct CvResult {
  double cv_rmse = 0.0;
  std::vector<double> fold_rmses;
  std::vector<std::pair<std::size_t, std::size_t>> folds;
};

/// k-fold CV over contiguous, unshuffled folds. Scaler and model are refit on
/// the other k-1 folds for every held-out fold. `rows` are raw features.
CvResult cross_validate(Algorithm algorithm, std::span<const Features> rows, std::span<const double> targets,
                        std::size_t k, std::uint64_t seed, const TrainConfig& config = {});

struct AlgorithmEvaluation {
  Algorithm algorithm = Algorithm::kMlr;
  double cv_rmse = 0.0;
  std::vector<double> fold_rmses;
  double test_rmse = 0.0;  // fit on the first 80%, scored on the last 20%
};

AlgorithmEvaluation evaluate_algorithm(Algorithm algorithm, std::span<const LabeledExample> examples,
                                       std::size_t folds, std::uint64_t seed, const TrainConfig& config = {});

/// Index into `evaluations` of the lowest cv_rmse; earlier entries win ties.
std::size_t select_best(std::span<const AlgorithmEvaluation> evaluations);

/// Fits scaler + model on every example and packages the result. The
/// artifact is unregistered (version 0).
ModelArtifact fit_artifact(Algorithm algorithm, std::span<const LabeledExample> examples, std::string room,
                           Instant trained_at, std::uint64_t seed, const TrainConfig& config = {});

/// Structural checks (dimensions, finite scaler, tree shape, metric ranges).
/// Throws Error(kArtifactVerificationFailed).
void validate_artifact(const ModelArtifact& artifact);

inline constexpr int kArtifactFormatVersion = 1;

/// Text artifact (.mdl): "key: value" header, blank line, body of named
/// numeric blocks. The header's checksum is the CRC32 of the body bytes.
std::string serialize(const ModelArtifact& artifact);
/// Throws kFormatVersionMismatch or kCorruptArtifact.
ModelArtifact deserialize(std::string_view bytes);

std::uint32_t crc32(std::string_view bytes);

/// Seed for a named component derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace edgefleet
