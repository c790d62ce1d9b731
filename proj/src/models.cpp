#include "edgefleet/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "edgefleet/error.hpp"

namespace edgefleet {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kMlr: return "MLR";
    case Algorithm::kSvr: return "SVR";
    case Algorithm::kElm: return "ELM";
    case Algorithm::kRfr: return "RFR";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == upper) return a;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown algorithm '" + std::string(text) + "'");
}

Algorithm algorithm_of(const ModelParams& params) {
  return static_cast<Algorithm>(params.index());
}

// ---------------------------------------------------------------------------

ScalerParams fit_scaler(std::span<const Features> rows) {
  if (rows.empty()) throw Error(ErrorCode::kEmptyInput, "cannot fit a scaler on zero rows");
  ScalerParams p;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double lo = rows[0][j];
    double hi = rows[0][j];
    double sum = 0.0;
    for (const auto& r : rows) {
      sum += r[j];
      lo = std::min(lo, r[j]);
      hi = std::max(hi, r[j]);
    }
    if (lo == hi) {
      // Exact constant: the computed mean could be off by an ulp, which
      // would leave tiny non-zero transformed values.
      p.means[j] = lo;
      p.std_devs[j] = 1.0;
      continue;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[j] - mean) * (r[j] - mean);
    const double sd = std::sqrt(ss / n);
    p.means[j] = mean;
    p.std_devs[j] = sd > 0.0 ? sd : 1.0;
  }
  return p;
}

ScalerParams fit_scaler(std::span<const FeatureVector> rows) {
  std::vector<Features> values;
  values.reserve(rows.size());
  for (const auto& r : rows) values.push_back(r.values);
  return fit_scaler(values);
}

Features apply_scaler(const ScalerParams& params, const Features& x) {
  Features out;
  for (std::size_t j = 0; j < kFeatureCount; ++j) out[j] = (x[j] - params.means[j]) / params.std_devs[j];
  return out;
}

std::vector<Features> apply_scaler(const ScalerParams& params, std::span<const Features> rows) {
  std::vector<Features> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(apply_scaler(params, r));
  return out;
}

double predict(const ModelArtifact& artifact, const Features& raw) {
  return predict_scaled(artifact.params, apply_scaler(artifact.scaler, raw));
}

double predict(const ModelArtifact& artifact, const FeatureVector& x) { return predict(artifact, x.values); }

double rmse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) {
    throw Error(ErrorCode::kLengthMismatch, "rmse: " + std::to_string(predictions.size()) + " predictions vs " +
                                                std::to_string(actuals.size()) + " actuals");
  }
  if (predictions.empty()) throw Error(ErrorCode::kEmptyInput, "rmse of empty vectors");
  double ss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - actuals[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predictions.size()));
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t k) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 folds");
  if (n < k) {
    throw Error(ErrorCode::kInsufficientData,
                std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::pair<std::size_t, std::size_t>> folds;
  folds.reserve(k);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t begin = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds.emplace_back(begin, begin + size);
    begin += size;
  }
  return folds;
}

namespace {

/// Fit scaler + model on `train_rows` and return predictions on `eval_rows`.
std::vector<double> fit_and_predict(Algorithm algorithm, std::span<const Features> train_rows,
                                    std::span<const double> train_targets, std::span<const Features> eval_rows,
                                    std::uint64_t seed, const TrainConfig& config) {
  const ScalerParams scaler = fit_scaler(train_rows);
  const auto scaled = apply_scaler(scaler, train_rows);
  const ModelParams params = train(algorithm, scaled, train_targets, config, seed);
  std::vector<double> out;
  out.reserve(eval_rows.size());
  for (const auto& r : eval_rows) out.push_back(predict_scaled(params, apply_scaler(scaler, r)));
  return out;
}

void split_examples(std::span<const LabeledExample> examples, std::vector<Features>& rows,
                    std::vector<double>& targets) {
  rows.clear();
  targets.clear();
  rows.reserve(examples.size());
  targets.reserve(examples.size());
  for (const auto& e : examples) {
    rows.push_back(e.features.values);
    targets.push_back(e.label);
  }
}

}  // namespace

CvResult cross_validate(Algorithm algorithm, std::span<const Features> rows, std::span<const double> targets,
                        std::size_t k, std::uint64_t seed, const TrainConfig& config) {
  if (rows.size() != targets.size()) throw Error(ErrorCode::kLengthMismatch, "rows and targets differ in length");
  CvResult result;
  result.folds = contiguous_folds(rows.size(), k);
  std::vector<Features> train_rows;
  std::vector<double> train_targets;
  for (const auto& [begin, end] : result.folds) {
    train_rows.clear();
    train_targets.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i >= begin && i < end) continue;
      train_rows.push_back(rows[i]);
      train_targets.push_back(targets[i]);
    }
    const auto predictions = fit_and_predict(algorithm, train_rows, train_targets, rows.subspan(begin, end - begin),
                                             seed, config);
    result.fold_rmses.push_back(rmse(predictions, targets.subspan(begin, end - begin)));
  }
  result.cv_rmse = std::accumulate(result.fold_rmses.begin(), result.fold_rmses.end(), 0.0) /
                   static_cast<double>(result.fold_rmses.size());
  return result;
}

AlgorithmEvaluation evaluate_algorithm(Algorithm algorithm, std::span<const LabeledExample> examples,
                                       std::size_t folds, std::uint64_t seed, const TrainConfig& config) {
  std::vector<Features> rows;
  std::vector<double> targets;
  split_examples(examples, rows, targets);
  AlgorithmEvaluation eval;
  eval.algorithm = algorithm;
  const CvResult cv = cross_validate(algorithm, rows, targets, folds, seed, config);
  eval.cv_rmse = cv.cv_rmse;
  eval.fold_rmses = cv.fold_rmses;

  // Chronological 80/20 holdout.
  const std::size_t cut = rows.size() * 4 / 5;
  if (cut == 0 || cut == rows.size()) {
    throw Error(ErrorCode::kInsufficientData, "too few examples for an 80/20 split");
  }
  const std::span<const Features> all_rows(rows);
  const std::span<const double> all_targets(targets);
  const auto predictions = fit_and_predict(algorithm, all_rows.first(cut), all_targets.first(cut),
                                           all_rows.subspan(cut), seed, config);
  eval.test_rmse = rmse(predictions, all_targets.subspan(cut));
  return eval;
}

std::size_t select_best(std::span<const AlgorithmEvaluation> evaluations) {
  if (evaluations.empty()) throw Error(ErrorCode::kEmptyInput, "no evaluations to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < evaluations.size(); ++i) {
    if (evaluations[i].cv_rmse < evaluations[best].cv_rmse) best = i;
  }
  return best;
}

ModelArtifact fit_artifact(Algorithm algorithm, std::span<const LabeledExample> examples, std::string room,
                           Instant trained_at, std::uint64_t seed, const TrainConfig& config) {
  if (examples.empty()) throw Error(ErrorCode::kInsufficientData, "no examples to fit");
  std::vector<Features> rows;
  std::vector<double> targets;
  split_examples(examples, rows, targets);
  ModelArtifact a;
  a.algorithm = algorithm;
  a.scaler = fit_scaler(rows);
  a.params = train(algorithm, apply_scaler(a.scaler, rows), targets, config, seed);
  a.trained_at = trained_at;
  a.window_start = examples.front().features.timestamp;
  // The window ends at the last label's sampling instant.
  a.window_end = examples.back().features.timestamp + kLabelShift * kSamplingInterval;
  a.room = std::move(room);
  return a;
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void reject(const std::string& why) { throw Error(ErrorCode::kArtifactVerificationFailed, why); }

template <typename Range>
bool finite_range(const Range& values) {
  return std::all_of(std::begin(values), std::end(values), [](double v) { return std::isfinite(v); });
}

void validate_tree(const RegressionTree& tree) {
  if (tree.nodes.empty()) reject("empty regression tree");
  const int size = static_cast<int>(tree.nodes.size());
  std::vector<int> parents(tree.nodes.size(), 0);
  for (int i = 0; i < size; ++i) {
    const TreeNode& n = tree.nodes[i];
    if (!std::isfinite(n.value)) reject("non-finite leaf value");
    if (n.feature < 0) {
      if (n.left != -1 || n.right != -1) reject("leaf with children");
      continue;
    }
    if (n.feature >= static_cast<int>(kFeatureCount) || !std::isfinite(n.threshold)) reject("bad split node");
    if (n.left <= i || n.right <= i || n.left >= size || n.right >= size || n.left == n.right) {
      reject("child index must exceed parent index");
    }
    ++parents[n.left];
    ++parents[n.right];
  }
  if (parents[0] != 0) reject("root has a parent");
  for (int i = 1; i < size; ++i) {
    if (parents[i] != 1) reject("node without exactly one parent");
  }
}

}  // namespace

void validate_artifact(const ModelArtifact& a) {
  if (algorithm_of(a.params) != a.algorithm) reject("algorithm tag does not match parameters");
  if (!finite_range(a.scaler.means) || !finite_range(a.scaler.std_devs)) reject("non-finite scaler");
  for (double sd : a.scaler.std_devs) {
    if (!(sd > 0.0)) reject("scaler std_dev must be positive");
  }
  if (!(a.cv_rmse >= 0.0) || !(a.test_rmse >= 0.0)) reject("rmse metrics must be non-negative");
  if (!(a.window_start < a.window_end)) reject("training window start must precede end");
  if (a.room.empty()) reject("artifact has no room");

  struct Visitor {
    void operator()(const LinearParams& p) const {
      if (!finite_range(p.weights) || !std::isfinite(p.intercept)) reject("non-finite MLR weights");
    }
    void operator()(const SvrParams& p) const {
      if (!finite_range(p.weights) || !std::isfinite(p.intercept)) reject("non-finite SVR weights");
      if (!(p.c > 0.0) || p.epsilon < 0.0 || p.epochs < 1 || !(p.learning_rate > 0.0)) reject("bad SVR hyperparameters");
    }
    void operator()(const ElmParams& p) const {
      if (p.hidden < 1) reject("ELM hidden size must be positive");
      const auto h = static_cast<std::size_t>(p.hidden);
      if (p.input_weights.size() != h * kFeatureCount || p.input_biases.size() != h ||
          p.output_weights.size() != h) {
        reject("ELM parameter dimensions do not match hidden size");
      }
      if (p.activation != "tanh") reject("unsupported ELM activation '" + p.activation + "'");
      if (!finite_range(p.input_weights) || !finite_range(p.input_biases) || !finite_range(p.output_weights) ||
          !std::isfinite(p.output_bias)) {
        reject("non-finite ELM parameters");
      }
    }
    void operator()(const ForestParams& p) const {
      if (p.trees.empty()) reject("forest has no trees");
      for (const auto& t : p.trees) validate_tree(t);
    }
  };
  std::visit(Visitor{}, a.params);
}

}  // namespace edgefleet
