// MLR, linear SVR, ELM and random-forest regressors over scaled features.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "edgefleet/error.hpp"
#include "edgefleet/models.hpp"

namespace edgefleet {

namespace {

void require_rows(std::span<const Features> rows, std::span<const double> targets, std::size_t minimum) {
  if (rows.size() != targets.size()) {
    throw Error(ErrorCode::kLengthMismatch, "rows and targets differ in length");
  }
  if (rows.size() < minimum) {
    throw Error(ErrorCode::kInsufficientData, "need at least " + std::to_string(minimum) +
                                                  " training rows, got " + std::to_string(rows.size()));
  }
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// MLR: normal equations on [X 1] with Tikhonov damping on the Gram matrix.

LinearParams train_mlr(std::span<const Features> rows, std::span<const double> targets, double damping) {
  require_rows(rows, targets, 10);
  constexpr int kDim = kFeatureCount + 1;
  Eigen::Matrix<double, kDim, kDim> gram = Eigen::Matrix<double, kDim, kDim>::Zero();
  Eigen::Matrix<double, kDim, 1> rhs = Eigen::Matrix<double, kDim, 1>::Zero();
  Eigen::Matrix<double, kDim, 1> a;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) a(j) = rows[i][j];
    a(kFeatureCount) = 1.0;
    gram.noalias() += a * a.transpose();
    rhs.noalias() += a * targets[i];
  }
  gram.diagonal().array() += damping;
  const Eigen::LDLT<Eigen::Matrix<double, kDim, kDim>> solver(gram);
  if (solver.info() != Eigen::Success || !solver.isPositive()) {
    throw Error(ErrorCode::kSingularSystem, "Gram matrix not positive definite after damping");
  }
  const Eigen::Matrix<double, kDim, 1> w = solver.solve(rhs);
  if (!w.allFinite()) throw Error(ErrorCode::kSingularSystem, "least-squares solution is not finite");
  LinearParams out;
  for (std::size_t j = 0; j < kFeatureCount; ++j) out.weights[j] = w(j);
  out.intercept = w(kFeatureCount);
  return out;
}

// ---------------------------------------------------------------------------
// Linear epsilon-insensitive SVR.
//
// Objective on the standardized target z = (y - mean) / sd:
//   J(w, b) = lambda/2 |w|^2 + mean_i max(0, |z_i - w.x_i - b| - eps),
// lambda = 1 / (C n). Per-sample subgradient steps, seeded visiting order,
// step size lr / epoch.

namespace {

struct TargetScale {
  double mean = 0.0;
  double sd = 1.0;
};

TargetScale target_scale(std::span<const double> y) {
  TargetScale s;
  s.mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(y.size()));
  if (!(s.sd > 0.0)) s.sd = 1.0;
  return s;
}

double dot(const Features& w, const Features& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < kFeatureCount; ++j) acc += w[j] * x[j];
  return acc;
}

double standardized_objective(const Features& w, double b, std::span<const Features> rows,
                              std::span<const double> z, double eps, double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    loss += std::max(0.0, std::abs(z[i] - dot(w, rows[i]) - b) - eps);
  }
  return 0.5 * lambda * dot(w, w) + loss / static_cast<double>(rows.size());
}

}  // namespace

SvrParams train_svr(std::span<const Features> rows, std::span<const double> targets, const SvrConfig& config,
                    std::uint64_t seed, std::vector<double>* epoch_losses) {
  require_rows(rows, targets, 10);
  if (config.epochs < 1 || !(config.c > 0.0) || !(config.learning_rate > 0.0) || config.epsilon < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid SVR hyperparameters");
  }
  const std::size_t n = rows.size();
  const TargetScale scale = target_scale(targets);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (targets[i] - scale.mean) / scale.sd;
  const double lambda = 1.0 / (config.c * static_cast<double>(n));

  Features w{};
  double b = 0.0;
  Features best_w = w;
  double best_b = b;
  double best_loss = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (epoch_losses) epoch_losses->clear();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double step = config.learning_rate / epoch;
    for (std::size_t i : order) {
      const double residual = z[i] - dot(w, rows[i]) - b;
      double g = 0.0;
      if (residual > config.epsilon) g = -1.0;
      else if (residual < -config.epsilon) g = 1.0;
      for (std::size_t j = 0; j < kFeatureCount; ++j) w[j] -= step * (lambda * w[j] + g * rows[i][j]);
      b -= step * g;
    }
    const double loss = standardized_objective(w, b, rows, z, config.epsilon, lambda);
    if (epoch_losses) epoch_losses->push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_w = w;
      best_b = b;
    }
  }

  SvrParams out;
  for (std::size_t j = 0; j < kFeatureCount; ++j) out.weights[j] = scale.sd * best_w[j];
  out.intercept = scale.mean + scale.sd * best_b;
  out.epsilon = config.epsilon;
  out.c = config.c;
  out.epochs = config.epochs;
  out.learning_rate = config.learning_rate;
  return out;
}

double svr_objective(const SvrParams& params, std::span<const Features> rows, std::span<const double> targets) {
  require_rows(rows, targets, 1);
  const TargetScale scale = target_scale(targets);
  std::vector<double> z(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) z[i] = (targets[i] - scale.mean) / scale.sd;
  Features w{};
  for (std::size_t j = 0; j < kFeatureCount; ++j) w[j] = params.weights[j] / scale.sd;
  const double b = (params.intercept - scale.mean) / scale.sd;
  const double lambda = 1.0 / (params.c * static_cast<double>(rows.size()));
  return standardized_objective(w, b, rows, z, params.epsilon, lambda);
}

// ---------------------------------------------------------------------------
// ELM: random tanh hidden layer, ridge-regressed output layer on the centered
// target.

namespace {

double elm_hidden(const ElmParams& p, int unit, const Features& x) {
  double acc = p.input_biases[unit];
  const double* row = p.input_weights.data() + static_cast<std::size_t>(unit) * kFeatureCount;
  for (std::size_t j = 0; j < kFeatureCount; ++j) acc += row[j] * x[j];
  return std::tanh(acc);
}

}  // namespace

ElmParams train_elm(std::span<const Features> rows, std::span<const double> targets, const ElmConfig& config,
                    std::uint64_t seed) {
  if (config.hidden < 1) throw Error(ErrorCode::kInvalidArgument, "ELM hidden size must be positive");
  require_rows(rows, targets, std::max<std::size_t>(10, static_cast<std::size_t>(config.hidden)));
  const int h = config.hidden;
  ElmParams p;
  p.hidden = h;
  p.seed = seed;
  p.input_weights.resize(static_cast<std::size_t>(h) * kFeatureCount);
  p.input_biases.resize(h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (double& v : p.input_weights) v = uniform(rng);
  for (double& v : p.input_biases) v = uniform(rng);

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd hidden(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int u = 0; u < h; ++u) hidden(i, u) = elm_hidden(p, u, rows[i]);
  }
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);
  Eigen::VectorXd centered(n);
  for (Eigen::Index i = 0; i < n; ++i) centered(i) = targets[i] - mean;

  Eigen::MatrixXd gram = hidden.transpose() * hidden;
  gram.diagonal().array() += config.ridge;
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "ELM ridge system failed");
  const Eigen::VectorXd beta = solver.solve(hidden.transpose() * centered);
  if (!all_finite(beta)) throw Error(ErrorCode::kSingularSystem, "ELM output weights are not finite");
  p.output_weights.assign(beta.data(), beta.data() + h);
  p.output_bias = mean;
  return p;
}

// ---------------------------------------------------------------------------
// Random forest: bootstrap-bagged variance-reduction trees. Split thresholds
// are drawn from at most max_bins cut points per feature (every distinct
// value when there are fewer), computed once per fit.

namespace {

struct BinnedData {
  std::array<std::vector<double>, kFeatureCount> cuts;
  std::vector<std::array<std::uint8_t, kFeatureCount>> bins;  // per row
};

BinnedData bin_rows(std::span<const Features> rows, int max_bins) {
  BinnedData out;
  const std::size_t n = rows.size();
  std::vector<double> column(n);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rows[i][f];
    std::sort(column.begin(), column.end());
    std::vector<double> distinct;
    std::unique_copy(column.begin(), column.end(), std::back_inserter(distinct));
    auto& cuts = out.cuts[f];
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      cuts.assign(distinct.begin(), distinct.end() - 1);
    } else {
      for (int b = 1; b < max_bins; ++b) {
        const double v = column[static_cast<std::size_t>(b) * n / static_cast<std::size_t>(max_bins)];
        if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
      }
      if (!cuts.empty() && cuts.back() >= distinct.back()) cuts.pop_back();
    }
  }
  out.bins.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const auto& cuts = out.cuts[f];
      out.bins[i][f] = static_cast<std::uint8_t>(std::lower_bound(cuts.begin(), cuts.end(), rows[i][f]) - cuts.begin());
    }
  }
  return out;
}

struct PendingNode {
  int node;
  int depth;
  std::size_t begin;
  std::size_t end;
};

RegressionTree grow_tree(const BinnedData& data, std::span<const double> targets, std::vector<std::size_t> sample,
                         const ForestConfig& config, std::mt19937_64& rng) {
  RegressionTree tree;
  tree.nodes.push_back(TreeNode{});
  std::vector<PendingNode> stack{{0, 0, 0, sample.size()}};
  std::array<std::size_t, kFeatureCount> feature_order{};
  std::iota(feature_order.begin(), feature_order.end(), std::size_t{0});
  const int subset = std::clamp(config.feature_subset, 1, static_cast<int>(kFeatureCount));
  std::vector<double> bin_sum;
  std::vector<std::size_t> bin_count;

  while (!stack.empty()) {
    const PendingNode pending = stack.back();
    stack.pop_back();
    const std::size_t count = pending.end - pending.begin;
    double total = 0.0;
    for (std::size_t k = pending.begin; k < pending.end; ++k) total += targets[sample[k]];
    tree.nodes[pending.node].value = total / static_cast<double>(count);

    if (pending.depth >= config.max_depth || count < 2 * static_cast<std::size_t>(config.min_leaf)) continue;

    // Partial Fisher-Yates: the first `subset` entries are the candidates.
    for (int s = 0; s < subset; ++s) {
      std::uniform_int_distribution<int> pick(s, static_cast<int>(kFeatureCount) - 1);
      std::swap(feature_order[s], feature_order[pick(rng)]);
    }

    double best_gain = 0.0;
    int best_feature = -1;
    std::size_t best_bin = 0;
    const double parent_score = total * total / static_cast<double>(count);
    for (int s = 0; s < subset; ++s) {
      const std::size_t f = feature_order[s];
      const std::size_t nbins = data.cuts[f].size() + 1;
      if (nbins < 2) continue;
      bin_sum.assign(nbins, 0.0);
      bin_count.assign(nbins, 0);
      for (std::size_t k = pending.begin; k < pending.end; ++k) {
        const std::size_t row = sample[k];
        const std::uint8_t b = data.bins[row][f];
        bin_sum[b] += targets[row];
        ++bin_count[b];
      }
      double left_sum = 0.0;
      std::size_t left_count = 0;
      for (std::size_t b = 0; b + 1 < nbins; ++b) {
        left_sum += bin_sum[b];
        left_count += bin_count[b];
        const std::size_t right_count = count - left_count;
        if (left_count < static_cast<std::size_t>(config.min_leaf)) continue;
        if (right_count < static_cast<std::size_t>(config.min_leaf)) break;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(left_count) +
                            right_sum * right_sum / static_cast<double>(right_count) - parent_score;
        if (gain > best_gain + 1e-12 * std::abs(parent_score)) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) continue;

    const auto mid = std::stable_partition(
        sample.begin() + static_cast<std::ptrdiff_t>(pending.begin), sample.begin() + static_cast<std::ptrdiff_t>(pending.end),
        [&](std::size_t row) { return data.bins[row][best_feature] <= best_bin; });
    const std::size_t split = static_cast<std::size_t>(mid - sample.begin());

    const int left = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    tree.nodes.push_back(TreeNode{});
    TreeNode& node = tree.nodes[pending.node];
    node.feature = best_feature;
    node.threshold = data.cuts[best_feature][best_bin];
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, pending.depth + 1, split, pending.end});
    stack.push_back({left, pending.depth + 1, pending.begin, split});
  }
  return tree;
}

}  // namespace

ForestParams train_forest(std::span<const Features> rows, std::span<const double> targets,
                          const ForestConfig& config, std::uint64_t seed) {
  require_rows(rows, targets, 10);
  if (config.trees < 1 || config.max_depth < 0 || config.min_leaf < 1 || config.max_bins < 2 ||
      config.max_bins > 256) {
    throw Error(ErrorCode::kInvalidArgument, "invalid forest hyperparameters");
  }
  const BinnedData data = bin_rows(rows, config.max_bins);
  ForestParams out;
  out.max_depth = config.max_depth;
  out.min_leaf = config.min_leaf;
  out.feature_subset = config.feature_subset;
  out.seed = seed;
  out.trees.reserve(config.trees);
  const std::size_t n = rows.size();
  std::vector<std::size_t> sample(n);
  for (int t = 0; t < config.trees; ++t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    for (auto& idx : sample) idx = draw(rng);
    out.trees.push_back(grow_tree(data, targets, sample, config, rng));
  }
  return out;
}

double predict_tree(const RegressionTree& tree, const Features& x) {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    const TreeNode& n = tree.nodes[node];
    node = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[node].value;
}

// ---------------------------------------------------------------------------

ModelParams train(Algorithm algorithm, std::span<const Features> rows, std::span<const double> targets,
                  const TrainConfig& config, std::uint64_t seed) {
  switch (algorithm) {
    case Algorithm::kMlr: return train_mlr(rows, targets, config.mlr_damping);
    case Algorithm::kSvr: return train_svr(rows, targets, config.svr, seed);
    case Algorithm::kElm: return train_elm(rows, targets, config.elm, seed);
    case Algorithm::kRfr: return train_forest(rows, targets, config.forest, seed);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown algorithm");
}

double predict_scaled(const ModelParams& params, const Features& x) {
  struct Visitor {
    const Features& x;
    double operator()(const LinearParams& p) const { return dot(p.weights, x) + p.intercept; }
    double operator()(const SvrParams& p) const { return dot(p.weights, x) + p.intercept; }
    double operator()(const ElmParams& p) const {
      double acc = p.output_bias;
      for (int u = 0; u < p.hidden; ++u) acc += p.output_weights[u] * elm_hidden(p, u, x);
      return acc;
    }
    double operator()(const ForestParams& p) const {
      double acc = 0.0;
      for (const auto& tree : p.trees) acc += predict_tree(tree, x);
      return acc / static_cast<double>(p.trees.size());
    }
  };
  return std::visit(Visitor{x}, params);
}

}  // namespace edgefleet
