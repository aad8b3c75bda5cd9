#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "exmatrix/dataset.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/numeric.hpp"

namespace exmatrix {

namespace detail {

struct SplitCandidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;  // n_l*gini_l + n_r*gini_r
};

/// CART grower for one tree. Nodes are emitted in pre-order, so node ids
/// follow the usual root = 0, left subtree, right subtree numbering.
class TreeGrower {
 public:
  TreeGrower(const Dataset& data, const TrainParams& params, std::size_t features_per_split, std::mt19937_64& rng)
      : data_(data), params_(params), features_per_split_(features_per_split), rng_(rng) {}

  DecisionTree grow(std::vector<std::size_t> sample) {
    nodes_.clear();
    build(sample, 0);
    return DecisionTree(std::move(nodes_), 0);
  }

 private:
  std::vector<std::uint64_t> class_counts(const std::vector<std::size_t>& sample) const {
    std::vector<std::uint64_t> counts(data_.num_classes(), 0);
    for (std::size_t n : sample) ++counts[data_.label(n)];
    return counts;
  }

  SplitCandidate best_split_on(std::size_t feature, const std::vector<std::size_t>& sample,
                               const std::vector<std::uint64_t>& parent) const {
    std::vector<std::pair<double, std::size_t>> column;
    column.reserve(sample.size());
    for (std::size_t n : sample) column.emplace_back(data_.instance(n)[feature], data_.label(n));
    std::sort(column.begin(), column.end());

    SplitCandidate best;
    std::vector<std::uint64_t> left(parent.size(), 0);
    std::vector<std::uint64_t> right = parent;
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      ++left[column[i].second];
      --right[column[i].second];
      const double lo = column[i].first;
      const double hi = column[i + 1].first;
      if (!(lo < hi)) continue;
      const double impurity = weighted_gini(left) + weighted_gini(right);
      if (!best.found || impurity < best.impurity) {
        double mid = lo / 2.0 + hi / 2.0;
        if (!(mid < hi)) mid = lo;
        best = {true, feature, mid, impurity};
      }
    }
    return best;
  }

  SplitCandidate choose_split(const std::vector<std::size_t>& sample, const std::vector<std::uint64_t>& counts) {
    std::vector<std::size_t> features(data_.num_features());
    for (std::size_t m = 0; m < features.size(); ++m) features[m] = m;
    shuffle_in_place(features, rng_);
    SplitCandidate best;
    // Look at features_per_split features; keep drawing while none of them
    // admits a split (all constant on this node).
    for (std::size_t visited = 0; visited < features.size(); ++visited) {
      if (visited >= features_per_split_ && best.found) break;
      const auto candidate = best_split_on(features[visited], sample, counts);
      if (candidate.found && (!best.found || candidate.impurity < best.impurity)) best = candidate;
    }
    return best;
  }

  std::size_t build(const std::vector<std::size_t>& sample, std::size_t depth) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    nodes_[index].id = static_cast<std::int64_t>(index);
    auto counts = class_counts(sample);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool depth_reached = params_.max_depth && depth >= *params_.max_depth;
    SplitCandidate split;
    if (!pure && !depth_reached && sample.size() >= 2) split = choose_split(sample, counts);

    nodes_[index].counts = std::move(counts);
    if (!split.found) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t n : sample)
      (data_.instance(n)[split.feature] <= split.threshold ? left : right).push_back(n);
    nodes_[index].kind = NodeKind::internal;
    nodes_[index].feature = split.feature;
    nodes_[index].threshold = split.threshold;
    const std::size_t l = build(left, depth + 1);
    const std::size_t r = build(right, depth + 1);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  const Dataset& data_;
  const TrainParams& params_;
  std::size_t features_per_split_;
  std::mt19937_64& rng_;
  std::vector<Node> nodes_;
};

}  // namespace detail

inline std::size_t default_features_per_split(std::size_t num_features) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(num_features))));
}

/// Grows a CART/Gini random forest on the train split. Tree k draws from its
/// own substream (seed, k), so the result does not depend on build order.
inline Forest train_forest(const Dataset& data, TrainParams params) {
  if (data.train_indices().empty()) throw DataError("train split is empty");
  if (params.n_trees == 0) throw UsageError("n_trees must be at least 1");
  if (params.max_depth && *params.max_depth < 1) throw UsageError("max_depth must be at least 1");
  if (params.features_per_split == 0) params.features_per_split = default_features_per_split(data.num_features());
  if (params.features_per_split > data.num_features())
    throw UsageError("features_per_split must be in [1, " + std::to_string(data.num_features()) + "]");

  const auto& train = data.train_indices();
  std::vector<DecisionTree> trees;
  trees.reserve(params.n_trees);
  for (std::size_t k = 0; k < params.n_trees; ++k) {
    std::mt19937_64 rng(substream_seed(params.seed, k));
    std::vector<std::size_t> sample;
    if (params.bootstrap) {
      sample.reserve(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) sample.push_back(train[uniform_index(rng, train.size())]);
    } else {
      sample = train;
    }
    detail::TreeGrower grower(data, params, params.features_per_split, rng);
    trees.push_back(grower.grow(std::move(sample)));
  }
  Forest forest(std::move(trees), data.feature_names(), data.class_names(), {}, params);
  return forest.with_importances(mdi_importance(forest, data));
}

}  // namespace exmatrix
