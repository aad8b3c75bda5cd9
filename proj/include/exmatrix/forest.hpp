#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/numeric.hpp"

namespace exmatrix {

enum class NodeKind { internal, leaf };

/// One node of a binary threshold tree. Instances with x[feature] <= threshold
/// go left, the rest go right.
struct Node {
  std::int64_t id = 0;
  NodeKind kind = NodeKind::leaf;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;   // index into DecisionTree::nodes()
  std::size_t right = 0;  // index into DecisionTree::nodes()
  /// Leaves: class counts of the training instances that reached the leaf.
  /// Internal nodes: the same bookkeeping when grown here, empty when imported.
  std::vector<std::uint64_t> counts;

  bool is_leaf() const noexcept { return kind == NodeKind::leaf; }
};

inline std::uint64_t total_count(std::span<const std::uint64_t> counts) {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

/// Class-count vector normalized to probabilities.
inline std::vector<double> normalized(std::span<const std::uint64_t> counts) {
  const auto total = static_cast<double>(total_count(counts));
  std::vector<double> p(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) p[j] = static_cast<double>(counts[j]) / total;
  return p;
}

class DecisionTree {
 public:
  DecisionTree() = default;

  /// Validates the tree shape: in-range children, every non-root node has
  /// exactly one parent, everything reachable from the root, no cycles.
  DecisionTree(std::vector<Node> nodes, std::size_t root) : nodes_(std::move(nodes)), root_(root) {
    if (nodes_.empty()) throw ValidationError("/nodes", "tree has no nodes");
    if (root_ >= nodes_.size()) throw ValidationError("/root", "root index out of range");
    std::vector<std::size_t> parents(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      const std::string at = "/nodes/" + std::to_string(i);
      if (n.is_leaf()) {
        if (total_count(n.counts) == 0)
          throw ValidationError(at + "/counts", "leaf needs at least one positive class count");
        continue;
      }
      if (n.left >= nodes_.size()) throw ValidationError(at + "/left", "dangling child reference");
      if (n.right >= nodes_.size()) throw ValidationError(at + "/right", "dangling child reference");
      if (!std::isfinite(n.threshold)) throw ValidationError(at + "/threshold", "non-finite threshold");
      ++parents[n.left];
      ++parents[n.right];
    }
    if (parents[root_] != 0) throw ValidationError("/root", "root has a parent");
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (i != root_ && parents[i] != 1)
        throw ValidationError("/nodes/" + std::to_string(i),
                              parents[i] == 0 ? "node unreachable from root" : "node has several parents");
    // With one parent per non-root node, a walk from the root visits each node
    // at most once; anything left unvisited sits on a cycle.
    std::vector<std::size_t> stack{root_};
    std::size_t visited = 0;
    while (!stack.empty()) {
      const Node& n = nodes_[stack.back()];
      stack.pop_back();
      ++visited;
      if (!n.is_leaf()) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
    }
    if (visited != nodes_.size()) throw ValidationError("/nodes", "node graph contains a cycle");
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(std::size_t index) const { return nodes_[index]; }
  std::size_t root() const noexcept { return root_; }

  /// Index of the leaf reached by the instance.
  std::size_t leaf_for(std::span<const double> x) const {
    std::size_t i = root_;
    while (!nodes_[i].is_leaf()) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return i;
  }

  /// Leaf indices in depth-first, left-first order from the root.
  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{root_};
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      if (nodes_[i].is_leaf()) {
        out.push_back(i);
      } else {
        stack.push_back(nodes_[i].right);
        stack.push_back(nodes_[i].left);
      }
    }
    return out;
  }

  std::size_t num_leaves() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root_, 0}};
    while (!stack.empty()) {
      const auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes_[i].is_leaf()) {
        stack.emplace_back(nodes_[i].left, d + 1);
        stack.emplace_back(nodes_[i].right, d + 1);
      }
    }
    return best;
  }

 private:
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

struct TrainParams {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  // nullopt: grow until pure
  std::size_t features_per_split = 0;    // 0: ceil(sqrt(M))
  bool bootstrap = true;
  std::uint64_t seed = 0;

  bool operator==(const TrainParams&) const = default;
};

/// A random forest: K threshold trees plus MDI feature importances.
class Forest {
 public:
  Forest(std::vector<DecisionTree> trees, std::vector<std::string> feature_names,
         std::vector<std::string> class_names, std::vector<double> importances = {},
         TrainParams params = {})
      : trees_(std::move(trees)),
        feature_names_(std::move(feature_names)),
        class_names_(std::move(class_names)),
        importances_(std::move(importances)),
        params_(params) {
    if (trees_.empty()) throw ValidationError("/trees", "forest needs at least one tree");
    if (class_names_.size() < 2) throw ValidationError("/class_names", "need at least 2 classes");
    if (feature_names_.empty()) throw ValidationError("/feature_names", "need at least one feature");
    for (std::size_t k = 0; k < trees_.size(); ++k) {
      const auto& nodes = trees_[k].nodes();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string at = "/trees/" + std::to_string(k) + "/nodes/" + std::to_string(i);
        if (nodes[i].is_leaf() && nodes[i].counts.size() != class_names_.size())
          throw ValidationError(at + "/counts", "expected " + std::to_string(class_names_.size()) + " class counts");
        if (!nodes[i].is_leaf() && nodes[i].feature >= feature_names_.size())
          throw ValidationError(at + "/feature", "feature index out of range");
        if (!nodes[i].is_leaf() && !nodes[i].counts.empty() && nodes[i].counts.size() != class_names_.size())
          throw ValidationError(at + "/counts", "expected " + std::to_string(class_names_.size()) + " class counts");
      }
    }
    if (!importances_.empty()) {
      if (importances_.size() != feature_names_.size())
        throw ValidationError("/importances", "expected one importance per feature");
      for (double v : importances_)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("/importances", "importances must be nonnegative");
    }
  }

  std::size_t num_trees() const noexcept { return trees_.size(); }
  std::size_t num_features() const noexcept { return feature_names_.size(); }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const DecisionTree& tree(std::size_t k) const { return trees_[k]; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  /// MDI importances; empty until computed (imported forests without them).
  const std::vector<double>& importances() const noexcept { return importances_; }
  bool has_importances() const noexcept { return !importances_.empty(); }
  const TrainParams& train_params() const noexcept { return params_; }

  std::size_t total_leaves() const {
    std::size_t z = 0;
    for (const auto& t : trees_) z += t.num_leaves();
    return z;
  }

  Forest with_importances(std::vector<double> importances) const {
    return Forest(trees_, feature_names_, class_names_, std::move(importances), params_);
  }

 private:
  std::vector<DecisionTree> trees_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> class_names_;
  std::vector<double> importances_;
  TrainParams params_;
};

struct Prediction {
  std::vector<double> probabilities;
  std::size_t class_index = 0;

  bool operator==(const Prediction&) const = default;
};

inline void check_instance(std::span<const double> x, std::size_t num_features) {
  if (x.size() != num_features)
    throw InputError("instance has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(num_features));
  for (std::size_t m = 0; m < x.size(); ++m)
    if (!std::isfinite(x[m])) throw InputError("feature " + std::to_string(m) + " is not finite");
}

/// Committee average of probability vectors, summed exactly per class so the
/// result is independent of the order of the members.
inline std::vector<double> committee_mean(std::span<const std::vector<double>> members, std::size_t num_classes) {
  std::vector<double> out(num_classes, 0.0);
  for (std::size_t j = 0; j < num_classes; ++j) {
    ExactSum acc;
    for (const auto& p : members) acc.add(p[j]);
    out[j] = acc.value() / static_cast<double>(members.size());
  }
  return out;
}

/// Soft voting: mean of the K normalized leaf distributions.
inline Prediction predict(const Forest& forest, std::span<const double> x) {
  check_instance(x, forest.num_features());
  std::vector<std::vector<double>> votes;
  votes.reserve(forest.num_trees());
  for (const auto& tree : forest.trees()) votes.push_back(normalized(tree.node(tree.leaf_for(x)).counts));
  Prediction p;
  p.probabilities = committee_mean(votes, forest.num_classes());
  p.class_index = argmax(p.probabilities);
  return p;
}

inline double accuracy(const Forest& forest, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n : indices) hits += predict(forest, data.instance(n)).class_index == data.label(n);
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

namespace detail {

/// n * gini for a class-count vector, i.e. n - sum(c^2)/n.
inline double weighted_gini(std::span<const std::uint64_t> counts) {
  const auto n = static_cast<double>(total_count(counts));
  if (n == 0.0) return 0.0;
  double sq = 0.0;
  for (auto c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
  return n - sq / n;
}

/// Per-node class counts obtained by pushing the train split down the tree.
inline std::vector<std::vector<std::uint64_t>> push_counts(const DecisionTree& tree, const Dataset& data) {
  std::vector<std::vector<std::uint64_t>> counts(tree.nodes().size(),
                                                 std::vector<std::uint64_t>(data.num_classes(), 0));
  for (std::size_t n : data.train_indices()) {
    const auto x = data.instance(n);
    std::size_t i = tree.root();
    while (true) {
      ++counts[i][data.label(n)];
      const Node& node = tree.node(i);
      if (node.is_leaf()) break;
      i = x[node.feature] <= node.threshold ? node.left : node.right;
    }
  }
  return counts;
}

}  // namespace detail

/// Mean Decrease Impurity. Per tree, each split on feature m adds
/// (n_t*gini_t - n_l*gini_l - n_r*gini_r) / n_root; tree vectors are averaged
/// and the result normalized to sum to 1. Trees grown here carry their own
/// node counts; imported trees are re-counted from the train split.
inline std::vector<double> mdi_importance(const Forest& forest, const Dataset& data) {
  const std::size_t m_count = forest.num_features();
  std::vector<double> importance(m_count, 0.0);
  for (const auto& tree : forest.trees()) {
    const auto& nodes = tree.nodes();
    const bool has_stats = std::all_of(nodes.begin(), nodes.end(), [](const Node& n) { return !n.counts.empty(); }) &&
                           std::all_of(nodes.begin(), nodes.end(), [&](const Node& n) {
                             return n.is_leaf() || total_count(n.counts) > 0;
                           });
    std::vector<std::vector<std::uint64_t>> counts;
    if (has_stats) {
      counts.reserve(nodes.size());
      for (const auto& n : nodes) counts.push_back(n.counts);
    } else {
      if (data.train_indices().empty())
        throw DataError("cannot recompute importances: the dataset train split is empty");
      counts = detail::push_counts(tree, data);
    }
    const auto root_n = static_cast<double>(total_count(counts[tree.root()]));
    if (root_n == 0.0) continue;
    std::vector<double> tree_importance(m_count, 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Node& n = nodes[i];
      if (n.is_leaf() || total_count(counts[i]) == 0) continue;
      const double decrease = detail::weighted_gini(counts[i]) - detail::weighted_gini(counts[n.left]) -
                              detail::weighted_gini(counts[n.right]);
      tree_importance[n.feature] += std::max(0.0, decrease) / root_n;
    }
    for (std::size_t m = 0; m < m_count; ++m) importance[m] += tree_importance[m];
  }
  const double total = exact_sum(importance);
  if (total > 0.0)
    for (auto& v : importance) v /= total;
  return importance;
}

/// Returns the forest with importances filled in when it has none.
inline Forest ensure_importances(const Forest& forest, const Dataset& data) {
  if (forest.has_importances()) return forest;
  return forest.with_importances(mdi_importance(forest, data));
}

/// Throws when forest and dataset disagree on features or classes.
inline void check_compatible(const Forest& forest, const Dataset& data) {
  if (forest.num_features() != data.num_features())
    throw SchemaError("forest has " + std::to_string(forest.num_features()) + " features, dataset has " +
                      std::to_string(data.num_features()));
  if (forest.num_classes() != data.num_classes())
    throw SchemaError("forest has " + std::to_string(forest.num_classes()) + " classes, dataset has " +
                      std::to_string(data.num_classes()));
}

}  // namespace exmatrix
