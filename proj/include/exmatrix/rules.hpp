#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/numeric.hpp"

namespace exmatrix {

/// Interval predicate of one feature. Membership is (alpha, beta]. A limit
/// that no test on the path imposed holds the dataset extremum and is not
/// enforced, so instances outside the observed range still follow the
/// same rule the tree would send them to.
struct Interval {
  double alpha = 0.0;
  double beta = 0.0;
  bool lower_bounded = false;  // alpha came from a "> threshold" test
  bool upper_bounded = false;  // beta came from a "<= threshold" test

  bool contains(double x) const noexcept {
    return (!lower_bounded || x > alpha) && (!upper_bounded || x <= beta);
  }

  bool operator==(const Interval&) const = default;
};

/// One decision path as per-feature intervals. Features the path never
/// tests carry no predicate.
struct VectorRule {
  std::size_t rule_id = 0;
  std::size_t tree_id = 0;
  std::int64_t leaf_id = 0;     // node id of the leaf
  std::size_t leaf_index = 0;   // index of the leaf in the tree's node array
  std::vector<std::optional<Interval>> predicates;
  std::vector<double> certainty;
  std::size_t class_index = 0;
  double coverage = 0.0;

  bool uses(std::size_t feature) const { return predicates[feature].has_value(); }

  double max_certainty() const { return certainty[class_index]; }
};

inline bool rule_matches(const VectorRule& rule, std::span<const double> x) {
  for (std::size_t m = 0; m < rule.predicates.size(); ++m)
    if (rule.predicates[m] && !rule.predicates[m]->contains(x[m])) return false;
  return true;
}

/// All rules of a forest, numbered in extraction order: tree by tree, leaves
/// in depth-first left-first order.
class RuleSet {
 public:
  RuleSet() = default;
  RuleSet(std::vector<VectorRule> rules, std::vector<std::vector<std::size_t>> by_tree)
      : rules_(std::move(rules)), by_tree_(std::move(by_tree)) {}

  std::size_t size() const noexcept { return rules_.size(); }
  std::size_t num_trees() const noexcept { return by_tree_.size(); }
  const std::vector<VectorRule>& rules() const noexcept { return rules_; }
  const VectorRule& rule(std::size_t id) const {
    if (id >= rules_.size()) throw InputError("unknown rule id " + std::to_string(id));
    return rules_[id];
  }
  /// Rule ids of tree k.
  const std::vector<std::size_t>& tree_rules(std::size_t k) const { return by_tree_.at(k); }

 private:
  std::vector<VectorRule> rules_;
  std::vector<std::vector<std::size_t>> by_tree_;
};

/// Converts every root-to-leaf path into a VectorRule. alpha is the largest
/// threshold of the path's "> t" tests on a feature, beta the smallest
/// threshold of its "<= t" tests; missing limits default to the feature's
/// extrema over the whole dataset. Coverage is the share of train instances
/// of the rule's class that satisfy the rule.
inline RuleSet extract_rules(const Forest& forest, const Dataset& data) {
  check_compatible(forest, data);
  const std::size_t m_count = data.num_features();
  const std::size_t j_count = data.num_classes();

  std::vector<std::uint64_t> class_totals(j_count, 0);
  for (std::size_t n : data.train_indices()) ++class_totals[data.label(n)];

  std::vector<VectorRule> rules;
  std::vector<std::vector<std::size_t>> by_tree(forest.num_trees());

  struct Frame {
    std::size_t node;
    std::vector<std::optional<Interval>> bounds;
  };
  for (std::size_t k = 0; k < forest.num_trees(); ++k) {
    const DecisionTree& tree = forest.tree(k);
    std::vector<Frame> stack;
    stack.push_back({tree.root(), std::vector<std::optional<Interval>>(m_count)});
    while (!stack.empty()) {
      Frame frame = std::move(stack.back());
      stack.pop_back();
      const Node& node = tree.node(frame.node);
      if (!node.is_leaf()) {
        const std::size_t f = node.feature;
        auto right = frame.bounds;
        auto& r = right[f];
        if (!r) r = Interval{data.feature_min()[f], data.feature_max()[f], false, false};
        if (!r->lower_bounded || node.threshold > r->alpha) {
          r->alpha = node.threshold;
          r->lower_bounded = true;
        }
        auto& l = frame.bounds[f];
        if (!l) l = Interval{data.feature_min()[f], data.feature_max()[f], false, false};
        if (!l->upper_bounded || node.threshold < l->beta) {
          l->beta = node.threshold;
          l->upper_bounded = true;
        }
        stack.push_back({node.right, std::move(right)});
        stack.push_back({node.left, std::move(frame.bounds)});
        continue;
      }
      VectorRule rule;
      rule.rule_id = rules.size();
      rule.tree_id = k;
      rule.leaf_id = node.id;
      rule.leaf_index = frame.node;
      rule.predicates = std::move(frame.bounds);
      rule.certainty = normalized(node.counts);
      rule.class_index = argmax(rule.certainty);
      std::uint64_t covered = 0;
      for (std::size_t n : data.train_indices())
        if (data.label(n) == rule.class_index && rule_matches(rule, data.instance(n))) ++covered;
      const auto denom = class_totals[rule.class_index];
      rule.coverage = denom == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(denom);
      by_tree[k].push_back(rule.rule_id);
      rules.push_back(std::move(rule));
    }
  }
  return RuleSet(std::move(rules), std::move(by_tree));
}

/// The rule of tree k that the instance satisfies. Exactly one must match;
/// anything else is a defect.
inline const VectorRule& used_rule(const RuleSet& rules, std::size_t tree_id, std::span<const double> x) {
  const VectorRule* found = nullptr;
  for (std::size_t id : rules.tree_rules(tree_id)) {
    const VectorRule& r = rules.rule(id);
    if (!rule_matches(r, x)) continue;
    if (found)
      throw InvariantViolation("rules " + std::to_string(found->rule_id) + " and " + std::to_string(id) + " of tree " +
                               std::to_string(tree_id) + " both match");
    found = &r;
  }
  if (!found) throw InvariantViolation("no rule of tree " + std::to_string(tree_id) + " matches");
  return *found;
}

inline nlohmann::json rule_to_json(const VectorRule& r) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : r.predicates)
    preds.push_back(p ? nlohmann::json{{"alpha", p->alpha}, {"beta", p->beta}} : nlohmann::json(nullptr));
  return {{"rule_id", r.rule_id},     {"tree_id", r.tree_id},     {"leaf_id", r.leaf_id},
          {"predicates", preds},      {"certainty", r.certainty}, {"class_index", r.class_index},
          {"coverage", r.coverage}};
}

/// One JSON object per line, in rule id order.
inline std::string rules_to_jsonl(const RuleSet& rules) {
  std::string out;
  for (const auto& r : rules.rules()) {
    out += rule_to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace exmatrix
