#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/numeric.hpp"
#include "exmatrix/ordering.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/view.hpp"

namespace exmatrix {

/// Selection of rules for the global view. explicit_rule_ids, when set,
/// replaces every other filter.
struct RuleFilter {
  std::optional<double> min_coverage;
  std::optional<double> min_certainty;  // compared against max(certainty)
  std::optional<std::vector<std::size_t>> classes;
  std::optional<std::vector<std::size_t>> explicit_rule_ids;
};

/// Features with at least one predicate among the given rules, in dataset order.
inline std::vector<std::size_t> features_of_interest(const RuleSet& rules, std::span<const std::size_t> rule_ids,
                                                     std::size_t num_features) {
  std::vector<bool> used(num_features, false);
  for (std::size_t id : rule_ids) {
    const auto& r = rules.rule(id);
    for (std::size_t m = 0; m < num_features; ++m) used[m] = used[m] || r.uses(m);
  }
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < num_features; ++m)
    if (used[m]) out.push_back(m);
  return out;
}

namespace detail {

inline ExplanationView make_view(ViewKind kind, const RuleSet& rules, const Forest& forest,
                                 std::vector<std::size_t> rows) {
  ExplanationView view;
  view.kind = kind;
  view.feature_cols = features_of_interest(rules, rows, forest.num_features());
  for (std::size_t id : rows) {
    const auto& r = rules.rule(id);
    RowExtras extras;
    extras.coverage = r.coverage;
    extras.certainty = r.certainty;
    view.row_extras.push_back(std::move(extras));
  }
  view.rule_rows = std::move(rows);
  view.importances = forest.importances();
  if (forest.has_importances()) view = order_columns(view, default_criterion(OrderKey::importance), forest);
  return view;
}

inline double delta_denominator(const Dataset& data, std::size_t m) {
  const double range = std::abs(data.train_range(m));
  return range > 0.0 ? range : 1.0;
}

}  // namespace detail

/// Global explanation: the filtered rules in extraction order, columns by
/// importance.
inline ExplanationView global_view(const RuleSet& rules, const Forest& forest, const RuleFilter& filter = {}) {
  std::vector<std::size_t> rows;
  if (filter.explicit_rule_ids) {
    rows = *filter.explicit_rule_ids;
    for (std::size_t id : rows) (void)rules.rule(id);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  } else {
    for (const auto& r : rules.rules()) {
      if (filter.min_coverage && r.coverage < *filter.min_coverage) continue;
      if (filter.min_certainty && r.max_certainty() < *filter.min_certainty) continue;
      if (filter.classes &&
          std::find(filter.classes->begin(), filter.classes->end(), r.class_index) == filter.classes->end())
        continue;
      rows.push_back(r.rule_id);
    }
  }
  if (rows.empty()) throw EmptyViewError("no rule passes the filter");
  return detail::make_view(ViewKind::global, rules, forest, std::move(rows));
}

/// Local explanation with the K rules that classified the instance, one per
/// tree, and the committee's cumulative vote down the rows.
inline ExplanationView local_used_rules(const RuleSet& rules, const Forest& forest, std::span<const double> x) {
  check_instance(x, forest.num_features());
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < forest.num_trees(); ++k) rows.push_back(used_rule(rules, k, x).rule_id);
  auto view = detail::make_view(ViewKind::used_rules, rules, forest, std::move(rows));
  view.instance.emplace(x.begin(), x.end());
  refresh_votes(view, forest.num_classes());
  return view;
}

/// Normalized per-feature changes that move x into `target`. A feature
/// needs a change only when x violates its predicate; the magnitude is the
/// distance to the nearer limit divided by the feature's train range.
inline ChangeVector change_towards(const VectorRule& source, const VectorRule& target, std::span<const double> x,
                                   const Dataset& data) {
  ChangeVector cv;
  cv.tree_id = target.tree_id;
  cv.source_rule_id = source.rule_id;
  cv.target_rule_id = target.rule_id;
  cv.from_class = source.class_index;
  cv.to_class = target.class_index;
  cv.deltas.assign(x.size(), 0.0);
  ExactSum sum;
  for (std::size_t m = 0; m < x.size(); ++m) {
    const auto& p = target.predicates[m];
    if (!p || p->contains(x[m])) continue;
    // For alpha < beta the violated side is also the nearer limit.
    const bool increase = p->lower_bounded && x[m] <= p->alpha;
    const double distance = increase ? p->alpha - x[m] : x[m] - p->beta;
    const double delta = distance / detail::delta_denominator(data, m);
    cv.deltas[m] = increase ? delta : -delta;
    sum.add(delta);
  }
  cv.change_sum = sum.value();
  return cv;
}

/// For every tree, the opposite-class rule with the smallest change sum.
/// Ties: higher certainty of the target's class, then lower rule id. Trees
/// without any rule of another class yield nullopt.
inline std::vector<std::optional<ChangeVector>> smallest_changes(const RuleSet& rules, const Forest& forest,
                                                                 const Dataset& data, std::span<const double> x) {
  check_compatible(forest, data);
  check_instance(x, forest.num_features());
  std::vector<std::optional<ChangeVector>> out(forest.num_trees());
  for (std::size_t k = 0; k < forest.num_trees(); ++k) {
    const VectorRule& source = used_rule(rules, k, x);
    const VectorRule* best_rule = nullptr;
    for (std::size_t id : rules.tree_rules(k)) {
      const VectorRule& candidate = rules.rule(id);
      if (candidate.class_index == source.class_index) continue;
      auto cv = change_towards(source, candidate, x, data);
      if (out[k]) {
        const bool better = cv.change_sum < out[k]->change_sum ||
                            (cv.change_sum == out[k]->change_sum && candidate.max_certainty() > best_rule->max_certainty());
        if (!better) continue;
      }
      out[k] = std::move(cv);
      best_rule = &candidate;
    }
  }
  return out;
}

/// Smallest-changes view: one row per tree that has a counterfactual,
/// ordered by change sum.
inline ExplanationView smallest_changes_view(const RuleSet& rules, const Forest& forest, std::span<const double> x,
                                             const std::vector<std::optional<ChangeVector>>& changes) {
  std::vector<std::size_t> rows;
  for (const auto& c : changes)
    if (c) rows.push_back(c->target_rule_id);
  auto view = detail::make_view(ViewKind::smallest_changes, rules, forest, rows);
  std::size_t i = 0;
  for (const auto& c : changes) {
    if (!c) continue;
    view.row_extras[i].change_sum = c->change_sum;
    view.row_extras[i].original_class = c->from_class;
    view.row_extras[i].change = *c;
    ++i;
  }
  view.instance.emplace(x.begin(), x.end());
  return order_rows(view, default_criterion(OrderKey::change_sum), rules);
}

inline ExplanationView smallest_changes_view(const RuleSet& rules, const Forest& forest, const Dataset& data,
                                             std::span<const double> x) {
  return smallest_changes_view(rules, forest, x, smallest_changes(rules, forest, data, x));
}

struct WhatIfResult {
  std::vector<double> new_instance;
  Prediction old_prediction;
  Prediction new_prediction;
};

/// Step used to cross a strict lower limit, as a fraction of the train range.
inline constexpr double crossing_epsilon = 1e-9;

/// Moves every feature that violates the target rule just inside it:
/// to alpha + eps * range when it must grow (the lower limit is open),
/// to beta itself when it must shrink (the upper limit is closed). After
/// that, tree `change.tree_id` uses exactly the target rule.
inline WhatIfResult apply_changes(std::span<const double> x, const ChangeVector& change, const RuleSet& rules,
                                  const Forest& forest, const Dataset& data) {
  check_instance(x, forest.num_features());
  if (change.tree_id >= forest.num_trees() || change.tree_id >= rules.num_trees())
    throw StaleChangeError("change refers to tree " + std::to_string(change.tree_id) + " which does not exist");
  const auto& tree_rules = rules.tree_rules(change.tree_id);
  if (std::find(tree_rules.begin(), tree_rules.end(), change.target_rule_id) == tree_rules.end())
    throw StaleChangeError("rule " + std::to_string(change.target_rule_id) + " is not in tree " +
                           std::to_string(change.tree_id));
  const VectorRule& source = used_rule(rules, change.tree_id, x);
  const VectorRule& target = rules.rule(change.target_rule_id);
  if (source.rule_id != change.source_rule_id || change.deltas.size() != x.size() ||
      change_towards(source, target, x, data).deltas != change.deltas)
    throw StaleChangeError("change was computed for a different instance or forest");

  WhatIfResult result;
  result.new_instance.assign(x.begin(), x.end());
  for (std::size_t m = 0; m < x.size(); ++m) {
    const auto& p = target.predicates[m];
    if (!p || p->contains(x[m])) continue;
    double& v = result.new_instance[m];
    if (p->lower_bounded && v <= p->alpha) {
      v = p->alpha + crossing_epsilon * detail::delta_denominator(data, m);
      if (!(v > p->alpha)) v = std::nextafter(p->alpha, std::numeric_limits<double>::infinity());
      if (p->upper_bounded && v > p->beta) v = p->alpha + (p->beta - p->alpha) / 2.0;
    } else {
      v = p->beta;
    }
  }
  if (used_rule(rules, change.tree_id, result.new_instance).rule_id != target.rule_id)
    throw InvariantViolation("applied change does not reach rule " + std::to_string(target.rule_id));
  result.old_prediction = predict(forest, x);
  result.new_prediction = predict(forest, result.new_instance);
  return result;
}

struct FeatureEdit {
  std::size_t feature = 0;
  double value = 0.0;
};

/// What-if by explicit feature edits.
inline WhatIfResult apply_edits(std::span<const double> x, std::span<const FeatureEdit> edits, const Forest& forest) {
  check_instance(x, forest.num_features());
  WhatIfResult result;
  result.new_instance.assign(x.begin(), x.end());
  for (const auto& e : edits) {
    if (e.feature >= x.size()) throw InputError("edit refers to unknown feature " + std::to_string(e.feature));
    result.new_instance[e.feature] = e.value;
  }
  result.old_prediction = predict(forest, x);
  result.new_prediction = predict(forest, result.new_instance);
  return result;
}

}  // namespace exmatrix
