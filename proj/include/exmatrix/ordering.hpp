#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exmatrix/error.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/numeric.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/view.hpp"

namespace exmatrix {

enum class OrderTarget { rules, features };

enum class OrderKey {
  extraction_order,
  coverage,
  certainty,
  class_and_coverage,
  class_and_certainty,
  change_sum,
  importance,
  dataset_order,
};

enum class Direction { ascending, descending };

struct OrderCriterion {
  OrderTarget target = OrderTarget::rules;
  OrderKey key = OrderKey::extraction_order;
  Direction direction = Direction::ascending;
};

namespace detail {

struct KeyName {
  OrderKey key;
  std::string_view name;
  OrderTarget target;
  Direction default_direction;
};

inline constexpr std::array<KeyName, 8> key_names{{
    {OrderKey::extraction_order, "extraction-order", OrderTarget::rules, Direction::ascending},
    {OrderKey::coverage, "coverage", OrderTarget::rules, Direction::descending},
    {OrderKey::certainty, "certainty", OrderTarget::rules, Direction::descending},
    {OrderKey::class_and_coverage, "class-and-coverage", OrderTarget::rules, Direction::descending},
    {OrderKey::class_and_certainty, "class-and-certainty", OrderTarget::rules, Direction::descending},
    {OrderKey::change_sum, "change-sum", OrderTarget::rules, Direction::ascending},
    {OrderKey::importance, "importance", OrderTarget::features, Direction::descending},
    {OrderKey::dataset_order, "dataset-order", OrderTarget::features, Direction::ascending},
}};

inline const KeyName& key_info(OrderKey key) {
  for (const auto& k : key_names)
    if (k.key == key) return k;
  throw InvariantViolation("unknown order key");
}

}  // namespace detail

inline std::string_view to_string(OrderKey key) { return detail::key_info(key).name; }

inline OrderCriterion default_criterion(OrderKey key) {
  const auto& info = detail::key_info(key);
  return {info.target, key, info.default_direction};
}

/// Parses "coverage", "class-and-coverage:asc", "importance:desc", ...
/// For class-and-* keys the direction applies to the second key; classes
/// always run in ascending index order.
inline OrderCriterion parse_criterion(std::string_view text, OrderTarget target) {
  std::string_view name = text;
  std::optional<Direction> direction;
  if (const auto colon = text.find(':'); colon != std::string_view::npos) {
    name = text.substr(0, colon);
    const auto dir = text.substr(colon + 1);
    if (dir == "asc" || dir == "ascending") direction = Direction::ascending;
    else if (dir == "desc" || dir == "descending") direction = Direction::descending;
    else throw UsageError("unknown order direction '" + std::string(dir) + "'");
  }
  for (const auto& k : detail::key_names) {
    if (k.name != name) continue;
    if (k.target != target)
      throw UsageError("order key '" + std::string(name) + "' does not apply to " +
                       (target == OrderTarget::rules ? "rows" : "columns"));
    return {target, k.key, direction.value_or(k.default_direction)};
  }
  throw UsageError("unknown order key '" + std::string(name) + "'");
}

/// Cumulative committee votes for the current row order and the 1-based row
/// from which the running argmax stays equal to the final one.
inline void refresh_votes(ExplanationView& view, std::size_t num_classes) {
  const std::size_t rows = view.rule_rows.size();
  std::vector<ExactSum> sums(num_classes);
  for (std::size_t i = 0; i < rows; ++i) {
    auto& extras = view.row_extras[i];
    extras.cumulative_vote.assign(num_classes, 0.0);
    for (std::size_t j = 0; j < num_classes; ++j) {
      sums[j].add(extras.certainty[j]);
      extras.cumulative_vote[j] = sums[j].value() / static_cast<double>(i + 1);
    }
  }
  if (rows == 0) {
    view.decision_fixed_row.reset();
    return;
  }
  const std::size_t final_class = argmax(view.row_extras.back().cumulative_vote);
  std::size_t fixed = rows;
  while (fixed > 1 && argmax(view.row_extras[fixed - 2].cumulative_vote) == final_class) --fixed;
  view.decision_fixed_row = fixed;
}

/// Stable reorder of the rows; rule id breaks remaining ties. LE/UR votes are
/// recomputed for the new order.
inline ExplanationView order_rows(const ExplanationView& view, const OrderCriterion& criterion,
                                  const RuleSet& rules) {
  if (criterion.target != OrderTarget::rules || detail::key_info(criterion.key).target != OrderTarget::rules)
    throw UsageError("criterion '" + std::string(to_string(criterion.key)) + "' cannot order rows");
  if (criterion.key == OrderKey::change_sum && view.kind != ViewKind::smallest_changes)
    throw UsageError("change-sum ordering is only valid for smallest-changes views");

  const auto& rows = view.rule_rows;
  const auto& extras = view.row_extras;
  auto max_cert = [&](std::size_t i) { return *std::max_element(extras[i].certainty.begin(), extras[i].certainty.end()); };
  auto secondary = [&](std::size_t i) -> double {
    switch (criterion.key) {
      case OrderKey::coverage:
      case OrderKey::class_and_coverage: return extras[i].coverage;
      case OrderKey::certainty:
      case OrderKey::class_and_certainty: return max_cert(i);
      case OrderKey::change_sum: return extras[i].change_sum.value_or(0.0);
      default: return static_cast<double>(rows[i]);
    }
  };
  const bool by_class =
      criterion.key == OrderKey::class_and_coverage || criterion.key == OrderKey::class_and_certainty;
  const bool descending = criterion.direction == Direction::descending;

  std::vector<std::size_t> perm(rows.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    if (by_class) {
      const auto ca = rules.rule(rows[a]).class_index;
      const auto cb = rules.rule(rows[b]).class_index;
      if (ca != cb) return ca < cb;
    }
    const double ka = secondary(a);
    const double kb = secondary(b);
    if (ka != kb) return descending ? ka > kb : ka < kb;
    return rows[a] < rows[b];
  });

  ExplanationView out = view;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.rule_rows[i] = rows[perm[i]];
    out.row_extras[i] = extras[perm[i]];
  }
  if (out.kind == ViewKind::used_rules && !out.row_extras.empty())
    refresh_votes(out, out.row_extras.front().certainty.size());
  return out;
}

inline ExplanationView order_columns(const ExplanationView& view, const OrderCriterion& criterion,
                                     const Forest& forest) {
  if (criterion.target != OrderTarget::features ||
      detail::key_info(criterion.key).target != OrderTarget::features)
    throw UsageError("criterion '" + std::string(to_string(criterion.key)) + "' cannot order columns");
  const auto& importances = forest.importances();
  if (criterion.key == OrderKey::importance && importances.size() != forest.num_features())
    throw UsageError("forest has no feature importances");
  const bool descending = criterion.direction == Direction::descending;

  ExplanationView out = view;
  std::stable_sort(out.feature_cols.begin(), out.feature_cols.end(), [&](std::size_t a, std::size_t b) {
    if (criterion.key == OrderKey::importance && importances[a] != importances[b])
      return descending ? importances[a] > importances[b] : importances[a] < importances[b];
    if (criterion.key == OrderKey::dataset_order) return descending ? a > b : a < b;
    return a < b;
  });
  return out;
}

}  // namespace exmatrix
