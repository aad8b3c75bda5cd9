#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exmatrix/error.hpp"

namespace exmatrix {

enum class ViewKind { global, used_rules, smallest_changes };

inline std::string_view to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::global: return "GE";
    case ViewKind::used_rules: return "LE_UR";
    case ViewKind::smallest_changes: return "LE_SC";
  }
  return "GE";
}

/// Counterfactual for one tree: the opposite-class rule of that tree closest
/// to the instance, with the per-feature normalized changes to reach it.
struct ChangeVector {
  std::size_t tree_id = 0;
  std::size_t source_rule_id = 0;  // rule the instance currently satisfies
  std::size_t target_rule_id = 0;
  /// Signed change per feature divided by the feature's train range.
  /// Positive: the value has to grow. Negative: it has to shrink.
  std::vector<double> deltas;
  double change_sum = 0.0;
  std::size_t from_class = 0;
  std::size_t to_class = 0;

  bool operator==(const ChangeVector&) const = default;
};

struct RowExtras {
  double coverage = 0.0;
  std::vector<double> certainty;
  std::vector<double> cumulative_vote;  // LE/UR only
  std::optional<double> change_sum;     // LE/SC only
  std::optional<std::size_t> original_class;  // LE/SC only
  std::optional<ChangeVector> change;         // LE/SC only

  bool operator==(const RowExtras&) const = default;
};

/// Ordered rules x features selection with the per-row data every view
/// draws next to the matrix.
struct ExplanationView {
  ViewKind kind = ViewKind::global;
  std::vector<std::size_t> rule_rows;     // rule ids, display order
  std::vector<std::size_t> feature_cols;  // feature indices, display order
  std::vector<RowExtras> row_extras;      // parallel to rule_rows
  std::vector<double> importances;        // all M features
  std::optional<std::vector<double>> instance;
  /// 1-based row from which the committee decision no longer changes (LE/UR).
  std::optional<std::size_t> decision_fixed_row;

  bool operator==(const ExplanationView&) const = default;
};

}  // namespace exmatrix
