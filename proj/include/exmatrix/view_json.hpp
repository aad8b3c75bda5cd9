#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "exmatrix/explanations.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/view.hpp"

namespace exmatrix {

inline nlohmann::json to_json(const ChangeVector& c) {
  return {{"tree_id", c.tree_id},       {"source_rule_id", c.source_rule_id}, {"target_rule_id", c.target_rule_id},
          {"deltas", c.deltas},         {"change_sum", c.change_sum},         {"from_class", c.from_class},
          {"to_class", c.to_class}};
}

inline nlohmann::json to_json(const std::vector<std::optional<ChangeVector>>& changes) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : changes) out.push_back(c ? to_json(*c) : nlohmann::json(nullptr));
  return out;
}

inline nlohmann::json to_json(const Prediction& p, const Forest& forest) {
  return {{"probabilities", p.probabilities},
          {"class_index", p.class_index},
          {"class_name", forest.class_names()[p.class_index]}};
}

inline nlohmann::json to_json(const WhatIfResult& w, const Forest& forest) {
  return {{"new_instance", w.new_instance},
          {"old_prediction", to_json(w.old_prediction, forest)},
          {"new_prediction", to_json(w.new_prediction, forest)}};
}

/// Wire format of a view: the view fields plus names and the full rule of
/// each row so a client can draw tooltips without another request.
inline nlohmann::json to_json(const ExplanationView& view, const RuleSet& rules, const Forest& forest) {
  using nlohmann::json;
  json extras = json::array();
  for (const auto& e : view.row_extras) {
    json row = {{"coverage", e.coverage}, {"certainty", e.certainty}};
    if (view.kind == ViewKind::used_rules) row["cumulative_vote"] = e.cumulative_vote;
    if (e.change_sum) row["change_sum"] = *e.change_sum;
    if (e.original_class) row["original_class"] = *e.original_class;
    if (e.change) row["change"] = to_json(*e.change);
    extras.push_back(std::move(row));
  }
  json row_rules = json::array();
  for (std::size_t id : view.rule_rows) row_rules.push_back(rule_to_json(rules.rule(id)));
  json names = json::array();
  for (std::size_t m : view.feature_cols) names.push_back(forest.feature_names()[m]);

  json out = {{"kind", to_string(view.kind)},
              {"rule_rows", view.rule_rows},
              {"feature_cols", view.feature_cols},
              {"feature_col_names", names},
              {"feature_names", forest.feature_names()},
              {"class_names", forest.class_names()},
              {"row_extras", std::move(extras)},
              {"rules", std::move(row_rules)},
              {"importances", view.importances}};
  out["instance"] = view.instance ? json(*view.instance) : json(nullptr);
  out["decision_fixed_row"] = view.decision_fixed_row ? json(*view.decision_fixed_row) : json(nullptr);
  return out;
}

}  // namespace exmatrix
