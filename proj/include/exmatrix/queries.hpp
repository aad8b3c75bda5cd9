#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/explanations.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/forest_json.hpp"
#include "exmatrix/ordering.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/view_json.hpp"

// Request-level helpers shared by the CLI and the HTTP service, so both
// front ends produce the same bytes for the same parameters.

namespace exmatrix {

/// Everything an explanation needs, built once per model.
struct Model {
  Forest forest;
  Dataset dataset;
  RuleSet rules;
  DatasetSchema schema;
};

inline Model make_model(Forest forest, Dataset dataset, DatasetSchema schema) {
  check_compatible(forest, dataset);
  forest = ensure_importances(forest, dataset);
  auto rules = extract_rules(forest, dataset);
  return Model{std::move(forest), std::move(dataset), std::move(rules), std::move(schema)};
}

/// Canonical forest document plus the dataset schema it was trained with.
inline nlohmann::json export_model(const Forest& forest, const DatasetSchema& schema) {
  auto doc = export_forest(forest);
  doc["dataset"] = schema_to_json(schema);
  return doc;
}

inline std::vector<std::string_view> split_list(std::string_view text, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(sep, pos);
    if (next == std::string_view::npos) next = text.size();
    auto item = detail::trim(text.substr(pos, next - pos));
    if (!item.empty()) out.push_back(item);
    pos = next + 1;
  }
  return out;
}

/// "v1,v2,..." into an instance vector.
inline std::vector<double> parse_instance(std::string_view text) {
  std::vector<double> out;
  for (auto item : split_list(text)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw InputError("instance value '" + std::string(item) + "' is not a number");
    out.push_back(v);
  }
  return out;
}

/// Class names or indices, comma separated.
inline std::vector<std::size_t> parse_classes(std::string_view text, const Forest& forest) {
  std::vector<std::size_t> out;
  for (auto item : split_list(text)) {
    const auto& names = forest.class_names();
    const auto it = std::find(names.begin(), names.end(), item);
    if (it != names.end()) {
      out.push_back(static_cast<std::size_t>(it - names.begin()));
      continue;
    }
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), idx);
    if (ec != std::errc() || ptr != item.data() + item.size() || idx >= names.size())
      throw UsageError("unknown class '" + std::string(item) + "'");
    out.push_back(idx);
  }
  return out;
}

inline std::vector<std::size_t> parse_indices(std::string_view text) {
  std::vector<std::size_t> out;
  for (auto item : split_list(text)) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw UsageError("'" + std::string(item) + "' is not a nonnegative integer");
    out.push_back(v);
  }
  return out;
}

/// Filter and ordering parameters, by their CLI/query names.
struct ViewOptions {
  RuleFilter filter;
  std::optional<std::string> order_rows;
  std::optional<std::string> order_cols;
};

inline ExplanationView apply_orders(ExplanationView view, const ViewOptions& opts, const Model& model) {
  if (opts.order_rows)
    view = order_rows(view, parse_criterion(*opts.order_rows, OrderTarget::rules), model.rules);
  if (opts.order_cols)
    view = order_columns(view, parse_criterion(*opts.order_cols, OrderTarget::features), model.forest);
  return view;
}

inline ExplanationView build_global(const Model& model, const ViewOptions& opts) {
  return apply_orders(global_view(model.rules, model.forest, opts.filter), opts, model);
}

inline ExplanationView build_local(const Model& model, std::span<const double> x, const ViewOptions& opts) {
  return apply_orders(local_used_rules(model.rules, model.forest, x), opts, model);
}

struct ChangesResult {
  ExplanationView view;
  std::vector<std::optional<ChangeVector>> changes;
};

inline ChangesResult build_changes(const Model& model, std::span<const double> x, const ViewOptions& opts) {
  auto changes = smallest_changes(model.rules, model.forest, model.dataset, x);
  auto view = apply_orders(smallest_changes_view(model.rules, model.forest, x, changes), opts, model);
  return {std::move(view), std::move(changes)};
}

inline nlohmann::json changes_to_json(const ChangesResult& r, const Model& model) {
  return {{"view", to_json(r.view, model.rules, model.forest)}, {"change_vectors", to_json(r.changes)}};
}

/// What-if through the smallest change of one tree.
inline WhatIfResult whatif_tree(const Model& model, std::span<const double> x, std::size_t tree_id) {
  check_instance(x, model.forest.num_features());
  if (tree_id >= model.forest.num_trees()) throw InputError("tree " + std::to_string(tree_id) + " does not exist");
  const auto changes = smallest_changes(model.rules, model.forest, model.dataset, x);
  if (!changes[tree_id]) throw InputError("tree " + std::to_string(tree_id) + " has no rule of another class");
  return apply_changes(x, *changes[tree_id], model.rules, model.forest, model.dataset);
}

inline nlohmann::json model_summary(const Model& model) {
  const auto& test = model.dataset.test_indices();
  return {{"K", model.forest.num_trees()},
          {"Z", model.rules.size()},
          {"accuracy_on_test",
           test.empty() ? nlohmann::json(nullptr) : nlohmann::json(accuracy(model.forest, model.dataset, test))},
          {"importances", model.forest.importances()},
          {"feature_names", model.forest.feature_names()},
          {"class_names", model.forest.class_names()},
          {"n_train", model.dataset.train_indices().size()},
          {"n_test", test.size()}};
}

}  // namespace exmatrix
