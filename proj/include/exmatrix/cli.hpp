#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest_json.hpp"
#include "exmatrix/http_server.hpp"
#include "exmatrix/queries.hpp"
#include "exmatrix/svg.hpp"
#include "exmatrix/trainer.hpp"

namespace exmatrix {

/// Process exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_internal = 3 };

namespace cli_detail {

struct DataFlags {
  std::string data;
  std::string label;
  std::string class_names;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;

  void attach(CLI::App& cmd, bool required) {
    auto* opt = cmd.add_option("--data", data, "Dataset CSV file");
    if (required) opt->required();
    cmd.add_option("--label", label, "Label column name (defaults to the model's)");
    cmd.add_option("--class-names", class_names, "Comma-separated class order");
    cmd.add_option("--train-fraction", train_fraction, "Share of rows in the train split (default 0.7)");
    cmd.add_option("--split-seed", split_seed, "Seed of the train/test shuffle (default 0)");
  }

  /// Flags override the schema stored in the model document.
  DatasetSchema schema(const std::optional<DatasetSchema>& stored) const {
    DatasetSchema s = stored.value_or(DatasetSchema{});
    if (!label.empty()) s.label_column = label;
    if (!class_names.empty()) {
      s.class_names.clear();
      for (auto c : split_list(class_names)) s.class_names.emplace_back(c);
    }
    if (train_fraction) s.train_fraction = *train_fraction;
    if (split_seed) s.split_seed = *split_seed;
    if (s.label_column.empty()) throw UsageError("--label is required (the model does not record it)");
    return s;
  }
};

struct ViewFlags {
  std::optional<double> min_coverage;
  std::optional<double> min_certainty;
  std::string classes;
  std::string rule_ids;
  std::optional<std::string> order_rows;
  std::optional<std::string> order_cols;

  void attach(CLI::App& cmd, bool filters) {
    if (filters) {
      cmd.add_option("--min-coverage", min_coverage, "Keep rules with coverage >= value");
      cmd.add_option("--min-certainty", min_certainty, "Keep rules whose top class certainty >= value");
      cmd.add_option("--classes", classes, "Keep rules of these classes (names or indices)");
      cmd.add_option("--rule-ids", rule_ids, "Explicit rule ids (overrides the other filters)");
    }
    cmd.add_option("--order-rows", order_rows, "Row order key, optionally suffixed with :asc or :desc");
    cmd.add_option("--order-cols", order_cols, "Column order key (importance, dataset-order)");
  }

  ViewOptions options(const Forest& forest) const {
    ViewOptions o;
    o.filter.min_coverage = min_coverage;
    o.filter.min_certainty = min_certainty;
    if (!classes.empty()) o.filter.classes = parse_classes(classes, forest);
    if (!rule_ids.empty()) o.filter.explicit_rule_ids = parse_indices(rule_ids);
    o.order_rows = order_rows;
    o.order_cols = order_cols;
    return o;
  }
};

struct InstanceFlags {
  std::string instance;
  std::optional<std::size_t> row;

  void attach(CLI::App& cmd) {
    auto* a = cmd.add_option("--instance", instance, "Instance as \"v1,v2,...\"");
    auto* b = cmd.add_option("--row", row, "0-based dataset row to explain");
    a->excludes(b);
    b->excludes(a);
  }

  std::vector<double> get(const Dataset& data) const {
    if (row) {
      if (*row >= data.size()) throw InputError("row " + std::to_string(*row) + " is out of range");
      const auto x = data.instance(*row);
      return {x.begin(), x.end()};
    }
    if (instance.empty()) throw UsageError("one of --instance or --row is required");
    auto x = parse_instance(instance);
    check_instance(x, data.num_features());
    return x;
  }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else write_text(path, text);
}

inline Model load_model(const std::string& model_path, const DataFlags& data_flags) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(model_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("", "'" + model_path + "' is not valid JSON: " + e.what());
  }
  std::optional<DatasetSchema> stored;
  if (doc.is_object() && doc.contains("dataset")) stored = schema_from_json(doc["dataset"], "/dataset");
  auto forest = import_forest(doc);
  auto schema = data_flags.schema(stored);
  auto dataset = load_dataset(data_flags.data, schema);
  return make_model(std::move(forest), std::move(dataset), std::move(schema));
}

}  // namespace cli_detail

/// Runs one command line. Usage problems exit 1, bad data or files exit 2.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Random-forest rule explanations: global, used-rules and smallest-changes matrices", "exmatrix"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with the same keys as the flags");

  std::string model_path, out_path, svg_path, hits_path;

  // train
  auto* train = app.add_subcommand("train", "Train a random forest and write the model JSON");
  DataFlags train_data;
  train_data.attach(*train, true);
  TrainParams params;
  std::size_t max_depth = 0;
  bool no_bootstrap = false;
  train->add_option("--trees", params.n_trees, "Number of trees")->check(CLI::PositiveNumber);
  train->add_option("--max-depth", max_depth, "Maximum depth (omit for unlimited)")->check(CLI::PositiveNumber);
  train->add_option("--features-per-split", params.features_per_split, "Features sampled per split (default ceil(sqrt(M)))");
  train->add_flag("--no-bootstrap", no_bootstrap, "Grow every tree on the full train split");
  train->add_option("--seed", params.seed, "Random seed");
  std::string train_out = "model.json";
  train->add_option("--out", train_out, "Output model JSON")->capture_default_str();

  // import
  auto* import = app.add_subcommand("import", "Validate a forest JSON and write it in canonical form");
  DataFlags import_data;
  import_data.attach(*import, false);
  import->add_option("--model", model_path, "Forest JSON")->required();
  import->add_option("--out", out_path, "Output file (stdout when omitted)");

  // rules
  auto* rules_cmd = app.add_subcommand("rules", "Extract vector rules as JSON lines");
  DataFlags rules_data;
  rules_data.attach(*rules_cmd, true);
  rules_cmd->add_option("--model", model_path, "Model JSON")->required();
  rules_cmd->add_option("--out", out_path, "Output JSONL (stdout when omitted)");

  // explain-* and render
  DataFlags view_data;
  ViewFlags view_flags;
  InstanceFlags instance_flags;
  auto add_view_cmd = [&](const char* name, const char* help, bool filters, bool instance) {
    auto* cmd = app.add_subcommand(name, help);
    view_data.attach(*cmd, true);
    view_flags.attach(*cmd, filters);
    if (instance) instance_flags.attach(*cmd);
    cmd->add_option("--model", model_path, "Model JSON")->required();
    cmd->add_option("--out", out_path, "View JSON output (stdout when omitted)");
    cmd->add_option("--svg", svg_path, "Also render the view to this SVG file");
    cmd->add_option("--hit-regions", hits_path, "Also write the cell hit regions JSON");
    return cmd;
  };
  auto* explain_global = add_view_cmd("explain-global", "Global rule matrix", true, false);
  auto* explain_local = add_view_cmd("explain-local", "Rules used for one instance with the cumulative vote", false, true);
  auto* explain_changes = add_view_cmd("explain-changes", "Smallest per-tree changes that flip a tree's class", false, true);

  auto* render_cmd = app.add_subcommand("render", "Render a view to SVG");
  std::string view_kind = "global";
  render_cmd->add_option("--model", model_path, "Model JSON")->required();
  view_data.attach(*render_cmd, true);
  view_flags.attach(*render_cmd, true);
  instance_flags.attach(*render_cmd);
  render_cmd->add_option("--view", view_kind, "global, local or changes")
      ->check(CLI::IsMember({"global", "local", "changes"}));
  render_cmd->add_option("--out", out_path, "Output SVG (stdout when omitted)");

  // whatif
  auto* whatif = app.add_subcommand("whatif", "Apply one tree's smallest change (or explicit edits) and re-predict");
  DataFlags whatif_data;
  InstanceFlags whatif_instance;
  whatif_data.attach(*whatif, true);
  whatif_instance.attach(*whatif);
  std::optional<std::size_t> tree_id;
  std::vector<std::string> edits;
  whatif->add_option("--model", model_path, "Model JSON")->required();
  auto* tree_opt = whatif->add_option("--tree", tree_id, "Tree whose smallest change is applied");
  auto* edit_opt = whatif->add_option("--edit", edits, "feature=value edit (repeatable, name or index)");
  tree_opt->excludes(edit_opt);
  edit_opt->excludes(tree_opt);

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  bool cors = false;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", data_dir, "Persist models in this directory");
  serve->add_flag("--cors", cors, "Allow cross-origin requests");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return exit_usage;
  }

  try {
    if (*train) {
      if (max_depth > 0) params.max_depth = max_depth;
      params.bootstrap = !no_bootstrap;
      auto schema = train_data.schema(std::nullopt);
      auto dataset = load_dataset(train_data.data, schema);
      auto forest = train_forest(dataset, params);
      write_text(train_out, export_model(forest, schema).dump(1) + "\n");
      const auto model = make_model(forest, dataset, schema);
      out << model_summary(model).dump() << '\n';
    } else if (*import) {
      auto doc = nlohmann::json::parse(read_text_file(model_path), nullptr, false);
      if (doc.is_discarded()) throw ValidationError("", "'" + model_path + "' is not valid JSON");
      auto forest = import_forest(doc);
      nlohmann::json canonical;
      if (!import_data.data.empty()) {
        std::optional<DatasetSchema> stored;
        if (doc.contains("dataset")) stored = schema_from_json(doc["dataset"], "/dataset");
        auto schema = import_data.schema(stored);
        forest = ensure_importances(forest, load_dataset(import_data.data, schema));
        canonical = export_model(forest, schema);
      } else {
        canonical = export_forest(forest);
        if (doc.contains("dataset")) canonical["dataset"] = doc["dataset"];
      }
      emit(out_path, canonical.dump(1) + "\n", out);
    } else if (*rules_cmd) {
      const auto model = load_model(model_path, rules_data);
      emit(out_path, rules_to_jsonl(model.rules), out);
    } else if (*explain_global || *explain_local || *explain_changes) {
      const auto model = load_model(model_path, view_data);
      const auto opts = view_flags.options(model.forest);
      ExplanationView view;
      nlohmann::json doc;
      if (*explain_global) {
        view = build_global(model, opts);
        doc = to_json(view, model.rules, model.forest);
      } else if (*explain_local) {
        view = build_local(model, instance_flags.get(model.dataset), opts);
        doc = to_json(view, model.rules, model.forest);
      } else {
        auto result = build_changes(model, instance_flags.get(model.dataset), opts);
        doc = changes_to_json(result, model);
        view = std::move(result.view);
      }
      emit(out_path, doc.dump() + "\n", out);
      if (!svg_path.empty()) write_text(svg_path, render(view, model.rules, model.forest, model.dataset));
      if (!hits_path.empty()) write_text(hits_path, render_hit_regions(view).dump() + "\n");
    } else if (*render_cmd) {
      const auto model = load_model(model_path, view_data);
      const auto opts = view_flags.options(model.forest);
      ExplanationView view;
      if (view_kind == "global") view = build_global(model, opts);
      else if (view_kind == "local") view = build_local(model, instance_flags.get(model.dataset), opts);
      else view = build_changes(model, instance_flags.get(model.dataset), opts).view;
      emit(out_path, render(view, model.rules, model.forest, model.dataset), out);
    } else if (*whatif) {
      const auto model = load_model(model_path, whatif_data);
      const auto x = whatif_instance.get(model.dataset);
      WhatIfResult result;
      if (tree_id) {
        result = whatif_tree(model, x, *tree_id);
      } else if (!edits.empty()) {
        std::vector<FeatureEdit> parsed;
        for (const auto& e : edits) {
          const auto eq = e.find('=');
          if (eq == std::string::npos) throw UsageError("edit '" + e + "' is not feature=value");
          const std::string name = e.substr(0, eq);
          FeatureEdit edit;
          std::size_t idx = 0;
          const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
          edit.feature = (ec == std::errc() && ptr == name.data() + name.size()) ? idx : model.dataset.feature_index(name);
          edit.value = parse_instance(e.substr(eq + 1)).at(0);
          parsed.push_back(edit);
        }
        result = apply_edits(x, parsed, model.forest);
      } else {
        throw UsageError("whatif needs --tree or --edit");
      }
      out << to_json(result, model.forest).dump() << '\n';
    } else if (*serve) {
      return run_server(host, port, data_dir, cors, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return exit_internal;
  }
  return exit_ok;
}

}  // namespace exmatrix
