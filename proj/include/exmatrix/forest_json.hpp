#pragma once

#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest.hpp"

namespace exmatrix {

using json = nlohmann::json;

inline json train_params_to_json(const TrainParams& p) {
  return {{"n_trees", p.n_trees},
          {"max_depth", p.max_depth ? json(*p.max_depth) : json(nullptr)},
          {"features_per_split", p.features_per_split},
          {"bootstrap", p.bootstrap},
          {"seed", p.seed}};
}

inline json schema_to_json(const DatasetSchema& s) {
  return {{"label_column", s.label_column},
          {"class_names", s.class_names},
          {"train_fraction", s.train_fraction},
          {"split_seed", s.split_seed}};
}

namespace detail {

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "/" + key, "missing field");
  return *it;
}

inline std::int64_t as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ValidationError(path, "expected an integer");
  return v.get<std::int64_t>();
}

inline std::size_t as_index(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ValidationError(path, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

inline double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError(path, "expected a number");
  return v.get<double>();
}

inline std::vector<std::string> as_strings(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ValidationError(path + "/" + std::to_string(i), "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

inline DecisionTree tree_from_json(const json& doc, const std::string& path) {
  const json& jnodes = require(doc, "nodes", path);
  if (!jnodes.is_array() || jnodes.empty()) throw ValidationError(path + "/nodes", "expected a non-empty array");
  std::map<std::int64_t, std::size_t> index_of;
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string at = path + "/nodes/" + std::to_string(i);
    const auto id = as_int(require(jnodes[i], "id", at), at + "/id");
    if (!index_of.emplace(id, i).second) throw ValidationError(at + "/id", "duplicate node id " + std::to_string(id));
  }
  auto resolve = [&](const json& ref, const std::string& at) {
    const auto it = index_of.find(as_int(ref, at));
    if (it == index_of.end()) throw ValidationError(at, "dangling node reference " + ref.dump());
    return it->second;
  };

  std::vector<Node> nodes(jnodes.size());
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const json& jn = jnodes[i];
    const std::string at = path + "/nodes/" + std::to_string(i);
    Node& n = nodes[i];
    n.id = jn["id"].get<std::int64_t>();
    const json& kind = require(jn, "kind", at);
    if (kind == "internal") {
      n.kind = NodeKind::internal;
      n.feature = as_index(require(jn, "feature", at), at + "/feature");
      n.threshold = as_real(require(jn, "threshold", at), at + "/threshold");
      n.left = resolve(require(jn, "left", at), at + "/left");
      n.right = resolve(require(jn, "right", at), at + "/right");
    } else if (kind == "leaf") {
      n.kind = NodeKind::leaf;
      const json& counts = require(jn, "counts", at);
      if (!counts.is_array()) throw ValidationError(at + "/counts", "expected an array");
      for (std::size_t j = 0; j < counts.size(); ++j)
        n.counts.push_back(as_index(counts[j], at + "/counts/" + std::to_string(j)));
    } else {
      throw ValidationError(at + "/kind", "expected \"internal\" or \"leaf\"");
    }
  }
  const std::size_t root = resolve(require(doc, "root", path), path + "/root");
  try {
    return DecisionTree(std::move(nodes), root);
  } catch (const ValidationError& e) {
    throw ValidationError(path + e.path(), e.what());
  }
}

}  // namespace detail

/// Canonical forest document. Node bookkeeping counts of internal nodes are
/// not part of the format.
inline json export_forest(const Forest& forest) {
  json trees = json::array();
  for (const auto& tree : forest.trees()) {
    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) {
        nodes.push_back({{"id", n.id}, {"kind", "leaf"}, {"counts", n.counts}});
      } else {
        nodes.push_back({{"id", n.id},
                         {"kind", "internal"},
                         {"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", tree.node(n.left).id},
                         {"right", tree.node(n.right).id}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}, {"root", tree.node(tree.root()).id}});
  }
  json doc = {{"version", 1},
              {"feature_names", forest.feature_names()},
              {"class_names", forest.class_names()},
              {"trees", std::move(trees)},
              {"train_params", train_params_to_json(forest.train_params())}};
  if (forest.has_importances()) doc["importances"] = forest.importances();
  return doc;
}

inline TrainParams train_params_from_json(const json& j, const std::string& path) {
  TrainParams p;
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  if (j.contains("n_trees")) p.n_trees = detail::as_index(j["n_trees"], path + "/n_trees");
  if (j.contains("max_depth") && !j["max_depth"].is_null())
    p.max_depth = detail::as_index(j["max_depth"], path + "/max_depth");
  if (j.contains("features_per_split"))
    p.features_per_split = detail::as_index(j["features_per_split"], path + "/features_per_split");
  if (j.contains("bootstrap")) {
    if (!j["bootstrap"].is_boolean()) throw ValidationError(path + "/bootstrap", "expected a boolean");
    p.bootstrap = j["bootstrap"].get<bool>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ValidationError(path + "/seed", "expected an integer");
    p.seed = j["seed"].get<std::uint64_t>();
  }
  return p;
}

inline DatasetSchema schema_from_json(const json& j, const std::string& path) {
  DatasetSchema s;
  const json& label = detail::require(j, "label_column", path);
  if (!label.is_string()) throw ValidationError(path + "/label_column", "expected a string");
  s.label_column = label.get<std::string>();
  if (j.contains("class_names")) s.class_names = detail::as_strings(j["class_names"], path + "/class_names");
  if (j.contains("train_fraction")) s.train_fraction = detail::as_real(j["train_fraction"], path + "/train_fraction");
  if (j.contains("split_seed")) {
    if (!j["split_seed"].is_number_integer()) throw ValidationError(path + "/split_seed", "expected an integer");
    s.split_seed = j["split_seed"].get<std::uint64_t>();
  }
  return s;
}

inline Forest import_forest(const json& doc) {
  if (!doc.is_object()) throw ValidationError("", "expected a JSON object");
  const json& version = detail::require(doc, "version", "");
  if (version != 1) throw ValidationError("/version", "unsupported version " + version.dump());
  auto features = detail::as_strings(detail::require(doc, "feature_names", ""), "/feature_names");
  auto classes = detail::as_strings(detail::require(doc, "class_names", ""), "/class_names");
  const json& jtrees = detail::require(doc, "trees", "");
  if (!jtrees.is_array()) throw ValidationError("/trees", "expected an array");
  std::vector<DecisionTree> trees;
  for (std::size_t k = 0; k < jtrees.size(); ++k)
    trees.push_back(detail::tree_from_json(jtrees[k], "/trees/" + std::to_string(k)));
  TrainParams params;
  if (doc.contains("train_params")) params = train_params_from_json(doc["train_params"], "/train_params");
  std::vector<double> importances;
  if (doc.contains("importances")) {
    const json& imp = doc["importances"];
    if (!imp.is_array()) throw ValidationError("/importances", "expected an array");
    for (std::size_t m = 0; m < imp.size(); ++m)
      importances.push_back(detail::as_real(imp[m], "/importances/" + std::to_string(m)));
  }
  return Forest(std::move(trees), std::move(features), std::move(classes), std::move(importances), params);
}

inline Forest parse_forest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("", std::string("invalid JSON: ") + e.what());
  }
  return import_forest(doc);
}

}  // namespace exmatrix
