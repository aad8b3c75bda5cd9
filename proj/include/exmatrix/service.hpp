#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest_json.hpp"
#include "exmatrix/queries.hpp"
#include "exmatrix/svg.hpp"
#include "exmatrix/trainer.hpp"

namespace exmatrix {

/// Immutable snapshot served under one model id.
struct Session {
  std::string model_id;
  Model model;
  std::string dataset_csv;
  std::chrono::system_clock::time_point created_at;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

/// HTTP-independent request handling. Every read route is a pure function of
/// the session snapshot and the request.
class Service {
 public:
  struct Options {
    std::optional<std::filesystem::path> data_dir;
  };

  Service() : Service(Options{}) {}

  explicit Service(Options options) : options_(std::move(options)) {
    std::random_device rd;
    id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    if (options_.data_dir) load_persisted();
  }

  HttpResponse handle(std::string_view method, std::string_view path, const QueryParams& query,
                      std::string_view body) {
    try {
      return route(method, path, query, body);
    } catch (const RequestError& e) {
      return error(e.status, e.what(), e.path);
    } catch (const ValidationError& e) {
      return error(400, e.what(), e.path());
    } catch (const InputError& e) {
      return error(422, e.what(), "/instance");
    } catch (const EmptyViewError& e) {
      return error(422, e.what(), "");
    } catch (const StaleChangeError& e) {
      return error(409, e.what(), "");
    } catch (const UsageError& e) {
      return error(400, e.what(), "");
    } catch (const DataError& e) {
      return error(400, e.what(), "");
    } catch (const std::exception& e) {
      return error(500, e.what(), "");
    }
  }

  std::shared_ptr<const Session> find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
  }

 private:
  struct RequestError : std::runtime_error {
    RequestError(int code, const std::string& what, std::string at)
        : std::runtime_error(what), status(code), path(std::move(at)) {}
    int status;
    std::string path;
  };

  static HttpResponse json_response(int status, const nlohmann::json& body) {
    return {status, "application/json", body.dump()};
  }

  static HttpResponse error(int status, const std::string& message, const std::string& path) {
    return json_response(status, {{"error", message}, {"path", path}});
  }

  static nlohmann::json parse_body(std::string_view body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw RequestError(400, std::string("malformed JSON body: ") + e.what(), "");
    }
  }

  static std::optional<std::string> param(const QueryParams& q, const std::string& key) {
    const auto it = q.find(key);
    if (it == q.end()) return std::nullopt;
    return it->second;
  }

  static double real_param(const QueryParams& q, const std::string& key) {
    const auto text = *param(q, key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw RequestError(400, "'" + text + "' is not a number", "?" + key);
    return v;
  }

  static ViewOptions view_options(const QueryParams& q, const Model& model) {
    ViewOptions opts;
    if (param(q, "min-coverage")) opts.filter.min_coverage = real_param(q, "min-coverage");
    if (param(q, "min-certainty")) opts.filter.min_certainty = real_param(q, "min-certainty");
    if (auto v = param(q, "classes")) opts.filter.classes = parse_classes(*v, model.forest);
    if (auto v = param(q, "rule-ids")) opts.filter.explicit_rule_ids = parse_indices(*v);
    opts.order_rows = param(q, "order-rows");
    opts.order_cols = param(q, "order-cols");
    return opts;
  }

  /// Same options taken from a JSON request body (keys as in the query).
  static ViewOptions body_view_options(const nlohmann::json& body, const Model& model) {
    QueryParams q;
    for (const char* key : {"min-coverage", "min-certainty", "classes", "rule-ids", "order-rows", "order-cols"}) {
      if (!body.contains(key)) continue;
      const auto& v = body[key];
      q.emplace(key, v.is_string() ? v.get<std::string>() : v.dump());
    }
    return view_options(q, model);
  }

  static std::vector<double> instance_from_json(const nlohmann::json& body, const Model& model) {
    if (body.contains("row")) {
      if (!body["row"].is_number_unsigned()) throw RequestError(400, "expected a row index", "/row");
      const auto row = body["row"].get<std::size_t>();
      if (row >= model.dataset.size()) throw RequestError(422, "row index out of range", "/row");
      const auto x = model.dataset.instance(row);
      return {x.begin(), x.end()};
    }
    if (!body.contains("instance")) throw RequestError(400, "missing field", "/instance");
    const auto& inst = body["instance"];
    if (!inst.is_array()) throw RequestError(400, "expected an array of numbers", "/instance");
    std::vector<double> x;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      if (!inst[i].is_number()) throw RequestError(400, "expected a number", "/instance/" + std::to_string(i));
      x.push_back(inst[i].get<double>());
    }
    if (x.size() != model.forest.num_features())
      throw RequestError(422,
                         "instance has " + std::to_string(x.size()) + " values, expected " +
                             std::to_string(model.forest.num_features()),
                         "/instance");
    return x;
  }

  static std::vector<double> instance_from_query(const QueryParams& q, const Model& model) {
    nlohmann::json body = nlohmann::json::object();
    if (auto row = param(q, "row")) {
      body["row"] = parse_indices(*row).at(0);
    } else if (auto inst = param(q, "instance")) {
      body["instance"] = parse_instance(*inst);
    }
    return instance_from_json(body, model);
  }

  std::shared_ptr<const Session> require_session(const std::string& id) const {
    auto s = find(id);
    if (!s) throw RequestError(404, "unknown model id '" + id + "'", "");
    return s;
  }

  HttpResponse create_model(std::string_view body) {
    const auto req = parse_body(body);
    if (!req.is_object()) throw RequestError(400, "expected a JSON object", "");
    if (!req.contains("dataset_csv") || !req["dataset_csv"].is_string())
      throw RequestError(400, "expected the dataset CSV text", "/dataset_csv");
    if (!req.contains("schema")) throw RequestError(400, "missing field", "/schema");
    auto schema = schema_from_json(req["schema"], "/schema");
    const std::string csv = req["dataset_csv"].get<std::string>();
    auto dataset = parse_dataset(csv, schema);

    std::optional<Forest> forest;
    if (req.contains("forest")) {
      try {
        forest = import_forest(req["forest"]);
      } catch (const ValidationError& e) {
        throw ValidationError("/forest" + e.path(), e.what());
      }
    } else if (req.contains("train")) {
      forest = train_forest(dataset, train_params_from_json(req["train"], "/train"));
    } else {
      throw RequestError(400, "expected either a forest or a train request", "/forest");
    }
    auto session = std::make_shared<Session>(
        Session{"", make_model(std::move(*forest), std::move(dataset), std::move(schema)), csv,
                std::chrono::system_clock::now()});
    {
      std::unique_lock lock(mutex_);
      session->model_id = next_id_locked();
      sessions_.emplace(session->model_id, session);
    }
    persist(*session);
    return json_response(201, {{"model_id", session->model_id}, {"summary", model_summary(session->model)}});
  }

  std::string next_id_locked() {
    while (true) {
      const auto n = counter_.fetch_add(1);
      char buf[24];
      std::snprintf(buf, sizeof buf, "m%016llx", static_cast<unsigned long long>(splitmix64(id_salt_ ^ n)));
      if (!sessions_.count(buf)) return buf;
    }
  }

  HttpResponse route(std::string_view method, std::string_view path, const QueryParams& query, std::string_view body) {
    std::vector<std::string> parts;
    for (auto p : split_list(path, '/')) parts.emplace_back(p);
    if (parts.empty() || parts[0] != "models") throw RequestError(404, "no such route", "");
    if (parts.size() == 1) {
      if (method == "POST") return create_model(body);
      throw RequestError(405, "method not allowed", "");
    }
    const auto session = require_session(parts[1]);
    const Model& model = session->model;
    const std::string tail = [&] {
      std::string t;
      for (std::size_t i = 2; i < parts.size(); ++i) t += "/" + parts[i];
      return t;
    }();

    if (tail.empty() && method == "GET") return json_response(200, model_summary(model));
    if (tail.empty() && method == "DELETE") {
      {
        std::unique_lock lock(mutex_);
        sessions_.erase(session->model_id);
      }
      unpersist(session->model_id);
      return {204, "application/json", ""};
    }
    if (tail == "/rules" && method == "GET") {
      const auto view = build_global(model, view_options(query, model));
      return json_response(200, to_json(view, model.rules, model.forest));
    }
    if (tail == "/explain/local" && method == "POST") {
      const auto req = parse_body(body);
      const auto x = instance_from_json(req, model);
      const auto view = build_local(model, x, body_view_options(req, model));
      return json_response(200, to_json(view, model.rules, model.forest));
    }
    if (tail == "/explain/changes" && method == "POST") {
      const auto req = parse_body(body);
      const auto x = instance_from_json(req, model);
      return json_response(200, changes_to_json(build_changes(model, x, body_view_options(req, model)), model));
    }
    if (tail == "/whatif" && method == "POST") {
      const auto req = parse_body(body);
      const auto x = instance_from_json(req, model);
      if (req.contains("tree_id")) {
        if (!req["tree_id"].is_number_unsigned()) throw RequestError(400, "expected a tree index", "/tree_id");
        return json_response(200, to_json(whatif_tree(model, x, req["tree_id"].get<std::size_t>()), model.forest));
      }
      if (!req.contains("edits") || !req["edits"].is_array())
        throw RequestError(400, "expected tree_id or an edits array", "/edits");
      std::vector<FeatureEdit> edits;
      for (std::size_t i = 0; i < req["edits"].size(); ++i) {
        const auto& e = req["edits"][i];
        const std::string at = "/edits/" + std::to_string(i);
        if (!e.is_object() || !e.contains("feature") || !e.contains("value") || !e["value"].is_number())
          throw RequestError(400, "expected {feature, value}", at);
        FeatureEdit edit;
        if (e["feature"].is_string()) {
          try {
            edit.feature = model.dataset.feature_index(e["feature"].get<std::string>());
          } catch (const SchemaError& err) {
            throw RequestError(422, err.what(), at + "/feature");
          }
        } else if (e["feature"].is_number_unsigned() && e["feature"].get<std::size_t>() < model.dataset.num_features()) {
          edit.feature = e["feature"].get<std::size_t>();
        } else {
          throw RequestError(422, "unknown feature", at + "/feature");
        }
        edit.value = e["value"].get<double>();
        edits.push_back(edit);
      }
      return json_response(200, to_json(apply_edits(x, edits, model.forest), model.forest));
    }
    if (tail == "/render" && method == "GET") {
      const auto kind = param(query, "view").value_or("global");
      const auto opts = view_options(query, model);
      ExplanationView view;
      if (kind == "global") {
        view = build_global(model, opts);
      } else if (kind == "local") {
        view = build_local(model, instance_from_query(query, model), opts);
      } else if (kind == "changes") {
        view = build_changes(model, instance_from_query(query, model), opts).view;
      } else {
        throw RequestError(400, "view must be global, local or changes", "?view");
      }
      return {200, "image/svg+xml", render(view, model.rules, model.forest, model.dataset)};
    }
    throw RequestError(404, "no such route", "");
  }

  void persist(const Session& s) const {
    if (!options_.data_dir) return;
    const auto dir = *options_.data_dir / s.model_id;
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "model.json") << export_model(s.model.forest, s.model.schema).dump(1) << '\n';
    std::ofstream(dir / "dataset.csv", std::ios::binary) << s.dataset_csv;
  }

  void unpersist(const std::string& id) const {
    if (!options_.data_dir) return;
    std::error_code ec;
    std::filesystem::remove_all(*options_.data_dir / id, ec);
  }

  void load_persisted() {
    std::filesystem::create_directories(*options_.data_dir);
    for (const auto& entry : std::filesystem::directory_iterator(*options_.data_dir)) {
      if (!entry.is_directory()) continue;
      const auto model_path = entry.path() / "model.json";
      const auto csv_path = entry.path() / "dataset.csv";
      if (!std::filesystem::exists(model_path) || !std::filesystem::exists(csv_path)) continue;
      const auto doc = nlohmann::json::parse(read_text_file(model_path));
      auto schema = schema_from_json(doc.at("dataset"), "/dataset");
      auto csv = read_text_file(csv_path);
      auto model = make_model(import_forest(doc), parse_dataset(csv, schema), schema);
      auto id = entry.path().filename().string();
      sessions_.emplace(id, std::make_shared<const Session>(Session{id, std::move(model), std::move(csv),
                                                                    std::chrono::system_clock::now()}));
    }
  }

  Options options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Session>> sessions_;
  std::atomic<std::uint64_t> counter_{0};
  std::uint64_t id_salt_ = 0;
};

}  // namespace exmatrix
