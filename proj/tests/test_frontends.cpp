#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exmatrix/cli.hpp"
#include "exmatrix/exmatrix.hpp"
#include "exmatrix/service.hpp"
#include "oracles.hpp"

using namespace exmatrix;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "exmatrix");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("exmatrix-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

const std::string iris_csv = oracle::data_path("iris.csv");
const std::string worked_json = oracle::test_data_path("worked_example.json");

Model worked() {
  const auto doc = nlohmann::json::parse(read_text_file(worked_json));
  auto schema = schema_from_json(doc["dataset"], "/dataset");
  return make_model(import_forest(doc), load_dataset(iris_csv, schema), schema);
}

}  // namespace

TEST(Cli, TrainWritesModel) {
  TempDir dir;
  const auto r = cli({"train", "--data", iris_csv, "--label", "species", "--trees", "3", "--max-depth", "3", "--seed",
                      "7", "--out", dir / "model.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(read_text_file(dir / "model.json"));
  EXPECT_EQ(doc["trees"].size(), 3u);
  EXPECT_EQ(doc["dataset"]["label_column"], "species");
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["K"], 3);

  // The stored schema lets later commands omit --label.
  const auto rules = cli({"rules", "--model", dir / "model.json", "--data", iris_csv});
  ASSERT_EQ(rules.code, 0) << rules.err;
  EXPECT_EQ(static_cast<std::size_t>(std::count(rules.out.begin(), rules.out.end(), '\n')), summary["Z"].get<std::size_t>());
}

TEST(Cli, ExplainLocalWorkedExample) {
  const auto r = cli({"explain-local", "--model", worked_json, "--data", iris_csv, "--instance", "6.9,3.1,4.9,1.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto view = nlohmann::json::parse(r.out);
  const auto vote = view["row_extras"].back()["cumulative_vote"];
  EXPECT_NEAR(vote[0].get<double>(), 0.0, 0.005);
  EXPECT_NEAR(vote[1].get<double>(), 0.72, 0.005);
  EXPECT_NEAR(vote[2].get<double>(), 0.28, 0.005);
  const auto by_row = cli({"explain-local", "--model", worked_json, "--data", iris_csv, "--row", "52"});
  EXPECT_EQ(by_row.out, r.out);
}

TEST(Cli, OutputsEqualDirectCalls) {
  TempDir dir;
  const auto m = worked();
  const std::vector<double> x = {6.9, 3.1, 4.9, 1.5};
  auto g = cli({"explain-global", "--model", worked_json, "--data", iris_csv, "--min-coverage", "0.3", "--order-rows",
                "class-and-coverage", "--svg", dir / "g.svg"});
  ASSERT_EQ(g.code, 0) << g.err;
  ViewOptions opts;
  opts.filter.min_coverage = 0.3;
  opts.order_rows = "class-and-coverage";
  const auto view = build_global(m, opts);
  EXPECT_EQ(g.out, to_json(view, m.rules, m.forest).dump() + "\n");
  EXPECT_EQ(read_text_file(dir / "g.svg"), render(view, m.rules, m.forest, m.dataset));

  auto c = cli({"explain-changes", "--model", worked_json, "--data", iris_csv, "--row", "52"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(c.out, changes_to_json(build_changes(m, x, {}), m).dump() + "\n");

  auto w = cli({"whatif", "--model", worked_json, "--data", iris_csv, "--instance", "6.9,3.1,4.9,1.5", "--tree", "1"});
  ASSERT_EQ(w.code, 0) << w.err;
  EXPECT_EQ(w.out, to_json(whatif_tree(m, x, 1), m.forest).dump() + "\n");

  auto e = cli({"whatif", "--model", worked_json, "--data", iris_csv, "--row", "52", "--edit", "petal width=2.0",
                "--edit", "2=5.5"});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::vector<FeatureEdit> edits = {{3, 2.0}, {2, 5.5}};
  EXPECT_EQ(e.out, to_json(apply_edits(x, edits, m.forest), m.forest).dump() + "\n");

  auto svg = cli({"render", "--model", worked_json, "--data", iris_csv, "--view", "local", "--row", "52"});
  ASSERT_EQ(svg.code, 0) << svg.err;
  EXPECT_EQ(svg.out, render(build_local(m, x, {}), m.rules, m.forest, m.dataset));
}

TEST(Cli, ImportCanonicalizes) {
  TempDir dir;
  const auto r = cli({"import", "--model", worked_json, "--data", iris_csv, "--out", dir / "canon.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(read_text_file(dir / "canon.json"));
  EXPECT_EQ(doc["importances"].size(), 4u);
  EXPECT_EQ(doc["dataset"]["split_seed"], 8);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(cli({}).code, exit_usage);
  const auto unknown = cli({"rules", "--model", worked_json, "--data", iris_csv, "--bogus"});
  EXPECT_EQ(unknown.code, exit_usage);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli({"explain-local", "--model", worked_json, "--data", iris_csv, "--row", "1", "--instance", "1,2,3,4"}).code,
            exit_usage);
  EXPECT_EQ(cli({"explain-local", "--model", worked_json, "--data", iris_csv}).code, exit_usage);
  EXPECT_EQ(cli({"explain-global", "--model", worked_json, "--data", iris_csv, "--order-rows", "importance"}).code,
            exit_usage);
  const auto missing = cli({"rules", "--model", dir / "none.json", "--data", iris_csv});
  EXPECT_EQ(missing.code, exit_data);
  EXPECT_NE(missing.err.find("none.json"), std::string::npos);
  EXPECT_EQ(cli({"explain-local", "--model", worked_json, "--data", iris_csv, "--instance", "1,2"}).code, exit_data);
  EXPECT_EQ(cli({"explain-global", "--model", worked_json, "--data", iris_csv, "--min-coverage", "2"}).code, exit_data);
  EXPECT_EQ(cli({"train", "--data", iris_csv, "--label", "nope"}).code, exit_data);
}

TEST(Cli, ConfigFile) {
  TempDir dir;
  std::ofstream(dir / "run.toml") << "[train]\ntrees = 4\nmax-depth = 2\nlabel = \"species\"\n";
  const auto r = cli({"--config", dir / "run.toml", "train", "--data", iris_csv, "--out", dir / "m.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(read_text_file(dir / "m.json"));
  EXPECT_EQ(doc["trees"].size(), 4u);
  EXPECT_EQ(doc["train_params"]["max_depth"], 2);
}

TEST(Cli, BinaryExitStatus) {
  const std::string bin = EXMATRIX_CLI_PATH;
  const auto status = std::system((bin + " rules --model /nonexistent.json --data " + iris_csv + " 2>/dev/null").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

namespace {

nlohmann::json create_body() {
  return {{"dataset_csv", read_text_file(iris_csv)},
          {"schema", nlohmann::json::parse(read_text_file(worked_json))["dataset"]},
          {"forest", nlohmann::json::parse(read_text_file(worked_json))}};
}

std::string create(Service& s) {
  const auto r = s.handle("POST", "/models", {}, create_body().dump());
  EXPECT_EQ(r.status, 201) << r.body;
  return nlohmann::json::parse(r.body)["model_id"];
}

}  // namespace

TEST(Service, RoutesMatchDirectCalls) {
  Service s;
  const auto id = create(s);
  const auto m = worked();
  const std::vector<double> x = {6.9, 3.1, 4.9, 1.5};

  const auto summary = s.handle("GET", "/models/" + id, {}, "");
  EXPECT_EQ(summary.body, model_summary(m).dump());
  const auto j = nlohmann::json::parse(summary.body);
  EXPECT_EQ(j["K"], 3);
  EXPECT_EQ(j["Z"], 12);

  const auto rules = s.handle("GET", "/models/" + id + "/rules", {{"min-coverage", "0.3"}, {"classes", "versicolor"}}, "");
  ViewOptions opts;
  opts.filter.min_coverage = 0.3;
  opts.filter.classes = std::vector<std::size_t>{1};
  EXPECT_EQ(rules.body, to_json(build_global(m, opts), m.rules, m.forest).dump());

  const nlohmann::json body = {{"instance", x}};
  EXPECT_EQ(s.handle("POST", "/models/" + id + "/explain/local", {}, body.dump()).body,
            to_json(build_local(m, x, {}), m.rules, m.forest).dump());
  EXPECT_EQ(s.handle("POST", "/models/" + id + "/explain/changes", {}, body.dump()).body,
            changes_to_json(build_changes(m, x, {}), m).dump());

  const nlohmann::json edits = {{"instance", x},
                                {"edits", {{{"feature", "petal width"}, {"value", 2.0}}, {{"feature", 2}, {"value", 5.5}}}}};
  const std::vector<FeatureEdit> fe = {{3, 2.0}, {2, 5.5}};
  EXPECT_EQ(s.handle("POST", "/models/" + id + "/whatif", {}, edits.dump()).body,
            to_json(apply_edits(x, fe, m.forest), m.forest).dump());

  const auto svg = s.handle("GET", "/models/" + id + "/render", {{"view", "changes"}, {"instance", "6.9,3.1,4.9,1.5"}}, "");
  EXPECT_EQ(svg.status, 200);
  EXPECT_EQ(svg.content_type, "image/svg+xml");
  EXPECT_EQ(svg.body, render(build_changes(m, x, {}).view, m.rules, m.forest, m.dataset));

  EXPECT_EQ(s.handle("DELETE", "/models/" + id, {}, "").status, 204);
  EXPECT_EQ(s.handle("GET", "/models/" + id, {}, "").status, 404);
}

TEST(Service, Errors) {
  Service s;
  const auto id = create(s);
  auto path_of = [](const HttpResponse& r) { return nlohmann::json::parse(r.body)["path"].get<std::string>(); };

  EXPECT_EQ(s.handle("GET", "/models/nope/rules", {}, "").status, 404);
  EXPECT_EQ(s.handle("GET", "/elsewhere", {}, "").status, 404);
  EXPECT_EQ(s.handle("POST", "/models", {}, "{oops").status, 400);

  auto bad = create_body();
  bad["forest"]["trees"][0]["nodes"][0]["left"] = 77;
  const auto r = s.handle("POST", "/models", {}, bad.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(path_of(r), "/forest/trees/0/nodes/0/left");

  const auto arity = s.handle("POST", "/models/" + id + "/explain/local", {}, R"({"instance":[1,2]})");
  EXPECT_EQ(arity.status, 422);
  EXPECT_EQ(path_of(arity), "/instance");
  const auto not_number = s.handle("POST", "/models/" + id + "/explain/local", {}, R"({"instance":[1,"a",3,4]})");
  EXPECT_EQ(not_number.status, 400);
  EXPECT_EQ(path_of(not_number), "/instance/1");
  EXPECT_EQ(s.handle("POST", "/models/" + id + "/explain/local", {}, "{}").status, 400);
  EXPECT_EQ(s.handle("GET", "/models/" + id + "/rules", {{"min-coverage", "2"}}, "").status, 422);
  EXPECT_EQ(s.handle("GET", "/models/" + id + "/rules", {{"order-rows", "bogus"}}, "").status, 400);
  EXPECT_EQ(s.handle("GET", "/models/" + id + "/rules", {{"min-coverage", "x"}}, "").status, 400);
  EXPECT_EQ(s.handle("POST", "/models/" + id + "/whatif", {}, R"({"instance":[6.9,3.1,4.9,1.5],"tree_id":7})").status, 422);
  EXPECT_EQ(s.handle("GET", "/models/" + id + "/render", {{"view", "pie"}}, "").status, 400);
}

TEST(Service, PersistsAcrossRestarts) {
  TempDir dir;
  std::string id, before;
  {
    Service s(Service::Options{dir.path()});
    id = create(s);
    before = s.handle("GET", "/models/" + id + "/rules", {}, "").body;
  }
  Service again(Service::Options{dir.path()});
  EXPECT_EQ(again.size(), 1u);
  EXPECT_EQ(again.handle("GET", "/models/" + id + "/rules", {}, "").body, before);
  EXPECT_EQ(again.handle("DELETE", "/models/" + id, {}, "").status, 204);
  EXPECT_FALSE(fs::exists(dir.path() / id));
}

TEST(Service, TrainRequestAndDistinctIds) {
  Service s;
  const nlohmann::json body = {{"dataset_csv", read_text_file(iris_csv)},
                               {"schema", {{"label_column", "species"}}},
                               {"train", {{"n_trees", 3}, {"max_depth", 3}, {"seed", 7}}}};
  const auto a = s.handle("POST", "/models", {}, body.dump());
  const auto b = s.handle("POST", "/models", {}, body.dump());
  ASSERT_EQ(a.status, 201) << a.body;
  const auto ja = nlohmann::json::parse(a.body), jb = nlohmann::json::parse(b.body);
  EXPECT_NE(ja["model_id"], jb["model_id"]);
  EXPECT_EQ(ja["summary"], jb["summary"]);
  EXPECT_EQ(ja["summary"]["K"], 3);
}
