#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "exmatrix/exmatrix.hpp"
#include "oracles.hpp"

using namespace exmatrix;

namespace {

Model worked() {
  const auto doc = nlohmann::json::parse(read_text_file(oracle::test_data_path("worked_example.json")));
  auto schema = schema_from_json(doc["dataset"], "/dataset");
  auto data = load_dataset(oracle::data_path("iris.csv"), schema);
  return make_model(import_forest(doc), std::move(data), schema);
}

Model trained(const Dataset& d, std::size_t trees, std::optional<std::size_t> depth, std::uint64_t seed) {
  TrainParams p;
  p.n_trees = trees;
  p.max_depth = depth;
  p.seed = seed;
  return make_model(train_forest(d, p), d, DatasetSchema{});
}

std::vector<double> vec(std::span<const double> x) { return {x.begin(), x.end()}; }

const std::vector<double> x13 = {6.9, 3.1, 4.9, 1.5};

}  // namespace

TEST(Rules, IntervalsReplayTreePaths) {
  const auto d = oracle::blobs(4);
  const auto m = trained(d, 6, std::nullopt, 4);
  std::size_t expected_rules = 0;
  for (std::size_t k = 0; k < m.forest.num_trees(); ++k) {
    const auto boxes = oracle::leaf_boxes(m.forest.tree(k), d.num_features());
    const auto& ids = m.rules.tree_rules(k);
    ASSERT_EQ(ids.size(), boxes.size());
    expected_rules += boxes.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& r = m.rules.rule(ids[i]);
      const auto& [leaf, box] = boxes[i];
      EXPECT_EQ(r.leaf_index, leaf);
      EXPECT_EQ(r.tree_id, k);
      EXPECT_EQ(r.leaf_id, m.forest.tree(k).node(leaf).id);
      for (std::size_t f = 0; f < d.num_features(); ++f) {
        ASSERT_EQ(r.uses(f), static_cast<bool>(box.used[f]));
        if (!box.used[f]) continue;
        const auto& iv = *r.predicates[f];
        EXPECT_EQ(iv.lower_bounded, std::isfinite(box.lo[f]));
        EXPECT_EQ(iv.upper_bounded, std::isfinite(box.hi[f]));
        EXPECT_EQ(iv.alpha, iv.lower_bounded ? box.lo[f] : d.feature_min()[f]);
        EXPECT_EQ(iv.beta, iv.upper_bounded ? box.hi[f] : d.feature_max()[f]);
      }
      const auto dist = oracle::leaf_distribution(m.forest.tree(k), leaf);
      EXPECT_EQ(r.certainty, dist);
    }
  }
  EXPECT_EQ(m.rules.size(), expected_rules);
  EXPECT_EQ(m.rules.size(), m.forest.total_leaves());
}

TEST(Rules, CoverageMatchesScan) {
  const auto d = oracle::grid_data(3);
  const auto m = trained(d, 4, 4, 8);
  for (const auto& r : m.rules.rules()) {
    const auto& tree = m.forest.tree(r.tree_id);
    std::size_t in_class = 0, covered = 0;
    for (std::size_t n : d.train_indices()) {
      if (d.label(n) != r.class_index) continue;
      ++in_class;
      covered += oracle::traverse(tree, vec(d.instance(n))) == r.leaf_index;
    }
    EXPECT_DOUBLE_EQ(r.coverage, static_cast<double>(covered) / static_cast<double>(in_class));
  }
}

TEST(Rules, WorkedExampleRules) {
  const auto m = worked();
  ASSERT_EQ(m.rules.size(), 12u);
  const auto& r3 = m.rules.rule(2);
  EXPECT_EQ(r3.tree_id, 0u);
  EXPECT_EQ(r3.leaf_id, 5);
  EXPECT_EQ(r3.predicates[0], (Interval{6.15, 7.9, true, false}));
  EXPECT_EQ(r3.predicates[3], (Interval{0.75, 1.75, true, true}));
  EXPECT_NEAR(r3.coverage, 10.0 / 35.0, 1e-12);
  EXPECT_EQ(&used_rule(m.rules, 0, x13), &r3);
  EXPECT_EQ(used_rule(m.rules, 1, x13).rule_id, 6u);
  EXPECT_EQ(used_rule(m.rules, 2, x13).rule_id, 9u);
  EXPECT_THROW(m.rules.rule(12), InputError);

  // Values outside the observed range still land in exactly one rule.
  for (const auto& x : {std::vector<double>{100, -5, 50, 9}, std::vector<double>{-1, 0, -3, -2}})
    for (std::size_t k = 0; k < 3; ++k) {
      int matches = 0;
      for (std::size_t id : m.rules.tree_rules(k)) matches += rule_matches(m.rules.rule(id), x);
      EXPECT_EQ(matches, 1);
    }
}

TEST(Rules, JsonLines) {
  const auto m = worked();
  const auto text = rules_to_jsonl(m.rules);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first["rule_id"], 0);
  EXPECT_EQ(first["predicates"][1], nullptr);
}

TEST(Global, FilterMatchesScan) {
  const auto d = oracle::blobs(5);
  const auto m = trained(d, 10, 4, 5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    RuleFilter f;
    if (rng() & 1) f.min_coverage = static_cast<double>(rng() % 60) / 100.0;
    if (rng() & 1) f.min_certainty = 0.4 + static_cast<double>(rng() % 60) / 100.0;
    if (rng() & 1) f.classes = std::vector<std::size_t>{rng() % 3};
    std::vector<std::size_t> expected;
    for (const auto& r : m.rules.rules()) {
      const double top = *std::max_element(r.certainty.begin(), r.certainty.end());
      if (f.min_coverage && r.coverage < *f.min_coverage) continue;
      if (f.min_certainty && top < *f.min_certainty) continue;
      if (f.classes && r.class_index != (*f.classes)[0]) continue;
      expected.push_back(r.rule_id);
    }
    if (expected.empty()) {
      EXPECT_THROW(global_view(m.rules, m.forest, f), EmptyViewError);
      continue;
    }
    const auto v = global_view(m.rules, m.forest, f);
    EXPECT_EQ(v.rule_rows, expected);
    EXPECT_EQ(v.kind, ViewKind::global);
    // Columns: features any shown rule uses, most important first.
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < d.num_features(); ++c)
      for (std::size_t id : expected)
        if (m.rules.rule(id).uses(c)) {
          cols.push_back(c);
          break;
        }
    std::stable_sort(cols.begin(), cols.end(),
                     [&](auto a, auto b) { return m.forest.importances()[a] > m.forest.importances()[b]; });
    EXPECT_EQ(v.feature_cols, cols);
  }
  RuleFilter explicit_ids;
  explicit_ids.explicit_rule_ids = std::vector<std::size_t>{5, 2, 5};
  explicit_ids.min_coverage = 2.0;  // ignored
  EXPECT_EQ(global_view(m.rules, m.forest, explicit_ids).rule_rows, (std::vector<std::size_t>{2, 5}));
  explicit_ids.explicit_rule_ids = std::vector<std::size_t>{100000};
  EXPECT_THROW(global_view(m.rules, m.forest, explicit_ids), InputError);
}

TEST(Local, WorkedExampleVote) {
  const auto m = worked();
  const auto v = local_used_rules(m.rules, m.forest, x13);
  EXPECT_EQ(v.rule_rows, (std::vector<std::size_t>{2, 6, 9}));
  const auto& vote = v.row_extras.back().cumulative_vote;
  EXPECT_NEAR(vote[1], 0.72, 0.005);
  EXPECT_NEAR(vote[2], 0.28, 0.005);
  EXPECT_EQ(vote, predict(m.forest, x13).probabilities);
  EXPECT_EQ(v.decision_fixed_row, 1u);
  // Tree 2 leads: virginica first, the committee settles on versicolor from row 2.
  auto reordered = order_rows(v, parse_criterion("certainty:asc", OrderTarget::rules), m.rules);
  EXPECT_EQ(reordered.rule_rows.front(), 6u);
  EXPECT_EQ(reordered.row_extras.back().cumulative_vote, vote);
  EXPECT_EQ(reordered.decision_fixed_row, 2u);
}

TEST(Local, CumulativeVoteOracle) {
  const auto d = oracle::xor_data(7);
  const auto m = trained(d, 15, 5, 7);
  for (const auto& x : oracle::sample_instances(m.forest, d, 60, 8)) {
    const auto v = local_used_rules(m.rules, m.forest, x);
    ASSERT_EQ(v.rule_rows.size(), 15u);
    std::vector<long double> sum(2, 0.0L);
    std::size_t fixed = 0;
    std::vector<std::size_t> running;
    for (std::size_t i = 0; i < 15; ++i) {
      const auto& r = m.rules.rule(v.rule_rows[i]);
      EXPECT_EQ(r.leaf_index, oracle::traverse(m.forest.tree(i), x));
      for (std::size_t j = 0; j < 2; ++j) sum[j] += r.certainty[j];
      for (std::size_t j = 0; j < 2; ++j)
        EXPECT_NEAR(v.row_extras[i].cumulative_vote[j], static_cast<double>(sum[j] / (i + 1)), 1e-12);
      running.push_back(sum[1] > sum[0] ? 1 : 0);
    }
    const auto final_class = predict(m.forest, x).class_index;
    fixed = 15;
    while (fixed > 1 && running[fixed - 2] == final_class) --fixed;
    // Exact ties are resolved by argmax on the rounded vote; skip those.
    if (sum[0] != sum[1]) EXPECT_EQ(*v.decision_fixed_row, fixed);
    EXPECT_EQ(v.row_extras.back().cumulative_vote, predict(m.forest, x).probabilities);
  }
}

TEST(Changes, WorkedExample) {
  const auto m = worked();
  const auto changes = smallest_changes(m.rules, m.forest, m.dataset, x13);
  ASSERT_TRUE(changes[1]);
  EXPECT_EQ(changes[1]->source_rule_id, 6u);
  EXPECT_EQ(changes[1]->target_rule_id, 5u);
  const double range = m.dataset.train_range(2);
  EXPECT_NEAR(changes[1]->deltas[2], -(4.9 - 4.75) / range, 1e-15);
  EXPECT_EQ(changes[1]->from_class, 2u);
  EXPECT_EQ(changes[1]->to_class, 1u);
  const auto result = apply_changes(x13, *changes[1], m.rules, m.forest, m.dataset);
  EXPECT_EQ(result.new_instance[2], 4.75);
  EXPECT_EQ(used_rule(m.rules, 1, result.new_instance).rule_id, 5u);
  EXPECT_EQ(result.new_prediction.class_index, 1u);
  // Raising petal width crosses an open lower limit just above it.
  const auto up = apply_changes(x13, *changes[0], m.rules, m.forest, m.dataset);
  EXPECT_GT(up.new_instance[3], 1.75);
  EXPECT_LT(up.new_instance[3], 1.75 + 1e-6);

  const auto view = smallest_changes_view(m.rules, m.forest, m.dataset, x13);
  ASSERT_EQ(view.rule_rows.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_LE(*view.row_extras[i - 1].change_sum, *view.row_extras[i].change_sum);
}

TEST(Changes, MatchBruteForce) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto d = s == 0 ? oracle::blobs(s) : s == 1 ? oracle::grid_data(s) : oracle::xor_data(s);
    const auto m = trained(d, 7, s == 2 ? std::nullopt : std::optional<std::size_t>(5), s);
    std::vector<double> range;
    for (std::size_t f = 0; f < d.num_features(); ++f) range.push_back(d.train_range(f));
    for (const auto& x : oracle::sample_instances(m.forest, d, 40, 10 + s)) {
      const auto changes = smallest_changes(m.rules, m.forest, d, x);
      for (std::size_t k = 0; k < m.forest.num_trees(); ++k) {
        const auto brute = oracle::brute_smallest_change(m.forest.tree(k), x, range);
        ASSERT_EQ(brute.has_value(), changes[k].has_value());
        if (!brute) continue;
        EXPECT_NEAR(changes[k]->change_sum, brute->change_sum, 1e-9);
        const auto result = apply_changes(x, *changes[k], m.rules, m.forest, d);
        EXPECT_EQ(oracle::traverse(m.forest.tree(k), result.new_instance),
                  m.rules.rule(changes[k]->target_rule_id).leaf_index);
      }
    }
  }
}

TEST(Changes, ZeroRangeFeatureUsesUnitDenominator) {
  const auto d = oracle::grid_data(2);
  EXPECT_EQ(d.train_range(2), 0.0);
  const auto m = trained(d, 5, 4, 2);
  for (const auto& x : oracle::sample_instances(m.forest, d, 20, 3))
    for (const auto& c : smallest_changes(m.rules, m.forest, d, x))
      if (c) EXPECT_TRUE(std::isfinite(c->change_sum));
}

TEST(Changes, StaleChangesAreRejected) {
  const auto m = worked();
  const auto changes = smallest_changes(m.rules, m.forest, m.dataset, x13);
  auto moved = x13;
  moved[2] = 5.5;
  EXPECT_THROW(apply_changes(moved, *changes[1], m.rules, m.forest, m.dataset), StaleChangeError);
  auto wrong_tree = *changes[1];
  wrong_tree.tree_id = 0;
  EXPECT_THROW(apply_changes(x13, wrong_tree, m.rules, m.forest, m.dataset), StaleChangeError);
  auto missing = *changes[1];
  missing.tree_id = 9;
  EXPECT_THROW(apply_changes(x13, missing, m.rules, m.forest, m.dataset), StaleChangeError);
  auto tampered = *changes[1];
  tampered.deltas[2] *= 2;
  EXPECT_THROW(apply_changes(x13, tampered, m.rules, m.forest, m.dataset), StaleChangeError);
}

TEST(Changes, Edits) {
  const auto m = worked();
  const std::vector<FeatureEdit> edits = {{3, 2.0}};
  const auto r = apply_edits(x13, edits, m.forest);
  EXPECT_EQ(r.new_instance[3], 2.0);
  EXPECT_EQ(r.new_prediction, predict(m.forest, r.new_instance));
  const std::vector<FeatureEdit> bad = {{4, 1.0}};
  EXPECT_THROW(apply_edits(x13, bad, m.forest), InputError);
}

TEST(Ordering, RowsMatchReferenceSort) {
  const auto d = oracle::blobs(8);
  const auto m = trained(d, 8, 4, 8);
  const auto base = global_view(m.rules, m.forest);
  for (const char* key : {"coverage", "coverage:asc", "certainty", "certainty:asc", "class-and-coverage",
                          "class-and-certainty:asc", "extraction-order", "extraction-order:desc"}) {
    const auto crit = parse_criterion(key, OrderTarget::rules);
    const auto v = order_rows(base, crit, m.rules);
    // Reference: decorate with the full key tuple and sort.
    std::vector<std::tuple<std::size_t, double, std::size_t>> keyed;
    for (std::size_t id : base.rule_rows) {
      const auto& r = m.rules.rule(id);
      double k2 = static_cast<double>(id);
      if (crit.key == OrderKey::coverage || crit.key == OrderKey::class_and_coverage) k2 = r.coverage;
      if (crit.key == OrderKey::certainty || crit.key == OrderKey::class_and_certainty) k2 = r.max_certainty();
      if (crit.direction == Direction::descending) k2 = -k2;
      const bool by_class = crit.key == OrderKey::class_and_coverage || crit.key == OrderKey::class_and_certainty;
      keyed.emplace_back(by_class ? r.class_index : 0, k2, id);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> expected;
    for (const auto& t : keyed) expected.push_back(std::get<2>(t));
    EXPECT_EQ(v.rule_rows, expected) << key;
    for (std::size_t i = 0; i < v.rule_rows.size(); ++i)
      EXPECT_EQ(v.row_extras[i].coverage, m.rules.rule(v.rule_rows[i]).coverage);
  }
}

TEST(Ordering, Columns) {
  const auto d = oracle::blobs(9);
  const auto m = trained(d, 8, 4, 9);
  const auto base = global_view(m.rules, m.forest);
  auto by_index = order_columns(base, parse_criterion("dataset-order", OrderTarget::features), m.forest);
  EXPECT_TRUE(std::is_sorted(by_index.feature_cols.begin(), by_index.feature_cols.end()));
  auto by_imp = order_columns(by_index, parse_criterion("importance:asc", OrderTarget::features), m.forest);
  for (std::size_t i = 1; i < by_imp.feature_cols.size(); ++i)
    EXPECT_LE(m.forest.importances()[by_imp.feature_cols[i - 1]], m.forest.importances()[by_imp.feature_cols[i]]);
}

TEST(Ordering, CriterionErrors) {
  EXPECT_THROW(parse_criterion("importance", OrderTarget::rules), UsageError);
  EXPECT_THROW(parse_criterion("coverage", OrderTarget::features), UsageError);
  EXPECT_THROW(parse_criterion("coverage:up", OrderTarget::rules), UsageError);
  EXPECT_THROW(parse_criterion("size", OrderTarget::rules), UsageError);
  EXPECT_EQ(parse_criterion("coverage", OrderTarget::rules).direction, Direction::descending);
  EXPECT_EQ(parse_criterion("change-sum", OrderTarget::rules).direction, Direction::ascending);
  const auto m = worked();
  const auto g = global_view(m.rules, m.forest);
  EXPECT_THROW(order_rows(g, parse_criterion("change-sum", OrderTarget::rules), m.rules), UsageError);
}
