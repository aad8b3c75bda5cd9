#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "exmatrix/error.hpp"
#include "exmatrix/numeric.hpp"

namespace exmatrix {

/// How a CSV file maps onto a labelled dataset and its train/test split.
struct DatasetSchema {
  std::string label_column;
  /// Class order. Empty means first-seen order in the file.
  std::vector<std::string> class_names;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
};

/// Labelled tabular data with a fixed train/test split. Immutable.
///
/// Two sets of feature ranges are kept: extrema over every instance (used
/// for default rule limits and cell geometry) and extrema over the train
/// split (used to normalize counterfactual deltas).
class Dataset {
 public:
  Dataset(std::vector<std::string> feature_names, std::vector<std::string> class_names,
          std::vector<double> values, std::vector<std::size_t> labels,
          std::vector<bool> train_mask)
      : feature_names_(std::move(feature_names)),
        class_names_(std::move(class_names)),
        values_(std::move(values)),
        labels_(std::move(labels)),
        train_mask_(std::move(train_mask)) {
    const std::size_t m = feature_names_.size();
    if (m == 0) throw SchemaError("dataset needs at least one feature");
    if (class_names_.size() < 2) throw SchemaError("dataset needs at least 2 classes");
    if (values_.size() != labels_.size() * m)
      throw SchemaError("value matrix does not have " + std::to_string(m) + " columns per instance");
    if (train_mask_.size() != labels_.size()) throw SchemaError("train mask size mismatch");
    if (labels_.empty()) throw SchemaError("dataset has no instances");
    for (std::size_t label : labels_)
      if (label >= class_names_.size()) throw SchemaError("label index out of range");
    for (double v : values_)
      if (!std::isfinite(v)) throw SchemaError("non-finite feature value");

    feature_min_.assign(m, std::numeric_limits<double>::infinity());
    feature_max_.assign(m, -std::numeric_limits<double>::infinity());
    train_min_ = feature_min_;
    train_max_ = feature_max_;
    for (std::size_t n = 0; n < size(); ++n) {
      const auto x = instance(n);
      for (std::size_t f = 0; f < m; ++f) {
        feature_min_[f] = std::min(feature_min_[f], x[f]);
        feature_max_[f] = std::max(feature_max_[f], x[f]);
        if (train_mask_[n]) {
          train_min_[f] = std::min(train_min_[f], x[f]);
          train_max_[f] = std::max(train_max_[f], x[f]);
        }
      }
      (train_mask_[n] ? train_indices_ : test_indices_).push_back(n);
    }
    if (train_indices_.empty()) {
      train_min_ = feature_min_;
      train_max_ = feature_max_;
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_features() const noexcept { return feature_names_.size(); }
  std::size_t num_classes() const noexcept { return class_names_.size(); }

  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  std::span<const double> instance(std::size_t n) const {
    return {values_.data() + n * num_features(), num_features()};
  }
  std::size_t label(std::size_t n) const { return labels_[n]; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  bool is_train(std::size_t n) const { return train_mask_[n]; }

  const std::vector<std::size_t>& train_indices() const noexcept { return train_indices_; }
  const std::vector<std::size_t>& test_indices() const noexcept { return test_indices_; }

  /// Extrema over all instances.
  const std::vector<double>& feature_min() const noexcept { return feature_min_; }
  const std::vector<double>& feature_max() const noexcept { return feature_max_; }
  /// Extrema over the train split (all instances when the split is empty).
  const std::vector<double>& train_min() const noexcept { return train_min_; }
  const std::vector<double>& train_max() const noexcept { return train_max_; }
  double train_range(std::size_t f) const { return train_max_[f] - train_min_[f]; }

  std::size_t feature_index(std::string_view name) const {
    const auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
    if (it == feature_names_.end()) throw SchemaError("unknown feature '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - feature_names_.begin());
  }

  std::size_t class_index(std::string_view name) const {
    const auto it = std::find(class_names_.begin(), class_names_.end(), name);
    if (it == class_names_.end()) throw SchemaError("unknown class '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - class_names_.begin());
  }

 private:
  std::vector<std::string> feature_names_;
  std::vector<std::string> class_names_;
  std::vector<double> values_;
  std::vector<std::size_t> labels_;
  std::vector<bool> train_mask_;
  std::vector<double> feature_min_, feature_max_;
  std::vector<double> train_min_, train_max_;
  std::vector<std::size_t> train_indices_, test_indices_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && trim(field).empty()) {
      quoted = true;
      was_quoted = true;
      field.clear();
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row);
  fields.push_back(was_quoted ? field : std::string(trim(field)));
  return fields;
}

inline double parse_real(std::string_view text, std::size_t row, std::string_view column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value))
    throw ParseError("column '" + std::string(column) + "': '" + std::string(text) +
                         "' is not a finite real number",
                     row);
  return value;
}

}  // namespace detail

/// Deterministic train mask: seeded uniform shuffle, the first
/// round(fraction * n) shuffled positions go to the train split.
inline std::vector<bool> make_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw SchemaError("train_fraction must be in (0, 1]");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  shuffle_in_place(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < std::min(n_train, n); ++i) mask[order[i]] = true;
  return mask;
}

/// Parses CSV text (header row first) into a Dataset.
inline Dataset parse_dataset(std::string_view text, const DatasetSchema& schema) {
  std::vector<std::string> header;
  std::size_t label_col = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names = schema.class_names;
  const bool fixed_classes = !class_names.empty();
  std::map<std::string, std::size_t, std::less<>> class_lookup;
  for (std::size_t j = 0; j < class_names.size(); ++j) class_lookup.emplace(class_names[j], j);

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (row == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (detail::trim(line).empty()) continue;

    auto fields = detail::split_csv_line(line, row);
    if (header.empty()) {
      header = std::move(fields);
      const auto it = std::find(header.begin(), header.end(), schema.label_column);
      if (it == header.end())
        throw SchemaError("label column '" + schema.label_column + "' not found in header");
      label_col = static_cast<std::size_t>(it - header.begin());
      for (std::size_t c = 0; c < header.size(); ++c)
        if (c != label_col) feature_names.push_back(header[c]);
      if (feature_names.empty()) throw SchemaError("CSV has no feature columns");
      continue;
    }
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       row);
    for (std::size_t c = 0; c < fields.size(); ++c)
      if (c != label_col) values.push_back(detail::parse_real(fields[c], row, header[c]));

    const std::string& label = fields[label_col];
    auto found = class_lookup.find(label);
    if (found == class_lookup.end()) {
      if (fixed_classes)
        throw SchemaError("line " + std::to_string(row) + ": unknown label value '" + label + "'");
      found = class_lookup.emplace(label, class_names.size()).first;
      class_names.push_back(label);
    }
    labels.push_back(found->second);
  }
  if (header.empty()) throw ParseError("missing header row", 1);
  if (labels.empty()) throw SchemaError("CSV has no data rows");
  std::vector<bool> seen(class_names.size(), false);
  for (std::size_t label : labels) seen[label] = true;
  const auto distinct = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  if (distinct < 2)
    throw SchemaError("need at least 2 distinct classes, found " + std::to_string(distinct));

  auto mask = make_split(labels.size(), schema.train_fraction, schema.split_seed);
  return Dataset(std::move(feature_names), std::move(class_names), std::move(values),
                 std::move(labels), std::move(mask));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Dataset load_dataset(const std::filesystem::path& csv_path, const DatasetSchema& schema) {
  return parse_dataset(read_text_file(csv_path), schema);
}

}  // namespace exmatrix
