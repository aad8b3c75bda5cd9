#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/view.hpp"

namespace exmatrix {

inline std::vector<std::string> categorical_palette() {
  return {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
}

/// Okabe-Ito colors, distinguishable under the common color-vision deficiencies.
inline std::vector<std::string> colorblind_palette() {
  return {"#0072b2", "#e69f00", "#009e73", "#cc79a7", "#56b4e9", "#d55e00", "#f0e442", "#000000"};
}

struct RenderStyle {
  double cell_width = 24.0;
  double cell_height = 12.0;
  std::vector<std::string> class_palette = categorical_palette();
  bool desaturated_background = true;
  bool show_instance_lines = true;
  std::string positive_change_color = "#2ca02c";
  std::string negative_change_color = "#9467bd";
  double font_size = 9.0;
  double margin = 8.0;
  double gap = 4.0;
  double label_band = 140.0;  // room below the matrix for feature labels
};

namespace svg_detail {

/// Fixed 6-significant-digit formatting, never "-0".
inline std::string num(double v) {
  if (v == 0.0 || std::abs(v) < 1e-300) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s(buf);
  if (s == "-0") return "0";
  return s;
}

inline std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Blend of a #rrggbb color with white; amount 1 keeps the color.
inline std::string lighten(std::string_view hex, double amount) {
  if (hex.size() != 7 || hex[0] != '#') return std::string(hex);
  auto channel = [&](std::size_t at) {
    const int v = std::stoi(std::string(hex.substr(at, 2)), nullptr, 16);
    return static_cast<int>(std::lround(255.0 - (255.0 - v) * amount));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(1), channel(3), channel(5));
  return buf;
}

inline std::string gray(double darkness) {
  const int level = static_cast<int>(std::lround(255.0 * (1.0 - 0.85 * std::clamp(darkness, 0.0, 1.0))));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
  return buf;
}

inline double fraction(double value, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

struct Layout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double cw = 0, ch = 0;
  double coverage_x = 0;
  double matrix_x = 0;
  double header_y = 0;
  double matrix_y = 0;
  double certainty_x = 0;
  double extra_x = 0;  // vote (LE/UR) or class swap (LE/SC) column
  bool has_extra = false;
  double width = 0, height = 0;

  double col_x(std::size_t c) const { return matrix_x + static_cast<double>(c) * cw; }
  double row_y(std::size_t r) const { return matrix_y + static_cast<double>(r) * ch; }
};

inline Layout make_layout(const ExplanationView& view, const RenderStyle& s) {
  Layout l;
  l.rows = view.rule_rows.size();
  l.cols = view.feature_cols.size();
  l.cw = s.cell_width;
  l.ch = s.cell_height;
  l.coverage_x = s.margin;
  l.matrix_x = l.coverage_x + l.cw + s.gap;
  l.header_y = s.margin + s.font_size + s.gap;
  l.matrix_y = l.header_y + l.ch + s.gap;
  l.certainty_x = l.col_x(l.cols) + s.gap;
  l.has_extra = view.kind != ViewKind::global;
  l.extra_x = l.certainty_x + l.cw + s.gap;
  l.width = (l.has_extra ? l.extra_x + l.cw : l.certainty_x + l.cw) + s.margin;
  l.height = l.row_y(l.rows) + s.gap + s.label_band + s.margin;
  return l;
}

inline std::string cell_open(double x, double y, double w, double h) {
  return "<g transform=\"translate(" + num(x) + "," + num(y) + ") scale(" + num(w) + "," + num(h) + ")\">";
}

inline std::string unit_rect(double x, double w, std::string_view fill, std::string_view attrs = {}) {
  std::string out = "<rect";
  if (!attrs.empty()) {
    out += ' ';
    out += attrs;
  }
  out += " x=\"" + num(x) + "\" y=\"0\" width=\"" + num(w) + "\" height=\"1\" fill=\"" + std::string(fill) + "\"/>";
  return out;
}

/// Horizontally stacked class bars, x positions are running sums.
inline std::string stacked_bar(const std::vector<double>& parts, const std::vector<std::string>& palette,
                               std::string_view css_class) {
  std::string out;
  double x = 0.0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    if (parts[j] <= 0.0) continue;
    out += unit_rect(x, parts[j], palette[j],
                     "class=\"" + std::string(css_class) + "\" data-class=\"" + std::to_string(j) + "\"");
    x += parts[j];
  }
  return out;
}

inline void validate(const ExplanationView& view, const RuleSet& rules, const Forest& forest, const Dataset& data,
                     const RenderStyle& style) {
  check_compatible(forest, data);
  if (!(style.cell_width > 0 && style.cell_height > 0 && style.font_size > 0 && style.margin >= 0 &&
        style.gap >= 0 && style.label_band >= 0))
    throw UsageError("render style dimensions must be positive");
  if (style.class_palette.size() < data.num_classes())
    throw UsageError("palette has fewer colors than the dataset has classes");
  if (view.row_extras.size() != view.rule_rows.size()) throw SchemaError("view rows and extras differ in length");
  for (std::size_t m : view.feature_cols)
    if (m >= data.num_features()) throw SchemaError("view column refers to feature " + std::to_string(m));
  for (std::size_t id : view.rule_rows) {
    if (id >= rules.size()) throw SchemaError("view row refers to unknown rule " + std::to_string(id));
    if (rules.rule(id).predicates.size() != data.num_features()) throw SchemaError("rule arity mismatch");
  }
  for (const auto& e : view.row_extras)
    if (e.certainty.size() != data.num_classes()) throw SchemaError("certainty arity mismatch");
  if (view.instance && view.instance->size() != data.num_features())
    throw SchemaError("view instance arity mismatch");
  if (view.kind == ViewKind::smallest_changes)
    for (const auto& e : view.row_extras)
      if (!e.change || e.change->deltas.size() != data.num_features())
        throw SchemaError("smallest-changes row without a change vector");
}

}  // namespace svg_detail

/// Standalone SVG of a view. Every matrix cell is a group scaled to the
/// cell size so rectangle coordinates inside it are fractions of the cell.
inline std::string render(const ExplanationView& view, const RuleSet& rules, const Forest& forest,
                          const Dataset& data, const RenderStyle& style = {}) {
  using namespace svg_detail;
  validate(view, rules, forest, data, style);
  const Layout l = make_layout(view, style);
  const auto& palette = style.class_palette;
  const auto& fmin = data.feature_min();
  const auto& fmax = data.feature_max();
  const double fs = style.font_size;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(l.width) + "\" height=\"" +
         num(l.height) + "\" viewBox=\"0 0 " + num(l.width) + " " + num(l.height) + "\" data-kind=\"" +
         std::string(to_string(view.kind)) + "\">\n";
  out += "<style>text{font-family:sans-serif;font-size:" + num(fs) + "px;fill:#222}</style>\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + num(l.width) + "\" height=\"" + num(l.height) + "\" fill=\"#ffffff\"/>\n";

  // Column titles.
  const double title_y = style.margin + fs;
  out += "<text x=\"" + num(l.coverage_x) + "\" y=\"" + num(title_y) + "\">cov</text>\n";
  out += "<text x=\"" + num(l.certainty_x) + "\" y=\"" + num(title_y) + "\">cert</text>\n";
  if (l.has_extra)
    out += "<text x=\"" + num(l.extra_x) + "\" y=\"" + num(title_y) + "\">" +
           (view.kind == ViewKind::used_rules ? "vote" : "class") + "</text>\n";

  // Importance header row.
  double max_importance = 0.0;
  for (double v : view.importances) max_importance = std::max(max_importance, v);
  out += "<g id=\"importance\">\n";
  for (std::size_t c = 0; c < l.cols; ++c) {
    const std::size_t m = view.feature_cols[c];
    const double imp = m < view.importances.size() ? view.importances[m] : 0.0;
    const double share = max_importance > 0.0 ? imp / max_importance : 0.0;
    out += cell_open(l.col_x(c), l.header_y, l.cw, l.ch);
    out += unit_rect(0.0, 1.0, "#f4f4f4");
    out += unit_rect(0.0, share, gray(share), "class=\"importance\" data-feature=\"" + std::to_string(m) + "\"");
    out += "</g>\n";
  }
  out += "</g>\n";

  out += "<g id=\"rows\">\n";
  for (std::size_t r = 0; r < l.rows; ++r) {
    const VectorRule& rule = rules.rule(view.rule_rows[r]);
    const RowExtras& extras = view.row_extras[r];
    const double y = l.row_y(r);
    const std::string color = palette[rule.class_index];
    out += "<g class=\"row\" data-row=\"" + std::to_string(r) + "\" data-rule=\"" + std::to_string(rule.rule_id) +
           "\">\n";

    out += cell_open(l.coverage_x, y, l.cw, l.ch);
    out += unit_rect(0.0, extras.coverage, gray(extras.coverage), "class=\"coverage\"");
    out += "</g>\n";

    for (std::size_t c = 0; c < l.cols; ++c) {
      const std::size_t m = view.feature_cols[c];
      const auto& pred = rule.predicates[m];
      if (view.kind == ViewKind::smallest_changes) {
        const double delta = extras.change->deltas[m];
        if (delta == 0.0) continue;
        const double x = (*view.instance)[m];
        const double range = data.train_range(m) > 0.0 ? data.train_range(m) : 1.0;
        const double p = fraction(x, fmin[m], fmax[m]);
        const double q = fraction(x + delta * range, fmin[m], fmax[m]);
        const std::string& change_color = delta > 0.0 ? style.positive_change_color : style.negative_change_color;
        out += cell_open(l.col_x(c), y, l.cw, l.ch);
        out += unit_rect(0.0, 1.0, lighten(change_color, 0.25));
        out += unit_rect(std::min(p, q), std::abs(q - p), change_color,
                         "class=\"change\" data-rule=\"" + std::to_string(rule.rule_id) + "\" data-feature=\"" +
                             std::to_string(m) + "\"");
        out += "</g>\n";
        continue;
      }
      if (!pred) continue;
      const double a = fraction(pred->alpha, fmin[m], fmax[m]);
      const double b = fmax[m] > fmin[m] ? fraction(pred->beta, fmin[m], fmax[m]) : 1.0;
      out += cell_open(l.col_x(c), y, l.cw, l.ch);
      if (style.desaturated_background) out += unit_rect(0.0, 1.0, lighten(color, 0.25));
      out += unit_rect(a, std::max(0.0, b - a), color,
                       "class=\"pred\" data-rule=\"" + std::to_string(rule.rule_id) + "\" data-feature=\"" +
                           std::to_string(m) + "\"");
      out += "</g>\n";
    }

    out += cell_open(l.certainty_x, y, l.cw, l.ch);
    out += stacked_bar(extras.certainty, palette, "certainty");
    out += "</g>\n";

    if (view.kind == ViewKind::used_rules) {
      out += cell_open(l.extra_x, y, l.cw, l.ch);
      out += stacked_bar(extras.cumulative_vote, palette, "vote");
      out += "</g>\n";
    } else if (view.kind == ViewKind::smallest_changes) {
      out += cell_open(l.extra_x, y, l.cw, l.ch);
      out += unit_rect(0.0, 0.5, palette[*extras.original_class], "class=\"original-class\"");
      out += unit_rect(0.5, 0.5, palette[rule.class_index], "class=\"target-class\"");
      out += "</g>\n";
    }
    out += "</g>\n";
  }
  out += "</g>\n";

  // Grid.
  out += "<g id=\"grid\" stroke=\"#d0d0d0\" stroke-width=\"0.5\">\n";
  const double grid_right = l.col_x(l.cols);
  const double grid_bottom = l.row_y(l.rows);
  for (std::size_t r = 0; r <= l.rows; ++r)
    out += "<line x1=\"" + num(l.matrix_x) + "\" y1=\"" + num(l.row_y(r)) + "\" x2=\"" + num(grid_right) +
           "\" y2=\"" + num(l.row_y(r)) + "\"/>\n";
  for (std::size_t c = 0; c <= l.cols; ++c)
    out += "<line x1=\"" + num(l.col_x(c)) + "\" y1=\"" + num(l.matrix_y) + "\" x2=\"" + num(l.col_x(c)) +
           "\" y2=\"" + num(grid_bottom) + "\"/>\n";
  out += "</g>\n";

  if (view.instance && style.show_instance_lines && view.kind != ViewKind::global) {
    out += "<g id=\"instance\" stroke=\"#333333\" stroke-width=\"1\" stroke-dasharray=\"2,2\">\n";
    for (std::size_t c = 0; c < l.cols; ++c) {
      const std::size_t m = view.feature_cols[c];
      const double x = l.col_x(c) + fraction((*view.instance)[m], fmin[m], fmax[m]) * l.cw;
      out += "<line data-feature=\"" + std::to_string(m) + "\" x1=\"" + num(x) + "\" y1=\"" + num(l.matrix_y) +
             "\" x2=\"" + num(x) + "\" y2=\"" + num(grid_bottom) + "\"/>\n";
    }
    out += "</g>\n";
  }

  if (view.kind == ViewKind::used_rules && view.decision_fixed_row) {
    const double y = l.row_y(*view.decision_fixed_row);
    out += "<line id=\"decision\" x1=\"" + num(l.coverage_x) + "\" y1=\"" + num(y) + "\" x2=\"" +
           num(l.extra_x + l.cw) + "\" y2=\"" + num(y) + "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
  }

  out += "<g id=\"labels\">\n";
  for (std::size_t c = 0; c < l.cols; ++c) {
    const std::size_t m = view.feature_cols[c];
    char imp[32];
    std::snprintf(imp, sizeof imp, "%.3f", m < view.importances.size() ? view.importances[m] : 0.0);
    const double x = l.col_x(c) + l.cw / 2.0 - fs / 3.0;
    out += "<text transform=\"translate(" + num(x) + "," + num(grid_bottom + style.gap) + ") rotate(90)\">" +
           escape(data.feature_names()[m]) + " (" + imp + ")</text>\n";
  }
  out += "</g>\n";
  out += "</svg>\n";
  return out;
}

/// Matrix cell rectangles in SVG user units, for client tooltips.
inline nlohmann::json render_hit_regions(const ExplanationView& view, const RenderStyle& style = {}) {
  const auto l = svg_detail::make_layout(view, style);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t r = 0; r < l.rows; ++r)
    for (std::size_t c = 0; c < l.cols; ++c)
      out.push_back({{"row", r},
                     {"col", c},
                     {"rule_id", view.rule_rows[r]},
                     {"feature", view.feature_cols[c]},
                     {"x", l.col_x(c)},
                     {"y", l.row_y(r)},
                     {"width", l.cw},
                     {"height", l.ch}});
  return out;
}

}  // namespace exmatrix
