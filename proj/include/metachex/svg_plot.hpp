#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "metachex/analysis.hpp"
#include "metachex/common.hpp"
#include "metachex/metrics.hpp"

namespace metachex {
namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Maps a data rectangle onto the pixel plot area (y axis flipped).
struct PlotFrame {
  double x_lo, x_hi, y_lo, y_hi;
  double left = 60, top = 20, width = 520, height = 400;

  double px(double x) const { return left + (x - x_lo) / (x_hi - x_lo) * width; }
  double py(double y) const { return top + (y_hi - y) / (y_hi - y_lo) * height; }
};

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b"};

inline std::string svg_open(const std::string& config_hash, const std::string& title) {
  return cat("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
             "viewBox=\"0 0 640 480\">\n<!-- config_hash=", config_hash, " -->\n",
             "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n",
             "<text x=\"320\" y=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"14\">", title, "</text>\n");
}

inline std::string svg_axes(const PlotFrame& f, const std::string& x_label,
                            const std::string& y_label) {
  std::string s = cat("<rect x=\"", fmt(f.left), "\" y=\"", fmt(f.top), "\" width=\"",
                      fmt(f.width), "\" height=\"", fmt(f.height),
                      "\" fill=\"none\" stroke=\"black\"/>\n");
  for (int i = 0; i <= 5; ++i) {
    const double tx = f.x_lo + (f.x_hi - f.x_lo) * i / 5.0;
    const double ty = f.y_lo + (f.y_hi - f.y_lo) * i / 5.0;
    s += cat("<line x1=\"", fmt(f.px(tx)), "\" y1=\"", fmt(f.top + f.height), "\" x2=\"",
             fmt(f.px(tx)), "\" y2=\"", fmt(f.top + f.height + 5), "\" stroke=\"black\"/>\n");
    s += cat("<text x=\"", fmt(f.px(tx)), "\" y=\"", fmt(f.top + f.height + 18),
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">",
             fmt(tx, "%.3g"), "</text>\n");
    s += cat("<line x1=\"", fmt(f.left - 5), "\" y1=\"", fmt(f.py(ty)), "\" x2=\"", fmt(f.left),
             "\" y2=\"", fmt(f.py(ty)), "\" stroke=\"black\"/>\n");
    s += cat("<text x=\"", fmt(f.left - 8), "\" y=\"", fmt(f.py(ty) + 4),
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">",
             fmt(ty, "%.3g"), "</text>\n");
  }
  s += cat("<text x=\"", fmt(f.left + f.width / 2), "\" y=\"", fmt(f.top + f.height + 38),
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">", x_label,
           "</text>\n");
  s += cat("<text x=\"16\" y=\"", fmt(f.top + f.height / 2),
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 ",
           fmt(f.top + f.height / 2), ")\">", y_label, "</text>\n");
  return s;
}

}  // namespace detail

// Overlaid ROC curves with an AUC legend.
inline std::string roc_svg(const std::vector<std::pair<std::string, RocResult>>& curves,
                           const std::string& config_hash) {
  require(!curves.empty(), "roc plot: no curves");
  detail::PlotFrame f{0.0, 1.0, 0.0, 1.0};
  std::string s = detail::svg_open(config_hash, "ROC");
  s += detail::svg_axes(f, "false positive rate", "true positive rate");
  s += cat("<line x1=\"", detail::fmt(f.px(0)), "\" y1=\"", detail::fmt(f.py(0)), "\" x2=\"",
           detail::fmt(f.px(1)), "\" y2=\"", detail::fmt(f.py(1)),
           "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n");
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = detail::kPalette[c % 6];
    std::string points;
    for (const auto& p : curves[c].second.points)
      points += cat(detail::fmt(f.px(p.fpr)), ",", detail::fmt(f.py(p.tpr)), " ");
    s += cat("<polyline fill=\"none\" stroke=\"", color, "\" stroke-width=\"1.5\" points=\"",
             points, "\"/>\n");
    s += cat("<text x=\"", detail::fmt(f.left + f.width - 8), "\" y=\"",
             detail::fmt(f.top + f.height - 10 - 16 * static_cast<double>(curves.size() - 1 - c)),
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"", color,
             "\">", curves[c].first, " (AUC=", detail::fmt(curves[c].second.auc, "%.3f"),
             ")</text>\n");
  }
  return s + "</svg>\n";
}

// Mean-vs-difference agreement scatter with bias and limits of agreement.
inline std::string bland_altman_svg(const BlandAltmanResult& ba, const std::string& config_hash) {
  require(!ba.means.empty(), "bland-altman plot: no points");
  auto [mean_lo, mean_hi] = std::minmax_element(ba.means.begin(), ba.means.end());
  double x_lo = *mean_lo, x_hi = *mean_hi;
  double y_lo = std::min(*std::min_element(ba.diffs.begin(), ba.diffs.end()), ba.loa_lower);
  double y_hi = std::max(*std::max_element(ba.diffs.begin(), ba.diffs.end()), ba.loa_upper);
  const double x_pad = (x_hi - x_lo) * 0.05 + 1e-9, y_pad = (y_hi - y_lo) * 0.08 + 1e-9;
  detail::PlotFrame f{x_lo - x_pad, x_hi + x_pad, y_lo - y_pad, y_hi + y_pad};

  std::string s = detail::svg_open(config_hash, "Bland-Altman");
  s += detail::svg_axes(f, "mean of predicted and labeled age (years)",
                        "predicted minus labeled age (years)");
  auto hline = [&](double y, const char* dash, const std::string& label) {
    std::string part = cat("<line x1=\"", detail::fmt(f.left), "\" y1=\"", detail::fmt(f.py(y)),
                           "\" x2=\"", detail::fmt(f.left + f.width), "\" y2=\"",
                           detail::fmt(f.py(y)), "\" stroke=\"#d62728\"", dash, "/>\n");
    part += cat("<text x=\"", detail::fmt(f.left + f.width + 4), "\" y=\"",
                detail::fmt(f.py(y) + 4), "\" font-family=\"sans-serif\" font-size=\"10\">",
                label, "</text>\n");
    return part;
  };
  s += hline(ba.bias, "", cat("bias ", detail::fmt(ba.bias, "%.2f")));
  s += hline(ba.loa_upper, " stroke-dasharray=\"5 3\"", detail::fmt(ba.loa_upper, "%.2f"));
  s += hline(ba.loa_lower, " stroke-dasharray=\"5 3\"", detail::fmt(ba.loa_lower, "%.2f"));
  for (std::size_t i = 0; i < ba.means.size(); ++i)
    s += cat("<circle cx=\"", detail::fmt(f.px(ba.means[i])), "\" cy=\"",
             detail::fmt(f.py(ba.diffs[i])), "\" r=\"2.5\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n");
  return s + "</svg>\n";
}

enum class TsneColorBy { gender, position, age };

inline TsneColorBy tsne_color_by_from_string(const std::string& s) {
  if (s == "gender") return TsneColorBy::gender;
  if (s == "position") return TsneColorBy::position;
  if (s == "age") return TsneColorBy::age;
  fail(cat("unknown color-by field: ", s, " (expected gender, position, or age)"));
}

// 2-d embedding scatter, colored by a metadata field.
inline std::string tsne_svg(const EmbeddingExport& embeddings, TsneColorBy color_by,
                            const std::string& config_hash) {
  require(!embeddings.rows.empty(), "tsne plot: no points");
  for (const auto& row : embeddings.rows)
    require(row.projected.has_value(), "tsne plot: embeddings lack projected coordinates");

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  double age_lo = 1e300, age_hi = -1e300;
  for (const auto& row : embeddings.rows) {
    x_lo = std::min(x_lo, (*row.projected)[0]);
    x_hi = std::max(x_hi, (*row.projected)[0]);
    y_lo = std::min(y_lo, (*row.projected)[1]);
    y_hi = std::max(y_hi, (*row.projected)[1]);
    age_lo = std::min(age_lo, row.age_years);
    age_hi = std::max(age_hi, row.age_years);
  }
  const double x_pad = (x_hi - x_lo) * 0.05 + 1e-9, y_pad = (y_hi - y_lo) * 0.05 + 1e-9;
  detail::PlotFrame f{x_lo - x_pad, x_hi + x_pad, y_lo - y_pad, y_hi + y_pad};

  const char* title = color_by == TsneColorBy::gender ? "Embedding by gender"
                      : color_by == TsneColorBy::position ? "Embedding by view position"
                                                          : "Embedding by age";
  std::string s = detail::svg_open(config_hash, title);
  s += detail::svg_axes(f, "dimension 1", "dimension 2");
  auto color_of = [&](const EmbeddingRow& row) -> std::string {
    switch (color_by) {
      case TsneColorBy::gender:
        return row.gender == Gender::Male ? "#1f77b4" : "#d62728";
      case TsneColorBy::position:
        return row.position == ViewPosition::PA ? "#2ca02c" : "#9467bd";
      case TsneColorBy::age: {
        const double t = age_hi > age_lo ? (row.age_years - age_lo) / (age_hi - age_lo) : 0.5;
        char buf[8];
        std::snprintf(buf, sizeof(buf), "#%02x00%02x", static_cast<int>(std::lround(t * 255)),
                      static_cast<int>(std::lround((1.0 - t) * 255)));
        return buf;
      }
    }
    return "#000000";
  };
  for (const auto& row : embeddings.rows)
    s += cat("<circle cx=\"", detail::fmt(f.px((*row.projected)[0])), "\" cy=\"",
             detail::fmt(f.py((*row.projected)[1])), "\" r=\"3\" fill=\"", color_of(row),
             "\" fill-opacity=\"0.7\"/>\n");

  if (color_by == TsneColorBy::gender) {
    s += cat("<text x=\"600\" y=\"40\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"#1f77b4\">male</text>\n",
             "<text x=\"600\" y=\"56\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"#d62728\">female</text>\n");
  } else if (color_by == TsneColorBy::position) {
    s += cat("<text x=\"600\" y=\"40\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"#2ca02c\">PA</text>\n",
             "<text x=\"600\" y=\"56\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"#9467bd\">AP</text>\n");
  } else {
    s += cat("<text x=\"600\" y=\"40\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\">age ", detail::fmt(age_lo, "%.0f"), "-",
             detail::fmt(age_hi, "%.0f"), "y (blue=young, red=old)</text>\n");
  }
  return s + "</svg>\n";
}

}  // namespace metachex
