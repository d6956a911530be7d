#pragma once

// Ranking metrics for imbalanced outcomes: ROC AUC and the cumulative lift
// (gains) curve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/csv.hpp"

namespace parlab {

struct AucScore {
  double value = 0.5;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Mann-Whitney AUC with tied scores counting one half, computed from
/// average ranks in O(n log n).
inline AucScore auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  AucScore out;
  for (bool l : labels) (l ? out.positives : out.negatives)++;
  if (out.positives == 0 || out.negatives == 0) {
    throw Error("AUC undefined: need at least one positive and one negative");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) ++pos_in_group;
      ++j;
    }
    // ranks i+1..j share their average
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    pos_rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(out.positives), nn = static_cast<double>(out.negatives);
  out.value = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
  return out;
}


struct LiftPoint {
  double targeted = 0.0;  // fraction of instances targeted, best-scored first
  double captured = 0.0;  // fraction of all positives among them
};

struct LiftCurve {
  std::vector<LiftPoint> points;
  double base_rate = 0.0;
  std::size_t instances = 0;
  std::size_t positives = 0;

  /// Captured fraction at the first point whose targeted fraction reaches x.
  double captured_at(double x) const {
    for (const auto& p : points) {
      if (p.targeted >= x - 1e-12) return p.captured;
    }
    return points.empty() ? 0.0 : points.back().captured;
  }

  /// captured_at(x) / x: how many times the random baseline.
  double lift_at(double x) const { return captured_at(x) / x; }
};

/// Orders instances by score descending; equal scores fall back to
/// case_id ascending, then input order.
inline std::vector<std::size_t> rank_by_score(std::span<const double> scores,
                                              std::span<const std::string> case_ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (!case_ids.empty()) return case_ids[a] < case_ids[b];
    return false;
  });
  return order;
}

/// Cumulative lift at `granularity` + 1 evenly spaced targeted fractions
/// 0, 1/g, ..., 1. The point at x counts positives among the top ceil(x*n).
inline LiftCurve cumulative_lift(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::span<const std::string> case_ids = {},
                                 std::size_t granularity = 100) {
  if (scores.size() != labels.size()) throw Error("lift: scores and labels differ in length");
  if (!case_ids.empty() && case_ids.size() != scores.size()) {
    throw Error("lift: case_ids and scores differ in length");
  }
  if (granularity == 0) throw Error("lift: granularity must be >= 1");
  const std::size_t n = scores.size();
  const std::size_t total_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  if (total_pos == 0) throw Error("lift undefined: no positive instances");
  const auto order = rank_by_score(scores, case_ids);
  std::vector<std::size_t> prefix_pos(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) prefix_pos[k + 1] = prefix_pos[k] + (labels[order[k]] ? 1 : 0);

  LiftCurve curve;
  curve.instances = n;
  curve.positives = total_pos;
  curve.base_rate = static_cast<double>(total_pos) / static_cast<double>(n);
  for (std::size_t g = 0; g <= granularity; ++g) {
    const double x = static_cast<double>(g) / static_cast<double>(granularity);
    // the epsilon guards ceil against x*n landing a hair above an integer
    auto top = static_cast<std::size_t>(std::ceil(x * static_cast<double>(n) - 1e-9));
    top = std::min(top, n);
    curve.points.push_back({x, static_cast<double>(prefix_pos[top]) / static_cast<double>(total_pos)});
  }
  return curve;
}

inline void write_lift_csv(std::ostream& out, const LiftCurve& curve) {
  csv::write_row(out, {"targeted_fraction", "captured_fraction"});
  for (const auto& p : curve.points) csv::write_row(out, {csv::num(p.targeted), csv::num(p.captured)});
}

inline std::vector<LiftPoint> read_lift_csv(std::istream& in) {
  csv::Row row;
  if (!csv::read_row(in, row) || row.size() != 2) throw Error("lift CSV: missing header");
  std::vector<LiftPoint> points;
  while (csv::read_row(in, row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2) throw Error("lift CSV: expected 2 fields");
    points.push_back({csv::to_double(row[0], "targeted_fraction"), csv::to_double(row[1], "captured_fraction")});
  }
  return points;
}

struct LiftReference {
  double targeted = 0.0;
  double captured = 0.0;
  std::string label;
};

/// Standalone SVG of the curve against the random diagonal. `reference`
/// marks an optional benchmark point.
inline std::string render_lift_svg(std::span<const LiftPoint> points, const LiftReference* reference = nullptr) {
  constexpr double W = 480, H = 480, M = 50;
  const double pw = W - 2 * M, ph = H - 2 * M;
  auto px = [&](double x) { return M + x * pw; };
  auto py = [&](double y) { return H - M - y * ph; };
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  s += "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  s += "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
  for (int g = 0; g <= 10; ++g) {
    const double t = g / 10.0;
    s += "<line x1=\"" + csv::fixed(px(t), 1) + "\" y1=\"" + csv::fixed(py(0), 1) + "\" x2=\"" +
         csv::fixed(px(t), 1) + "\" y2=\"" + csv::fixed(py(1), 1) + "\"/>\n";
    s += "<line x1=\"" + csv::fixed(px(0), 1) + "\" y1=\"" + csv::fixed(py(t), 1) + "\" x2=\"" +
         csv::fixed(px(1), 1) + "\" y2=\"" + csv::fixed(py(t), 1) + "\"/>\n";
  }
  s += "</g>\n";
  s += "<rect x=\"" + csv::fixed(M, 1) + "\" y=\"" + csv::fixed(M, 1) + "\" width=\"" + csv::fixed(pw, 1) +
       "\" height=\"" + csv::fixed(ph, 1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + csv::fixed(px(0), 1) + "\" y1=\"" + csv::fixed(py(0), 1) + "\" x2=\"" +
       csv::fixed(px(1), 1) + "\" y2=\"" + csv::fixed(py(1), 1) +
       "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) s += ' ';
    s += csv::fixed(px(points[i].targeted), 2) + "," + csv::fixed(py(points[i].captured), 2);
  }
  s += "\"/>\n";
  if (reference) {
    s += "<circle cx=\"" + csv::fixed(px(reference->targeted), 2) + "\" cy=\"" +
         csv::fixed(py(reference->captured), 2) + "\" r=\"4\" fill=\"#d62728\"/>\n";
    s += "<text x=\"" + csv::fixed(px(reference->targeted) + 8, 1) + "\" y=\"" +
         csv::fixed(py(reference->captured) + 4, 1) + "\" font-size=\"11\" font-family=\"sans-serif\">" +
         reference->label + "</text>\n";
  }
  s += "<text x=\"240\" y=\"470\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
       "fraction of cases targeted</text>\n";
  s += "<text x=\"14\" y=\"240\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
       "transform=\"rotate(-90 14 240)\">fraction of positives captured</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace parlab
