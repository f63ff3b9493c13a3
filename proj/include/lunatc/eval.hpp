// Copyright 2026 The lunatc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "lunatc/env.hpp"
#include "lunatc/error.hpp"
#include "lunatc/io.hpp"

namespace lunatc::eval {

inline constexpr double kDefaultThreshold = 0.9;
inline constexpr const char* kEvalCsvHeader =
    "method,seed,threshold,success_rate,mean_similarity,mean_label_queries,"
    "mean_logit_queries,n_texts";

// Fraction of outcomes that flipped the class with similarity >= threshold.
inline double success_rate(const std::vector<AttackOutcome>& outcomes, double threshold) {
  if (outcomes.empty()) throw EmptyOutcomes("no outcomes to score");
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (o.success && o.similarity >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

// `n` evenly spaced points from lo to hi inclusive.
inline std::vector<double> threshold_grid(double lo, double hi, std::size_t n) {
  std::vector<double> out;
  if (n == 1) return {lo};
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  return out;
}

struct EvalRow {
  std::string method;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  double success_rate = 0.0;
  // Mean similarity of the outcomes counted as successes at this threshold.
  double mean_similarity = 0.0;
  double mean_label_queries = 0.0;
  double mean_logit_queries = 0.0;
  std::size_t n_texts = 0;
};

inline EvalRow make_eval_row(const std::string& method, std::uint64_t seed,
                             const std::vector<AttackOutcome>& outcomes, double threshold) {
  EvalRow row{method, seed, threshold, success_rate(outcomes, threshold), 0.0, 0.0, 0.0,
              outcomes.size()};
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    row.mean_label_queries += static_cast<double>(o.queries.label_queries);
    row.mean_logit_queries += static_cast<double>(o.queries.logit_queries);
    if (o.success && o.similarity >= threshold) {
      row.mean_similarity += o.similarity;
      ++hits;
    }
  }
  const double n = static_cast<double>(outcomes.size());
  row.mean_label_queries /= n;
  row.mean_logit_queries /= n;
  if (hits) row.mean_similarity /= static_cast<double>(hits);
  return row;
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string out = std::string(kEvalCsvHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%llu,%.4f,%.6f,%.6f,%.4f,%.4f,%zu\n",
                  static_cast<unsigned long long>(r.seed), r.threshold, r.success_rate,
                  r.mean_similarity, r.mean_label_queries, r.mean_logit_queries, r.n_texts);
    out += r.method + buf;
  }
  return out;
}

inline void emit_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path) {
  io::write_file_atomic(path, eval_csv(rows));
}

// ---------------------------------------------------------------------------
// Curves.

struct CurvePoint {
  double x = 0.0;
  std::optional<double> y;  // nullopt marks an undefined point (gap)
  double lo = 0.0;
  double hi = 0.0;
};

struct Curve {
  std::string name;
  std::string band;  // what the shaded band means, e.g. "95% CI" or "std"
  std::vector<CurvePoint> points;
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Half-width of the two-sided 95% t-interval of the mean.
inline double ci95_halfwidth(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  boost::math::students_t dist(static_cast<double>(v.size() - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  return t * stddev_of(v) / std::sqrt(static_cast<double>(v.size()));
}

// Method success rate divided by the mean simple-search success rate at each
// threshold, with a 95% t-interval across method seeds. Thresholds where the
// baseline never succeeds are left undefined.
inline Curve normalized_curve(const std::string& name,
                              const std::vector<std::vector<AttackOutcome>>& method_runs,
                              const std::vector<std::vector<AttackOutcome>>& baseline_runs,
                              const std::vector<double>& thresholds) {
  if (baseline_runs.empty()) throw EmptyOutcomes("no simple-search runs to normalize by");
  if (method_runs.empty()) throw EmptyOutcomes("no method runs");
  Curve c{name, "95% CI", {}};
  for (double th : thresholds) {
    std::vector<double> base;
    for (const auto& run : baseline_runs) base.push_back(success_rate(run, th));
    const double denom = mean_of(base);
    CurvePoint p{th, std::nullopt, 0.0, 0.0};
    if (denom > 0.0) {
      std::vector<double> ratios;
      for (const auto& run : method_runs) ratios.push_back(success_rate(run, th) / denom);
      const double m = mean_of(ratios);
      const double h = ci95_halfwidth(ratios);
      p.y = m;
      p.lo = m - h;
      p.hi = m + h;
    }
    c.points.push_back(p);
  }
  return c;
}

// Trains on the first `size` texts for each size and seed, and reports the
// success rate at `threshold` as mean and standard deviation across seeds.
// `run(size, seed)` returns the outcomes on the evaluation texts.
inline Curve training_size_sweep(
    const std::string& name, const std::vector<std::size_t>& sizes, std::size_t corpus_size,
    const std::vector<std::uint64_t>& seeds, double threshold,
    const std::function<std::vector<AttackOutcome>(std::size_t, std::uint64_t)>& run) {
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (k > 0 && sizes[k] <= sizes[k - 1]) {
      throw InvalidArgument("training sizes must be strictly ascending");
    }
    if (sizes[k] > corpus_size) {
      throw SizeExceedsCorpus("training size " + std::to_string(sizes[k]) + " exceeds the " +
                              std::to_string(corpus_size) + " available texts");
    }
  }
  if (seeds.empty()) throw InvalidArgument("no seeds");
  Curve c{name, "std", {}};
  for (std::size_t size : sizes) {
    std::vector<double> rates;
    for (auto seed : seeds) rates.push_back(success_rate(run(size, seed), threshold));
    const double m = mean_of(rates);
    const double s = stddev_of(rates);
    c.points.push_back({static_cast<double>(size), m, m - s, m + s});
  }
  return c;
}

inline std::string curve_csv(const std::vector<Curve>& curves) {
  std::string out = "series,band,x,y,lo,hi\n";
  char buf[160];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      if (p.y) {
        std::snprintf(buf, sizeof buf, ",%.4f,%.6f,%.6f,%.6f\n", p.x, *p.y, p.lo, p.hi);
      } else {
        std::snprintf(buf, sizeof buf, ",%.4f,,,\n", p.x);
      }
      out += c.name + "," + c.band + buf;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle access.

struct AccessRow {
  std::string method;
  std::size_t n_texts = 0;
  double mean_label_queries = 0.0;
  double mean_logit_queries = 0.0;
  double mean_ordering_label_queries = 0.0;
  double mean_ordering_logit_queries = 0.0;
  double mean_selection_label_queries = 0.0;
  double mean_selection_logit_queries = 0.0;
  std::uint64_t total_label_queries = 0;
  std::uint64_t total_logit_queries = 0;
};

// Per-method mean queries per attacked text, split into ordering and
// synonym-selection phases. Rows are sorted by method name.
inline std::vector<AccessRow> oracle_access_report(
    const std::map<std::string, std::vector<AttackOutcome>>& by_method) {
  std::vector<AccessRow> rows;
  for (const auto& [method, outcomes] : by_method) {
    AccessRow r;
    r.method = method;
    r.n_texts = outcomes.size();
    std::uint64_t ord_label = 0, ord_logit = 0;
    for (const auto& o : outcomes) {
      r.total_label_queries += o.queries.label_queries;
      r.total_logit_queries += o.queries.logit_queries;
      ord_label += o.ordering_queries.label_queries;
      ord_logit += o.ordering_queries.logit_queries;
    }
    if (!outcomes.empty()) {
      const double n = static_cast<double>(outcomes.size());
      r.mean_label_queries = static_cast<double>(r.total_label_queries) / n;
      r.mean_logit_queries = static_cast<double>(r.total_logit_queries) / n;
      r.mean_ordering_label_queries = static_cast<double>(ord_label) / n;
      r.mean_ordering_logit_queries = static_cast<double>(ord_logit) / n;
      r.mean_selection_label_queries = r.mean_label_queries - r.mean_ordering_label_queries;
      r.mean_selection_logit_queries = r.mean_logit_queries - r.mean_ordering_logit_queries;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string access_csv(const std::vector<AccessRow>& rows) {
  std::string out =
      "method,n_texts,mean_label_queries,mean_logit_queries,mean_ordering_label_queries,"
      "mean_ordering_logit_queries,mean_selection_label_queries,"
      "mean_selection_logit_queries,total_label_queries,total_logit_queries\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%llu,%llu\n", r.n_texts,
                  r.mean_label_queries, r.mean_logit_queries, r.mean_ordering_label_queries,
                  r.mean_ordering_logit_queries, r.mean_selection_label_queries,
                  r.mean_selection_logit_queries,
                  static_cast<unsigned long long>(r.total_label_queries),
                  static_cast<unsigned long long>(r.total_logit_queries));
    out += r.method + buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG line plots.

struct ChartLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[k % 8];
}

}  // namespace detail

// Static SVG: axes, one polyline per series (broken at undefined points) and
// a translucent band between lo and hi. Output depends only on the inputs.
inline std::string svg_lineplot(const std::vector<Curve>& curves, const ChartLabels& labels) {
  using detail::fmt;
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      if (p.y) {
        y0 = std::min({y0, *p.y, p.lo});
        y1 = std::max({y1, *p.y, p.hi});
      }
    }
  }
  if (!std::isfinite(x0)) { x0 = 0; x1 = 1; }
  if (!std::isfinite(y0)) { y0 = 0; y1 = 1; }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return T + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) +
       "\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(labels.title) + "</text>\n";
  // Axes and ticks.
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T + ph) + "\" x2=\"" + fmt(L + pw) +
       "\" y2=\"" + fmt(T + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" +
       fmt(T + ph) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0;
    const double yv = y0 + (y1 - y0) * k / 5.0;
    s += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(T + ph + 18) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + fmt(xv) + "</text>\n";
    s += "<text x=\"" + fmt(L - 6) + "\" y=\"" + fmt(sy(yv) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + fmt(yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"" + fmt(H - 15) +
       "\" text-anchor=\"middle\" font-size=\"13\">" + detail::xml_escape(labels.x_label) +
       "</text>\n";
  s += "<text x=\"18\" y=\"" + fmt(T + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" " +
       "transform=\"rotate(-90 18 " + fmt(T + ph / 2) + ")\">" +
       detail::xml_escape(labels.y_label) + "</text>\n";

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* color = detail::palette(k);
    // Contiguous defined runs.
    std::vector<std::vector<const CurvePoint*>> runs(1);
    for (const auto& p : c.points) {
      if (p.y) {
        runs.back().push_back(&p);
      } else if (!runs.back().empty()) {
        runs.emplace_back();
      }
    }
    for (const auto& run : runs) {
      if (run.empty()) continue;
      std::string band, line;
      for (const auto* p : run) band += fmt(sx(p->x)) + "," + fmt(sy(p->hi)) + " ";
      for (auto it = run.rbegin(); it != run.rend(); ++it) {
        band += fmt(sx((*it)->x)) + "," + fmt(sy((*it)->lo)) + " ";
      }
      for (const auto* p : run) line += fmt(sx(p->x)) + "," + fmt(sy(*p->y)) + " ";
      band.pop_back();
      line.pop_back();
      s += "<polygon points=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
      s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    }
    const double ly = T + 14.0 + 18.0 * static_cast<double>(k);
    s += "<line x1=\"" + fmt(L + pw + 12) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
         fmt(L + pw + 32) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt(L + pw + 36) + "\" y=\"" + fmt(ly + 4) + "\" font-size=\"11\">" +
         detail::xml_escape(c.name + (c.band.empty() ? "" : " (" + c.band + ")")) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

inline void emit_svg_lineplot(const std::vector<Curve>& curves, const ChartLabels& labels,
                              const std::filesystem::path& path) {
  io::write_file_atomic(path, svg_lineplot(curves, labels));
}

}  // namespace lunatc::eval
