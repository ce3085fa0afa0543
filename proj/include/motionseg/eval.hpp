#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "motionseg/boxes.hpp"
#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/geometry.hpp"
#include "motionseg/scene.hpp"

namespace motionseg {

enum class IouKind { seg, box3d };
enum class EvalMode { moving_only, all_with_ignore };

template <>
struct EnumNames<IouKind> {
  static constexpr std::array<std::pair<IouKind, std::string_view>, 2> values{{
      {IouKind::seg, "seg"},
      {IouKind::box3d, "box3d"},
  }};
};
template <>
struct EnumNames<EvalMode> {
  static constexpr std::array<std::pair<EvalMode, std::string_view>, 2> values{{
      {EvalMode::moving_only, "moving"},
      {EvalMode::all_with_ignore, "all"},
  }};
};

inline double box3d_iou(const Box3D& a, const Box3D& b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Sorted indices of points inside the box (inclusive boundary).
inline std::vector<int> interior_points(const Box3D& b, std::span<const Vec3> points) {
  std::vector<int> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (b.contains(points[i])) out.push_back(static_cast<int>(i));
  }
  return out;
}

inline std::size_t intersection_count(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

inline double mask_iou(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() || b.empty()) return 0.0;
  const auto inter = static_cast<double>(intersection_count(a, b));
  return inter / (static_cast<double>(a.size() + b.size()) - inter);
}

/// |pred| x |gt| SegIoU matrix over the given points.
inline std::vector<std::vector<double>> seg_iou_matrix(std::span<const Box3D> pred, std::span<const Box3D> gt,
                                                       std::span<const Vec3> points) {
  std::vector<std::vector<int>> gm;
  for (const auto& g : gt) gm.push_back(interior_points(g, points));
  std::vector<std::vector<double>> out(pred.size(), std::vector<double>(gt.size(), 0.0));
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const auto pm = interior_points(pred[p], points);
    for (std::size_t g = 0; g < gt.size(); ++g) out[p][g] = mask_iou(pm, gm[g]);
  }
  return out;
}

struct EvalConfig {
  IouKind iou = IouKind::seg;
  std::string thresholds = "0.4,0.7";
  Region region;
  double moving_speed = 1.0;
  int min_interior = 1;
  EvalMode mode = EvalMode::moving_only;

  template <typename V>
  void visit(V& v) {
    v("iou", iou);
    v("thresholds", thresholds);
    v("region_x_min", region.x_min);
    v("region_x_max", region.x_max);
    v("region_y_min", region.y_min);
    v("region_y_max", region.y_max);
    v("moving_speed", moving_speed);
    v("min_interior", min_interior);
    v("mode", mode);
  }

  std::vector<double> threshold_list() const {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= thresholds.size()) {
      const std::size_t comma = thresholds.find(',', start);
      const std::string part = thresholds.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      double t = 0.0;
      field_from_string(part, t);
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval.thresholds: each threshold must be in (0, 1]");
      out.push_back(t);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  void validate() const {
    threshold_list();
    if (min_interior < 0) throw ConfigError("eval.min_interior must be >= 0");
  }
};

inline constexpr std::array<ObjectClass, 3> kEvalClasses{ObjectClass::vehicle, ObjectClass::pedestrian, ObjectClass::cyclist};

struct ThresholdCounts {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::map<ObjectClass, std::size_t> class_tp, class_gt;

  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double recall() const { return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  double class_recall(ObjectClass c) const {
    const auto g = class_gt.find(c);
    if (g == class_gt.end() || g->second == 0) return 0.0;
    const auto t = class_tp.find(c);
    return static_cast<double>(t == class_tp.end() ? 0 : t->second) / static_cast<double>(g->second);
  }
};

struct MetricsReport {
  std::vector<ThresholdCounts> rows;
  std::size_t predictions = 0;
  std::size_t unmatched_predictions = 0;
  std::size_t frames = 0;

  double ufp() const {
    return predictions > 0 ? 100.0 * static_cast<double>(unmatched_predictions) / static_cast<double>(predictions) : 0.0;
  }

  const ThresholdCounts& at(double t) const {
    for (const auto& r : rows) {
      if (std::abs(r.threshold - t) < 1e-12) return r;
    }
    throw ConfigError("no metrics at threshold " + format_g(t, 6));
  }
  double f1(double t) const { return at(t).f1(); }

  /// Sums counts from another report with the same thresholds.
  void accumulate(const MetricsReport& o) {
    if (rows.empty()) {
      for (const auto& r : o.rows) rows.push_back(ThresholdCounts{r.threshold, 0, 0, 0, {}, {}});
    }
    if (rows.size() != o.rows.size()) throw ShapeError("aggregate: threshold sets differ");
    for (std::size_t k = 0; k < rows.size(); ++k) {
      rows[k].tp += o.rows[k].tp;
      rows[k].fp += o.rows[k].fp;
      rows[k].fn += o.rows[k].fn;
      for (const auto& [c, n] : o.rows[k].class_tp) rows[k].class_tp[c] += n;
      for (const auto& [c, n] : o.rows[k].class_gt) rows[k].class_gt[c] += n;
    }
    predictions += o.predictions;
    unmatched_predictions += o.unmatched_predictions;
    frames += o.frames;
  }
};

namespace detail {

/// Greedy one-to-one matching by descending IoU; pairs below t are never matched.
/// Returns, per prediction, the matched target column or -1.
inline std::vector<int> greedy_match(const std::vector<std::vector<double>>& iou, std::size_t n_gt, double t,
                                     const std::vector<char>* pred_mask = nullptr, const std::vector<char>* gt_mask = nullptr) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < iou.size(); ++p) {
    if (pred_mask != nullptr && !(*pred_mask)[p]) continue;
    for (std::size_t g = 0; g < n_gt; ++g) {
      if (gt_mask != nullptr && !(*gt_mask)[g]) continue;
      if (iou[p][g] >= t) pairs.emplace_back(iou[p][g], p, g);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<int> match(iou.size(), -1);
  std::vector<char> used(n_gt, 0);
  for (const auto& [v, p, g] : pairs) {
    if (match[p] != -1 || used[g]) continue;
    match[p] = static_cast<int>(g);
    used[g] = 1;
  }
  return match;
}

}  // namespace detail

/// Scores one frame. `points` are the filtered points of the frame (SegIoU masks
/// and interior counts); `gt` is every ground-truth box of the frame.
inline MetricsReport evaluate_frame(std::span<const ScoredBox> predictions, std::span<const GtBox> gt,
                                    std::span<const Vec3> points, const EvalConfig& cfg) {
  MetricsReport rep;
  rep.frames = 1;
  const auto thresholds = cfg.threshold_list();
  std::vector<Box3D> preds;
  for (const auto& p : predictions) {
    if (cfg.region.contains(p.box.center.x, p.box.center.y)) preds.push_back(p.box);
  }
  std::vector<Box3D> targets, ignore;
  std::vector<ObjectClass> target_cls;
  for (const auto& g : gt) {
    if (!cfg.region.contains(g.box.center.x, g.box.center.y)) continue;
    int interior = 0;
    for (const auto& p : points) interior += g.box.contains(p) ? 1 : 0;
    const bool enough = interior >= cfg.min_interior;
    const bool eligible = cfg.mode == EvalMode::all_with_ignore || g.speed() > cfg.moving_speed;
    if (eligible && enough) {
      targets.push_back(g.box);
      target_cls.push_back(g.cls);
    } else {
      ignore.push_back(g.box);
    }
  }
  rep.predictions = preds.size();

  std::vector<std::vector<double>> iou;
  std::vector<std::vector<int>> pred_masks;
  std::vector<std::vector<int>> ignore_masks;
  if (cfg.iou == IouKind::seg) {
    iou = seg_iou_matrix(preds, targets, points);
    for (const auto& p : preds) pred_masks.push_back(interior_points(p, points));
    for (const auto& g : ignore) ignore_masks.push_back(interior_points(g, points));
  } else {
    iou.assign(preds.size(), std::vector<double>(targets.size(), 0.0));
    for (std::size_t p = 0; p < preds.size(); ++p) {
      for (std::size_t g = 0; g < targets.size(); ++g) iou[p][g] = box3d_iou(preds[p], targets[g]);
    }
  }
  std::vector<char> ignorable(preds.size(), 0);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    for (std::size_t g = 0; g < ignore.size() && !ignorable[p]; ++g) {
      ignorable[p] = cfg.iou == IouKind::seg ? intersection_count(pred_masks[p], ignore_masks[g]) > 0
                                             : intersection_volume(preds[p], ignore[g]) > 0.0;
    }
  }
  // semantic oracle: class of the max-IoU overlapping target; uFP over all gt boxes
  std::vector<int> pred_cls(preds.size(), -1);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    double best = 0.0;
    for (std::size_t g = 0; g < targets.size(); ++g) {
      const double v = box3d_iou(preds[p], targets[g]);
      if (v > best) {
        best = v;
        pred_cls[p] = static_cast<int>(target_cls[g]);
      }
    }
    bool overlaps = best > 0.0;
    for (std::size_t g = 0; g < ignore.size() && !overlaps; ++g) overlaps = intersection_volume(preds[p], ignore[g]) > 0.0;
    if (!overlaps) ++rep.unmatched_predictions;
  }

  for (const double t : thresholds) {
    ThresholdCounts row;
    row.threshold = t;
    const auto match = detail::greedy_match(iou, targets.size(), t);
    std::size_t tp = 0;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (match[p] >= 0) {
        ++tp;
      } else if (!ignorable[p]) {
        ++row.fp;
      }
    }
    row.tp = tp;
    row.fn = targets.size() - tp;
    for (const auto c : kEvalClasses) {
      std::vector<char> pm(preds.size()), gm(targets.size());
      std::size_t n_gt = 0;
      for (std::size_t p = 0; p < preds.size(); ++p) pm[p] = pred_cls[p] == static_cast<int>(c);
      for (std::size_t g = 0; g < targets.size(); ++g) {
        gm[g] = target_cls[g] == c;
        n_gt += gm[g] ? 1 : 0;
      }
      const auto cm = detail::greedy_match(iou, targets.size(), t, &pm, &gm);
      std::size_t ctp = 0;
      for (int m : cm) ctp += m >= 0 ? 1 : 0;
      row.class_tp[c] = ctp;
      row.class_gt[c] = n_gt;
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline MetricsReport aggregate(std::span<const MetricsReport> frames, const EvalConfig& cfg) {
  MetricsReport out;
  for (const double t : cfg.threshold_list()) out.rows.push_back(ThresholdCounts{t, 0, 0, 0, {}, {}});
  for (const auto& f : frames) out.accumulate(f);
  return out;
}

inline std::string metrics_csv(const MetricsReport& r) {
  std::string s = "threshold,precision,recall,f1,tp,fp,fn,ufp,class\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.2f,%.6f,%.6f,%.6f,%zu,%zu,%zu,%.6f,all\n", row.threshold, row.precision(),
                  row.recall(), row.f1(), row.tp, row.fp, row.fn, r.ufp());
    s += buf;
    for (const auto c : kEvalClasses) {
      const auto gt = row.class_gt.count(c) ? row.class_gt.at(c) : 0;
      const auto tp = row.class_tp.count(c) ? row.class_tp.at(c) : 0;
      std::snprintf(buf, sizeof buf, "%.2f,,%.6f,,%zu,,%zu,,%s\n", row.threshold, row.class_recall(c), tp, gt - tp,
                    std::string(enum_name(c)).c_str());
      s += buf;
    }
  }
  return s;
}

}  // namespace motionseg
