#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadinspect/error.hpp"

namespace roadinspect {

// ---------------------------------------------------------------------------
// Boxes

/// Normalized center-format box.
struct GroundTruthBox {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct PredBox {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
  double conf = 0;
  friend bool operator==(const PredBox&, const PredBox&) = default;
};

struct Corners {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

template <typename B>
concept CenterBox = requires(const B& b) {
  b.cx;
  b.cy;
  b.w;
  b.h;
};

template <CenterBox B>
Corners to_corners(const B& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

inline double iou(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

template <CenterBox A, CenterBox B>
double iou(const A& a, const B& b) {
  return iou(to_corners(a), to_corners(b));
}

// ---------------------------------------------------------------------------
// Label / prediction text files
//
//   ground truth: "class cx cy w h"
//   prediction:   "class cx cy w h conf"
// Blank lines are ignored.

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& file, std::size_t line, const char* field) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(file, line, std::string("non-numeric ") + field + " '" + std::string(s) + "'");
  }
  return v;
}

inline int parse_class(std::string_view s, const std::string& file, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(file, line, "class id '" + std::string(s) + "' is not an integer");
  }
  if (v < 0) throw ParseError(file, line, "class id must be >= 0");
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(text.substr(pos, end - pos), line_no);
    pos = end + 1;
  }
}

template <typename Box>
void parse_box_fields(Box& b, const std::vector<std::string_view>& f, const std::string& file, std::size_t line) {
  b.class_id = parse_class(f[0], file, line);
  b.cx = parse_double(f[1], file, line, "cx");
  b.cy = parse_double(f[2], file, line, "cy");
  b.w = parse_double(f[3], file, line, "w");
  b.h = parse_double(f[4], file, line, "h");
  if (b.cx < 0 || b.cx > 1 || b.cy < 0 || b.cy > 1) throw ParseError(file, line, "box center outside [0,1]");
  if (!(b.w > 0 && b.w <= 1 && b.h > 0 && b.h <= 1)) throw ParseError(file, line, "box size outside (0,1]");
}

}  // namespace detail

inline std::vector<GroundTruthBox> parse_label_file(std::string_view text, const std::string& file = {}) {
  std::vector<GroundTruthBox> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t n) {
    const auto f = detail::split_ws(line);
    if (f.empty()) return;
    if (f.size() != 5) {
      throw ParseError(file, n, "expected 5 fields (class cx cy w h), got " + std::to_string(f.size()));
    }
    GroundTruthBox b;
    detail::parse_box_fields(b, f, file, n);
    out.push_back(b);
  });
  return out;
}

inline std::vector<PredBox> parse_pred_file(std::string_view text, const std::string& file = {}) {
  std::vector<PredBox> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t n) {
    const auto f = detail::split_ws(line);
    if (f.empty()) return;
    if (f.size() != 6) {
      throw ParseError(file, n, "expected 6 fields (class cx cy w h conf), got " + std::to_string(f.size()));
    }
    PredBox b;
    detail::parse_box_fields(b, f, file, n);
    b.conf = detail::parse_double(f[5], file, n, "conf");
    if (b.conf < 0 || b.conf > 1) throw ParseError(file, n, "confidence outside [0,1]");
    out.push_back(b);
  });
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<PredBox> load_pred_file(const std::filesystem::path& path) {
  return parse_pred_file(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Matching and average precision

struct FrameMatch {
  std::vector<std::size_t> order;  // prediction indices, confidence descending (stable)
  std::vector<bool> pred_tp;       // indexed like the input predictions
  std::vector<bool> gt_matched;    // indexed like the input ground truth
  std::size_t tp() const { return static_cast<std::size_t>(std::count(pred_tp.begin(), pred_tp.end(), true)); }
};

/// Greedy one-to-one matching of single-class predictions to ground truth:
/// in confidence order each prediction takes the unmatched box of highest
/// IoU, provided that IoU >= iou_thr.
template <CenterBox G>
FrameMatch match_frame(const std::vector<PredBox>& preds, const std::vector<G>& gts, double iou_thr) {
  FrameMatch m;
  m.order.resize(preds.size());
  std::iota(m.order.begin(), m.order.end(), std::size_t{0});
  std::stable_sort(m.order.begin(), m.order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].conf > preds[b].conf; });
  m.pred_tp.assign(preds.size(), false);
  m.gt_matched.assign(gts.size(), false);
  for (std::size_t p : m.order) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g]) continue;
      const double v = iou(preds[p], gts[g]);
      if (v >= iou_thr && v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      m.gt_matched[best_gt] = true;
      m.pred_tp[p] = true;
    }
  }
  return m;
}

/// All-point interpolated AP over confidence-ordered TP flags.
inline double average_precision(const std::vector<bool>& tp_flags, std::size_t total_gt) {
  if (total_gt == 0) return tp_flags.empty() ? 1.0 : 0.0;
  const std::size_t n = tp_flags.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

inline constexpr std::array<double, 10> kIouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                           0.75, 0.80, 0.85, 0.90, 0.95};

struct EvalFrame {
  std::string name;
  std::vector<GroundTruthBox> gts;
  std::vector<PredBox> preds;
};

struct ClassEval {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::size_t num_pred = 0;
  std::array<double, 10> ap{};  // one per kIouThresholds entry
  double ap50 = 0;
  double ap50_95 = 0;
};

struct EvalReport {
  std::vector<ClassEval> classes;  // classes present in ground truth, ascending id
  double map50 = 0;
  double map50_95 = 0;
  double conf_threshold = 0.25;
  double precision = 0;
  double recall = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Frames should already be in a fixed order (by name); aggregation follows it.
inline EvalReport evaluate_frames(const std::vector<EvalFrame>& frames, double conf_thr = 0.25) {
  EvalReport rep;
  rep.conf_threshold = conf_thr;

  std::set<int> gt_classes, all_classes;
  for (const auto& f : frames) {
    for (const auto& g : f.gts) gt_classes.insert(g.class_id), all_classes.insert(g.class_id);
    for (const auto& p : f.preds) all_classes.insert(p.class_id);
  }

  auto split = [](const EvalFrame& f, int cls) {
    std::pair<std::vector<PredBox>, std::vector<GroundTruthBox>> r;
    for (const auto& p : f.preds) {
      if (p.class_id == cls) r.first.push_back(p);
    }
    for (const auto& g : f.gts) {
      if (g.class_id == cls) r.second.push_back(g);
    }
    return r;
  };

  for (int cls : gt_classes) {
    ClassEval ce;
    ce.class_id = cls;
    for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
      struct Scored {
        double conf;
        bool tp;
      };
      std::vector<Scored> scored;
      std::size_t total_gt = 0;
      for (const auto& f : frames) {
        auto [preds, gts] = split(f, cls);
        total_gt += gts.size();
        const FrameMatch m = match_frame(preds, gts, kIouThresholds[t]);
        for (std::size_t p : m.order) scored.push_back({preds[p].conf, m.pred_tp[p]});
      }
      std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.conf > b.conf; });
      std::vector<bool> flags;
      flags.reserve(scored.size());
      for (const auto& s : scored) flags.push_back(s.tp);
      ce.ap[t] = average_precision(flags, total_gt);
      ce.num_gt = total_gt;
      ce.num_pred = scored.size();
    }
    ce.ap50 = ce.ap[0];
    ce.ap50_95 = std::accumulate(ce.ap.begin(), ce.ap.end(), 0.0) / static_cast<double>(ce.ap.size());
    rep.classes.push_back(ce);
  }
  if (!rep.classes.empty()) {
    for (const auto& c : rep.classes) {
      rep.map50 += c.ap50;
      rep.map50_95 += c.ap50_95;
    }
    rep.map50 /= static_cast<double>(rep.classes.size());
    rep.map50_95 /= static_cast<double>(rep.classes.size());
  }

  // Operating point: confidence-filtered predictions matched at IoU 0.50;
  // predictions of classes absent from ground truth are false positives.
  for (int cls : all_classes) {
    for (const auto& f : frames) {
      auto [preds, gts] = split(f, cls);
      std::erase_if(preds, [&](const PredBox& p) { return p.conf < conf_thr; });
      const FrameMatch m = match_frame(preds, gts, kIouThresholds[0]);
      const std::size_t tp = m.tp();
      rep.tp += tp;
      rep.fp += preds.size() - tp;
      rep.fn += gts.size() - tp;
    }
  }
  rep.precision = rep.tp + rep.fp ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp) : 0.0;
  rep.recall = rep.tp + rep.fn ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn) : 0.0;
  return rep;
}

/// Pairs <stem>.txt files from both directories. Frames are the union of
/// stems, in name order; a missing file on either side means no boxes.
inline std::vector<EvalFrame> load_eval_frames(const std::filesystem::path& gt_dir,
                                               const std::filesystem::path& pred_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw IoError("ground-truth directory not found: " + gt_dir.string());
  std::map<std::string, EvalFrame> frames;
  auto scan = [&](const fs::path& dir, bool is_gt) {
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      const std::string stem = entry.path().stem().string();
      auto& frame = frames[stem];
      frame.name = stem;
      const std::string text = read_text_file(entry.path());
      if (is_gt) frame.gts = parse_label_file(text, entry.path().string());
      else frame.preds = parse_pred_file(text, entry.path().string());
    }
  };
  scan(gt_dir, true);
  scan(pred_dir, false);
  std::vector<EvalFrame> out;
  out.reserve(frames.size());
  for (auto& [_, f] : frames) out.push_back(std::move(f));
  return out;
}

inline EvalReport evaluate(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir,
                           double conf_thr = 0.25) {
  return evaluate_frames(load_eval_frames(gt_dir, pred_dir), conf_thr);
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["map50"] = r.map50;
  j["map50_95"] = r.map50_95;
  j["conf_threshold"] = r.conf_threshold;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["iou_thresholds"] = kIouThresholds;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : r.classes) {
    j["classes"].push_back({{"class_id", c.class_id},
                            {"num_gt", c.num_gt},
                            {"num_pred", c.num_pred},
                            {"ap50", c.ap50},
                            {"ap50_95", c.ap50_95},
                            {"ap", c.ap}});
  }
  return j;
}

inline std::string format_eval_table(const EvalReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %8s %8s %12s %12s\n", "class", "gt", "preds", "AP50", "AP50-95");
  out += buf;
  for (const auto& c : r.classes) {
    std::snprintf(buf, sizeof buf, "%-8d %8zu %8zu %12.6f %12.6f\n", c.class_id, c.num_gt, c.num_pred, c.ap50,
                  c.ap50_95);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mAP50      %.6f\nmAP50-95   %.6f\nprecision  %.6f\nrecall     %.6f\n", r.map50,
                r.map50_95, r.precision, r.recall);
  out += buf;
  std::snprintf(buf, sizeof buf, "(conf >= %.2f: TP %zu  FP %zu  FN %zu)\n", r.conf_threshold, r.tp, r.fp, r.fn);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Anchor boxes: k-means over (w, h) with distance 1 - IoU of co-centered boxes.

struct BoxSize {
  double w = 0, h = 0;
  friend bool operator==(const BoxSize&, const BoxSize&) = default;
  friend auto operator<=>(const BoxSize&, const BoxSize&) = default;
};

inline double centered_iou(const BoxSize& a, const BoxSize& b) {
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  return inter / (a.w * a.h + b.w * b.h - inter);
}

struct AnchorResult {
  std::vector<BoxSize> anchors;       // sorted by area
  std::vector<std::size_t> assignment;  // per input box, index into anchors before sorting
  std::size_t iterations = 0;
  std::vector<double> total_distance;  // after each assignment step
};

inline AnchorResult anchor_kmeans(const std::vector<BoxSize>& boxes, std::size_t k, std::size_t max_iters = 100) {
  if (k == 0) throw DegenerateInput("anchor_kmeans: k must be >= 1");
  auto by_area = [](const BoxSize& a, const BoxSize& b) {
    const double aa = a.w * a.h, bb = b.w * b.h;
    return aa != bb ? aa < bb : a < b;
  };
  std::vector<BoxSize> distinct = boxes;
  std::sort(distinct.begin(), distinct.end(), by_area);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k > distinct.size()) {
    throw DegenerateInput("anchor_kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(distinct.size()) +
                          " distinct boxes");
  }

  // Quantile initialization over the distinct boxes ordered by area.
  AnchorResult r;
  std::vector<BoxSize> centroids(k);
  for (std::size_t i = 0; i < k; ++i) centroids[i] = distinct[(2 * i + 1) * distinct.size() / (2 * k)];

  std::vector<std::size_t> assign(boxes.size(), k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double total = 0;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      std::size_t best = 0;
      double best_d = 2.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = 1.0 - centered_iou(boxes[b], centroids[c]);
        if (d < best_d) best_d = d, best = c;
      }
      total += best_d;
      if (assign[b] != best) assign[b] = best, changed = true;
    }
    r.total_distance.push_back(total);
    r.iterations = iter + 1;
    if (!changed) break;
    std::vector<BoxSize> sum(k);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      sum[assign[b]].w += boxes[b].w;
      sum[assign[b]].h += boxes[b].h;
      ++count[assign[b]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c]) centroids[c] = {sum[c].w / count[c], sum[c].h / count[c]};
    }
  }
  r.assignment = assign;
  r.anchors = centroids;
  std::sort(r.anchors.begin(), r.anchors.end(), by_area);
  return r;
}

}  // namespace roadinspect
