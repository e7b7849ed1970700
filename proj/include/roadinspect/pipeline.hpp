#pragma once

// Frames + detections -> crops -> labeled dataset -> classifier ->
// geolocated anomaly records -> summary.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadinspect/classifier.hpp"
#include "roadinspect/csv.hpp"
#include "roadinspect/detections.hpp"
#include "roadinspect/error.hpp"
#include "roadinspect/imaging.hpp"

namespace roadinspect {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Frame manifest: "frame,timestamp_ms", frame paths relative to the manifest.

struct FrameEntry {
  std::string frame;  // as written in the manifest
  fs::path path;      // resolved
  std::int64_t timestamp_ms = 0;
};

inline std::vector<FrameEntry> load_frame_manifest(const fs::path& manifest) {
  const auto table = csv::load(manifest, {"frame", "timestamp_ms"});
  std::vector<FrameEntry> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    FrameEntry e;
    e.frame = row[0];
    e.path = manifest.parent_path() / row[0];
    e.timestamp_ms = csv::to_int(row[1], manifest.string(), table.line_numbers[i], "timestamp_ms");
    if (e.frame.empty()) throw ParseError(manifest.string(), table.line_numbers[i], "empty frame name");
    if (!fs::is_regular_file(e.path)) throw IoError("frame file not found: " + e.path.string());
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Crops

/// 64-bit FNV-1a as 16 lowercase hex digits.
inline std::string stable_hash_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::string make_crop_id(const std::string& frame, const PixelRect& r, int class_id) {
  return stable_hash_hex(frame + "|" + std::to_string(r.x0) + "," + std::to_string(r.y0) + "," + std::to_string(r.x1) +
                         "," + std::to_string(r.y1) + "|" + std::to_string(class_id));
}

/// Normalized center box -> pixel rect, each side pushed out by
/// margin_frac * side length, rounded to the nearest pixel and clipped.
inline PixelRect box_to_rect(const PredBox& b, std::size_t width, std::size_t height, double margin_frac) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double pad_x = margin_frac * b.w * W, pad_y = margin_frac * b.h * H;
  PixelRect r{std::lround((b.cx - b.w / 2) * W - pad_x), std::lround((b.cy - b.h / 2) * H - pad_y),
              std::lround((b.cx + b.w / 2) * W + pad_x), std::lround((b.cy + b.h / 2) * H + pad_y)};
  return r.clipped(width, height);
}

struct CropRecord {
  std::string crop_id;
  std::string frame;
  std::int64_t timestamp_ms = 0;
  PredBox box;  // detector output the crop came from
  PixelRect rect;
  friend bool operator==(const CropRecord&, const CropRecord&) = default;
};

inline const csv::Row& crop_manifest_header() {
  static const csv::Row h = {"crop_id", "frame", "timestamp_ms", "class_id", "conf", "cx", "cy",
                             "w",       "h",     "x0",           "y0",       "x1",   "y1"};
  return h;
}

inline std::string format_crop_manifest(const std::vector<CropRecord>& crops) {
  std::string out;
  for (std::size_t i = 0; i < crop_manifest_header().size(); ++i) out += (i ? "," : "") + crop_manifest_header()[i];
  out += "\n";
  char buf[512];
  for (const auto& c : crops) {
    std::snprintf(buf, sizeof buf, "%s,%s,%" PRId64 ",%d,%.6f,%.6f,%.6f,%.6f,%.6f,%ld,%ld,%ld,%ld\n", c.crop_id.c_str(),
                  c.frame.c_str(), c.timestamp_ms, c.box.class_id, c.box.conf, c.box.cx, c.box.cy, c.box.w, c.box.h,
                  c.rect.x0, c.rect.y0, c.rect.x1, c.rect.y1);
    out += buf;
  }
  return out;
}

inline std::vector<CropRecord> load_crop_manifest(const fs::path& path) {
  const auto t = csv::load(path, crop_manifest_header());
  const std::string file = path.string();
  std::vector<CropRecord> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t ln = t.line_numbers[i];
    CropRecord c;
    c.crop_id = r[0];
    if (!ids.insert(c.crop_id).second) throw ParseError(file, ln, "duplicate crop id " + c.crop_id);
    c.frame = r[1];
    c.timestamp_ms = csv::to_int(r[2], file, ln, "timestamp_ms");
    c.box.class_id = static_cast<int>(csv::to_int(r[3], file, ln, "class_id"));
    c.box.conf = csv::to_double(r[4], file, ln, "conf");
    c.box.cx = csv::to_double(r[5], file, ln, "cx");
    c.box.cy = csv::to_double(r[6], file, ln, "cy");
    c.box.w = csv::to_double(r[7], file, ln, "w");
    c.box.h = csv::to_double(r[8], file, ln, "h");
    c.rect = {static_cast<long>(csv::to_int(r[9], file, ln, "x0")), static_cast<long>(csv::to_int(r[10], file, ln, "y0")),
              static_cast<long>(csv::to_int(r[11], file, ln, "x1")), static_cast<long>(csv::to_int(r[12], file, ln, "y1"))};
    out.push_back(std::move(c));
  }
  return out;
}

inline fs::path crop_image_path(const fs::path& crop_dir, const std::string& crop_id) {
  return crop_dir / (crop_id + ".ppm");
}

struct CropOptions {
  double conf_thr = 0.25;
  double margin_frac = 0.10;
  std::optional<int> only_class;  // restrict to one detector class
};

struct CropRun {
  std::vector<CropRecord> crops;
  std::size_t skipped_empty = 0;      // rect vanished after clipping
  std::size_t skipped_duplicate = 0;  // same frame, rect and class seen earlier
  std::size_t below_threshold = 0;
};

/// Crops every qualifying detection of every frame. When out_dir is non-empty
/// each crop is written as <out_dir>/<crop_id>.ppm along with crops.csv.
/// Predictions come from <pred_dir>/<frame stem>.txt (missing file: none).
inline CropRun extract_crops(const std::vector<FrameEntry>& frames, const fs::path& pred_dir, const fs::path& out_dir,
                             const CropOptions& opt = {}) {
  if (opt.margin_frac < 0) throw Error("crop margin must be >= 0");
  CropRun run;
  std::set<std::string> seen;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (const auto& f : frames) {
    const fs::path pred_file = pred_dir / (fs::path(f.frame).stem().string() + ".txt");
    if (!fs::exists(pred_file)) continue;
    const auto preds = load_pred_file(pred_file);
    std::optional<ImageRGB8> img;
    for (const auto& p : preds) {
      if (opt.only_class && p.class_id != *opt.only_class) continue;
      if (p.conf < opt.conf_thr) {
        ++run.below_threshold;
        continue;
      }
      if (!img) img = load_ppm(f.path);
      const PixelRect rect = box_to_rect(p, img->width(), img->height(), opt.margin_frac);
      if (rect.empty()) {
        ++run.skipped_empty;
        continue;
      }
      CropRecord rec{make_crop_id(f.frame, rect, p.class_id), f.frame, f.timestamp_ms, p, rect};
      if (!seen.insert(rec.crop_id).second) {
        ++run.skipped_duplicate;
        continue;
      }
      if (!out_dir.empty()) save_ppm(crop_image_path(out_dir, rec.crop_id), crop(*img, rect));
      run.crops.push_back(std::move(rec));
    }
  }
  if (!out_dir.empty()) {
    std::ofstream out(out_dir / "crops.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / "crops.csv").string());
    out << format_crop_manifest(run.crops);
  }
  return run;
}

// ---------------------------------------------------------------------------
// GPS track: "timestamp_ms,lat,lon"

struct GpsFix {
  std::int64_t timestamp_ms = 0;
  double lat = 0, lon = 0;
};

struct GeoPoint {
  double lat = 0, lon = 0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Fixes sorted by strictly increasing timestamp.
class GpsTrack {
 public:
  GpsTrack() = default;
  explicit GpsTrack(std::vector<GpsFix> fixes) : fixes_(std::move(fixes)) {
    std::stable_sort(fixes_.begin(), fixes_.end(),
                     [](const GpsFix& a, const GpsFix& b) { return a.timestamp_ms < b.timestamp_ms; });
    for (std::size_t i = 0; i < fixes_.size(); ++i) {
      const auto& f = fixes_[i];
      if (f.lat < -90 || f.lat > 90 || f.lon < -180 || f.lon > 180) throw Error("GPS fix outside lat/lon range");
      if (i && fixes_[i - 1].timestamp_ms == f.timestamp_ms) {
        throw Error("GPS track has duplicate timestamp " + std::to_string(f.timestamp_ms));
      }
    }
  }

  const std::vector<GpsFix>& fixes() const noexcept { return fixes_; }
  bool empty() const noexcept { return fixes_.empty(); }

 private:
  std::vector<GpsFix> fixes_;
};

inline GpsTrack load_gps_csv(const fs::path& path) {
  const auto t = csv::load(path, {"timestamp_ms", "lat", "lon"});
  const std::string file = path.string();
  std::vector<GpsFix> fixes;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto ln = t.line_numbers[i];
    GpsFix f{csv::to_int(r[0], file, ln, "timestamp_ms"), csv::to_double(r[1], file, ln, "lat"),
             csv::to_double(r[2], file, ln, "lon")};
    if (f.lat < -90 || f.lat > 90 || f.lon < -180 || f.lon > 180) throw ParseError(file, ln, "lat/lon out of range");
    fixes.push_back(f);
  }
  try {
    return GpsTrack(std::move(fixes));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(file, 0, e.what());
  }
}

/// Linear interpolation inside the track; within tolerance_ms beyond either
/// end the nearest endpoint is used; otherwise no position.
inline std::optional<GeoPoint> geo_interpolate(const GpsTrack& track, std::int64_t t, std::int64_t tolerance_ms = 5000) {
  const auto& fx = track.fixes();
  if (fx.empty()) return std::nullopt;
  if (t < fx.front().timestamp_ms) {
    if (fx.front().timestamp_ms - t <= tolerance_ms) return GeoPoint{fx.front().lat, fx.front().lon};
    return std::nullopt;
  }
  if (t > fx.back().timestamp_ms) {
    if (t - fx.back().timestamp_ms <= tolerance_ms) return GeoPoint{fx.back().lat, fx.back().lon};
    return std::nullopt;
  }
  const auto hi = std::lower_bound(fx.begin(), fx.end(), t,
                                   [](const GpsFix& f, std::int64_t v) { return f.timestamp_ms < v; });
  if (hi->timestamp_ms == t) return GeoPoint{hi->lat, hi->lon};
  const auto lo = hi - 1;
  const double u = static_cast<double>(t - lo->timestamp_ms) / static_cast<double>(hi->timestamp_ms - lo->timestamp_ms);
  return GeoPoint{lo->lat + u * (hi->lat - lo->lat), lo->lon + u * (hi->lon - lo->lon)};
}

// ---------------------------------------------------------------------------
// Labels: "crop_id,label,annotator,labeled_at_ms", append-only, last row wins.
// "unlabeled" clears an earlier decision.

enum class CropLabel { Damaged, Undamaged, Skip, Unlabeled };

inline std::optional<CropLabel> parse_crop_label(std::string_view s) {
  if (s == "damaged") return CropLabel::Damaged;
  if (s == "undamaged") return CropLabel::Undamaged;
  if (s == "skip") return CropLabel::Skip;
  if (s == "unlabeled") return CropLabel::Unlabeled;
  return std::nullopt;
}

inline const char* to_string(CropLabel l) {
  switch (l) {
    case CropLabel::Damaged: return "damaged";
    case CropLabel::Undamaged: return "undamaged";
    case CropLabel::Skip: return "skip";
    case CropLabel::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

struct LabelRow {
  std::string crop_id;
  CropLabel label = CropLabel::Unlabeled;
  std::string annotator;
  std::int64_t labeled_at_ms = 0;
};

inline const csv::Row& labels_header() {
  static const csv::Row h = {"crop_id", "label", "annotator", "labeled_at_ms"};
  return h;
}

inline std::vector<LabelRow> parse_labels_csv(std::string_view text, const std::string& file = {}) {
  const auto t = csv::parse(text, labels_header(), file);
  std::vector<LabelRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto label = parse_crop_label(r[1]);
    if (!label) throw ParseError(file, t.line_numbers[i], "unknown label '" + r[1] + "'");
    out.push_back({r[0], *label, r[2], csv::to_int(r[3], file, t.line_numbers[i], "labeled_at_ms")});
  }
  return out;
}

inline std::vector<LabelRow> load_labels_csv(const fs::path& path) {
  return parse_labels_csv(read_text_file(path), path.string());
}

inline std::string format_label_row(const LabelRow& r) {
  csv::check_field(r.crop_id, "crop id");
  csv::check_field(r.annotator, "annotator");
  return r.crop_id + "," + to_string(r.label) + "," + r.annotator + "," + std::to_string(r.labeled_at_ms) + "\n";
}

struct BalanceReport {
  std::size_t rows = 0;
  std::size_t assigned = 0;  // rows naming a known crop with damaged/undamaged
  std::size_t skipped = 0;   // rows naming a known crop with skip/unlabeled
  std::size_t unknown = 0;   // rows naming a crop id absent from the manifest
  std::vector<std::string> unknown_ids;
  std::size_t damaged = 0;    // final per-crop state
  std::size_t undamaged = 0;
  std::optional<double> imbalance_ratio;  // majority / minority; absent if a class is empty
  std::vector<std::string> warnings;
};

struct LabeledDataset {
  LabeledCropSet set;
  std::vector<std::string> crop_ids;  // parallel to set.items
  BalanceReport report;
};

/// Joins label rows onto the crop manifest (last write wins per crop).
/// Items follow crop manifest order.
inline LabeledDataset build_labeled_dataset(const std::vector<CropRecord>& crops, const fs::path& crop_dir,
                                            const std::vector<LabelRow>& rows) {
  LabeledDataset ds;
  auto& rep = ds.report;
  std::map<std::string, CropLabel> final_label;
  std::set<std::string> known;
  for (const auto& c : crops) known.insert(c.crop_id);
  for (const auto& r : rows) {
    ++rep.rows;
    if (!known.count(r.crop_id)) {
      ++rep.unknown;
      rep.unknown_ids.push_back(r.crop_id);
      continue;
    }
    if (r.label == CropLabel::Damaged || r.label == CropLabel::Undamaged) ++rep.assigned;
    else ++rep.skipped;
    final_label[r.crop_id] = r.label;
  }
  for (const auto& c : crops) {
    auto it = final_label.find(c.crop_id);
    if (it == final_label.end()) continue;
    if (it->second != CropLabel::Damaged && it->second != CropLabel::Undamaged) continue;
    const int y = it->second == CropLabel::Damaged ? 1 : 0;
    (y ? rep.damaged : rep.undamaged)++;
    ds.set.items.push_back({crop_image_path(crop_dir, c.crop_id), y});
    ds.crop_ids.push_back(c.crop_id);
  }
  if (rep.damaged && rep.undamaged) {
    rep.imbalance_ratio = static_cast<double>(std::max(rep.damaged, rep.undamaged)) /
                          static_cast<double>(std::min(rep.damaged, rep.undamaged));
  }
  if (ds.set.items.empty()) rep.warnings.push_back("no labeled crops");
  else if (!rep.imbalance_ratio) rep.warnings.push_back("only one class is labeled");
  if (rep.unknown) rep.warnings.push_back(std::to_string(rep.unknown) + " label rows reference unknown crop ids");
  return ds;
}

// ---------------------------------------------------------------------------
// Anomaly records

enum class AnomalyKind { RoadDamage, DamagedSign };

inline const char* to_string(AnomalyKind k) { return k == AnomalyKind::RoadDamage ? "road_damage" : "damaged_sign"; }

inline std::optional<AnomalyKind> parse_anomaly_kind(std::string_view s) {
  if (s == "road_damage") return AnomalyKind::RoadDamage;
  if (s == "damaged_sign") return AnomalyKind::DamagedSign;
  return std::nullopt;
}

struct AnomalyRecord {
  std::string id;
  AnomalyKind kind = AnomalyKind::RoadDamage;
  int class_id = 0;
  double confidence = 0;  // detector confidence or classifier probability
  std::string frame;
  double cx = 0, cy = 0, w = 0, h = 0;
  std::optional<GeoPoint> geo;
  std::int64_t timestamp_ms = 0;
  friend bool operator==(const AnomalyRecord&, const AnomalyRecord&) = default;
};

struct DamageDetection {
  std::string frame;
  std::int64_t timestamp_ms = 0;
  PredBox box;
};

struct SignPrediction {
  std::string crop_id;
  std::string frame;
  std::int64_t timestamp_ms = 0;
  PredBox box;
  double probability = 0;  // classifier damaged probability
};

struct AnomalyThresholds {
  double detector_conf = 0.25;
  double classifier = 0.5;
  std::int64_t gps_tolerance_ms = 5000;
};

inline std::string road_damage_id(const DamageDetection& d) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "|%d|%.6f,%.6f,%.6f,%.6f", d.box.class_id, d.box.cx, d.box.cy, d.box.w, d.box.h);
  return stable_hash_hex(d.frame + buf);
}

/// Road damage at or above the detector threshold and signs at or above the
/// classifier threshold, geotagged, ordered by (timestamp, id).
inline std::vector<AnomalyRecord> emit_anomalies(const std::vector<DamageDetection>& damage,
                                                 const std::vector<SignPrediction>& signs, const GpsTrack* track,
                                                 const AnomalyThresholds& thr = {}) {
  if (!(thr.classifier > 0 && thr.classifier < 1)) throw Error("classifier threshold must be in (0,1)");
  std::vector<AnomalyRecord> out;
  auto geo = [&](std::int64_t t) -> std::optional<GeoPoint> {
    if (!track || track->empty()) return std::nullopt;
    return geo_interpolate(*track, t, thr.gps_tolerance_ms);
  };
  for (const auto& d : damage) {
    if (d.box.conf < thr.detector_conf) continue;
    out.push_back({road_damage_id(d), AnomalyKind::RoadDamage, d.box.class_id, d.box.conf, d.frame, d.box.cx, d.box.cy,
                   d.box.w, d.box.h, geo(d.timestamp_ms), d.timestamp_ms});
  }
  for (const auto& s : signs) {
    if (s.probability < thr.classifier) continue;
    out.push_back({s.crop_id, AnomalyKind::DamagedSign, s.box.class_id, std::clamp(s.probability, 0.0, 1.0), s.frame,
                   s.box.cx, s.box.cy, s.box.w, s.box.h, geo(s.timestamp_ms), s.timestamp_ms});
  }
  std::sort(out.begin(), out.end(), [](const AnomalyRecord& a, const AnomalyRecord& b) {
    return a.timestamp_ms != b.timestamp_ms ? a.timestamp_ms < b.timestamp_ms : a.id < b.id;
  });
  return out;
}

/// One JSON object per line, fixed key order, reals with 6 decimals,
/// lat/lon null when the record has no position.
inline std::string format_anomaly_line(const AnomalyRecord& r) {
  char buf[512];
  std::string geo;
  if (r.geo) {
    std::snprintf(buf, sizeof buf, "\"lat\":%.6f,\"lon\":%.6f", r.geo->lat, r.geo->lon);
    geo = buf;
  } else {
    geo = "\"lat\":null,\"lon\":null";
  }
  std::snprintf(buf, sizeof buf,
                "{\"id\":%s,\"kind\":\"%s\",\"class_id\":%d,\"confidence\":%.6f,\"frame\":%s,"
                "\"cx\":%.6f,\"cy\":%.6f,\"w\":%.6f,\"h\":%.6f,%s,\"timestamp_ms\":%" PRId64 "}\n",
                nlohmann::json(r.id).dump().c_str(), to_string(r.kind), r.class_id, r.confidence,
                nlohmann::json(r.frame).dump().c_str(), r.cx, r.cy, r.w, r.h, geo.c_str(), r.timestamp_ms);
  return buf;
}

inline std::string format_anomalies(const std::vector<AnomalyRecord>& records) {
  std::string out;
  for (const auto& r : records) out += format_anomaly_line(r);
  return out;
}

inline void write_anomalies(const std::vector<AnomalyRecord>& records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_anomalies(records);
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<AnomalyRecord> parse_anomalies(std::string_view text, const std::string& file = {}) {
  std::vector<AnomalyRecord> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t n) {
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    try {
      const auto j = nlohmann::json::parse(line);
      AnomalyRecord r;
      r.id = j.at("id").get<std::string>();
      const auto kind = parse_anomaly_kind(j.at("kind").get<std::string>());
      if (!kind) throw ParseError(file, n, "unknown anomaly kind");
      r.kind = *kind;
      r.class_id = j.at("class_id").get<int>();
      r.confidence = j.at("confidence").get<double>();
      r.frame = j.at("frame").get<std::string>();
      r.cx = j.at("cx").get<double>();
      r.cy = j.at("cy").get<double>();
      r.w = j.at("w").get<double>();
      r.h = j.at("h").get<double>();
      if (!j.at("lat").is_null() && !j.at("lon").is_null()) {
        r.geo = GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
      }
      r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
      if (r.confidence < 0 || r.confidence > 1) throw ParseError(file, n, "confidence outside [0,1]");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file, n, std::string("malformed anomaly record: ") + e.what());
    }
  });
  return out;
}

inline std::vector<AnomalyRecord> load_anomalies(const fs::path& path) {
  return parse_anomalies(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Summary

struct AnomalySummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_kind;                    // every kind listed, zero if absent
  std::map<std::string, std::map<int, std::size_t>> by_class;    // kind -> class -> count
  std::size_t geotagged = 0;
  double geotagged_fraction = 0;
  std::optional<std::int64_t> first_ms, last_ms;
};

inline AnomalySummary summarize(const std::vector<AnomalyRecord>& records) {
  AnomalySummary s;
  s.by_kind = {{"road_damage", 0}, {"damaged_sign", 0}};
  for (const auto& r : records) {
    ++s.total;
    ++s.by_kind[to_string(r.kind)];
    ++s.by_class[to_string(r.kind)][r.class_id];
    if (r.geo) ++s.geotagged;
    if (!s.first_ms || r.timestamp_ms < *s.first_ms) s.first_ms = r.timestamp_ms;
    if (!s.last_ms || r.timestamp_ms > *s.last_ms) s.last_ms = r.timestamp_ms;
  }
  s.geotagged_fraction = s.total ? static_cast<double>(s.geotagged) / static_cast<double>(s.total) : 0.0;
  return s;
}

inline nlohmann::json to_json(const AnomalySummary& s) {
  nlohmann::json j;
  j["total"] = s.total;
  j["by_kind"] = s.by_kind;
  nlohmann::json by_class = nlohmann::json::object();
  for (const auto& [kind, classes] : s.by_class) {
    for (const auto& [cls, n] : classes) by_class[kind][std::to_string(cls)] = n;
  }
  j["by_class"] = by_class;
  j["geotagged"] = s.geotagged;
  j["geotagged_fraction"] = s.geotagged_fraction;
  j["first_timestamp_ms"] = s.first_ms ? nlohmann::json(*s.first_ms) : nlohmann::json();
  j["last_timestamp_ms"] = s.last_ms ? nlohmann::json(*s.last_ms) : nlohmann::json();
  return j;
}

inline std::string format_summary_table(const AnomalySummary& s) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %6s %8s\n", "kind", "class", "count");
  out += buf;
  for (const auto& [kind, classes] : s.by_class) {
    for (const auto& [cls, n] : classes) {
      std::snprintf(buf, sizeof buf, "%-14s %6d %8zu\n", kind.c_str(), cls, n);
      out += buf;
    }
  }
  std::snprintf(buf, sizeof buf, "total %zu (road_damage %zu, damaged_sign %zu)\ngeotagged %zu/%zu (%.6f)\n", s.total,
                s.by_kind.at("road_damage"), s.by_kind.at("damaged_sign"), s.geotagged, s.total, s.geotagged_fraction);
  out += buf;
  if (s.first_ms) {
    std::snprintf(buf, sizeof buf, "time range %" PRId64 " .. %" PRId64 " ms\n", *s.first_ms, *s.last_ms);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full anomaly pass over detector output

struct AnomalyRunOptions {
  int sign_class = 0;  // detector class routed to the classifier; all others are road damage
  double margin_frac = 0.10;
  AnomalyThresholds thresholds;
};

/// Signs are cropped and classified; other detections become road damage.
inline std::vector<AnomalyRecord> run_anomalies(const std::vector<FrameEntry>& frames, const fs::path& pred_dir,
                                                const ModelCheckpoint& model, const GpsTrack* track,
                                                const AnomalyRunOptions& opt = {}) {
  std::vector<DamageDetection> damage;
  std::vector<SignPrediction> signs;
  for (const auto& f : frames) {
    const fs::path pred_file = pred_dir / (fs::path(f.frame).stem().string() + ".txt");
    if (!fs::exists(pred_file)) continue;
    std::optional<ImageRGB8> img;
    for (const auto& p : load_pred_file(pred_file)) {
      if (p.conf < opt.thresholds.detector_conf) continue;
      if (p.class_id != opt.sign_class) {
        damage.push_back({f.frame, f.timestamp_ms, p});
        continue;
      }
      if (!img) img = load_ppm(f.path);
      const PixelRect rect = box_to_rect(p, img->width(), img->height(), opt.margin_frac);
      if (rect.empty()) continue;
      const double prob = predict(model, crop(*img, rect));
      signs.push_back({make_crop_id(f.frame, rect, p.class_id), f.frame, f.timestamp_ms, p, prob});
    }
  }
  return emit_anomalies(damage, signs, track, opt.thresholds);
}

}  // namespace roadinspect
