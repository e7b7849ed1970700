#pragma once

// HTTP facade over the crop label store and anomaly records.
//
//   GET  /api/crops?status=unlabeled|all&limit=N
//   GET  /api/crops/{id}/image                     image/png
//   POST /api/crops/{id}/label  {"label": "...", "annotator": "..."}
//   GET  /api/anomalies?kind=&min_conf=&bbox=lat_min,lon_min,lat_max,lon_max
//   GET  /api/stats
//
// The data root holds crops.csv and <crop_id>.ppm (as written by the crop
// stage), labels.csv and optionally anomalies.jsonl.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "roadinspect/imaging.hpp"
#include "roadinspect/pipeline.hpp"

namespace roadinspect::service {

struct LabelCounts {
  std::size_t labeled = 0;  // crops with any decision, skip included
  std::size_t damaged = 0;
  std::size_t undamaged = 0;
  std::size_t skipped = 0;
};

/// Append-only labels CSV plus an index of the latest label per crop. The file
/// is the source of truth; readers get immutable snapshots and every append
/// is written and fsync'd before the snapshot is replaced.
class LabelStore {
 public:
  struct Snapshot {
    std::map<std::string, LabelRow> latest;
    LabelCounts counts;
  };

  LabelStore(std::vector<CropRecord> crops, fs::path labels_path)
      : crops_(std::move(crops)), path_(std::move(labels_path)) {
    for (const auto& c : crops_) known_.emplace(c.crop_id, &c - crops_.data());
    std::vector<LabelRow> rows;
    if (fs::exists(path_)) {
      rows = load_labels_csv(path_);
    } else {
      std::string header;
      for (std::size_t i = 0; i < labels_header().size(); ++i) header += (i ? "," : "") + labels_header()[i];
      append_durably(header + "\n");
    }
    auto snap = std::make_shared<Snapshot>();
    for (auto& r : rows) {
      if (known_.count(r.crop_id)) apply(*snap, std::move(r));
    }
    snapshot_ = std::move(snap);
  }

  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  const std::vector<CropRecord>& crops() const noexcept { return crops_; }
  const CropRecord* find(const std::string& id) const {
    auto it = known_.find(id);
    return it == known_.end() ? nullptr : &crops_[it->second];
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

  /// Appends one row; returns it once it is durable. Throws Error for an
  /// unknown crop id.
  LabelRow append(const std::string& crop_id, CropLabel label, const std::string& annotator,
                  std::int64_t labeled_at_ms) {
    if (!find(crop_id)) throw Error("unknown crop id " + crop_id);
    LabelRow row{crop_id, label, annotator, labeled_at_ms};
    const std::string line = format_label_row(row);
    std::lock_guard writer(write_mutex_);
    append_durably(line);
    auto next = std::make_shared<Snapshot>(*snapshot());
    apply(*next, row);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
    return row;
  }

 private:
  static void adjust(LabelCounts& c, CropLabel l, int delta) {
    auto bump = [delta](std::size_t& v) { v = static_cast<std::size_t>(static_cast<long long>(v) + delta); };
    switch (l) {
      case CropLabel::Damaged: bump(c.damaged); bump(c.labeled); break;
      case CropLabel::Undamaged: bump(c.undamaged); bump(c.labeled); break;
      case CropLabel::Skip: bump(c.skipped); bump(c.labeled); break;
      case CropLabel::Unlabeled: break;
    }
  }

  static void apply(Snapshot& s, LabelRow row) {
    auto it = s.latest.find(row.crop_id);
    if (it != s.latest.end()) adjust(s.counts, it->second.label, -1);
    adjust(s.counts, row.label, +1);
    s.latest[row.crop_id] = std::move(row);
  }

  void append_durably(const std::string& text) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open " + path_.string() + " for append");
    std::size_t done = 0;
    while (done < text.size()) {
      const ssize_t n = ::write(fd, text.data() + done, text.size() - done);
      if (n < 0) {
        ::close(fd);
        throw IoError("write failed for " + path_.string());
      }
      done += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) throw IoError("fsync failed for " + path_.string());
  }

  std::vector<CropRecord> crops_;
  std::map<std::string, std::size_t> known_;
  fs::path path_;
  std::mutex write_mutex_;
  mutable std::mutex snapshot_mutex_;  // guards the pointer swap only
  std::shared_ptr<const Snapshot> snapshot_;
};

struct AnomalyFilter {
  std::optional<AnomalyKind> kind;
  double min_conf = 0.0;
  std::optional<std::array<double, 4>> bbox;  // lat_min, lon_min, lat_max, lon_max
};

/// Conjunctive filter; records without a position never pass a bbox filter.
inline std::vector<AnomalyRecord> filter_anomalies(const std::vector<AnomalyRecord>& all, const AnomalyFilter& f) {
  std::vector<AnomalyRecord> out;
  for (const auto& r : all) {
    if (f.kind && r.kind != *f.kind) continue;
    if (r.confidence < f.min_conf) continue;
    if (f.bbox) {
      const auto& b = *f.bbox;
      if (!r.geo || r.geo->lat < b[0] || r.geo->lon < b[1] || r.geo->lat > b[2] || r.geo->lon > b[3]) continue;
    }
    out.push_back(r);
  }
  return out;
}

struct ServiceOptions {
  fs::path root;
  std::function<std::int64_t()> clock = [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
};

class ReviewService {
 public:
  explicit ReviewService(ServiceOptions opt)
      : opt_(std::move(opt)),
        store_(load_crop_manifest(opt_.root / "crops.csv"), opt_.root / "labels.csv") {
    const fs::path anomalies = opt_.root / "anomalies.jsonl";
    if (fs::exists(anomalies)) anomalies_ = load_anomalies(anomalies);
    routes();
  }

  httplib::Server& http() noexcept { return server_; }
  LabelStore& store() noexcept { return store_; }

  nlohmann::json stats_json() const {
    const auto snap = store_.snapshot();
    const auto summary = summarize(anomalies_);
    return {{"total_crops", store_.crops().size()},
            {"labeled", snap->counts.labeled},
            {"damaged", snap->counts.damaged},
            {"undamaged", snap->counts.undamaged},
            {"skipped", snap->counts.skipped},
            {"unlabeled", store_.crops().size() - snap->counts.labeled + snap->counts.skipped},
            {"anomalies",
             {{"total", summary.total},
              {"road_damage", summary.by_kind.at("road_damage")},
              {"damaged_sign", summary.by_kind.at("damaged_sign")}}}};
  }

 private:
  static void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, {{"error", message}}, status);
  }

  static bool parse_number(const std::string& s, double& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
  }

  void routes() {
    server_.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) { send_json(res, stats_json()); });

    server_.Get("/api/crops", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string status = req.has_param("status") ? req.get_param_value("status") : "unlabeled";
      if (status != "unlabeled" && status != "all") return send_error(res, 400, "status must be unlabeled or all");
      std::size_t limit = 50;
      if (req.has_param("limit")) {
        const std::string s = req.get_param_value("limit");
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), limit);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || limit == 0) {
          return send_error(res, 400, "limit must be a positive integer");
        }
      }
      const auto snap = store_.snapshot();
      std::vector<const CropRecord*> rows;
      for (const auto& c : store_.crops()) {
        auto it = snap->latest.find(c.crop_id);
        const CropLabel label = it == snap->latest.end() ? CropLabel::Unlabeled : it->second.label;
        if (status == "all" || label == CropLabel::Unlabeled || label == CropLabel::Skip) rows.push_back(&c);
      }
      std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->crop_id < b->crop_id; });
      if (rows.size() > limit) rows.resize(limit);
      nlohmann::json list = nlohmann::json::array();
      for (const auto* c : rows) {
        auto it = snap->latest.find(c->crop_id);
        list.push_back({{"crop_id", c->crop_id},
                        {"class_id", c->box.class_id},
                        {"conf", c->box.conf},
                        {"frame", c->frame},
                        {"timestamp_ms", c->timestamp_ms},
                        {"label", it == snap->latest.end() ? "unlabeled" : to_string(it->second.label)},
                        {"image_url", "/api/crops/" + c->crop_id + "/image"}});
      }
      send_json(res, {{"crops", list}, {"count", list.size()}});
    });

    server_.Get(R"(/api/crops/([0-9A-Za-z_-]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!store_.find(id)) return send_error(res, 404, "unknown crop id");
      try {
        const Bytes png = encode_png_stored(load_ppm(crop_image_path(opt_.root, id)));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });

    server_.Post(R"(/api/crops/([0-9A-Za-z_-]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!store_.find(id)) return send_error(res, 404, "unknown crop id");
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return send_error(res, 400, "body must be a JSON object");
      }
      if (!body.is_object() || !body.contains("label") || !body["label"].is_string()) {
        return send_error(res, 400, "missing label");
      }
      const auto label = parse_crop_label(body["label"].get<std::string>());
      if (!label) return send_error(res, 400, "label must be damaged, undamaged, skip or unlabeled");
      std::string annotator;
      if (body.contains("annotator")) {
        if (!body["annotator"].is_string()) return send_error(res, 400, "annotator must be a string");
        annotator = body["annotator"].get<std::string>();
        if (annotator.find_first_of(",\n\r") != std::string::npos) {
          return send_error(res, 400, "annotator must not contain commas or newlines");
        }
      }
      try {
        const LabelRow row = store_.append(id, *label, annotator, opt_.clock());
        send_json(res, {{"crop_id", row.crop_id},
                        {"label", to_string(row.label)},
                        {"annotator", row.annotator},
                        {"labeled_at_ms", row.labeled_at_ms}});
      } catch (const IoError& e) {
        send_error(res, 500, e.what());
      }
    });

    server_.Get("/api/anomalies", [this](const httplib::Request& req, httplib::Response& res) {
      AnomalyFilter f;
      if (req.has_param("kind") && !req.get_param_value("kind").empty()) {
        f.kind = parse_anomaly_kind(req.get_param_value("kind"));
        if (!f.kind) return send_error(res, 400, "kind must be road_damage or damaged_sign");
      }
      if (req.has_param("min_conf") && !req.get_param_value("min_conf").empty()) {
        if (!parse_number(req.get_param_value("min_conf"), f.min_conf)) {
          return send_error(res, 400, "min_conf must be a number");
        }
      }
      if (req.has_param("bbox") && !req.get_param_value("bbox").empty()) {
        const auto parts = csv::split(req.get_param_value("bbox"));
        std::array<double, 4> b{};
        if (parts.size() != 4) return send_error(res, 400, "bbox must be lat_min,lon_min,lat_max,lon_max");
        for (std::size_t i = 0; i < 4; ++i) {
          if (!parse_number(parts[i], b[i])) return send_error(res, 400, "bbox values must be numbers");
        }
        if (b[0] > b[2] || b[1] > b[3]) return send_error(res, 400, "bbox minimum exceeds maximum");
        f.bbox = b;
      }
      nlohmann::json list = nlohmann::json::array();
      for (const auto& r : filter_anomalies(anomalies_, f)) list.push_back(nlohmann::json::parse(format_anomaly_line(r)));
      send_json(res, {{"anomalies", list}, {"count", list.size()}});
    });
  }

  ServiceOptions opt_;
  LabelStore store_;
  std::vector<AnomalyRecord> anomalies_;
  httplib::Server server_;
};

}  // namespace roadinspect::service
