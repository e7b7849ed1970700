#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "roadinspect/pipeline.hpp"
#include "roadinspect/rng.hpp"

using namespace roadinspect;
namespace fs = std::filesystem;

namespace {

const fs::path kMini = fs::path(ROADINSPECT_TEST_DATA) / "mini";

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("roadinspect_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

PredBox pred(int c, double cx, double cy, double w, double h, double conf) { return {c, cx, cy, w, h, conf}; }

GpsTrack mini_track() { return load_gps_csv(kMini / "gps.csv"); }

CropRecord crop_record(const std::string& id) {
  CropRecord r;
  r.crop_id = id;
  r.frame = "f.ppm";
  r.rect = {0, 0, 4, 4};
  return r;
}

}  // namespace

TEST(BoxToRect, Examples) {
  const auto b = pred(0, 0.5, 0.5, 0.25, 0.25, 0.9);
  EXPECT_EQ(box_to_rect(b, 640, 480, 0.0), (PixelRect{240, 180, 400, 300}));
  EXPECT_EQ(box_to_rect(b, 640, 480, 0.1), (PixelRect{224, 168, 416, 312}));
}

TEST(BoxToRect, ClipsToFrame) {
  EXPECT_EQ(box_to_rect(pred(0, 0.05, 0.95, 0.2, 0.2, 1), 100, 100, 0.1), (PixelRect{0, 83, 17, 100}));
  EXPECT_TRUE(box_to_rect(pred(0, 1.5, 0.5, 0.2, 0.2, 1), 100, 100, 0.0).empty());
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto b = pred(0, rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform(0.01, 1), rng.uniform(0.01, 1), 1);
    const std::size_t W = 1 + rng.below(300), H = 1 + rng.below(300);
    const auto r = box_to_rect(b, W, H, rng.uniform(0, 0.5));
    EXPECT_GE(r.x0, 0);
    EXPECT_GE(r.y0, 0);
    EXPECT_LE(r.x1, static_cast<long>(W));
    EXPECT_LE(r.y1, static_cast<long>(H));
  }
}

TEST(FrameManifest, LoadsAndResolves) {
  const auto frames = load_frame_manifest(kMini / "frames.csv");
  ASSERT_EQ(frames.size(), 10u);
  EXPECT_EQ(frames[0].frame, "frames/frame_00.ppm");
  EXPECT_EQ(frames[9].timestamp_ms, 9500);
  EXPECT_TRUE(fs::exists(frames[3].path));
}

TEST(FrameManifest, Errors) {
  const auto dir = temp_dir("manifest");
  fs::copy_file(kMini / "frames" / "frame_00.ppm", dir / "a.ppm");
  write_text(dir / "bad_header.csv", "file,timestamp_ms\na.ppm,0\n");
  EXPECT_THROW(load_frame_manifest(dir / "bad_header.csv"), ParseError);
  write_text(dir / "bad_ts.csv", "frame,timestamp_ms\na.ppm,soon\n");
  try {
    load_frame_manifest(dir / "bad_ts.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_text(dir / "missing.csv", "frame,timestamp_ms\nnope.ppm,0\n");
  EXPECT_THROW(load_frame_manifest(dir / "missing.csv"), IoError);
  write_text(dir / "unordered.csv", "frame,timestamp_ms\na.ppm,500\na.ppm,100\n");
  EXPECT_EQ(load_frame_manifest(dir / "unordered.csv").size(), 2u);
}

TEST(ExtractCrops, MiniCorpusMatchesGolden) {
  const auto out = temp_dir("crops");
  const auto frames = load_frame_manifest(kMini / "frames.csv");
  const auto run = extract_crops(frames, kMini / "preds", out);
  EXPECT_EQ(run.crops.size(), 5u);
  EXPECT_EQ(run.below_threshold, 1u);
  EXPECT_EQ(run.skipped_empty, 0u);
  EXPECT_EQ(read_text_file(out / "crops.csv"), read_text_file(kMini / "golden" / "crops.csv"));
  EXPECT_EQ(load_crop_manifest(out / "crops.csv"), run.crops);
  for (const auto& c : run.crops) {
    const auto frame = load_ppm(kMini / c.frame);
    EXPECT_GE(c.box.conf, 0.25);
    EXPECT_EQ(load_ppm(crop_image_path(out, c.crop_id)), crop(frame, c.rect));
    EXPECT_EQ(c.crop_id, make_crop_id(c.frame, c.rect, c.box.class_id));
  }
}

TEST(ExtractCrops, RerunGivesSameIds) {
  const auto frames = load_frame_manifest(kMini / "frames.csv");
  const auto a = extract_crops(frames, kMini / "preds", temp_dir("rerun_a"));
  const auto b = extract_crops(frames, kMini / "preds", {});
  ASSERT_EQ(a.crops.size(), b.crops.size());
  for (std::size_t i = 0; i < a.crops.size(); ++i) EXPECT_EQ(a.crops[i].crop_id, b.crops[i].crop_id);
}

TEST(ExtractCrops, ThresholdAndClassFilter) {
  const auto frames = load_frame_manifest(kMini / "frames.csv");
  CropOptions opt;
  opt.conf_thr = 0.8;
  EXPECT_EQ(extract_crops(frames, kMini / "preds", {}, opt).crops.size(), 3u);
  opt.conf_thr = 0.1;
  EXPECT_EQ(extract_crops(frames, kMini / "preds", {}, opt).crops.size(), 6u);
  opt.conf_thr = 0.25;
  opt.only_class = 1;
  const auto only = extract_crops(frames, kMini / "preds", {}, opt);
  ASSERT_EQ(only.crops.size(), 1u);
  EXPECT_EQ(only.crops[0].frame, "frames/frame_02.ppm");
  opt.only_class.reset();
  opt.margin_frac = -0.1;
  EXPECT_THROW(extract_crops(frames, kMini / "preds", {}, opt), Error);
}

TEST(ExtractCrops, DuplicatesAndEmptyRectsAreCounted) {
  const auto dir = temp_dir("dups");
  fs::create_directories(dir / "preds");
  fs::copy_file(kMini / "frames" / "frame_00.ppm", dir / "f.ppm");
  write_text(dir / "frames.csv", "frame,timestamp_ms\nf.ppm,0\n");
  write_text(dir / "preds" / "f.txt", "0 0.5 0.5 0.2 0.2 0.9\n0 0.5 0.5 0.2 0.2 0.8\n0 0.5 0.5 0.001 0.001 0.9\n");
  const auto run = extract_crops(load_frame_manifest(dir / "frames.csv"), dir / "preds", {});
  EXPECT_EQ(run.crops.size(), 1u);
  EXPECT_EQ(run.skipped_duplicate, 1u);
  EXPECT_EQ(run.skipped_empty, 1u);
}

TEST(CropManifest, RejectsBadRows) {
  const auto dir = temp_dir("cropcsv");
  write_text(dir / "a.csv", "crop_id,frame\nx,y\n");
  EXPECT_THROW(load_crop_manifest(dir / "a.csv"), ParseError);
  auto text = read_text_file(kMini / "golden" / "crops.csv");
  text += "a4ba7014884316ea,frames/frame_01.ppm,1000,0,0.5,0.3,0.3,0.2,0.2,1,1,5,5\n";
  write_text(dir / "dup.csv", text);
  EXPECT_THROW(load_crop_manifest(dir / "dup.csv"), ParseError);
}

TEST(Geo, Examples) {
  const GpsTrack track({{0, 40.0, 14.0}, {10000, 40.001, 14.001}});
  const auto mid = geo_interpolate(track, 5000);
  ASSERT_TRUE(mid);
  EXPECT_NEAR(mid->lat, 40.0005, 1e-12);
  EXPECT_NEAR(mid->lon, 14.0005, 1e-12);
  EXPECT_EQ(geo_interpolate(track, 10000), (GeoPoint{40.001, 14.001}));
  EXPECT_FALSE(geo_interpolate(track, 20000, 5000));
  EXPECT_EQ(geo_interpolate(track, 15000, 5000), (GeoPoint{40.001, 14.001}));
  EXPECT_EQ(geo_interpolate(track, -5000, 5000), (GeoPoint{40.0, 14.0}));
  EXPECT_FALSE(geo_interpolate(track, -5001, 5000));
  EXPECT_FALSE(geo_interpolate(GpsTrack{}, 0));
}

TEST(Geo, ExactAtKnotsAndMonotoneOnSegments) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GpsFix> fixes;
    std::int64_t t = static_cast<std::int64_t>(rng.below(1000));
    for (int i = 0; i < 6; ++i) {
      fixes.push_back({t, rng.uniform(-80, 80), rng.uniform(-170, 170)});
      t += 1 + static_cast<std::int64_t>(rng.below(3000));
    }
    const GpsTrack track(fixes);
    for (const auto& f : track.fixes()) EXPECT_EQ(geo_interpolate(track, f.timestamp_ms), (GeoPoint{f.lat, f.lon}));
    for (std::size_t i = 0; i + 1 < fixes.size(); ++i) {
      const auto& a = fixes[i];
      const auto& b = fixes[i + 1];
      GeoPoint prev{a.lat, a.lon};
      for (std::int64_t u = a.timestamp_ms + 1; u <= b.timestamp_ms; u += 1 + (b.timestamp_ms - a.timestamp_ms) / 17) {
        const auto g = geo_interpolate(track, u);
        ASSERT_TRUE(g);
        if (b.lat >= a.lat) EXPECT_GE(g->lat, prev.lat);
        else EXPECT_LE(g->lat, prev.lat);
        if (b.lon >= a.lon) EXPECT_GE(g->lon, prev.lon);
        else EXPECT_LE(g->lon, prev.lon);
        prev = *g;
      }
    }
  }
}

TEST(Geo, TrackValidation) {
  EXPECT_THROW(GpsTrack({{0, 1, 1}, {0, 2, 2}}), Error);
  EXPECT_THROW(GpsTrack({{0, 91, 1}}), Error);
  EXPECT_THROW(GpsTrack({{0, 1, -181}}), Error);
  const GpsTrack sorted({{2000, 2, 2}, {0, 1, 1}});
  EXPECT_EQ(sorted.fixes().front().timestamp_ms, 0);

  const auto dir = temp_dir("gps");
  write_text(dir / "range.csv", "timestamp_ms,lat,lon\n0,40,14\n1000,95,14\n");
  try {
    load_gps_csv(dir / "range.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  write_text(dir / "dup.csv", "timestamp_ms,lat,lon\n0,40,14\n0,40.1,14\n");
  EXPECT_THROW(load_gps_csv(dir / "dup.csv"), ParseError);
  EXPECT_EQ(mini_track().fixes().size(), 3u);
}

TEST(Labels, ParseAndFormat) {
  const auto rows = parse_labels_csv("crop_id,label,annotator,labeled_at_ms\nabc,damaged,ann,5\nabd,unlabeled,ann,6\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, CropLabel::Damaged);
  EXPECT_EQ(rows[1].label, CropLabel::Unlabeled);
  EXPECT_EQ(format_label_row(rows[0]), "abc,damaged,ann,5\n");
  try {
    parse_labels_csv("crop_id,label,annotator,labeled_at_ms\nabc,broken,ann,5\n", "labels.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.file(), "labels.csv");
  }
  EXPECT_THROW(format_label_row({"a,b", CropLabel::Skip, "x", 0}), Error);
  EXPECT_THROW(format_label_row({"ab", CropLabel::Skip, "x\ny", 0}), Error);
  for (auto l : {CropLabel::Damaged, CropLabel::Undamaged, CropLabel::Skip, CropLabel::Unlabeled}) {
    EXPECT_EQ(parse_crop_label(to_string(l)), l);
  }
}

TEST(Labels, MiniCorpusJoin) {
  const auto crops = load_crop_manifest(kMini / "golden" / "crops.csv");
  const auto rows = load_labels_csv(kMini / "labels.csv");
  const auto ds = build_labeled_dataset(crops, "crops", rows);
  const auto& rep = ds.report;
  EXPECT_EQ(rep.rows, 7u);
  EXPECT_EQ(rep.rows, rep.assigned + rep.skipped + rep.unknown);
  EXPECT_EQ(rep.assigned, 5u);
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_EQ(rep.unknown, 1u);
  ASSERT_EQ(rep.unknown_ids.size(), 1u);
  EXPECT_EQ(rep.unknown_ids[0], "0123456789abcdef");
  EXPECT_EQ(rep.damaged, 2u);
  EXPECT_EQ(rep.undamaged, 2u);
  ASSERT_TRUE(rep.imbalance_ratio);
  EXPECT_DOUBLE_EQ(*rep.imbalance_ratio, 1.0);
  ASSERT_EQ(ds.crop_ids.size(), 4u);
  // the 818150... crop was relabeled undamaged later in the file
  for (std::size_t i = 0; i < ds.crop_ids.size(); ++i) {
    if (ds.crop_ids[i] == "818150f4521bd90e") {
      EXPECT_EQ(ds.set.items[i].label, 0);
    }
    EXPECT_EQ(ds.set.items[i].path, crop_image_path("crops", ds.crop_ids[i]));
  }
}

TEST(Labels, PaperImbalanceRatio) {
  std::vector<CropRecord> crops;
  std::vector<LabelRow> rows;
  for (int i = 0; i < 249; ++i) {
    crops.push_back(crop_record("c" + std::to_string(i)));
    rows.push_back({crops.back().crop_id, i < 203 ? CropLabel::Damaged : CropLabel::Undamaged, "a", i});
  }
  const auto ds = build_labeled_dataset(crops, "d", rows);
  EXPECT_EQ(ds.report.damaged, 203u);
  EXPECT_EQ(ds.report.undamaged, 46u);
  ASSERT_TRUE(ds.report.imbalance_ratio);
  EXPECT_NEAR(*ds.report.imbalance_ratio, 4.413, 5e-4);
  EXPECT_TRUE(ds.report.warnings.empty());
}

TEST(Labels, EmptyAndConflicting) {
  const std::vector<CropRecord> crops{crop_record("a"), crop_record("b")};
  const auto empty = build_labeled_dataset(crops, "d", {});
  EXPECT_TRUE(empty.set.items.empty());
  EXPECT_FALSE(empty.report.warnings.empty());
  EXPECT_FALSE(empty.report.imbalance_ratio);

  const auto flip = build_labeled_dataset(crops, "d", {{"a", CropLabel::Damaged, "x", 1}, {"a", CropLabel::Undamaged, "y", 2}});
  ASSERT_EQ(flip.set.items.size(), 1u);
  EXPECT_EQ(flip.set.items[0].label, 0);

  const auto undo = build_labeled_dataset(crops, "d", {{"a", CropLabel::Damaged, "x", 1}, {"a", CropLabel::Unlabeled, "x", 2}});
  EXPECT_TRUE(undo.set.items.empty());
  EXPECT_EQ(undo.report.assigned + undo.report.skipped, 2u);
}

TEST(Labels, ConservationProperty) {
  Rng rng(21);
  std::vector<CropRecord> crops;
  for (int i = 0; i < 30; ++i) crops.push_back(crop_record("k" + std::to_string(i)));
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LabelRow> rows;
    const std::size_t n = rng.below(80);
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back({"k" + std::to_string(rng.below(40)), static_cast<CropLabel>(rng.below(4)), "a",
                      static_cast<std::int64_t>(i)});
    }
    const auto rep = build_labeled_dataset(crops, "d", rows).report;
    EXPECT_EQ(rep.rows, n);
    EXPECT_EQ(rep.rows, rep.assigned + rep.skipped + rep.unknown);
    EXPECT_LE(rep.damaged + rep.undamaged, crops.size());
  }
}

TEST(Anomalies, EmptyInputGivesEmptyFile) {
  const auto recs = emit_anomalies({}, {}, nullptr);
  EXPECT_TRUE(recs.empty());
  const auto dir = temp_dir("empty_anoms");
  write_anomalies(recs, dir / "a.jsonl");
  EXPECT_EQ(fs::file_size(dir / "a.jsonl"), 0u);
  const auto s = summarize(load_anomalies(dir / "a.jsonl"));
  EXPECT_EQ(s.total, 0u);
  EXPECT_EQ(s.by_kind.at("road_damage"), 0u);
  EXPECT_EQ(s.by_kind.at("damaged_sign"), 0u);
  EXPECT_EQ(s.geotagged_fraction, 0.0);
  EXPECT_FALSE(s.first_ms);
}

TEST(Anomalies, CountsThresholdsAndOrder) {
  const auto track = mini_track();
  std::vector<DamageDetection> damage{{"f2.ppm", 3000, pred(1, 0.5, 0.5, 0.2, 0.1, 0.9)},
                                      {"f1.ppm", 1000, pred(2, 0.4, 0.6, 0.3, 0.1, 0.5)},
                                      {"f3.ppm", 1500, pred(1, 0.4, 0.6, 0.3, 0.1, 0.2)}};
  std::vector<SignPrediction> signs{{"s1", "f0.ppm", 0, pred(0, 0.5, 0.5, 0.1, 0.1, 0.9), 0.7},
                                    {"s2", "f4.ppm", 4000, pred(0, 0.5, 0.5, 0.1, 0.1, 0.9), 0.3}};
  const auto recs = emit_anomalies(damage, signs, &track);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].id, "s1");
  EXPECT_EQ(recs[0].kind, AnomalyKind::DamagedSign);
  EXPECT_DOUBLE_EQ(recs[0].confidence, 0.7);
  EXPECT_EQ(recs[1].frame, "f1.ppm");
  EXPECT_EQ(recs[2].frame, "f2.ppm");
  ASSERT_TRUE(recs[1].geo);
  EXPECT_NEAR(recs[1].geo->lat, 40.001, 1e-12);
  EXPECT_NEAR(recs[1].geo->lon, 14.0005, 1e-12);
  for (const auto& r : recs) {
    if (r.kind == AnomalyKind::DamagedSign) {
      EXPECT_GE(r.confidence, 0.5);
    }
  }

  AnomalyThresholds strict;
  strict.detector_conf = 0.6;
  strict.classifier = 0.8;
  EXPECT_EQ(emit_anomalies(damage, signs, &track, strict).size(), 1u);
  strict.classifier = 1.0;
  EXPECT_THROW(emit_anomalies(damage, signs, &track, strict), Error);
  strict.classifier = 0.0;
  EXPECT_THROW(emit_anomalies(damage, signs, &track, strict), Error);
}

TEST(Anomalies, SameTimestampOrderedById) {
  std::vector<DamageDetection> damage{{"b.ppm", 10, pred(1, 0.1, 0.1, 0.1, 0.1, 0.9)},
                                      {"a.ppm", 10, pred(1, 0.2, 0.2, 0.1, 0.1, 0.9)}};
  std::vector<SignPrediction> signs{{"0000000000000000", "c.ppm", 10, pred(0, 0.5, 0.5, 0.1, 0.1, 1), 0.9}};
  const auto recs = emit_anomalies(damage, signs, nullptr);
  ASSERT_EQ(recs.size(), 3u);
  for (std::size_t i = 1; i < recs.size(); ++i) EXPECT_LT(recs[i - 1].id, recs[i].id);
  EXPECT_EQ(recs[0].id, "0000000000000000");
  EXPECT_FALSE(recs[0].geo);
}

TEST(Anomalies, LineFormatAndRoundTrip) {
  AnomalyRecord r{"abc", AnomalyKind::RoadDamage, 3, 0.5, "frames/x.ppm", 0.1, 0.2, 0.3, 0.4, GeoPoint{40.5, -3.25}, 1234};
  EXPECT_EQ(format_anomaly_line(r),
            "{\"id\":\"abc\",\"kind\":\"road_damage\",\"class_id\":3,\"confidence\":0.500000,\"frame\":\"frames/x.ppm\","
            "\"cx\":0.100000,\"cy\":0.200000,\"w\":0.300000,\"h\":0.400000,\"lat\":40.500000,\"lon\":-3.250000,"
            "\"timestamp_ms\":1234}\n");
  r.geo.reset();
  EXPECT_NE(format_anomaly_line(r).find("\"lat\":null,\"lon\":null"), std::string::npos);
  const auto back = parse_anomalies(format_anomaly_line(r));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);

  const auto golden = read_text_file(kMini / "golden" / "anomalies.jsonl");
  EXPECT_EQ(format_anomalies(parse_anomalies(golden)), golden);
}

TEST(Anomalies, ByteStableAcrossRuns) {
  const auto track = mini_track();
  Rng rng(3);
  std::vector<DamageDetection> damage;
  std::vector<SignPrediction> signs;
  for (int i = 0; i < 40; ++i) {
    const auto t = static_cast<std::int64_t>(rng.below(12000));
    damage.push_back({"d" + std::to_string(i), t, pred(1, rng.uniform(0, 1), rng.uniform(0, 1), 0.1, 0.1, rng.uniform(0, 1))});
    signs.push_back({"s" + std::to_string(i), "s.ppm", t, pred(0, 0.5, 0.5, 0.1, 0.1, 1), rng.uniform(0, 1)});
  }
  const auto a = format_anomalies(emit_anomalies(damage, signs, &track));
  std::reverse(damage.begin(), damage.end());
  std::reverse(signs.begin(), signs.end());
  EXPECT_EQ(format_anomalies(emit_anomalies(damage, signs, &track)), a);
}

TEST(Anomalies, ParseErrors) {
  try {
    parse_anomalies("\n{\"id\":\"x\"}\n", "a.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  AnomalyRecord r{"abc", AnomalyKind::DamagedSign, 0, 0.5, "f", 0.1, 0.2, 0.3, 0.4, {}, 1};
  auto line = format_anomaly_line(r);
  line.replace(line.find("damaged_sign"), 12, "pothole");
  EXPECT_THROW(parse_anomalies(line), ParseError);
  line = format_anomaly_line(r);
  line.replace(line.find("0.500000"), 8, "1.500000");
  EXPECT_THROW(parse_anomalies(line), ParseError);
  EXPECT_THROW(parse_anomalies("not json\n"), ParseError);
}

TEST(Summary, GoldenMiniCorpus) {
  const auto s = summarize(load_anomalies(kMini / "golden" / "anomalies.jsonl"));
  EXPECT_EQ(s.total, 3u);
  EXPECT_EQ(s.by_kind.at("road_damage"), 1u);
  EXPECT_EQ(s.by_kind.at("damaged_sign"), 2u);
  EXPECT_EQ(s.by_class.at("damaged_sign").at(0), 2u);
  EXPECT_EQ(s.geotagged, 2u);
  EXPECT_DOUBLE_EQ(s.geotagged_fraction, 2.0 / 3.0);
  EXPECT_EQ(*s.first_ms, 2000);
  EXPECT_EQ(*s.last_ms, 9500);
  EXPECT_EQ(to_json(s).dump(2) + "\n", read_text_file(kMini / "golden" / "summary.json"));
  const auto table = format_summary_table(s);
  EXPECT_NE(table.find("total 3 (road_damage 1, damaged_sign 2)"), std::string::npos);
  EXPECT_NE(table.find("geotagged 2/3 (0.666667)"), std::string::npos);
}

TEST(Summary, GeotaggedFractionIsExact) {
  std::vector<AnomalyRecord> recs;
  for (int i = 0; i < 7; ++i) {
    AnomalyRecord r;
    r.id = std::to_string(i);
    if (i < 3) r.geo = GeoPoint{1, 1};
    recs.push_back(r);
  }
  const auto s = summarize(recs);
  EXPECT_EQ(s.geotagged, 3u);
  EXPECT_DOUBLE_EQ(s.geotagged_fraction, 3.0 / 7.0);
}
