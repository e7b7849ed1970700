// roadinspect: command-line front end for every pipeline stage.
//
// Exit status: 0 success, 1 operational failure, 2 usage error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roadinspect/roadinspect.hpp"

namespace fs = std::filesystem;
using namespace roadinspect;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

std::vector<BoxSize> gt_box_sizes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<BoxSize> out;
  for (const auto& f : files) {
    for (const auto& b : parse_label_file(read_text_file(f), f.string())) {
      if (b.w > 0 && b.h > 0) out.push_back({b.w, b.h});
    }
  }
  return out;
}

TrainConfig load_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return parse_train_config(read_text_file(path), path);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road asset inspection toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score detector predictions against ground truth");
  std::string eval_gt, eval_pred, eval_out;
  double eval_conf = 0.25;
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth label directory (<stem>.txt)")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--pred", eval_pred, "Prediction directory (<stem>.txt)")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--conf", eval_conf, "Confidence threshold for precision/recall")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--out", eval_out, "Report JSON output file")->required();

  // crops
  auto* crops_cmd = app.add_subcommand("crops", "Cut detections out of frames");
  std::string crops_manifest, crops_pred, crops_out;
  CropOptions crop_opt;
  std::optional<int> crops_class;
  crops_cmd->add_option("--manifest", crops_manifest, "Frame manifest CSV (frame,timestamp_ms)")->required()->check(CLI::ExistingFile);
  crops_cmd->add_option("--pred", crops_pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  crops_cmd->add_option("--out", crops_out, "Output directory for crops and crops.csv")->required();
  crops_cmd->add_option("--conf", crop_opt.conf_thr, "Minimum detector confidence")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  crops_cmd->add_option("--margin", crop_opt.margin_frac, "Margin added on each side, as a fraction of box size")->capture_default_str()->check(CLI::NonNegativeNumber);
  crops_cmd->add_option("--class", crops_class, "Only crop this detector class");

  // anchors
  auto* anchors_cmd = app.add_subcommand("anchors", "Cluster ground-truth box sizes into anchors");
  std::string anchors_gt, anchors_out;
  std::size_t anchors_k = 9, anchors_iters = 100;
  anchors_cmd->add_option("--gt", anchors_gt, "Ground-truth label directory")->required()->check(CLI::ExistingDirectory);
  anchors_cmd->add_option("--k", anchors_k, "Number of anchors")->required()->check(CLI::PositiveNumber);
  anchors_cmd->add_option("--max-iters", anchors_iters, "Iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
  anchors_cmd->add_option("--out", anchors_out, "Optional JSON output file");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the damage classifier on labeled crops");
  std::string train_data, train_labels, train_config, train_out, train_history;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("--data", train_data, "Crop directory (crops.csv and <crop_id>.ppm)")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--labels", train_labels, "Labels CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", train_config, "Training config file (key = value)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Model manifest path; weights go to <out>.weights")->required();
  train_cmd->add_option("--history", train_history, "Per-epoch history CSV (default <out>.history.csv)");
  train_cmd->add_option("--seed", train_seed, "Seed overriding the config (default 42)");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Classify crops as damaged or undamaged");
  std::string predict_model;
  std::vector<std::string> predict_inputs;
  std::optional<double> predict_thr;
  predict_cmd->add_option("--model", predict_model, "Model manifest")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", predict_inputs, "PPM crop(s)")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--threshold", predict_thr, "Decision threshold (default from the model config)")->check(CLI::Range(0.0, 1.0));

  // anomalies
  auto* anomalies_cmd = app.add_subcommand("anomalies", "Emit geotagged anomaly records");
  std::string an_manifest, an_pred, an_model, an_gps, an_out;
  AnomalyRunOptions an_opt;
  anomalies_cmd->add_option("--manifest", an_manifest, "Frame manifest CSV")->required()->check(CLI::ExistingFile);
  anomalies_cmd->add_option("--pred", an_pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  anomalies_cmd->add_option("--model", an_model, "Sign classifier model manifest")->required()->check(CLI::ExistingFile);
  anomalies_cmd->add_option("--gps", an_gps, "GPS CSV (timestamp_ms,lat,lon)")->required()->check(CLI::ExistingFile);
  anomalies_cmd->add_option("--out", an_out, "Anomalies JSONL output file")->required();
  anomalies_cmd->add_option("--sign-class", an_opt.sign_class, "Detector class routed to the classifier")->capture_default_str();
  anomalies_cmd->add_option("--conf", an_opt.thresholds.detector_conf, "Detector confidence threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  anomalies_cmd->add_option("--threshold", an_opt.thresholds.classifier, "Classifier damaged threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  anomalies_cmd->add_option("--margin", an_opt.margin_frac, "Crop margin fraction")->capture_default_str()->check(CLI::NonNegativeNumber);
  anomalies_cmd->add_option("--gps-tolerance", an_opt.thresholds.gps_tolerance_ms, "Max extrapolation past the track ends (ms)")->capture_default_str()->check(CLI::NonNegativeNumber);

  // summarize
  auto* summarize_cmd = app.add_subcommand("summarize", "Count anomalies by kind and class");
  std::string sum_in, sum_out;
  summarize_cmd->add_option("--anomalies", sum_in, "Anomalies JSONL file")->required()->check(CLI::ExistingFile);
  summarize_cmd->add_option("--out", sum_out, "Optional summary JSON output file");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the labeling and anomaly review API");
  std::string serve_root, serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve_cmd->add_option("--root", serve_root, "Data root (crops.csv, <crop_id>.ppm, labels.csv, anomalies.jsonl)")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", serve_port, "TCP port")->capture_default_str()->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--host", serve_host, "Listen address")->capture_default_str();

  // label
  auto* label_cmd = app.add_subcommand("label", "Label crops from the terminal (d/u/s, q to quit)");
  std::string label_data, label_labels, label_annotator = "terminal";
  label_cmd->add_option("--data", label_data, "Crop directory (crops.csv and <crop_id>.ppm)")->required()->check(CLI::ExistingDirectory);
  label_cmd->add_option("--labels", label_labels, "Labels CSV (appended, created if missing)")->required();
  label_cmd->add_option("--annotator", label_annotator, "Annotator name stored with each label")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*eval_cmd) {
      const EvalReport report = evaluate(eval_gt, eval_pred, eval_conf);
      write_text(eval_out, to_json(report).dump(2) + "\n");
      std::cout << format_eval_table(report);
    } else if (*crops_cmd) {
      if (crops_class) crop_opt.only_class = *crops_class;
      const auto frames = load_frame_manifest(crops_manifest);
      const CropRun run = extract_crops(frames, crops_pred, crops_out, crop_opt);
      std::cout << "crops " << run.crops.size() << " below_threshold " << run.below_threshold << " empty "
                << run.skipped_empty << " duplicate " << run.skipped_duplicate << "\n";
    } else if (*anchors_cmd) {
      const auto boxes = gt_box_sizes(anchors_gt);
      const AnchorResult r = anchor_kmeans(boxes, anchors_k, anchors_iters);
      nlohmann::json j;
      j["k"] = anchors_k;
      j["boxes"] = boxes.size();
      j["iterations"] = r.iterations;
      j["mean_iou"] = 1.0 - r.total_distance.back() / static_cast<double>(boxes.size());
      j["anchors"] = nlohmann::json::array();
      for (const auto& a : r.anchors) {
        j["anchors"].push_back({a.w, a.h});
        std::printf("%.6f %.6f\n", a.w, a.h);
      }
      std::printf("mean IoU %.6f after %zu iterations\n", j["mean_iou"].get<double>(), r.iterations);
      if (!anchors_out.empty()) write_text(anchors_out, j.dump(2) + "\n");
    } else if (*train_cmd) {
      TrainConfig cfg = load_config(train_config);
      if (train_seed) cfg.seed = *train_seed;
      const fs::path data(train_data);
      const auto crops = load_crop_manifest(data / "crops.csv");
      const LabeledDataset ds = build_labeled_dataset(crops, data, load_labels_csv(train_labels));
      for (const auto& w : ds.report.warnings) std::cerr << "warning: " << w << "\n";
      std::cerr << "labeled " << ds.set.items.size() << " (damaged " << ds.report.damaged << ", undamaged "
                << ds.report.undamaged << ")\n";
      const TrainResult result = train(ds.set, cfg, [](const EpochMetrics& m) {
        std::fprintf(stderr, "epoch %zu loss %.6f acc %.6f val_loss %.6f val_acc %.6f\n", m.epoch, m.train_loss,
                     m.train_acc, m.val_loss, m.val_acc);
      });
      save_model(result.model, train_out);
      emit_history_csv(result.history, train_history.empty() ? train_out + ".history.csv" : train_history);
    } else if (*predict_cmd) {
      const ModelCheckpoint model = load_model(predict_model);
      double thr = predict_thr.value_or(0.5);
      if (!predict_thr) {
        for (const auto& [k, v] : model.config) {
          if (k == "threshold") thr = std::stod(v);
        }
      }
      for (const auto& path : predict_inputs) {
        const double p = predict(model, load_ppm(path));
        std::printf("%s %.6f %s\n", path.c_str(), p, p >= thr ? "damaged" : "undamaged");
      }
    } else if (*anomalies_cmd) {
      const auto frames = load_frame_manifest(an_manifest);
      const ModelCheckpoint model = load_model(an_model);
      const GpsTrack track = load_gps_csv(an_gps);
      const auto records = run_anomalies(frames, an_pred, model, &track, an_opt);
      write_anomalies(records, an_out);
      std::cout << format_summary_table(summarize(records));
    } else if (*summarize_cmd) {
      const AnomalySummary s = summarize(load_anomalies(sum_in));
      if (!sum_out.empty()) write_text(sum_out, to_json(s).dump(2) + "\n");
      std::cout << format_summary_table(s);
    } else if (*serve_cmd) {
      service::ReviewService svc({fs::path(serve_root)});
      g_server = &svc.http();
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      if (!svc.http().bind_to_port(serve_host, serve_port)) {
        throw IoError("cannot listen on " + serve_host + ":" + std::to_string(serve_port));
      }
      std::cerr << "serving " << serve_root << " on http://" << serve_host << ":" << serve_port << "\n";
      svc.http().listen_after_bind();
      g_server = nullptr;
    } else if (*label_cmd) {
      const fs::path data(label_data);
      service::LabelStore store(load_crop_manifest(data / "crops.csv"), label_labels);
      const auto snap = store.snapshot();
      std::vector<const CropRecord*> queue;
      for (const auto& c : store.crops()) {
        auto it = snap->latest.find(c.crop_id);
        if (it == snap->latest.end() || it->second.label == CropLabel::Unlabeled) queue.push_back(&c);
      }
      std::size_t done = 0;
      for (const auto* c : queue) {
        std::printf("[%zu/%zu] %s frame %s class %d conf %.3f\n  %s\nlabel [d]amaged [u]ndamaged [s]kip [q]uit: ",
                    done + 1, queue.size(), c->crop_id.c_str(), c->frame.c_str(), c->box.class_id, c->box.conf,
                    crop_image_path(data, c->crop_id).c_str());
        std::fflush(stdout);
        std::string line;
        std::optional<CropLabel> label;
        bool quit = false;
        while (!label && !quit) {
          if (!std::getline(std::cin, line)) {
            quit = true;
            break;
          }
          const char key = line.empty() ? '\0' : static_cast<char>(std::tolower(static_cast<unsigned char>(line[0])));
          if (key == 'd') label = CropLabel::Damaged;
          else if (key == 'u') label = CropLabel::Undamaged;
          else if (key == 's') label = CropLabel::Skip;
          else if (key == 'q') quit = true;
          else std::printf("d, u, s or q: ");
          std::fflush(stdout);
        }
        if (quit) break;
        const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        store.append(c->crop_id, *label, label_annotator, now);
        ++done;
      }
      std::printf("\nlabeled %zu of %zu queued crops\n", done, queue.size());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
