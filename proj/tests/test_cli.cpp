#include <gtest/gtest.h>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "roadinspect/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace roadinspect;
namespace fs = std::filesystem;

namespace {

const fs::path kData(ROADINSPECT_TEST_DATA);
const fs::path kMini = kData / "mini";
const std::string kCli = ROADINSPECT_CLI;

struct Result {
  int code = -1;
  std::string out, err;
};

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("roadinspect_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the CLI through the shell; stdout and stderr are captured separately.
Result run(const std::string& args, const std::string& stdin_text = {}, const fs::path& cwd = {}) {
  static int counter = 0;
  const fs::path scratch = fs::temp_directory_path() / ("roadinspect_cli_io_" + std::to_string(counter++));
  fs::create_directories(scratch);
  const fs::path in = scratch / "in", out = scratch / "out", err = scratch / "err";
  std::ofstream(in, std::ios::binary) << stdin_text;
  std::string cmd;
  if (!cwd.empty()) cmd += "cd '" + cwd.string() + "' && ";
  cmd += "'" + kCli + "' " + args + " <'" + in.string() + "' >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  fs::remove_all(scratch);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  const auto missing = run("eval --pred " + q(kData / "eval" / "pred_perfect") + " --out /dev/null");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--gt"), std::string::npos);
  EXPECT_EQ(run("anchors --gt " + q(kData / "eval" / "gt") + " --k 0").code, 2);
  EXPECT_EQ(run("eval --gt /nonexistent --pred /nonexistent --out /dev/null").code, 2);
  EXPECT_EQ(run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") +
                " --out /tmp/x --margin -1")
                .code,
            2);
}

TEST(Cli, HelpForEverySubcommand) {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"eval", {"--gt", "--pred", "--conf", "--out"}},
      {"crops", {"--manifest", "--pred", "--out", "--conf", "--margin", "--class"}},
      {"anchors", {"--gt", "--k", "--max-iters", "--out"}},
      {"train", {"--data", "--labels", "--config", "--out", "--history", "--seed"}},
      {"predict", {"--model", "--input", "--threshold"}},
      {"anomalies", {"--manifest", "--pred", "--model", "--gps", "--out", "--sign-class", "--conf", "--threshold",
                     "--margin", "--gps-tolerance"}},
      {"summarize", {"--anomalies", "--out"}},
      {"serve", {"--root", "--port", "--host"}},
      {"label", {"--data", "--labels", "--annotator"}},
  };
  const auto top = run("--help");
  EXPECT_EQ(top.code, 0);
  for (const auto& [cmd, opts] : flags) {
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    const auto r = run(cmd + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& o : opts) EXPECT_NE(r.out.find(o), std::string::npos) << cmd << " " << o;
  }
}

TEST(Cli, EvalPerfectAndGolden) {
  const auto dir = temp_dir("eval");
  const auto perfect = run("eval --gt " + q(kData / "eval" / "gt") + " --pred " + q(kData / "eval" / "pred_perfect") +
                           " --out " + q(dir / "perfect.json"));
  ASSERT_EQ(perfect.code, 0) << perfect.err;
  EXPECT_NE(perfect.out.find("mAP50      1.000000"), std::string::npos) << perfect.out;

  const auto partial = run("eval --gt " + q(kData / "eval" / "gt") + " --pred " + q(kData / "eval" / "pred_partial") +
                           " --out " + q(dir / "partial.json"));
  ASSERT_EQ(partial.code, 0) << partial.err;
  const auto got = nlohmann::json::parse(slurp(dir / "partial.json"));
  const auto want = nlohmann::json::parse(slurp(kData / "eval" / "golden_partial.json"));
  for (const char* k : {"map50", "map50_95", "precision", "recall"}) {
    EXPECT_NEAR(got.at(k).get<double>(), want.at(k).get<double>(), 1e-9) << k;
  }
  for (const char* k : {"tp", "fp", "fn"}) EXPECT_EQ(got.at(k), want.at(k)) << k;
}

TEST(Cli, EvalParseErrorNamesFileAndLine) {
  const auto dir = temp_dir("eval_bad");
  fs::create_directories(dir / "pred");
  std::ofstream(dir / "pred" / "a.txt") << "0 0.5 0.5 0.1 0.1 0.9\n0 0.5 0.5 0.1\n";
  const auto r = run("eval --gt " + q(kData / "eval" / "gt") + " --pred " + q(dir / "pred") + " --out " +
                     q(dir / "r.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("a.txt:2"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, Anchors) {
  const auto dir = temp_dir("anchors");
  const auto r = run("anchors --gt " + q(kData / "eval" / "gt") + " --k 2 --out " + q(dir / "a.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
  ASSERT_EQ(j["anchors"].size(), 2u);
  const auto sizes = [&] {
    std::vector<BoxSize> out;
    for (const auto& f : fs::directory_iterator(kData / "eval" / "gt")) {
      for (const auto& b : parse_label_file(read_text_file(f.path()))) out.push_back({b.w, b.h});
    }
    return out;
  }();
  EXPECT_EQ(j["boxes"], sizes.size());
  EXPECT_LE(j["anchors"][0][0].get<double>() * j["anchors"][0][1].get<double>(),
            j["anchors"][1][0].get<double>() * j["anchors"][1][1].get<double>());
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
}

TEST(Cli, CropsMatchGolden) {
  const auto dir = temp_dir("crops");
  const auto r = run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") + " --out " +
                     q(dir / "crops"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "crops 5 below_threshold 1 empty 0 duplicate 0\n");
  EXPECT_EQ(slurp(dir / "crops" / "crops.csv"), slurp(kMini / "golden" / "crops.csv"));
  const auto missing = run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini) + " --out " +
                           q(dir / "none"));
  EXPECT_EQ(missing.code, 0);
  EXPECT_EQ(missing.out, "crops 0 below_threshold 0 empty 0 duplicate 0\n");
}

TEST(Cli, TrainPredictOnTinyFixture) {
  const auto dir = temp_dir("train");
  const auto fx = testsupport::write_tiny_crop_dir(dir / "data");
  const auto r = run("train --data " + q(fx.dir) + " --labels " + q(fx.labels_csv) + " --config " + q(fx.config) +
                     " --out " + q(dir / "model.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "model.txt"));
  EXPECT_TRUE(fs::exists(dir / "model.txt.weights"));
  const auto history = slurp(dir / "model.txt.history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 21);
  EXPECT_NE(r.err.find("epoch 20 "), std::string::npos);

  const auto one = run("predict --model " + q(dir / "model.txt") + " --input " +
                       q(crop_image_path(fx.dir, fx.crop_ids[0])));
  ASSERT_EQ(one.code, 0) << one.err;
  const std::regex line(R"((\S+) ([01]\.\d{6}) (damaged|undamaged)\n)");
  std::smatch m;
  ASSERT_TRUE(std::regex_match(one.out, m, line)) << one.out;
  EXPECT_EQ(m[1], crop_image_path(fx.dir, fx.crop_ids[0]).string());

  std::string inputs;
  for (const auto& id : fx.crop_ids) inputs += " " + q(crop_image_path(fx.dir, id));
  const auto many = run("predict --model " + q(dir / "model.txt") + " --input" + inputs + " --threshold 0.999");
  ASSERT_EQ(many.code, 0);
  EXPECT_EQ(std::count(many.out.begin(), many.out.end(), '\n'), static_cast<long>(fx.crop_ids.size()));

  EXPECT_EQ(run("predict --model " + q(fx.crops_csv) + " --input " + q(crop_image_path(fx.dir, fx.crop_ids[0]))).code,
            1);
}

TEST(Cli, SeededTrainIsByteIdentical) {
  const auto dir = temp_dir("seeded");
  const auto fx = testsupport::write_tiny_crop_dir(dir / "data", 3);
  std::ofstream(dir / "short.cfg") << "preset = tiny\nepochs = 2\n";
  for (const char* tag : {"a", "b"}) {
    const auto r = run("train --data " + q(fx.dir) + " --labels " + q(fx.labels_csv) + " --config " +
                       q(dir / "short.cfg") + " --seed 7 --out " + q(dir / (std::string(tag) + ".txt")));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir / "a.txt.weights"), slurp(dir / "b.txt.weights"));
  EXPECT_EQ(slurp(dir / "a.txt.history.csv"), slurp(dir / "b.txt.history.csv"));
  auto manifest = [&](const char* tag) {
    auto s = slurp(dir / (std::string(tag) + ".txt"));
    return s.substr(0, s.find("blob="));
  };
  EXPECT_EQ(manifest("a"), manifest("b"));
  EXPECT_NE(slurp(dir / "a.txt").find("config.seed=7"), std::string::npos);
}

TEST(Cli, TrainWithSingleClassFails) {
  const auto dir = temp_dir("single");
  const auto fx = testsupport::write_tiny_crop_dir(dir / "data");
  std::string labels = "crop_id,label,annotator,labeled_at_ms\n";
  for (const auto& id : fx.crop_ids) labels += id + ",damaged,x,1\n";
  std::ofstream(dir / "labels.csv") << labels;
  const auto r = run("train --data " + q(fx.dir) + " --labels " + q(dir / "labels.csv") + " --config " + q(fx.config) +
                     " --out " + q(dir / "m.txt"));
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "m.txt"));
}

TEST(Cli, MiniCorpusChainMatchesGolden) {
  const auto dir = temp_dir("chain");
  ASSERT_EQ(run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") + " --out " +
                q(dir / "crops"))
                .code,
            0);
  const auto tr = run("train --data " + q(dir / "crops") + " --labels " + q(kMini / "labels.csv") + " --config " +
                      q(kMini / "tiny.cfg") + " --out " + q(dir / "model.txt"));
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_NE(tr.err.find("1 label rows reference unknown crop ids"), std::string::npos);
  const auto an = run("anomalies --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") +
                      " --model " + q(dir / "model.txt") + " --gps " + q(kMini / "gps.csv") + " --out " +
                      q(dir / "anomalies.jsonl"));
  ASSERT_EQ(an.code, 0) << an.err;
  EXPECT_EQ(slurp(dir / "anomalies.jsonl"), slurp(kMini / "golden" / "anomalies.jsonl"));
  const auto sm = run("summarize --anomalies " + q(dir / "anomalies.jsonl") + " --out " + q(dir / "summary.json"));
  ASSERT_EQ(sm.code, 0);
  EXPECT_EQ(slurp(dir / "summary.json"), slurp(kMini / "golden" / "summary.json"));
  EXPECT_EQ(sm.out, an.out);
}

TEST(Cli, WritesOnlyNamedPaths) {
  const auto cwd = temp_dir("cwd");
  const auto out = temp_dir("named");
  ASSERT_EQ(run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") + " --out " +
                    q(out / "crops"),
                {}, cwd)
                .code,
            0);
  ASSERT_EQ(run("summarize --anomalies " + q(kMini / "golden" / "anomalies.jsonl"), {}, cwd).code, 0);
  ASSERT_EQ(run("eval --gt " + q(kData / "eval" / "gt") + " --pred " + q(kData / "eval" / "pred_perfect") + " --out " +
                    q(out / "r.json"),
                {}, cwd)
                .code,
            0);
  EXPECT_TRUE(fs::is_empty(cwd));
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(out)) names.insert(e.path().filename().string());
  EXPECT_EQ(names, (std::set<std::string>{"crops", "r.json"}));
}

TEST(Cli, TerminalLabeling) {
  const auto dir = temp_dir("label");
  ASSERT_EQ(run("crops --manifest " + q(kMini / "frames.csv") + " --pred " + q(kMini / "preds") + " --out " +
                q(dir / "crops"))
                .code,
            0);
  const auto r = run("label --data " + q(dir / "crops") + " --labels " + q(dir / "labels.csv") + " --annotator me",
                     "d\nx\nu\ns\nq\n");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("labeled 3 of 5"), std::string::npos) << r.out;
  const auto rows = load_labels_csv(dir / "labels.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].label, CropLabel::Damaged);
  EXPECT_EQ(rows[1].label, CropLabel::Undamaged);
  EXPECT_EQ(rows[2].label, CropLabel::Skip);
  EXPECT_EQ(rows[0].annotator, "me");
  const auto crops = load_crop_manifest(dir / "crops" / "crops.csv");
  EXPECT_EQ(rows[0].crop_id, crops[0].crop_id);

  // skipped crops stay out of the queue; end of input stops cleanly
  const auto again = run("label --data " + q(dir / "crops") + " --labels " + q(dir / "labels.csv"), "d\n");
  EXPECT_EQ(again.code, 0);
  EXPECT_NE(again.out.find("labeled 1 of 2"), std::string::npos) << again.out;
}

TEST(Cli, ServeAnswersAndStopsOnSignal) {
  const auto root = temp_dir("serve");
  extract_crops(load_frame_manifest(kMini / "frames.csv"), kMini / "preds", root);
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  const std::string port_s = std::to_string(port), root_s = root.string();
  std::vector<char*> argv{const_cast<char*>(kCli.c_str()), const_cast<char*>("serve"), const_cast<char*>("--root"),
                          const_cast<char*>(root_s.c_str()), const_cast<char*>("--port"),
                          const_cast<char*>(port_s.c_str()), nullptr};
  pid_t pid = 0;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 2, "/dev/null", O_WRONLY, 0);
  ASSERT_EQ(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&actions);

  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    httplib::Client c("127.0.0.1", port);
    res = c.Get("/api/stats");
    if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["total_crops"], 5);

  ASSERT_EQ(kill(pid, SIGTERM), 0);
  int status = 0;
  pid_t done = 0;
  for (int i = 0; i < 200 && done == 0; ++i) {
    done = waitpid(pid, &status, WNOHANG);
    if (done == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (done == 0) {
    kill(pid, SIGKILL);
    waitpid(pid, &status, 0);
    FAIL() << "serve did not stop on SIGTERM";
  }
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(fs::exists(root / "labels.csv"));
}
