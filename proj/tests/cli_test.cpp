#include <filesystem>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "swarmcam/cli.hpp"
#include "swarmcam/eval.hpp"
#include "swarmcam/formats.hpp"

using namespace swarmcam;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("swarmcam_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::map<std::string, io::Bytes> snapshot(const fs::path& root) {
  std::map<std::string, io::Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return files;
}

// Small arena and short episodes keep the pipeline quick.
fs::path write_small_config(const fs::path& dir) {
  const fs::path p = dir / "small.ini";
  io::write_text_atomic(p,
                        "[sim]\nn_ants = 12\narena = 128\nepisode_len = 240\nduel_rate = 6\n"
                        "[flow]\niterations = 50\n"
                        "[train]\nbatch = 4\nmax_epochs = 1\n");
  return p;
}

}  // namespace

TEST(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  const Result unknown = run({"synth", "--out", "x", "--frobnicate"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("--out"), std::string::npos);  // usage text
  EXPECT_EQ(run({"explain", "--out", "x", "--samples", "y"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", "x", "--label", "sideways"}).code, 2);
}

TEST(CliTest, ConfigErrorsMapToExitCodes) {
  const auto dir = fresh_dir("cfg");
  io::write_text_atomic(dir / "bad_key.ini", "[sim]\nbogus = 1\n");
  io::write_text_atomic(dir / "bad_value.ini", "[sim]\nn_ants = 1\n");
  EXPECT_EQ(run({"synth", "--config", (dir / "bad_key.ini").string(), "--out", (dir / "o").string()}).code, 3);
  EXPECT_EQ(run({"synth", "--config", (dir / "bad_value.ini").string(), "--out", (dir / "o").string()}).code, 4);
  EXPECT_EQ(run({"eval", "--checkpoint", (dir / "bad_key.ini").string(), "--samples", dir.string(), "--out",
                 (dir / "o").string()})
                .code,
            3);
}

TEST(CliTest, SynthIsDeterministic) {
  const auto dir = fresh_dir("synth");
  const auto cfg = write_small_config(dir);
  for (const char* name : {"a", "b"}) {
    const Result r = run({"synth", "--config", cfg.string(), "--label", "stable", "--episodes", "1", "--seed", "7",
                          "--out", (dir / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto a = snapshot(dir / "a"), b = snapshot(dir / "b");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.count("stable_000007/events.jsonl"));
}

TEST(CliTest, FullPipelineSmoke) {
  // Five episodes per label: the episode-level split needs that many.
  const auto dir = fresh_dir("pipeline");
  const auto cfg = write_small_config(dir);
  const std::string c = cfg.string();
  ASSERT_EQ(run({"synth", "--config", c, "--label", "stable", "--episodes", "5", "--seed", "0", "--out",
                 (dir / "frames").string()})
                .code,
            0);
  ASSERT_EQ(run({"synth", "--config", c, "--label", "unstable", "--episodes", "5", "--seed", "5", "--out",
                 (dir / "frames").string()})
                .code,
            0);
  Result r = run({"flow", "--config", c, "--frames", (dir / "frames").string(), "--out", (dir / "flows").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "flows" / "samples.csv"));

  r = run({"train", "--config", c, "--samples", (dir / "flows").string(), "--out", (dir / "model").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "model" / "checkpoint.swlm"));
  EXPECT_TRUE(fs::exists(dir / "model" / "loss.csv"));

  const std::string ckpt = (dir / "model" / "checkpoint.swlm").string();
  r = run({"explain", "--config", c, "--checkpoint", ckpt, "--samples", (dir / "flows").string(), "--out",
           (dir / "maps").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t maps = 0, overlays = 0;
  for (const auto& e : fs::directory_iterator(dir / "maps")) {
    const std::string n = e.path().filename().string();
    if (n.ends_with("_map.flo")) {
      ++maps;
      const FlowField f = io::read_flo(e.path());
      EXPECT_EQ(f.width, 128u);
    }
    if (n.ends_with("_overlay.ppm")) ++overlays;
  }
  EXPECT_EQ(maps, 20u);
  EXPECT_EQ(overlays, 20u);

  r = run({"eval", "--config", c, "--checkpoint", ckpt, "--samples", (dir / "flows").string(), "--out",
           (dir / "report").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Bytes json = io::read_file(dir / "report" / "report.json");
  const eval::EvalReport report = eval::report_from_json(std::string(json.begin(), json.end()));
  EXPECT_GE(report.auc, 0.0);
  EXPECT_LE(report.auc, 1.0);
  EXPECT_EQ(report.loss_curve.size(), 2u);

  // Re-running train on the same inputs reproduces every artifact.
  r = run({"train", "--config", c, "--samples", (dir / "flows").string(), "--out", (dir / "model2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(snapshot(dir / "model"), snapshot(dir / "model2"));
}
