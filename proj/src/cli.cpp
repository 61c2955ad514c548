#include "swarmcam/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "swarmcam/config.hpp"
#include "swarmcam/errors.hpp"
#include "swarmcam/eval.hpp"
#include "swarmcam/formats.hpp"
#include "swarmcam/gradcam.hpp"
#include "swarmcam/pipeline.hpp"
#include "swarmcam/simulator.hpp"
#include "swarmcam/train.hpp"

namespace fs = std::filesystem;

namespace swarmcam::cli {

namespace {

constexpr const char* kEpisodeMeta = "episode.json";
constexpr const char* kEvents = "events.jsonl";
constexpr const char* kManifest = "samples.csv";
constexpr const char* kEpisodes = "episodes.csv";
constexpr const char* kBoxes = "boxes.jsonl";
constexpr const char* kCheckpoint = "checkpoint.swlm";
constexpr const char* kLossCsv = "loss.csv";
constexpr const char* kSplitCsv = "split.csv";
constexpr const char* kReport = "report.json";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed override");
  cmd->add_option("--out", c.out, "output directory")->required();
}

config::Config load_config(const Common& c) {
  return c.config.empty() ? config::Config{} : config::load(c.config);
}

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.pgm", k);
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  const auto bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw FormatError(path.string() + ": expected header '" + header + "'");
  const auto width = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != width) throw FormatError(path.string() + ":" + std::to_string(n) + ": wrong column count");
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw FormatError(what + ": not a number: '" + s + "'");
  }
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Common& c, const std::string& label_s, std::size_t episodes, bool all_frames,
              std::ostream& out) {
  config::Config cfg = load_config(c);
  const Label label = config::parse_label(label_s);
  if (episodes == 0) throw ValidationError("--episodes must be positive");
  const std::uint64_t base = c.seed.value_or(cfg.sim.seed);
  const fs::path root(c.out);
  fs::create_directories(root);
  for (std::size_t i = 0; i < episodes; ++i) {
    sim::SimConfig sc = cfg.sim;
    sc.seed = base + i;
    const sim::Episode ep = sim::generate_episode(sc, label);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%06llu", config::label_name(label),
                  static_cast<unsigned long long>(sc.seed));
    const fs::path dir = root / name;
    fs::create_directories(dir);

    std::vector<std::size_t> frames;
    if (all_frames) {
      for (std::size_t k = 0; k < ep.frame_count(); ++k) frames.push_back(k);
    } else {
      frames = pipeline::required_frames(
          pipeline::sample_windows(sc.episode_len, sc.frame_dt, cfg.sampling));
    }
    for (std::size_t k : frames) io::write_pgm(ep.render_frame(k), dir / frame_name(k));

    std::string events;
    for (const auto& e : ep.events) events += sim::event_to_json(e) + "\n";
    io::write_text_atomic(dir / kEvents, events);

    nlohmann::ordered_json meta;
    meta["label"] = config::label_name(label);
    meta["seed"] = sc.seed;
    meta["arena"] = sc.arena;
    meta["frame_dt"] = sc.frame_dt;
    meta["episode_len"] = sc.episode_len;
    meta["frame_count"] = ep.frame_count();
    meta["frames_written"] = frames;
    io::write_text_atomic(dir / kEpisodeMeta, meta.dump(2) + "\n");
    config::Config used = cfg;
    used.sim.seed = sc.seed;
    io::write_text_atomic(dir / "config.ini", config::serialize(used));
    out << name << ": " << frames.size() << " frames, " << ep.events.size() << " duels\n";
  }
  return 0;
}

// ---------------------------------------------------------------- flow

struct EpisodeMeta {
  Label label;
  int arena;
  double frame_dt;
  double episode_len;
};

EpisodeMeta read_meta(const fs::path& dir) {
  const auto bytes = io::read_file(dir / kEpisodeMeta);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    EpisodeMeta m{};
    const std::string l = j.at("label").get<std::string>();
    if (l != "stable" && l != "unstable") throw FormatError("bad label '" + l + "'");
    m.label = config::parse_label(l);
    m.arena = j.at("arena").get<int>();
    m.frame_dt = j.at("frame_dt").get<double>();
    m.episode_len = j.at("episode_len").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / kEpisodeMeta).string() + ": " + e.what());
  }
}

std::vector<sim::DuelEvent> read_events(const fs::path& path) {
  std::vector<sim::DuelEvent> out;
  if (!fs::exists(path)) return out;
  const auto bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(sim::event_from_json(line));
  return out;
}

std::vector<fs::path> episode_dirs(const fs::path& in) {
  if (fs::exists(in / kEpisodeMeta)) return {in};
  if (!fs::is_directory(in)) throw FormatError(in.string() + ": not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(in))
    if (e.is_directory() && fs::exists(e.path() / kEpisodeMeta)) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw FormatError(in.string() + ": no episode directories found");
  return dirs;
}

int cmd_flow(const Common& c, const std::string& frames_dir, std::ostream& out) {
  const config::Config cfg = load_config(c);
  const fs::path root(c.out);
  fs::create_directories(root);
  std::string manifest = "sample_id,flo_a,flo_b,label,t_seconds,episode_id\n";
  std::string episodes = "episode_id,frames_dir,arena,frame_dt\n";
  std::string boxes;
  for (const fs::path& dir : episode_dirs(frames_dir)) {
    const std::string ep_name = dir.filename().string();
    const EpisodeMeta meta = read_meta(dir);
    const auto events = read_events(dir / kEvents);
    const auto windows = pipeline::sample_windows(meta.episode_len, meta.frame_dt, cfg.sampling);
    fs::create_directories(root / ep_name);
    episodes += ep_name + "," + fs::relative(fs::absolute(dir), fs::absolute(root)).generic_string() + "," +
                std::to_string(meta.arena) + "," + fmt(meta.frame_dt) + "\n";
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto& w = windows[k];
      GrayImage f[4];
      for (int j = 0; j < 4; ++j) f[j] = io::read_pgm(dir / frame_name(w.frames[j]));
      const Sample s = pipeline::sample_from_frames(f[0], f[1], f[2], f[3], meta.label, w.t0, cfg.flow);
      const auto [fa, fb] = unpack_sample(s);
      char sid[96];
      std::snprintf(sid, sizeof sid, "%s_s%03zu", ep_name.c_str(), k);
      const std::string a = ep_name + "/" + sid + "_a.flo";
      const std::string b = ep_name + "/" + sid + "_b.flo";
      io::write_flo(fa, root / a);
      io::write_flo(fb, root / b);
      manifest += std::string(sid) + "," + a + "," + b + "," + config::label_name(meta.label) + "," + fmt(w.t0) +
                  "," + ep_name + "\n";
      nlohmann::ordered_json j;
      j["sample_id"] = sid;
      auto arr = nlohmann::ordered_json::array();
      for (const auto& bb : pipeline::active_duel_boxes(events, w)) arr.push_back({bb.x0, bb.y0, bb.x1, bb.y1});
      j["boxes"] = std::move(arr);
      boxes += j.dump() + "\n";
    }
    out << ep_name << ": " << windows.size() << " samples\n";
  }
  io::write_text_atomic(root / kManifest, manifest);
  io::write_text_atomic(root / kEpisodes, episodes);
  io::write_text_atomic(root / kBoxes, boxes);
  return 0;
}

// ---------------------------------------------------------------- samples on disk

struct SampleSet {
  std::vector<std::string> ids;
  std::vector<std::string> episode_names;
  std::vector<pipeline::EpisodeSamples> episodes;  // in order of first appearance
  std::vector<std::pair<std::size_t, std::size_t>> where;  // sample -> (episode, index)
  std::map<std::string, std::pair<std::string, double>> frames;  // episode -> (frames dir, frame_dt)
  int arena = 512;
};

SampleSet load_samples(const fs::path& root) {
  SampleSet set;
  const auto rows = read_csv(root / kManifest, "sample_id,flo_a,flo_b,label,t_seconds,episode_id");
  if (rows.empty()) throw ValidationError((root / kManifest).string() + ": no samples");
  std::map<std::string, std::vector<sim::BBox>> box_of;
  if (fs::exists(root / kBoxes)) {
    const auto bytes = io::read_file(root / kBoxes);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        std::vector<sim::BBox> bs;
        for (const auto& b : j.at("boxes"))
          bs.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
        box_of[j.at("sample_id").get<std::string>()] = std::move(bs);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError((root / kBoxes).string() + ": " + e.what());
      }
    }
  }
  std::map<std::string, std::size_t> ep_index;
  for (const auto& r : rows) {
    const Label label = r[3] == "stable" ? Label::Stable : r[3] == "unstable" ? Label::Unstable
                        : throw FormatError("manifest: bad label '" + r[3] + "'");
    const double t = parse_real(r[4], "manifest t_seconds");
    auto [it, fresh] = ep_index.emplace(r[5], set.episodes.size());
    if (fresh) {
      set.episodes.emplace_back();
      set.episodes.back().episode_id = it->second;
      set.episodes.back().label = label;
      set.episode_names.push_back(r[5]);
    }
    auto& ep = set.episodes[it->second];
    if (ep.label != label) throw FormatError("manifest: episode " + r[5] + " mixes labels");
    const FlowField a = io::read_flo(root / r[1]);
    const FlowField b = io::read_flo(root / r[2]);
    set.where.emplace_back(it->second, ep.samples.size());
    ep.samples.push_back(make_sample(a, b, label, t));
    ep.duel_boxes.push_back(box_of.count(r[0]) ? box_of[r[0]] : std::vector<sim::BBox>{});
    set.ids.push_back(r[0]);
  }
  if (fs::exists(root / kEpisodes)) {
    for (const auto& r : read_csv(root / kEpisodes, "episode_id,frames_dir,arena,frame_dt")) {
      set.frames[r[0]] = {(root / r[1]).string(), parse_real(r[3], "episodes frame_dt")};
      set.arena = static_cast<int>(parse_real(r[2], "episodes arena"));
    }
  }
  return set;
}

train::Dataset dataset_of(const SampleSet& set, const config::Config& cfg,
                          const std::optional<fs::path>& split_file) {
  train::Dataset d = train::split_dataset(set.episodes, {cfg.split.train, cfg.split.val, cfg.split.test},
                                          cfg.split.seed);
  if (!split_file || !fs::exists(*split_file)) return d;
  // An explicit split written at training time wins over the config.
  std::map<std::string, train::Split> tag;
  for (const auto& r : read_csv(*split_file, "sample_id,split")) {
    if (r[1] == "train") tag[r[0]] = train::Split::Train;
    else if (r[1] == "val") tag[r[0]] = train::Split::Val;
    else if (r[1] == "test") tag[r[0]] = train::Split::Test;
    else throw FormatError(split_file->string() + ": bad split '" + r[1] + "'");
  }
  // split_dataset orders samples episode by episode; walk the same order.
  std::size_t i = 0;
  for (std::size_t e = 0; e < set.episodes.size(); ++e)
    for (std::size_t s = 0; s < set.episodes[e].samples.size(); ++s, ++i) {
      std::size_t sample = 0;
      while (set.where[sample] != std::make_pair(e, s)) ++sample;
      const auto it = tag.find(set.ids[sample]);
      if (it == tag.end()) throw FormatError(split_file->string() + ": missing sample " + set.ids[sample]);
      d.split[i] = it->second;
    }
  return d;
}

// Sample ids in Dataset order.
std::vector<std::string> dataset_ids(const SampleSet& set) {
  std::vector<std::string> out;
  for (std::size_t e = 0; e < set.episodes.size(); ++e)
    for (std::size_t s = 0; s < set.episodes[e].samples.size(); ++s)
      for (std::size_t k = 0; k < set.where.size(); ++k)
        if (set.where[k] == std::make_pair(e, s)) {
          out.push_back(set.ids[k]);
          break;
        }
  return out;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c, const std::string& samples_dir, std::ostream& out) {
  config::Config cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const SampleSet set = load_samples(samples_dir);
  const train::Dataset data = dataset_of(set, cfg, std::nullopt);
  const model::Model init = model::build_model(cfg.model, cfg.train.seed);
  const train::TrainResult r = train::train(init, data, cfg.train);

  const fs::path root(c.out);
  fs::create_directories(root);
  model::save_checkpoint(r.checkpoint, root / kCheckpoint);
  io::write_text_atomic(root / kLossCsv, train::loss_curve_csv(r.curve));
  std::string split = "sample_id,split\n";
  const auto ids = dataset_ids(set);
  for (std::size_t i = 0; i < ids.size(); ++i) split += ids[i] + "," + train::to_string(data.split[i]) + "\n";
  io::write_text_atomic(root / kSplitCsv, split);
  out << "epochs " << r.checkpoint.meta.epochs << ", best epoch " << r.best_epoch << ", val loss "
      << r.curve[r.best_epoch].val_loss << "\n";
  return 0;
}

// ---------------------------------------------------------------- explain

int cmd_explain(const Common& c, const std::string& checkpoint, const std::string& samples_dir,
                std::optional<double> top_frac, const std::string& cls_s, std::ostream& out) {
  config::Config cfg = load_config(c);
  if (top_frac) cfg.explain.top_frac = *top_frac;
  if (!cls_s.empty()) cfg.explain.cls = config::parse_label(cls_s);
  config::validate(cfg);
  const model::Checkpoint ck = model::load_checkpoint(checkpoint);
  const SampleSet set = load_samples(samples_dir);
  const std::size_t n = set.ids.size();
  const auto arena = static_cast<std::size_t>(set.arena);

  std::vector<gradcam::ImportanceMap> raw(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    const auto [e, s] = set.where[i];
    const auto cache = model::forward_with_cache(ck.model, set.episodes[e].samples[s].tensor);
    const auto g = gradcam::feature_grads(cache, cfg.explain.cls);
    raw[i] = gradcam::importance_map(gradcam::channel_weights(g), cache.feature_maps, cfg.explain.cls);
  }
  std::vector<gradcam::ImportanceMap> gated;
  if (cfg.explain.gate_scope == config::GateScope::Run) {
    gated = gradcam::gate_top_fraction_pooled(raw, cfg.explain.top_frac);
  } else {
    for (const auto& m : raw) gated.push_back(gradcam::gate_top_fraction(m, cfg.explain.top_frac));
  }

  const fs::path root(c.out);
  fs::create_directories(root);
  for (std::size_t i = 0; i < n; ++i) {
    const auto up = gradcam::upsample_bicubic(gated[i], arena, arena);
    FlowField f(arena, arena);
    f.u = up.values;
    io::write_flo(f, root / (set.ids[i] + "_map.flo"));
    const auto [e, s] = set.where[i];
    const auto fr = set.frames.find(set.episode_names[e]);
    if (fr == set.frames.end()) continue;
    const double t = set.episodes[e].samples[s].timestamp;
    const auto k = static_cast<std::size_t>(std::lround(t / fr->second.second));
    const GrayImage frame = io::read_pgm(fs::path(fr->second.first) / frame_name(k));
    io::write_ppm(gradcam::overlay(frame, up), root / (set.ids[i] + "_overlay.ppm"));
  }
  out << n << " maps written\n";
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& samples_dir, std::ostream& out) {
  const config::Config cfg = load_config(c);
  const model::Checkpoint ck = model::load_checkpoint(checkpoint);
  const SampleSet set = load_samples(samples_dir);
  const fs::path ck_dir = fs::path(checkpoint).parent_path();
  const train::Dataset data = dataset_of(set, cfg, ck_dir / kSplitCsv);
  eval::EvalReport report = eval::evaluate(ck.model, data, static_cast<std::size_t>(set.arena),
                                           cfg.explain.dilate_r, cfg.explain.top_frac);
  if (fs::exists(ck_dir / kLossCsv)) {
    for (const auto& r : read_csv(ck_dir / kLossCsv, "epoch,train_loss,val_loss"))
      report.loss_curve.push_back({static_cast<std::size_t>(parse_real(r[0], "loss epoch")),
                                   parse_real(r[1], "train_loss"), parse_real(r[2], "val_loss")});
  }
  const fs::path root(c.out);
  fs::create_directories(root);
  io::write_text_atomic(root / kReport, eval::report_to_json(report));
  out << "auc " << report.auc << ", accuracy " << report.accuracy << ", pointing " << report.pointing_accuracy
      << " (baseline " << report.random_baseline << ", n=" << report.pointing_samples << ")\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Swarm state classification and Grad-CAM explanation pipeline", "swarmcam"};
  app.require_subcommand(1);

  Common c_synth, c_flow, c_train, c_explain, c_eval;
  std::string label = "stable", in_dir, samples, checkpoint, cls;
  std::size_t episodes = 1;
  bool all_frames = false;
  std::optional<double> top_frac;

  auto* synth = app.add_subcommand("synth", "simulate episodes and write frames + events");
  add_common(synth, c_synth);
  synth->add_option("--label", label, "stable|unstable")->check(CLI::IsMember({"stable", "unstable"}));
  synth->add_option("--episodes", episodes, "number of episodes (seeds seed..seed+N-1)");
  synth->add_flag("--all-frames", all_frames, "write every frame, not only those the sampler reads");

  auto* flow = app.add_subcommand("flow", "compute flow pairs and the samples manifest");
  add_common(flow, c_flow);
  flow->add_option("--frames", in_dir, "synth output directory or one episode directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train the classifier");
  add_common(train_cmd, c_train);
  train_cmd->add_option("--samples", samples, "flow output directory")->required();

  auto* explain = app.add_subcommand("explain", "write gated Grad-CAM maps and overlays");
  add_common(explain, c_explain);
  explain->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  explain->add_option("--samples", samples, "flow output directory")->required();
  explain->add_option("--top-frac", top_frac, "fraction kept by the gate");
  explain->add_option("--class", cls, "stable|unstable")->check(CLI::IsMember({"stable", "unstable"}));

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, c_eval);
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--samples", samples, "flow output directory")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(c_synth, label, episodes, all_frames, out);
    if (*flow) return cmd_flow(c_flow, in_dir, out);
    if (*train_cmd) return cmd_train(c_train, samples, out);
    if (*explain) return cmd_explain(c_explain, checkpoint, samples, top_frac, cls, out);
    if (*eval_cmd) return cmd_eval(c_eval, checkpoint, samples, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace swarmcam::cli
