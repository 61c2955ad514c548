#include "swarmcam/config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "swarmcam/errors.hpp"
#include "swarmcam/formats.hpp"

namespace swarmcam::config {

Label parse_label(const std::string& s) {
  if (s == "stable") return Label::Stable;
  if (s == "unstable") return Label::Unstable;
  throw ValidationError("label must be 'stable' or 'unstable', got '" + s + "'");
}

const char* label_name(Label l) { return l == Label::Stable ? "stable" : "unstable"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, ec == std::errc() ? end : buf);
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(key + ": not a number: '" + s + "'");
  return v;
}

template <typename T>
T to_integer(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(key + ": not an integer: '" + s + "'");
  return v;
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_integer<std::size_t>(key, trim(item)));
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::string doc;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Binding real(std::string section, std::string key, double& ref, std::string doc) {
  const std::string k = section + "." + key;
  return {std::move(section), std::move(key), std::move(doc), [&ref] { return fmt_double(ref); },
          [&ref, k](const std::string& s) { ref = to_double(k, s); }};
}

template <typename T>
Binding integer(std::string section, std::string key, T& ref, std::string doc) {
  const std::string k = section + "." + key;
  return {std::move(section), std::move(key), std::move(doc), [&ref] { return std::to_string(ref); },
          [&ref, k](const std::string& s) { ref = to_integer<T>(k, s); }};
}

Binding flag(std::string section, std::string key, bool& ref, std::string doc) {
  const std::string k = section + "." + key;
  return {std::move(section), std::move(key), std::move(doc), [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, k](const std::string& s) {
            if (s == "true") ref = true;
            else if (s == "false") ref = false;
            else throw FormatError(k + ": expected true or false, got '" + s + "'");
          }};
}

// The conv stages are stored as a list of structs; expose one column each.
Binding conv_column(std::string key, model::ModelSpec& spec, std::size_t model::ConvStage::*field,
                    std::string doc) {
  const std::string k = "model." + key;
  return {"model", std::move(key), std::move(doc),
          [&spec, field] {
            std::vector<std::size_t> v;
            for (const auto& c : spec.conv) v.push_back(c.*field);
            return fmt_list(v);
          },
          [&spec, field, k](const std::string& s) {
            const auto v = to_list(k, s);
            if (spec.conv.size() != v.size()) spec.conv.resize(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) spec.conv[i].*field = v[i];
          }};
}

std::vector<Binding> bindings(Config& c) {
  auto& s = c.sim;
  auto& m = c.model;
  std::vector<Binding> b{
      integer("sim", "n_ants", s.n_ants, "ants in the arena"),
      integer("sim", "arena", s.arena, "arena side in pixels"),
      integer("sim", "seed", s.seed, "base simulator seed"),
      real("sim", "duel_rate", s.duel_rate, "expected duels per minute (unstable only)"),
      real("sim", "duel_duration_min", s.duel_duration_min, "shortest duel, s"),
      real("sim", "duel_duration_max", s.duel_duration_max, "longest duel, s"),
      real("sim", "frame_dt", s.frame_dt, "seconds between frames"),
      real("sim", "episode_len", s.episode_len, "episode length, s"),
      integer("sim", "cricket_count", s.cricket_count, "static distractor blobs"),
      real("sim", "wander_speed_min", s.wander_speed_min, "px/s"),
      real("sim", "wander_speed_max", s.wander_speed_max, "px/s"),
      real("sim", "heading_noise", s.heading_noise, "heading noise std per frame, rad"),
      real("sim", "duel_spacing", s.duel_spacing, "distance between duelling partners, px"),
      real("sim", "jerk_amplitude", s.jerk_amplitude, "lunge amplitude, px"),
      real("sim", "jerk_angle", s.jerk_angle, "lunge direction relative to the facing axis, rad"),
      real("sim", "jerk_freq_min", s.jerk_freq_min, "Hz"),
      real("sim", "jerk_freq_max", s.jerk_freq_max, "Hz"),
      real("sim", "approach_speed", s.approach_speed, "px/s while closing in on a partner"),
      real("sim", "exit_rate", s.exit_rate, "per ant per second"),
      real("sim", "reentry_rate", s.reentry_rate, "per hidden ant per second"),
      real("sim", "duel_rate_decay", s.duel_rate_decay, "e-folding time of the duel rate, s; 0 keeps it constant"),
      real("sim", "substep", s.substep, "integration step, s"),
      real("flow", "alpha", c.flow.alpha, "Horn-Schunck smoothness weight"),
      integer("flow", "iterations", c.flow.iterations, "Jacobi sweeps"),
      real("flow", "sample_interval", c.sampling.interval, "seconds between flow-pair samples"),
      real("flow", "flow_dt", c.sampling.flow_dt, "seconds between the two frames of one flow"),
      real("flow", "pair_gap", c.sampling.pair_gap, "seconds between the starts of the two flows of a sample"),
      integer("model", "input_channels", m.input_channels, "sample channels"),
      integer("model", "input_size", m.input_size, "sample side"),
      conv_column("conv_channels", m, &model::ConvStage::out_channels, "output channels per conv stage"),
      conv_column("conv_kernels", m, &model::ConvStage::kernel, "square kernel size per conv stage"),
      conv_column("conv_pads", m, &model::ConvStage::pad, "zero padding per conv stage"),
      {"model", "conv_pools", "1 = 2x2 max pooling after the stage",
       [&m] {
         std::vector<std::size_t> v;
         for (const auto& st : m.conv) v.push_back(st.pool_after ? 1 : 0);
         return fmt_list(v);
       },
       [&m](const std::string& str) {
         const auto v = to_list("model.conv_pools", str);
         if (m.conv.size() != v.size()) m.conv.resize(v.size());
         for (std::size_t i = 0; i < v.size(); ++i) m.conv[i].pool_after = v[i] != 0;
       }},
      {"model", "hidden", "dense widths before the logit", [&m] { return fmt_list(m.hidden); },
       [&m](const std::string& str) { m.hidden = to_list("model.hidden", str); }},
      integer("model", "tap_layer", m.tap_layer, "zero-based conv stage read by Grad-CAM"),
      real("train", "lr", c.train.lr, "Adam step size"),
      real("train", "beta1", c.train.beta1, "Adam first-moment decay"),
      real("train", "beta2", c.train.beta2, "Adam second-moment decay"),
      real("train", "eps", c.train.eps, "Adam epsilon"),
      integer("train", "batch", c.train.batch, "mini-batch size"),
      integer("train", "max_epochs", c.train.max_epochs, "epoch limit"),
      integer("train", "patience", c.train.patience, "epochs without validation improvement before stopping"),
      integer("train", "seed", c.train.seed, "initialisation and shuffling seed"),
      flag("train", "augment", c.train.augment, "random flip/rotation of training samples"),
      real("train", "train_frac", c.split.train, "fraction of episodes per label for training"),
      real("train", "val_frac", c.split.val, "fraction for validation"),
      real("train", "test_frac", c.split.test, "fraction for testing"),
      integer("train", "split_seed", c.split.seed, "episode split seed"),
      real("explain", "top_frac", c.explain.top_frac, "fraction of map entries kept by the gate"),
      {"explain", "class", "class whose evidence is mapped (stable|unstable)",
       [&c] { return std::string(label_name(c.explain.cls)); },
       [&c](const std::string& str) {
         try {
           c.explain.cls = parse_label(str);
         } catch (const ValidationError& e) {
           throw FormatError(std::string("explain.class: ") + e.what());
         }
       }},
      {"explain", "gate_scope", "gate threshold per sample or pooled over the run (sample|run)",
       [&c] { return std::string(c.explain.gate_scope == GateScope::Sample ? "sample" : "run"); },
       [&c](const std::string& str) {
         if (str == "sample") c.explain.gate_scope = GateScope::Sample;
         else if (str == "run") c.explain.gate_scope = GateScope::Run;
         else throw FormatError("explain.gate_scope must be 'sample' or 'run'");
       }},
      real("explain", "dilate_r", c.explain.dilate_r, "pointing-game box dilation, px"),
  };
  return b;
}

}  // namespace

std::vector<KeyDoc> documented_keys() {
  Config c;
  std::vector<KeyDoc> out;
  for (const auto& b : bindings(c)) out.push_back({b.section, b.key, b.get(), b.doc});
  return out;
}

void validate(const Config& cfg) {
  sim::validate(cfg.sim);
  if (!(cfg.flow.alpha > 0.0)) throw ValidationError("flow.alpha must be positive");
  if (cfg.flow.iterations < 1) throw ValidationError("flow.iterations must be >= 1");
  pipeline::validate(cfg.sampling, cfg.sim.frame_dt);
  model::validate(cfg.model);
  train::validate(cfg.train);
  if (cfg.split.train <= 0.0 || cfg.split.val < 0.0 || cfg.split.test < 0.0 ||
      std::abs(cfg.split.train + cfg.split.val + cfg.split.test - 1.0) > 1e-9)
    throw ValidationError("train fractions must be non-negative and sum to 1");
  gradcam::gate_rank(1, cfg.explain.top_frac);
  if (cfg.explain.dilate_r < 0.0) throw ValidationError("explain.dilate_r must be non-negative");
}

Config parse(const std::string& text) {
  Config c;
  auto table = bindings(c);
  std::set<std::string> sections;
  for (const auto& b : table) sections.insert(b.section);
  std::string section;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) throw FormatError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + "expected key = value");
    if (section.empty()) throw FormatError(where + "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (auto& b : table)
      if (b.section == section && b.key == key) {
        try {
          b.set(value);
        } catch (const FormatError& e) {
          throw FormatError(where + e.what());
        }
        found = true;
        break;
      }
    if (!found) throw FormatError(where + "unknown key '" + key + "' in [" + section + "]");
  }
  validate(c);
  return c;
}

std::string serialize(const Config& cfg) {
  Config c = cfg;
  std::string out, section;
  for (const auto& b : bindings(c)) {
    if (b.section != section) {
      out += (section.empty() ? "[" : "\n[") + b.section + "]\n";
      section = b.section;
    }
    out += b.key + " = " + b.get() + "\n";
  }
  return out;
}

Config load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

}  // namespace swarmcam::config
