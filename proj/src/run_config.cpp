#include "vsseg/run_config.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigScanner {
  std::vector<std::string> problems;

  void problem(const std::string& msg) { problems.push_back(msg); }

  bool parse_int(const std::string& key, const std::string& value, int& out) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      out = v;
      return true;
    } catch (const std::exception&) {
      problem(key + ": expected an integer, got '" + value + "'");
      return false;
    }
  }

  bool parse_u64(const std::string& key, const std::string& value, std::uint64_t& out) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      out = v;
      return true;
    } catch (const std::exception&) {
      problem(key + ": expected an unsigned integer, got '" + value + "'");
      return false;
    }
  }

  bool parse_double(const std::string& key, const std::string& value, double& out) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      out = v;
      return true;
    } catch (const std::exception&) {
      problem(key + ": expected a number, got '" + value + "'");
      return false;
    }
  }

  bool parse_activation(const std::string& key, const std::string& value, Activation& out) {
    if (value == "gelu") {
      out = Activation::Gelu;
      return true;
    }
    if (value == "relu") {
      out = Activation::Relu;
      return true;
    }
    problem(key + ": expected 'gelu' or 'relu', got '" + value + "'");
    return false;
  }
};

void apply_entry(RunConfig& cfg, ConfigScanner& sc, const std::string& section,
                 const std::string& key, const std::string& value) {
  const std::string full = section.empty() ? key : section + "." + key;
  if (section == "model") {
    if (key == "d") sc.parse_int(full, value, cfg.model.stf.d);
    else if (key == "heads") sc.parse_int(full, value, cfg.model.stf.heads);
    else if (key == "d_ff") sc.parse_int(full, value, cfg.model.stf.d_ff);
    else if (key == "layers") sc.parse_int(full, value, cfg.model.stf.layers);
    else if (key == "partition_h") sc.parse_int(full, value, cfg.model.stf.partition.bh);
    else if (key == "partition_w") sc.parse_int(full, value, cfg.model.stf.partition.bw);
    else if (key == "activation") sc.parse_activation(full, value, cfg.model.stf.activation);
    else if (key == "backbone_window") sc.parse_int(full, value, cfg.model.backbone.window);
    else sc.problem("unknown key '" + full + "'");
  } else if (section == "mar") {
    if (key == "k_l") sc.parse_int(full, value, cfg.model.k_l);
    else if (key == "k_h") sc.parse_int(full, value, cfg.model.k_h);
    else if (key == "d_ff") sc.parse_int(full, value, cfg.model.mar.d_ff);
    else sc.problem("unknown key '" + full + "'");
  } else if (section == "data") {
    if (key == "height") sc.parse_int(full, value, cfg.data.height);
    else if (key == "width") sc.parse_int(full, value, cfg.data.width);
    else if (key == "classes") sc.parse_int(full, value, cfg.data.classes);
    else if (key == "clip_length") sc.parse_int(full, value, cfg.data.clip_length);
    else if (key == "train_clips") sc.parse_int(full, value, cfg.data.train_clips);
    else if (key == "val_clips") sc.parse_int(full, value, cfg.data.val_clips);
    else if (key == "min_radius") sc.parse_int(full, value, cfg.data.min_radius);
    else if (key == "max_radius") sc.parse_int(full, value, cfg.data.max_radius);
    else if (key == "max_speed") sc.parse_int(full, value, cfg.data.max_speed);
    else if (key == "background_base") sc.parse_double(full, value, cfg.data.background_base);
    else if (key == "class_contrast") sc.parse_double(full, value, cfg.data.class_contrast);
    else if (key == "texture_amplitude") sc.parse_double(full, value, cfg.data.texture_amplitude);
    else if (key == "noise_stddev") sc.parse_double(full, value, cfg.data.noise_stddev);
    else sc.problem("unknown key '" + full + "'");
  } else if (section == "train") {
    if (key == "stage1_steps") sc.parse_int(full, value, cfg.train.stage1_steps);
    else if (key == "stage2_steps") sc.parse_int(full, value, cfg.train.stage2_steps);
    else if (key == "stage3_steps") sc.parse_int(full, value, cfg.train.stage3_steps);
    else if (key == "lr") sc.parse_double(full, value, cfg.train.lr);
    else if (key == "seed") sc.parse_u64(full, value, cfg.seed);
    else sc.problem("unknown key '" + full + "'");
  } else if (section == "paths") {
    if (key == "out_dir") cfg.out_dir = value;
    else if (key == "params") cfg.params_file = value;
    else if (key == "bank") cfg.bank_file = value;
    else sc.problem("unknown key '" + full + "'");
  } else {
    sc.problem("unknown section '" + section + "'");
  }
}

}  // namespace

void RunConfig::finalize() {
  // one shared feature dimension and class count across modules
  model.backbone.d = model.stf.d;
  model.mar.d = model.stf.d;
  model.mar.activation = model.stf.activation;
  model.classes = data.classes;
  train.seed = seed;

  std::vector<std::string> problems;
  auto require = [&problems](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  require(model.stf.d >= 1, "model.d must be >= 1");
  require(model.stf.heads >= 1, "model.heads must be >= 1");
  require(model.stf.heads < 1 || model.stf.d % model.stf.heads == 0,
          "model.heads must divide model.d");
  require(model.stf.d_ff >= model.stf.d, "model.d_ff must be >= model.d");
  require(model.stf.layers >= 1, "model.layers must be >= 1");
  require(model.stf.partition.bh >= 1 && model.stf.partition.bw >= 1,
          "model.partition extents must be >= 1");
  require(model.stf.partition.bh < 1 || data.height % model.stf.partition.bh == 0,
          "model.partition_h must divide data.height");
  require(model.stf.partition.bw < 1 || data.width % model.stf.partition.bw == 0,
          "model.partition_w must divide data.width");
  require(model.backbone.window >= 1 && model.backbone.window % 2 == 1,
          "model.backbone_window must be odd");
  require(model.mar.d_ff >= model.stf.d, "mar.d_ff must be >= model.d");
  require(model.k_l >= 1, "mar.k_l must be >= 1");
  require(model.k_h >= 1, "mar.k_h must be >= 1");
  require(data.classes >= 2, "data.classes must be >= 2");
  require(data.height >= 16 && data.width >= 16, "data frame must be at least 16x16");
  require(data.clip_length >= 1, "data.clip_length must be >= 1");
  require(data.train_clips >= 1, "data.train_clips must be >= 1");
  require(data.val_clips >= 1, "data.val_clips must be >= 1");
  require(data.min_radius >= 1 && data.max_radius >= data.min_radius,
          "data shape radius range invalid");
  require(data.max_speed >= 0 && data.max_speed <= 2, "data.max_speed must be in [0, 2]");
  require(data.noise_stddev >= 0.0, "data.noise_stddev must be >= 0");
  require(train.stage1_steps >= 1 && train.stage2_steps >= 1 && train.stage3_steps >= 1,
          "train stage steps must be >= 1");
  require(train.lr > 0.0, "train.lr must be > 0");
  require(!out_dir.empty() && !params_file.empty() && !bank_file.empty(),
          "paths must be non-empty");
  if (!problems.empty()) {
    std::string joined = "invalid configuration:";
    for (const std::string& p : problems) joined += "\n  - " + p;
    throw ConfigError(joined);
  }
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  RunConfig cfg;
  ConfigScanner sc;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        sc.problem("line " + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      sc.problem("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    apply_entry(cfg, sc, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!sc.problems.empty()) {
    std::string joined = "invalid configuration (" + path + "):";
    for (const std::string& p : sc.problems) joined += "\n  - " + p;
    throw ConfigError(joined);
  }
  cfg.finalize();
  return cfg;
}

}  // namespace vsseg
