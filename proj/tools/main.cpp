#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>

#include "vsseg/cost.hpp"
#include "vsseg/errors.hpp"
#include "vsseg/mar.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/params_io.hpp"
#include "vsseg/pipeline.hpp"
#include "vsseg/run_config.hpp"
#include "vsseg/selftest.hpp"
#include "vsseg/synthetic.hpp"
#include "vsseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSelftest = 3;

struct GlobalFlags {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

vsseg::RunConfig load_config(const GlobalFlags& g) {
  if (g.config_path.empty()) throw vsseg::ConfigError("--config is required");
  vsseg::RunConfig cfg;
  try {
    cfg = vsseg::parse_run_config(g.config_path);
  } catch (const vsseg::IoError& e) {
    // an unreadable config is a usage problem, not a data problem
    throw vsseg::ConfigError(e.what());
  }
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_override.empty()) cfg.out_dir = g.out_override;
  cfg.finalize();
  return cfg;
}

void write_metrics(const std::vector<vsseg::MetricsRecord>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw vsseg::IoError("cannot open metrics log for writing: " + path);
  for (const vsseg::MetricsRecord& r : log) {
    json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["split"] = r.split;
    j["miou"] = r.miou;
    os << j.dump() << "\n";
  }
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03d.pgm", index);
  return buf;
}

int cmd_train(const GlobalFlags& g) {
  vsseg::RunConfig cfg = load_config(g);
  fs::create_directories(cfg.out_dir);
  vsseg::SyntheticSet data = vsseg::generate_synthetic(cfg.seed, cfg.data);
  vsseg::TrainResult result = vsseg::train_multistage(data, cfg.model, cfg.train);
  vsseg::save_params(result.params, cfg.params_path());
  vsseg::save_bank(result.bank, cfg.bank_path());
  write_metrics(result.log, cfg.out_dir + "/metrics.jsonl");
  for (const vsseg::MetricsRecord& r : result.log) {
    json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["split"] = r.split;
    j["miou"] = r.miou;
    std::cout << j.dump() << "\n";
  }
  return kExitOk;
}

int cmd_infer(const GlobalFlags& g, const std::string& params_opt, const std::string& bank_opt,
              const std::string& split, int clip_index) {
  vsseg::RunConfig cfg = load_config(g);
  const std::string params_path = params_opt.empty() ? cfg.params_path() : params_opt;
  const std::string bank_path = bank_opt.empty() ? cfg.bank_path() : bank_opt;
  vsseg::ParamStore params = vsseg::load_params(params_path);
  vsseg::MemoryBank bank = vsseg::load_bank(bank_path);
  vsseg::SyntheticSet data = vsseg::generate_synthetic(cfg.seed, cfg.data);
  const auto& clips = split == "train" ? data.train : data.val;
  if (clip_index < 0 || clip_index >= static_cast<int>(clips.size())) {
    throw vsseg::ConfigError("--clip " + std::to_string(clip_index) + " out of range; " + split +
                             " split has " + std::to_string(clips.size()) + " clips");
  }
  const vsseg::SyntheticClip& clip = clips[static_cast<std::size_t>(clip_index)];
  fs::create_directories(cfg.out_dir);
  auto maps = vsseg::sliding_window_infer(clip.frames, cfg.model, params, &bank,
                                          vsseg::InferOptions{});
  vsseg::ConfusionAccumulator acc(cfg.model.classes);
  std::ofstream log(cfg.out_dir + "/infer_metrics.jsonl");
  if (!log) throw vsseg::IoError("cannot open infer log for writing");
  for (std::size_t t = 0; t < maps.size(); ++t) {
    vsseg::write_pgm(maps[t], cfg.model.classes, cfg.out_dir + "/" + frame_name(static_cast<int>(t)));
    acc.add(maps[t], clip.labels[t]);
    json j;
    j["frame"] = t;
    j["miou"] = vsseg::miou(maps[t], clip.labels[t], cfg.model.classes).miou;
    log << j.dump() << "\n";
  }
  json j;
  j["split"] = split;
  j["clip"] = clip_index;
  j["frames"] = maps.size();
  j["miou"] = acc.result().miou;
  log << j.dump() << "\n";
  std::cout << j.dump() << "\n";
  return kExitOk;
}

int cmd_build_memory(const GlobalFlags& g, const std::string& params_opt,
                     const std::string& bank_out) {
  vsseg::RunConfig cfg = load_config(g);
  const std::string params_path = params_opt.empty() ? cfg.params_path() : params_opt;
  vsseg::ParamStore params = vsseg::load_params(params_path);
  vsseg::SyntheticSet data = vsseg::generate_synthetic(cfg.seed, cfg.data);
  vsseg::MemoryBank bank = vsseg::build_bank_for_dataset(data, cfg.model, params, true);
  const std::string out = bank_out.empty() ? cfg.bank_path() : bank_out;
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  vsseg::save_bank(bank, out);
  json j;
  j["bank"] = out;
  j["classes"] = bank.C;
  j["keys"] = bank.C * bank.KL;
  std::cout << j.dump() << "\n";
  return kExitOk;
}

json attention_record(const char* instance, const vsseg::AttentionCost& c) {
  json j;
  j["record"] = "attention";
  j["instance"] = instance;
  j["dense_affinity_entries"] = c.dense_affinity_entries;
  j["icsa_long_entries"] = c.long_affinity_entries;
  j["icsa_short_entries"] = c.short_affinity_entries;
  j["icsa_total_entries"] = c.icsa_total_affinity_entries;
  j["icsa_peak_entries"] = c.icsa_peak_affinity_entries;
  j["dense_macs"] = c.dense_macs;
  j["icsa_macs"] = c.icsa_macs;
  return j;
}

int cmd_bench(const GlobalFlags& g, vsseg::CostInputs in, bool sweep) {
  if (!g.config_path.empty()) {
    vsseg::RunConfig cfg = load_config(g);
    in.d = cfg.model.stf.d;
    in.heads = cfg.model.stf.heads;
    in.d_ff = cfg.model.stf.d_ff;
    in.layers = cfg.model.stf.layers;
    in.classes = cfg.model.classes;
    in.k_l = cfg.model.k_l;
    in.mar_d_ff = cfg.model.mar.d_ff;
  }
  const vsseg::CostReport r = vsseg::estimate_cost(in);
  json a;
  a["record"] = "assumptions";
  a["d"] = in.d;
  a["frames"] = in.T;
  a["height"] = in.H;
  a["width"] = in.W;
  a["partition_h"] = in.partition.bh;
  a["partition_w"] = in.partition.bw;
  a["heads"] = in.heads;
  a["d_ff"] = in.d_ff;
  a["layers"] = in.layers;
  a["classes"] = in.classes;
  a["k_l"] = in.k_l;
  a["mar_d_ff"] = in.mar_d_ff;
  std::cout << a.dump() << "\n";
  std::cout << attention_record("encoder_self", r.encoder_self).dump() << "\n";
  std::cout << attention_record("decoder_self", r.decoder_self).dump() << "\n";
  std::cout << attention_record("decoder_cross", r.decoder_cross).dump() << "\n";
  json m;
  m["record"] = "modules";
  m["stf_macs_icsa"] = r.stf_macs_icsa;
  m["stf_macs_dense"] = r.stf_macs_dense;
  m["mar_macs"] = r.mar_macs;
  m["classifier_macs"] = r.classifier_macs;
  std::cout << m.dump() << "\n";
  json s;
  s["record"] = "summary";
  s["dense_peak_affinity_entries"] = r.dense_peak_affinity_entries;
  s["icsa_peak_affinity_entries"] = r.icsa_peak_affinity_entries;
  s["affinity_reduction_factor"] = r.affinity_reduction_factor;
  std::cout << s.dump() << "\n";
  if (sweep) {
    for (const auto& [p, c] : vsseg::sweep_partitions(in)) {
      json row;
      row["record"] = "sweep";
      row["partition_h"] = p.bh;
      row["partition_w"] = p.bw;
      row["icsa_total_entries"] = c.icsa_total_affinity_entries;
      row["icsa_peak_entries"] = c.icsa_peak_affinity_entries;
      row["icsa_macs"] = c.icsa_macs;
      std::cout << row.dump() << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial-temporal fusion and memory refinement workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "configuration file");
  auto* seed_opt = app.add_option("--seed", g.seed, "root seed override");
  app.add_option("--out", g.out_override, "output directory override");

  auto* train = app.add_subcommand("train", "run the multi-stage training schedule");
  auto* infer = app.add_subcommand("infer", "segment a synthetic clip with trained artifacts");
  std::string params_opt, bank_opt, split = "val", bank_out;
  int clip_index = 0;
  infer->add_option("--params", params_opt, "params file (default: out dir)");
  infer->add_option("--bank", bank_opt, "memory bank file (default: out dir)");
  infer->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  infer->add_option("--clip", clip_index, "clip index within the split");
  auto* build = app.add_subcommand("build-memory", "construct the key-value memory bank");
  build->add_option("--params", params_opt, "params file (default: out dir)");
  build->add_option("--bank-out", bank_out, "bank output path (default: out dir)");
  auto* bench = app.add_subcommand("bench", "attention cost estimates");
  vsseg::CostInputs bench_in;
  bool sweep = false;
  bench->add_option("--frames", bench_in.T, "temporal extent");
  bench->add_option("--height", bench_in.H, "feature height");
  bench->add_option("--width", bench_in.W, "feature width");
  bench->add_option("--partition-h", bench_in.partition.bh, "block grid rows");
  bench->add_option("--partition-w", bench_in.partition.bw, "block grid cols");
  bench->add_option("--d", bench_in.d, "feature dim");
  bench->add_flag("--sweep", sweep, "emit one record per valid block grid");
  auto* selftest = app.add_subcommand("selftest", "run the invariant suite");
  bool inject_fault = false;
  selftest->add_flag("--inject-fault", inject_fault, "flip a permutation index (harness test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (train->parsed()) return cmd_train(g);
    if (infer->parsed()) return cmd_infer(g, params_opt, bank_opt, split, clip_index);
    if (build->parsed()) return cmd_build_memory(g, params_opt, bank_out);
    if (bench->parsed()) return cmd_bench(g, bench_in, sweep);
    if (selftest->parsed()) {
      return vsseg::run_selftest(inject_fault, std::cout) ? kExitOk : kExitSelftest;
    }
  } catch (const vsseg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
