#pragma once

#include <cstdint>
#include <string>

#include "vsseg/pipeline.hpp"
#include "vsseg/synthetic.hpp"
#include "vsseg/train.hpp"

namespace vsseg {

/// Validated experiment configuration: sectioned key=value file plus
/// command-line overrides (flags win). All problems are reported in one
/// aggregated ConfigError.
struct RunConfig {
  ModelConfig model;
  SyntheticConfig data;
  TrainSchedule train;
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  std::string params_file = "params.ntc";
  std::string bank_file = "bank.marb";

  /// Re-derives coupled fields (shared feature dim, class count, seed)
  /// and checks every constraint.
  void finalize();

  std::string params_path() const { return out_dir + "/" + params_file; }
  std::string bank_path() const { return out_dir + "/" + bank_file; }
};

RunConfig parse_run_config(const std::string& path);

}  // namespace vsseg
