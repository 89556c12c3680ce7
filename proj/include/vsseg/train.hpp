#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vsseg/pipeline.hpp"

namespace vsseg {

struct TrainSchedule {
  int stage1_steps = 160;
  int stage2_steps = 200;
  int stage3_steps = 160;
  double lr = 0.3;
  std::uint64_t seed = 42;
};

struct MetricsRecord {
  int stage = 0;
  int epoch = 0;
  std::string split;
  double miou = 0.0;
};

/// Three-stage schedule: (1) backbone+classifier per frame, (2) backbone
/// frozen, classifier re-initialized, STF+classifier, (3) STF frozen,
/// classifier re-initialized, MAR+classifier against the frozen memory
/// bank built from stage-2 features. Stages must run in order.
class MultiStageTrainer {
 public:
  MultiStageTrainer(const SyntheticSet& data, const ModelConfig& model,
                    const TrainSchedule& sched);

  void run_stage1();
  void run_stage2();
  void build_bank();
  void run_stage3();

  /// Ablation arm: memory built from stage-1 backbone features, MAR and a
  /// fresh classifier trained on them. Restores every parameter it touched
  /// before returning, so the main schedule is unaffected. Returns val mIoU.
  double run_mar_only_arm();

  double eval_miou(bool val_split, const InferOptions& opts);

  ParamStore& params() { return params_; }
  const MemoryBank& bank() const;
  const std::vector<MetricsRecord>& log() const { return log_; }

 private:
  struct WindowRef {
    int clip = 0;
    int frame = 0;
  };

  void sgd_step(ModelCtx& ctx, const std::vector<std::string>& trainable_prefixes);
  std::vector<WindowRef> shuffled_windows(const std::string& stream, int count);
  void ensure_feature_cache();
  std::vector<std::vector<Tensor>> fuse_train_features();
  MemoryBank bank_from(const std::vector<std::vector<Tensor>>& features);
  void train_refiner(const std::vector<std::vector<Tensor>>& features, const MemoryBank& bank,
                     const std::string& stage_tag, int steps);
  void log_stage(int stage, int steps, const InferOptions& opts);

  SyntheticSet data_;
  ModelConfig model_;
  TrainSchedule sched_;
  SeedBank seeds_;
  ParamStore params_;
  std::optional<MemoryBank> bank_;
  std::vector<std::vector<Tensor>> feature_cache_;  // backbone features per train clip/frame
  std::vector<std::vector<Tensor>> fused_cache_;    // stage-2 STF outputs per train clip/frame
  std::vector<MetricsRecord> log_;
  int stage_done_ = 0;
};

struct TrainResult {
  ParamStore params;
  MemoryBank bank;
  std::vector<MetricsRecord> log;
};

TrainResult train_multistage(const SyntheticSet& data, const ModelConfig& model,
                             const TrainSchedule& sched);

struct AblationResult {
  double baseline = 0.0;
  double with_stf = 0.0;
  double with_mar = 0.0;
  double with_both = 0.0;
};

/// Trains the baseline plus the three enhanced arms on one dataset/seed.
AblationResult run_ablation(const SyntheticSet& data, const ModelConfig& model,
                            const TrainSchedule& sched);

/// Builds the key-value memory over the train split with the given model
/// state: features via backbone (and STF when use_stf), confidences via
/// the stored classifier.
MemoryBank build_bank_for_dataset(const SyntheticSet& data, const ModelConfig& model,
                                  ParamStore& params, bool use_stf);

}  // namespace vsseg
