#include "vsseg/train.hpp"

#include <algorithm>

#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const std::string& p : prefixes) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

}  // namespace

MultiStageTrainer::MultiStageTrainer(const SyntheticSet& data, const ModelConfig& model,
                                     const TrainSchedule& sched)
    : data_(data), model_(model), sched_(sched), seeds_(sched.seed) {
  if (data_.train.empty() || data_.val.empty()) {
    throw ContractError("trainer needs non-empty train and val splits");
  }
  const int H = data_.train[0].H, W = data_.train[0].W;
  init_backbone_params(params_, model_.backbone, seeds_);
  init_classifier_params(params_, model_.backbone.d, model_.classes, seeds_, "stage1");
  init_stf_params(params_, model_.stf, H, W, seeds_);
  init_mar_params(params_, model_.mar, seeds_);
}

const MemoryBank& MultiStageTrainer::bank() const {
  if (!bank_) throw ContractError("memory bank has not been built");
  return *bank_;
}

void MultiStageTrainer::sgd_step(ModelCtx& ctx, const std::vector<std::string>& prefixes) {
  for (const auto& [name, leaf] : ctx.leaves) {
    if (!has_prefix(name, prefixes)) continue;
    Tensor& t = params_.at(name);
    const Tensor& g = leaf.grad();
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= sched_.lr * g.data[i];
  }
}

std::vector<MultiStageTrainer::WindowRef> MultiStageTrainer::shuffled_windows(
    const std::string& stream, int count) {
  std::vector<WindowRef> all;
  for (int c = 0; c < static_cast<int>(data_.train.size()); ++c) {
    for (int t = 0; t < static_cast<int>(data_.train[static_cast<std::size_t>(c)].frames.size());
         ++t) {
      all.push_back({c, t});
    }
  }
  auto g = seeds_.stream(stream);
  std::vector<WindowRef> order;
  order.reserve(static_cast<std::size_t>(count));
  std::vector<WindowRef> epoch = all;
  while (static_cast<int>(order.size()) < count) {
    std::shuffle(epoch.begin(), epoch.end(), g);
    for (const WindowRef& w : epoch) {
      if (static_cast<int>(order.size()) == count) break;
      order.push_back(w);
    }
  }
  return order;
}

void MultiStageTrainer::run_stage1() {
  if (stage_done_ != 0) throw ContractError("stage 1 must run first");
  for (const WindowRef& w : shuffled_windows("stage1/order", sched_.stage1_steps)) {
    const SyntheticClip& clip = data_.train[static_cast<std::size_t>(w.clip)];
    Tape tape;
    ModelCtx ctx{tape, params_, {}, {}};
    Value feats = backbone_forward(ctx, model_.backbone, clip.frames[static_cast<std::size_t>(w.frame)]);
    Value logits = classifier_forward(ctx, feats);
    Value loss = cross_entropy_mean(logits, clip.labels[static_cast<std::size_t>(w.frame)].labels);
    tape.backward(loss);
    sgd_step(ctx, {"backbone.", "classifier."});
  }
  stage_done_ = 1;
  log_stage(1, sched_.stage1_steps, InferOptions{false, false});
}

void MultiStageTrainer::ensure_feature_cache() {
  if (!feature_cache_.empty()) return;
  for (const SyntheticClip& clip : data_.train) {
    std::vector<Tensor> per_frame;
    for (const Tensor& f : clip.frames) {
      Tape tape;
      ModelCtx ctx{tape, params_, {}, {}};
      per_frame.push_back(backbone_forward(ctx, model_.backbone, f).val());
    }
    feature_cache_.push_back(std::move(per_frame));
  }
}

void MultiStageTrainer::run_stage2() {
  if (stage_done_ != 1) throw ContractError("stage 2 requires a completed stage 1");
  ensure_feature_cache();  // backbone is frozen from here on
  init_classifier_params(params_, model_.backbone.d, model_.classes, seeds_, "stage2");
  const int H = data_.train[0].H, W = data_.train[0].W;
  const VolumeDims dims{model_.backbone.d, 1, H, W};
  for (const WindowRef& w : shuffled_windows("stage2/order", sched_.stage2_steps)) {
    const auto& feats = feature_cache_[static_cast<std::size_t>(w.clip)];
    const int last = static_cast<int>(feats.size()) - 1;
    Tape tape;
    ModelCtx ctx{tape, params_, {}, {}};
    TokenVolume prev{dims, tape.leaf(feats[static_cast<std::size_t>(std::max(0, w.frame - 1))])};
    TokenVolume cur{dims, tape.leaf(feats[static_cast<std::size_t>(w.frame)])};
    TokenVolume next{dims, tape.leaf(feats[static_cast<std::size_t>(std::min(last, w.frame + 1))])};
    TokenVolume fused = stf_forward(ctx, model_.stf, prev, cur, next);
    Value logits = classifier_forward(ctx, fused.tokens);
    Value loss = cross_entropy_mean(
        logits, data_.train[static_cast<std::size_t>(w.clip)].labels[static_cast<std::size_t>(w.frame)].labels);
    tape.backward(loss);
    sgd_step(ctx, {"stf.", "classifier."});
  }
  stage_done_ = 2;
  log_stage(2, sched_.stage2_steps, InferOptions{true, false});
}

std::vector<std::vector<Tensor>> MultiStageTrainer::fuse_train_features() {
  ensure_feature_cache();
  const int H = data_.train[0].H, W = data_.train[0].W;
  const VolumeDims dims{model_.backbone.d, 1, H, W};
  std::vector<std::vector<Tensor>> fused;
  for (const auto& feats : feature_cache_) {
    std::vector<Tensor> per_frame;
    const int last = static_cast<int>(feats.size()) - 1;
    for (int t = 0; t <= last; ++t) {
      Tape tape;
      ModelCtx ctx{tape, params_, {}, {}};
      TokenVolume prev{dims, tape.leaf(feats[static_cast<std::size_t>(std::max(0, t - 1))])};
      TokenVolume cur{dims, tape.leaf(feats[static_cast<std::size_t>(t)])};
      TokenVolume next{dims, tape.leaf(feats[static_cast<std::size_t>(std::min(last, t + 1))])};
      per_frame.push_back(stf_forward(ctx, model_.stf, prev, cur, next).tokens.val());
    }
    fused.push_back(std::move(per_frame));
  }
  return fused;
}

MemoryBank MultiStageTrainer::bank_from(const std::vector<std::vector<Tensor>>& features) {
  const int d = model_.backbone.d;
  int rows = 0;
  for (const auto& clip : features) rows += static_cast<int>(clip.size()) * features[0][0].shape[0];
  Tensor all = Tensor::zeros({rows, d});
  Tensor logits = Tensor::zeros({rows, model_.classes});
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(rows));
  int row = 0;
  for (std::size_t c = 0; c < features.size(); ++c) {
    for (std::size_t t = 0; t < features[c].size(); ++t) {
      const Tensor& f = features[c][t];
      Tape tape;
      ModelCtx ctx{tape, params_, {}, {}};
      const Tensor lg = classifier_forward(ctx, tape.leaf(f)).val();
      std::copy(f.data.begin(), f.data.end(),
                all.data.begin() + static_cast<std::size_t>(row) * d);
      std::copy(lg.data.begin(), lg.data.end(),
                logits.data.begin() + static_cast<std::size_t>(row) * model_.classes);
      const auto& gt = data_.train[c].labels[t].labels;
      labels.insert(labels.end(), gt.begin(), gt.end());
      row += f.shape[0];
    }
  }
  return build_memory(all, labels, logits, model_.k_l, model_.k_h);
}

void MultiStageTrainer::build_bank() {
  if (stage_done_ < 2) throw ContractError("memory bank needs the stage-2 model");
  if (fused_cache_.empty()) fused_cache_ = fuse_train_features();
  bank_ = bank_from(fused_cache_);
}

void MultiStageTrainer::train_refiner(const std::vector<std::vector<Tensor>>& features,
                                      const MemoryBank& bank, const std::string& stage_tag,
                                      int steps) {
  init_classifier_params(params_, model_.backbone.d, model_.classes, seeds_, stage_tag);
  for (const WindowRef& w : shuffled_windows(stage_tag + "/order", steps)) {
    Tape tape;
    ModelCtx ctx{tape, params_, {}, {}};
    Value f = tape.leaf(features[static_cast<std::size_t>(w.clip)][static_cast<std::size_t>(w.frame)]);
    Value refined = mar_refine(ctx, model_.mar, f, bank);
    Value logits = classifier_forward(ctx, refined);
    Value loss = cross_entropy_mean(
        logits, data_.train[static_cast<std::size_t>(w.clip)].labels[static_cast<std::size_t>(w.frame)].labels);
    tape.backward(loss);
    sgd_step(ctx, {"mar.", "classifier."});
  }
}

void MultiStageTrainer::run_stage3() {
  if (stage_done_ != 2) throw ContractError("stage 3 requires a completed stage 2");
  if (!bank_) throw ContractError("stage 3 requires a memory bank; run build_bank() first");
  if (fused_cache_.empty()) fused_cache_ = fuse_train_features();
  train_refiner(fused_cache_, *bank_, "stage3", sched_.stage3_steps);
  stage_done_ = 3;
  log_stage(3, sched_.stage3_steps, InferOptions{true, true});
}

double MultiStageTrainer::run_mar_only_arm() {
  if (stage_done_ != 1) throw ContractError("the MAR-only arm trains on the stage-1 model");
  ensure_feature_cache();
  // Snapshot everything this arm touches so the main schedule is unchanged.
  std::map<std::string, Tensor> saved;
  for (const auto& [name, t] : params_.tensors) {
    if (has_prefix(name, {"mar.", "classifier."})) saved.emplace(name, t);
  }
  MemoryBank arm_bank = bank_from(feature_cache_);
  train_refiner(feature_cache_, arm_bank, "mar_arm", sched_.stage3_steps);
  std::optional<MemoryBank> main_bank = std::move(bank_);
  bank_ = std::move(arm_bank);
  const double result = eval_miou(true, InferOptions{false, true});
  bank_ = std::move(main_bank);
  for (auto& [name, t] : saved) params_.tensors[name] = std::move(t);
  return result;
}

double MultiStageTrainer::eval_miou(bool val_split, const InferOptions& opts) {
  const auto& clips = val_split ? data_.val : data_.train;
  ConfusionAccumulator acc(model_.classes);
  for (const SyntheticClip& clip : clips) {
    const MemoryBank* bank_ptr = bank_ ? &*bank_ : nullptr;
    auto maps = sliding_window_infer(clip.frames, model_, params_, bank_ptr, opts);
    for (std::size_t t = 0; t < maps.size(); ++t) acc.add(maps[t], clip.labels[t]);
  }
  return acc.result().miou;
}

void MultiStageTrainer::log_stage(int stage, int steps, const InferOptions& opts) {
  const int windows = static_cast<int>(data_.train.size()) *
                      static_cast<int>(data_.train[0].frames.size());
  const int epoch = (steps + windows - 1) / windows;
  log_.push_back({stage, epoch, "train", eval_miou(false, opts)});
  log_.push_back({stage, epoch, "val", eval_miou(true, opts)});
}

TrainResult train_multistage(const SyntheticSet& data, const ModelConfig& model,
                             const TrainSchedule& sched) {
  MultiStageTrainer t(data, model, sched);
  t.run_stage1();
  t.run_stage2();
  t.build_bank();
  t.run_stage3();
  return TrainResult{std::move(t.params()), t.bank(), t.log()};
}

MemoryBank build_bank_for_dataset(const SyntheticSet& data, const ModelConfig& model,
                                  ParamStore& params, bool use_stf) {
  if (data.train.empty()) throw ContractError("bank construction needs a train split");
  const int H = data.train[0].H, W = data.train[0].W;
  const int d = model.backbone.d;
  const VolumeDims dims{d, 1, H, W};
  int rows = 0;
  for (const SyntheticClip& clip : data.train) rows += static_cast<int>(clip.frames.size()) * H * W;
  Tensor all = Tensor::zeros({rows, d});
  Tensor logits = Tensor::zeros({rows, model.classes});
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(rows));
  int row = 0;
  for (const SyntheticClip& clip : data.train) {
    std::vector<Tensor> feats;
    for (const Tensor& f : clip.frames) {
      Tape tape;
      ModelCtx ctx{tape, params, {}, {}};
      feats.push_back(backbone_forward(ctx, model.backbone, f).val());
    }
    const int last = static_cast<int>(feats.size()) - 1;
    for (int t = 0; t <= last; ++t) {
      Tape tape;
      ModelCtx ctx{tape, params, {}, {}};
      Value f;
      if (use_stf) {
        TokenVolume prev{dims, tape.leaf(feats[static_cast<std::size_t>(std::max(0, t - 1))])};
        TokenVolume cur{dims, tape.leaf(feats[static_cast<std::size_t>(t)])};
        TokenVolume next{dims, tape.leaf(feats[static_cast<std::size_t>(std::min(last, t + 1))])};
        f = stf_forward(ctx, model.stf, prev, cur, next).tokens;
      } else {
        f = tape.leaf(feats[static_cast<std::size_t>(t)]);
      }
      const Tensor fv = f.val();
      const Tensor lg = classifier_forward(ctx, f).val();
      std::copy(fv.data.begin(), fv.data.end(),
                all.data.begin() + static_cast<std::size_t>(row) * d);
      std::copy(lg.data.begin(), lg.data.end(),
                logits.data.begin() + static_cast<std::size_t>(row) * model.classes);
      const auto& gt = clip.labels[static_cast<std::size_t>(t)].labels;
      labels.insert(labels.end(), gt.begin(), gt.end());
      row += H * W;
    }
  }
  return build_memory(all, labels, logits, model.k_l, model.k_h);
}

AblationResult run_ablation(const SyntheticSet& data, const ModelConfig& model,
                            const TrainSchedule& sched) {
  MultiStageTrainer t(data, model, sched);
  AblationResult r;
  t.run_stage1();
  r.baseline = t.eval_miou(true, InferOptions{false, false});
  r.with_mar = t.run_mar_only_arm();
  t.run_stage2();
  r.with_stf = t.eval_miou(true, InferOptions{true, false});
  t.build_bank();
  t.run_stage3();
  r.with_both = t.eval_miou(true, InferOptions{true, true});
  return r;
}

}  // namespace vsseg
