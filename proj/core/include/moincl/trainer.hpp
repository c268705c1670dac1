#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moincl/config.hpp"
#include "moincl/ikd.hpp"
#include "moincl/learned_state.hpp"
#include "moincl/losses.hpp"
#include "moincl/metrics.hpp"
#include "moincl/model.hpp"
#include "moincl/ptgm.hpp"
#include "moincl/syndata.hpp"
#include "moincl/text.hpp"

namespace moincl {

struct StepRecord {
  int task = 0;
  long step = 0;
  double l_main = 0.0;
  double l_p = 0.0;
  double l_ins = 0.0;
  double aux = 0.0;  // LwF distillation or EWC penalty
  double total = 0.0;
  double lr = 0.0;
  int pseudo_count = 0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  /// Wall-clock seconds per task, indexed by task - 1.
  std::vector<double> task_seconds;

  /// One JSON object per step, then one per task timing.
  std::string to_jsonl() const;
};

/// Inputs of one optimisation step's objective.
struct StepTerms {
  std::span<const Sample> batch;
  std::vector<PseudoSample> pseudo;
  std::vector<std::vector<int>> instructions;  // encoded; empty disables L_ins
  double lambda_p = 1.0;
  double lambda_p_prime = 1.0;
  double lwf_weight = 0.0;  // > 0 adds KL(current || old) on the batch
  const FisherDiag* fisher = nullptr;
  double ewc_lambda = 0.0;
};

struct StepLosses {
  double l_main = 0.0;
  double l_p = 0.0;
  double l_ins = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

/// Value of L_main + L_p + L_ins + aux for `model`. When `grads` is given the
/// gradient for `selection` is accumulated into it. `old` is required whenever
/// a term compares against the previous model.
StepLosses step_objective(const ModelState& model, const ModelState* old, const Vocabulary& vocab,
                          const StepTerms& terms, const TrainableSelection& selection,
                          GradMap* grads);
/// Same, reading the previous model's outputs through a memo.
StepLosses step_objective(const ModelState& model, FrozenOutputs* old, const Vocabulary& vocab,
                          const StepTerms& terms, const TrainableSelection& selection,
                          GradMap* grads);

/// Parameters updated while training a task of modality `m`.
TrainableSelection task_selection(Modality m);

/// Mean squared batch gradient of the task loss over `n_batches` batches.
FisherDiag estimate_fisher(const ModelState& model, const TaskDataset& dataset,
                           const Vocabulary& vocab, int n_batches, int batch_size,
                           std::uint64_t seed);

/// Frozen vocabulary, instruction set and text-pretrained base shared by runs
/// with the same seed, dims and pre-training settings.
struct BaseModel {
  Vocabulary vocab;
  InstructionSet instructions;
  ModelState state;
};

/// Words of the grammar, the instruction set and the QA prompt templates.
Vocabulary run_vocabulary(const InstructionSet& instructions);
InstructionSet run_instructions(const RunConfig& cfg);
/// Trains the LM base on the instruction set (text-only, base tensors only).
BaseModel prepare_base(const RunConfig& cfg, TrainLog* log = nullptr);

/// Cross-method state carried between tasks.
struct StrategyState {
  FisherDiag fisher;  // EWC, accumulated over tasks
};

using BatchObserver = std::function<void(int task, std::span<const Sample> batch)>;

struct TaskContext {
  const TaskDescriptor& task;
  const TaskDataset& dataset;
  const LearnedState& learned;  // state at task start
  const RunConfig& cfg;
  const Vocabulary& vocab;
  const InstructionSet& instructions;
  BatchObserver observer;
};

/// Trains `model` on one task. `old` is the snapshot taken before the task
/// (required for i > 1 by MOINCL, LWF and EWF). Appends to `log`.
void train_task(ModelState& model, const Snapshot& old, const TaskContext& ctx,
                StrategyState& strategy, TrainLog& log);

/// Test-split score: CIDEr x 100 for captioning, accuracy % for QA.
double evaluate_task(const ModelState& model, const TaskDataset& dataset, const Vocabulary& vocab,
                     int max_len);

struct RunOptions {
  /// Reused instead of pre-training again when set.
  const BaseModel* base = nullptr;
  /// Reused instead of generating from cfg.data_seed when set.
  const std::vector<TaskDataset>* datasets = nullptr;
  std::optional<std::filesystem::path> out_dir;
  bool checkpoints = false;
  BatchObserver observer;
  /// Called after each task's evaluation column is filled.
  std::function<void(int task, const ScoreMatrix&)> on_task_done;
};

struct RunResult {
  ModelState model;
  ScoreMatrix scores;
  TrainLog log;
  LearnedState learned;
};

/// For each task: snapshot, train, commit, evaluate tasks 1..i.
RunResult run_order(const RunConfig& cfg, const RunOptions& options = {});

}  // namespace moincl
