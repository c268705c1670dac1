#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moincl/types.hpp"

namespace moincl {

struct ModelDims {
  int embed = 128;
  int layers = 2;
  int heads = 4;
  int context = 64;
  int rank = 8;
  /// Width of the frozen encoder output per slot.
  int feature = 32;

  void validate() const;
  int head_dim() const { return embed / heads; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct SplitSizes {
  int train = 200;
  int val = 50;
  int test = 50;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

enum class QaBackendKind { GrammarOracle, LmPrompted };
std::string_view to_string(QaBackendKind k);
QaBackendKind parse_qa_backend(std::string_view s);

enum class ForgetAveraging { ExcludeFinal, AllTasks };
std::string_view to_string(ForgetAveraging a);
ForgetAveraging parse_forget_averaging(std::string_view s);

/// Per-task overrides of the method scalars; unset fields fall back to the run defaults.
struct TaskOverrides {
  std::optional<double> lambda_p;
  std::optional<double> lambda_p_prime;
  std::optional<double> alpha;
  friend bool operator==(const TaskOverrides&, const TaskOverrides&) = default;
};

struct RunConfig {
  std::vector<TaskDescriptor> task_order;
  Method method = Method::Moincl;
  double lambda_p = 1.0;
  double lambda_p_prime = 1.0;
  /// Unset: 0.999 under PER_STEP, 0.5 under END_OF_TASK.
  std::optional<double> alpha;
  FusionMode fusion_mode = FusionMode::PerStep;
  std::map<int, TaskOverrides> task_overrides;

  double learning_rate = 1e-3;
  double weight_decay = 0.05;
  int epochs_per_task = 3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double ewc_lambda = 100.0;
  double lwf_weight = 1.0;
  int fisher_batches = 8;

  SplitSizes sizes;
  std::uint64_t data_seed = 0;

  ModelDims dims;
  int pretrain_steps = 300;
  double pretrain_learning_rate = 3e-3;
  int pretrain_batch_size = 16;

  QaBackendKind qa_backend = QaBackendKind::GrammarOracle;
  std::string instruction_path;
  int instruction_count = 512;
  int eval_max_len = 24;
  ForgetAveraging forget_averaging = ForgetAveraging::ExcludeFinal;

  void validate() const;

  double lambda_p_for(int task_index) const;
  double lambda_p_prime_for(int task_index) const;
  /// Effective fusion weight; honours overrides and the fusion-mode default.
  double alpha_for(int task_index) const;
  /// Fusion mode actually applied by `method` (EWF is always END_OF_TASK).
  FusionMode effective_fusion_mode() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Canonical field order. Parsing then dumping canonical output is byte-identical.
nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
std::string dump_canonical(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// The six-task desk order IMG-CAP, VID-CAP, VID-QA, IMG-QA, AUD-CAP, AUD-QA.
std::vector<TaskDescriptor> default_task_order(int n_samples = 200);
/// Parses "IMG-CAP,VID-QA,..." into descriptors with 1-based indices.
std::vector<TaskDescriptor> parse_task_order(std::string_view spec, int n_samples);

}  // namespace moincl
