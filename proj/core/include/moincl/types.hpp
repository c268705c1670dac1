#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "moincl/scene.hpp"

namespace moincl {

enum class TaskType { Captioning, QA };
enum class Method { Finetune, Lwf, Ewc, Ewf, Moincl };
enum class FusionMode { PerStep, EndOfTask, Off };

inline constexpr std::array<TaskType, 2> kAllTaskTypes{TaskType::Captioning, TaskType::QA};

std::string_view to_string(TaskType t);
std::string_view to_string(Method m);
std::string_view to_string(FusionMode f);

TaskType parse_task_type(std::string_view s);
Method parse_method(std::string_view s);
FusionMode parse_fusion_mode(std::string_view s);

/// One incremental task of a run. `index` is the 1-based position in the order.
struct TaskDescriptor {
  int index = 1;
  Modality modality = Modality::Image;
  TaskType task_type = TaskType::Captioning;
  std::string dataset_id;
  int n_samples = 1;

  void validate() const;
  /// Short label such as "IMG-CAP".
  std::string label() const;

  friend bool operator==(const TaskDescriptor&, const TaskDescriptor&) = default;
};

/// (x, t, y) triple. `caption` holds the rendered caption of the same scene
/// for every sample; QA-task training uses it as the pseudo-caption target.
struct Sample {
  Scene modality_input;
  std::string input_text;
  std::string target_text;
  std::string caption;
};

struct PseudoSample {
  Scene modality_input;
  std::string pseudo_input_text;
  std::string pseudo_target_text;
  TaskType source_task_type = TaskType::Captioning;
};

}  // namespace moincl
