#include "moincl/types.hpp"

#include <algorithm>
#include <cctype>

#include "moincl/error.hpp"

namespace moincl {
namespace {
std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}
}  // namespace

std::string_view to_string(TaskType t) { return t == TaskType::Captioning ? "CAP" : "QA"; }

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Finetune: return "FINETUNE";
    case Method::Lwf: return "LWF";
    case Method::Ewc: return "EWC";
    case Method::Ewf: return "EWF";
    case Method::Moincl: return "MOINCL";
  }
  return "?";
}

std::string_view to_string(FusionMode f) {
  switch (f) {
    case FusionMode::PerStep: return "PER_STEP";
    case FusionMode::EndOfTask: return "END_OF_TASK";
    case FusionMode::Off: return "OFF";
  }
  return "?";
}

TaskType parse_task_type(std::string_view s) {
  const auto u = upper(s);
  if (u == "CAP" || u == "CAPTIONING") return TaskType::Captioning;
  if (u == "QA") return TaskType::QA;
  throw Error("unknown task type: " + std::string(s));
}

Method parse_method(std::string_view s) {
  const auto u = upper(s);
  if (u == "FINETUNE" || u == "FINE_TUNING" || u == "FT") return Method::Finetune;
  if (u == "LWF") return Method::Lwf;
  if (u == "EWC") return Method::Ewc;
  if (u == "EWF") return Method::Ewf;
  if (u == "MOINCL") return Method::Moincl;
  throw Error("unknown method: " + std::string(s));
}

FusionMode parse_fusion_mode(std::string_view s) {
  const auto u = upper(s);
  if (u == "PER_STEP") return FusionMode::PerStep;
  if (u == "END_OF_TASK") return FusionMode::EndOfTask;
  if (u == "OFF") return FusionMode::Off;
  throw Error("unknown fusion mode: " + std::string(s));
}

void TaskDescriptor::validate() const {
  if (index < 1) throw Error("task index must be >= 1, got " + std::to_string(index));
  if (n_samples < 1) throw Error("task n_samples must be >= 1, got " + std::to_string(n_samples));
}

std::string TaskDescriptor::label() const {
  return std::string(to_string(modality)) + "-" + std::string(to_string(task_type));
}

}  // namespace moincl
