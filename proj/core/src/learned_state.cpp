#include "moincl/learned_state.hpp"

#include <algorithm>

namespace moincl {

LearnedState LearnedState::begin_task(const TaskDescriptor& task) const {
  LearnedState next = *this;
  if (!next.modalities_.contains(task.modality)) next.types_[task.modality] = {};
  return next;
}

LearnedState LearnedState::commit_task(const TaskDescriptor& task) const {
  LearnedState next = *this;
  next.modalities_.insert(task.modality);
  next.types_[task.modality].insert(task.task_type);
  return next;
}

std::set<TaskType> LearnedState::learned_types(Modality m) const {
  auto it = types_.find(m);
  return it == types_.end() ? std::set<TaskType>{} : it->second;
}

bool LearnedState::includes(const LearnedState& other) const {
  if (!std::includes(modalities_.begin(), modalities_.end(), other.modalities_.begin(),
                     other.modalities_.end())) {
    return false;
  }
  for (const auto& [m, types] : other.types_) {
    const auto mine = learned_types(m);
    if (!std::includes(mine.begin(), mine.end(), types.begin(), types.end())) return false;
  }
  return true;
}

LearnedState update_learned_state(const LearnedState& state, const TaskDescriptor& task,
                                  TaskPhase phase) {
  return phase == TaskPhase::Start ? state.begin_task(task) : state.commit_task(task);
}

}  // namespace moincl
