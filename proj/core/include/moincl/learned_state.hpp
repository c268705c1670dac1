#pragma once

#include <map>
#include <set>

#include "moincl/types.hpp"

namespace moincl {

/// The learned-modality set LM and the per-modality learned task types LT_M.
/// Values are immutable; updates return a new state.
class LearnedState {
 public:
  LearnedState() = default;

  /// Task start: opens an empty LT entry for an unseen modality.
  [[nodiscard]] LearnedState begin_task(const TaskDescriptor& task) const;
  /// Task end: records the task's modality and type.
  [[nodiscard]] LearnedState commit_task(const TaskDescriptor& task) const;

  bool has_modality(Modality m) const { return modalities_.contains(m); }
  /// Empty set when the modality has no entry.
  std::set<TaskType> learned_types(Modality m) const;
  const std::set<Modality>& modalities() const { return modalities_; }
  const std::map<Modality, std::set<TaskType>>& types() const { return types_; }

  /// Component-wise superset test.
  bool includes(const LearnedState& other) const;

  friend bool operator==(const LearnedState&, const LearnedState&) = default;

 private:
  std::set<Modality> modalities_;
  std::map<Modality, std::set<TaskType>> types_;
};

enum class TaskPhase { Start, End };

LearnedState update_learned_state(const LearnedState& state, const TaskDescriptor& task,
                                  TaskPhase phase);

}  // namespace moincl
