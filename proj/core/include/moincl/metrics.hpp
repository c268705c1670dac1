#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moincl/config.hpp"
#include "moincl/types.hpp"

namespace moincl {

struct CiderOptions {
  /// Clip candidate weights by the reference and apply the gaussian length penalty.
  bool cider_d = false;
  double sigma = 6.0;
};

struct CiderResult {
  std::vector<double> per_item;
  double corpus = 0.0;
};

/// Consensus CIDEr over n = 1..4 with IDF from the given references.
/// `references[i]` belongs to `candidates[i]`; raw scale (identical text with
/// a discriminative corpus lands near 10).
CiderResult cider(std::span<const std::string> candidates,
                  std::span<const std::vector<std::string>> references, CiderOptions options = {});

/// 100 x fraction of normalized exact matches.
double qa_accuracy(std::span<const std::string> predictions, std::span<const std::string> answers);

/// 100 x (s_ii - s_iT) / s_ii; throws "undefined ratio" when s_ii == 0.
double forgetting_ratio(double s_ii, double s_iT);

struct TaskMeta {
  std::string name;
  TaskType type = TaskType::Captioning;
  friend bool operator==(const TaskMeta&, const TaskMeta&) = default;
};

/// Scores s(task, step) for 1 <= task <= step <= T. Captioning entries are
/// CIDEr x 100, QA entries are accuracy percentages.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  explicit ScoreMatrix(std::vector<TaskMeta> tasks);

  int size() const { return static_cast<int>(tasks_.size()); }
  const std::vector<TaskMeta>& tasks() const { return tasks_; }

  void set(int task, int step, double score);
  std::optional<double> get(int task, int step) const;
  /// Throws when the cell is unset.
  double at(int task, int step) const;

  /// "s/<task>/<step>" for every unset cell of the triangle.
  std::vector<std::string> missing_cells() const;
  bool complete() const { return missing_cells().empty(); }

  /// Free-form labels (method, order, seed) carried in the metadata block.
  std::map<std::string, std::string>& info() { return info_; }
  const std::map<std::string, std::string>& info() const { return info_; }

  /// Canonical JSON: fixed key order, cells in (task, step) order.
  std::string to_json() const;
  static ScoreMatrix from_json(std::string_view text);

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;

 private:
  void check_cell(int task, int step) const;

  std::vector<TaskMeta> tasks_;
  std::map<std::pair<int, int>, double> cells_;
  std::map<std::string, std::string> info_;
};

struct Aggregates {
  std::optional<double> avg_cider;   // unset without captioning tasks
  std::optional<double> avg_acc;     // unset without QA tasks
  std::optional<double> avg_forget;  // unset when no task is averaged
  std::vector<double> per_task_forget;
};

/// Throws "incomplete score matrix" with the missing cells listed.
Aggregates aggregate(const ScoreMatrix& matrix,
                     ForgetAveraging averaging = ForgetAveraging::ExcludeFinal);

/// Named matrices parsed from CSV rows: method,order,task,name,type,step,score.
/// Keys are "<method>/<order>".
std::map<std::string, ScoreMatrix> read_step_scores_csv(std::string_view text);
std::map<std::string, ScoreMatrix> read_step_scores_file(const std::filesystem::path& path);

/// Aligned plain-text tables: step scores, per-task forgetting, aggregates.
std::string format_report(const std::map<std::string, ScoreMatrix>& runs,
                          ForgetAveraging averaging = ForgetAveraging::ExcludeFinal);
/// run,kind,task,step,value rows.
std::string format_report_csv(const std::map<std::string, ScoreMatrix>& runs,
                              ForgetAveraging averaging = ForgetAveraging::ExcludeFinal);

}  // namespace moincl
